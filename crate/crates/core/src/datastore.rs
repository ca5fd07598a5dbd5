//! File-backed storage: a directory of versioned JSON documents plus a
//! JSON-lines response log, all written through temp-file-then-rename.
//!
//! Layout under the store root:
//!
//! ```text
//! manifest.json          {"version": 1}
//! responses.jsonl        one response per line
//! variants.json          {"version": 1, "variants": {id: features}}
//! profiles/<id>.json     {"version": 1, ...}
//! models/<name>.json
//! sessions/<id>.json
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::evaluation::{CandidateOutcome, RankComparison, RankRow};
use crate::learning::{CandidateProfile, ClusterModel, VariantCatalog};
use crate::types::{RawResponse, ResponseExpression};

pub const STORE_VERSION: u32 = 1;

const RESPONSES: &str = "responses.jsonl";
const VARIANTS: &str = "variants.json";
const MANIFEST: &str = "manifest.json";

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    version: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize, Deserialize)]
struct Manifest {}

#[derive(Serialize, Deserialize, Default)]
struct VariantsDoc {
    variants: VariantCatalog,
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("doc");
    let n = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    path.with_file_name(format!(".{name}.tmp-{}-{n}", std::process::id()))
}

/// Writes `bytes` to a synced temp file beside `path` and returns the temp path.
fn write_temp(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    let tmp = temp_path(path);
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(tmp)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = write_temp(path, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    if let Some(dir) = path.parent().and_then(|p| fs::File::open(p).ok()) {
        let _ = dir.sync_all();
    }
    Ok(())
}

/// Maps an identifier to a safe file stem.
fn file_stem(id: &str) -> String {
    if !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_') {
        id.to_string()
    } else {
        let hex: String = id.bytes().map(|b| format!("{b:02x}")).collect();
        format!("x-{hex}")
    }
}

/// Parses JSON-lines responses, clamping out-of-scale ratings.
pub fn parse_responses_jsonl(text: &str, config: &EngineConfig) -> Result<Vec<ResponseExpression>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let raw: RawResponse =
                serde_json::from_str(l).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            raw.ingest(config)
        })
        .collect()
}

pub fn responses_to_jsonl(responses: &[ResponseExpression]) -> String {
    let mut out = String::new();
    for r in responses {
        out.push_str(&serde_json::to_string(r).expect("response serializes"));
        out.push('\n');
    }
    out
}

/// Single-writer directory store.
#[derive(Debug, Clone)]
pub struct ProfileStore {
    root: PathBuf,
    config: EngineConfig,
}

impl ProfileStore {
    pub fn open(root: impl Into<PathBuf>, config: &EngineConfig) -> Result<Self> {
        let root = root.into();
        for dir in ["profiles", "models", "sessions"] {
            fs::create_dir_all(root.join(dir))?;
        }
        let manifest = root.join(MANIFEST);
        if manifest.exists() {
            let v: Versioned<Manifest> = serde_json::from_slice(&fs::read(&manifest)?)?;
            if v.version != STORE_VERSION {
                return Err(Error::Validation(format!("unsupported store version {}", v.version)));
            }
        } else {
            write_atomic(&manifest, &serde_json::to_vec(&Versioned { version: STORE_VERSION, body: Manifest {} })?)?;
        }
        Ok(Self { root, config: config.clone() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn read_responses(&self) -> Result<Vec<ResponseExpression>> {
        match fs::read_to_string(self.root.join(RESPONSES)) {
            Ok(text) => parse_responses_jsonl(&text, &self.config),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn responses_for(&self, candidate_id: &str) -> Result<Vec<ResponseExpression>> {
        Ok(self.read_responses()?.into_iter().filter(|r| r.candidate_id == candidate_id).collect())
    }

    /// Appends responses; a key already stored (or repeated in the batch) rejects the whole batch.
    pub fn append_responses(&self, responses: &[ResponseExpression]) -> Result<usize> {
        let mut all = self.read_responses()?;
        let mut keys: BTreeSet<(String, String, String, String)> = all
            .iter()
            .map(|r| (r.candidate_id.clone(), r.stimulus_id.clone(), r.variant_id.clone(), r.context_id.clone()))
            .collect();
        for r in responses {
            r.validate(&self.config)?;
            let key = (r.candidate_id.clone(), r.stimulus_id.clone(), r.variant_id.clone(), r.context_id.clone());
            if !keys.insert(key) {
                return Err(Error::DuplicateResponse {
                    candidate: r.candidate_id.clone(),
                    stimulus: r.stimulus_id.clone(),
                    variant: r.variant_id.clone(),
                    context: r.context_id.clone(),
                });
            }
        }
        all.extend_from_slice(responses);
        write_atomic(&self.root.join(RESPONSES), responses_to_jsonl(&all).as_bytes())?;
        Ok(responses.len())
    }

    pub fn variants(&self) -> Result<VariantCatalog> {
        let path = self.root.join(VARIANTS);
        if !path.exists() {
            return Ok(VariantCatalog::new());
        }
        let doc: Versioned<VariantsDoc> = serde_json::from_slice(&fs::read(path)?)?;
        Ok(doc.body.variants)
    }

    /// Merges variants into the registry. Ids are content-derived, so a collision
    /// with different features is a validation error.
    pub fn register_variants(&self, catalog: &VariantCatalog) -> Result<()> {
        let mut all = self.variants()?;
        let mut changed = false;
        for (id, f) in catalog {
            match all.get(id) {
                Some(existing) if existing != f => {
                    return Err(Error::Validation(format!("variant id `{id}` already bound to other features")))
                }
                Some(_) => {}
                None => {
                    all.insert(id.clone(), f.clone());
                    changed = true;
                }
            }
        }
        if changed {
            let doc = Versioned { version: STORE_VERSION, body: VariantsDoc { variants: all } };
            write_atomic(&self.root.join(VARIANTS), &serde_json::to_vec_pretty(&doc)?)?;
        }
        Ok(())
    }

    fn doc_path(&self, collection: &str, id: &str) -> PathBuf {
        self.root.join(file_stem(collection)).join(format!("{}.json", file_stem(id)))
    }

    pub fn save_document<T: Serialize>(&self, collection: &str, id: &str, doc: &T) -> Result<()> {
        let v = Versioned { version: STORE_VERSION, body: doc };
        let path = self.doc_path(collection, id);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_atomic(&path, &serde_json::to_vec_pretty(&v)?)
    }

    pub fn load_document<T: DeserializeOwned>(&self, collection: &str, id: &str) -> Result<Option<T>> {
        match fs::read(self.doc_path(collection, id)) {
            Ok(bytes) => {
                let v: Versioned<T> = serde_json::from_slice(&bytes)?;
                if v.version != STORE_VERSION {
                    return Err(Error::Validation(format!("unsupported document version {}", v.version)));
                }
                Ok(Some(v.body))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Every committed document in a collection; temp files are skipped.
    pub fn list_documents<T: DeserializeOwned>(&self, collection: &str) -> Result<Vec<T>> {
        let mut paths: Vec<PathBuf> = fs::read_dir(self.root.join(collection))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|x| x == "json")
                    && !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'))
            })
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|p| {
                let v: Versioned<T> = serde_json::from_slice(&fs::read(p)?)?;
                Ok(v.body)
            })
            .collect()
    }

    pub fn save_profile(&self, profile: &CandidateProfile) -> Result<()> {
        self.save_document("profiles", &profile.candidate_id, profile)
    }

    pub fn load_profile(&self, candidate_id: &str) -> Result<Option<CandidateProfile>> {
        self.load_document("profiles", candidate_id)
    }

    pub fn save_model(&self, name: &str, model: &ClusterModel) -> Result<()> {
        write_atomic(&self.doc_path("models", name), model.to_json().as_bytes())
    }

    pub fn load_model(&self, name: &str) -> Result<Option<ClusterModel>> {
        match fs::read_to_string(self.doc_path("models", name)) {
            Ok(s) => ClusterModel::from_json(&s).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table1Row {
    pub candidate: String,
    pub group: String,
    pub ratings: Vec<i64>,
}

/// Ratings of news-title word clusters in one context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table1Fixture {
    pub caption: String,
    pub stimulus: String,
    pub context: String,
    pub clusters: Vec<String>,
    pub rows: Vec<Table1Row>,
}

/// A printed rating outside the declared scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutOfRange {
    pub candidate: String,
    pub cluster: String,
    pub value: i64,
}

impl Table1Fixture {
    fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if r.ratings.len() != self.clusters.len() {
                return Err(Error::Validation(format!("row {} has {} ratings", r.candidate, r.ratings.len())));
            }
            if r.ratings.iter().any(|v| *v < 0) {
                return Err(Error::Validation(format!("row {} has a negative rating", r.candidate)));
            }
        }
        Ok(())
    }

    pub fn out_of_range(&self, rating_max: u8) -> Vec<OutOfRange> {
        self.rows
            .iter()
            .flat_map(|r| {
                r.ratings.iter().zip(&self.clusters).filter(|(v, _)| **v > i64::from(rating_max)).map(|(v, c)| OutOfRange {
                    candidate: r.candidate.clone(),
                    cluster: c.clone(),
                    value: *v,
                })
            })
            .collect()
    }

    pub fn raw_value(&self, candidate: &str, cluster_index: usize) -> Option<i64> {
        self.rows.iter().find(|r| r.candidate == candidate).and_then(|r| r.ratings.get(cluster_index).copied())
    }

    /// Rows as responses (one variant per word cluster), ratings clamped onto the scale.
    pub fn responses(&self, config: &EngineConfig) -> Result<Vec<ResponseExpression>> {
        self.rows
            .iter()
            .flat_map(|r| {
                r.ratings.iter().zip(&self.clusters).map(move |(v, c)| RawResponse {
                    candidate: r.candidate.clone(),
                    stimulus: self.stimulus.clone(),
                    variant: c.clone(),
                    context: self.context.clone(),
                    rating: *v,
                })
            })
            .map(|raw| raw.ingest(config))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table2Row {
    pub serial: u32,
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table2Fixture {
    pub caption: String,
    pub scenario: String,
    pub rows: Vec<Table2Row>,
}

impl Table2Fixture {
    pub fn comparison(&self) -> Result<RankComparison> {
        RankComparison::new(self.rows.iter().map(|r| RankRow { expected: r.expected, actual: r.actual }).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub class: u32,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Fixture {
    pub caption: String,
    pub column: String,
    pub replay_candidates_per_class: usize,
    pub rows: Vec<Table3Row>,
}

impl Table3Fixture {
    fn validate(&self) -> Result<()> {
        if self.replay_candidates_per_class == 0 {
            return Err(Error::Validation("replay_candidates_per_class must be >= 1".into()));
        }
        for r in &self.rows {
            if !(0.0..=100.0).contains(&r.accuracy) {
                return Err(Error::Validation(format!("class {} accuracy {} outside [0, 100]", r.class, r.accuracy)));
            }
            let hits = r.accuracy * self.replay_candidates_per_class as f64 / 100.0;
            if (hits - hits.round()).abs() > 1e-9 {
                return Err(Error::Validation(format!("class {} accuracy not replayable", r.class)));
            }
        }
        Ok(())
    }

    /// Per class, `replay_candidates_per_class` outcomes of which `accuracy`% reached rank 1.
    pub fn replay_outcomes(&self) -> Vec<CandidateOutcome> {
        let n = self.replay_candidates_per_class;
        self.rows
            .iter()
            .flat_map(|r| {
                let hits = (r.accuracy * n as f64 / 100.0).round() as usize;
                (0..n).map(move |i| CandidateOutcome {
                    candidate_id: format!("class{}-{:03}", r.class, i + 1),
                    class: Some(r.class),
                    actual_rank: if i < hits { 1 } else { 2 },
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureBundle {
    pub table1: Table1Fixture,
    pub table2: Table2Fixture,
    pub table3: Table3Fixture,
}

fn parse_versioned<T: DeserializeOwned>(name: &str, text: &str) -> Result<T> {
    let v: Versioned<T> = serde_json::from_str(text).map_err(|e| Error::Parse(format!("{name}: {e}")))?;
    if v.version != STORE_VERSION {
        return Err(Error::Validation(format!("{name}: unsupported version {}", v.version)));
    }
    Ok(v.body)
}

fn parse_bundle(t1: &str, t2: &str, t3: &str) -> Result<FixtureBundle> {
    let table1: Table1Fixture = parse_versioned("table1.json", t1)?;
    table1.validate()?;
    let table2: Table2Fixture = parse_versioned("table2.json", t2)?;
    table2.comparison()?;
    let table3: Table3Fixture = parse_versioned("table3.json", t3)?;
    table3.validate()?;
    Ok(FixtureBundle { table1, table2, table3 })
}

/// Loads `table1.json`, `table2.json` and `table3.json` from a fixture directory.
pub fn load_table_fixtures(dir: impl AsRef<Path>) -> Result<FixtureBundle> {
    let dir = dir.as_ref();
    let read = |n: &str| fs::read_to_string(dir.join(n));
    parse_bundle(&read("table1.json")?, &read("table2.json")?, &read("table3.json")?)
}

/// The fixture bundle compiled into the crate.
pub fn bundled_fixtures() -> FixtureBundle {
    parse_bundle(
        include_str!("../fixtures/paper/table1.json"),
        include_str!("../fixtures/paper/table2.json"),
        include_str!("../fixtures/paper/table3.json"),
    )
    .expect("bundled fixtures are valid")
}
