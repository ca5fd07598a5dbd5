//! Command line front-end: batch commands over the core library plus the HTTP server.

pub mod http;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use affinity_core::datastore::parse_responses_jsonl;
use affinity_core::evaluation::CandidateOutcome;
use affinity_core::learning::group_by_candidate;
use affinity_core::service::CatalogItem;
use affinity_core::{
    build_profile, bundled_fixtures, candidate_affinity, class_accuracy, classify_responses, cluster_candidates,
    derive_emotion_vector, embed_headline, exact_match_rate, generate_population, load_lexicon, load_table_fixtures,
    rank_items, run_experiment, ElicitationService, EmotionVector, EngineConfig, FeatureKind, FixtureBundle,
    HeadlineTemplate, Lexicon, ProfileStore, ServiceConfig, VariantFeatures,
};
use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 20240917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "affinity", version, about = "Emotion-aware reader profiling, embedding and ranking")]
pub struct Cli {
    /// TOML file with engine settings and an optional [service] table.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Lexicon document; the bundled lexicon is used when omitted.
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    #[command(subcommand)]
    Lexicon(LexiconCommand),
    /// Cluster the candidates in a store and save the model and profiles.
    Learn {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "default")]
        name: String,
    },
    /// Assign classes to candidates using a saved model.
    Classify {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "default")]
        model: String,
        /// JSONL responses to classify; defaults to the store's own responses.
        #[arg(long)]
        responses: Option<PathBuf>,
    },
    /// Fill a headline template toward a target emotion vector.
    Embed {
        /// e.g. "Rally {tone:politics} downtown"
        #[arg(long)]
        template: String,
        #[arg(long, value_delimiter = ',', required = true)]
        target: Vec<f64>,
        #[arg(long)]
        color: Option<String>,
        #[arg(long)]
        shape: Option<String>,
        #[arg(long)]
        background: Option<String>,
    },
    /// Rank items from a JSON file of {item_id, profile} for a reader vector.
    Rank {
        #[arg(long, value_delimiter = ',', required = true)]
        reader: Vec<f64>,
        #[arg(long)]
        items: PathBuf,
    },
    /// Replay a bundled table fixture, or run the synthetic experiment sweep.
    Eval {
        /// paper/table1, paper/table2 or paper/table3
        #[arg(long)]
        fixture: Option<String>,
        /// Directory holding table1.json..table3.json instead of the bundled copies.
        #[arg(long)]
        fixtures_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0, 2.0])]
        noise: Vec<f64>,
    },
    /// Write a synthetic population into a store.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        store: PathBuf,
        /// Name of a model saved in the store by `learn`.
        #[arg(long)]
        model: Option<String>,
        /// JSON array of catalog items; one item per context and dimension by default.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum LexiconCommand {
    /// Check a lexicon document and print a summary.
    Validate { path: Option<PathBuf> },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    #[serde(flatten)]
    pub engine: EngineConfig,
    pub service: ServiceConfig,
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    cfg.engine.validate()?;
    Ok(cfg)
}

fn load_lex(path: Option<&Path>, config: &EngineConfig) -> anyhow::Result<Lexicon> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(load_lexicon(&text, config)?)
        }
        None => {
            let lex = Lexicon::builtin();
            if lex.dims() != config.emotion_dims {
                bail!("bundled lexicon has {} dimensions, config expects {}", lex.dims(), config.emotion_dims);
            }
            Ok(lex)
        }
    }
}

fn open_existing(dir: &Path, config: &EngineConfig) -> anyhow::Result<ProfileStore> {
    if !dir.join("manifest.json").is_file() {
        bail!("{} is not a store; create one with `synth` or `serve`", dir.display());
    }
    Ok(ProfileStore::open(dir, config)?)
}

fn emit<T: Serialize>(out: &mut dyn Write, format: Format, value: &T, text: impl FnOnce() -> String) -> anyhow::Result<()> {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(value)?)?,
        Format::Text => write!(out, "{}", text())?,
    }
    Ok(())
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Serialize)]
struct LexiconSummary {
    taxonomy: Vec<String>,
    contexts: Vec<String>,
    words: usize,
    features: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize)]
struct Table1Report {
    responses: usize,
    out_of_range: Vec<affinity_core::datastore::OutOfRange>,
    candidates: Vec<String>,
    affinity: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct Table2Report {
    rows: usize,
    exact_match_rate: f64,
    rank_2_share: f64,
    rank_3_or_worse_share: f64,
}

#[derive(Debug, Serialize)]
struct LearnReport {
    model: String,
    k: usize,
    candidates: usize,
    objective: f64,
    iterations: usize,
    converged: bool,
    medoids: Vec<String>,
    class_sizes: BTreeMap<usize, usize>,
}

#[derive(Debug, Serialize)]
struct Classification {
    candidate_id: String,
    class: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    ev: Option<EmotionVector>,
}

#[derive(Debug, Deserialize)]
struct RankInput {
    item_id: String,
    profile: EmotionVector,
}

fn fixtures(dir: Option<&Path>) -> anyhow::Result<FixtureBundle> {
    Ok(match dir {
        Some(d) => load_table_fixtures(d)?,
        None => bundled_fixtures(),
    })
}

fn eval_fixture(name: &str, bundle: &FixtureBundle, config: &EngineConfig, format: Format, out: &mut dyn Write) -> anyhow::Result<()> {
    match name.trim_start_matches("paper/") {
        "table1" => {
            let t = &bundle.table1;
            let responses = t.responses(config)?;
            let groups = group_by_candidate(&responses);
            let ids: Vec<String> = t.rows.iter().map(|r| r.candidate.clone()).collect();
            let affinity = ids
                .iter()
                .map(|a| ids.iter().map(|b| candidate_affinity(&groups[a], &groups[b], config)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?;
            let report = Table1Report { responses: responses.len(), out_of_range: t.out_of_range(config.rating_max), candidates: ids, affinity };
            emit(out, format, &report, || {
                let mut s = format!("{} responses ingested\n", report.responses);
                for o in &report.out_of_range {
                    let _ = writeln!(s, "clamped: candidate {} {} printed {}", o.candidate, o.cluster, o.value);
                }
                let _ = writeln!(s, "affinity index:");
                for (id, row) in report.candidates.iter().zip(&report.affinity) {
                    let _ = writeln!(s, "{id:>4}  {}", row.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" "));
                }
                s
            })
        }
        "table2" => {
            let cmp = bundle.table2.comparison()?;
            let report = Table2Report {
                rows: cmp.rows.len(),
                exact_match_rate: exact_match_rate(&cmp)?,
                rank_2_share: cmp.share_at(2)?,
                rank_3_or_worse_share: cmp.share_at_or_below(3)?,
            };
            emit(out, format, &report, || {
                format!(
                    "{}exact match rate   {:.2}\nactual rank 2      {:.2}\nactual rank >= 3   {:.2}\n",
                    cmp.to_text(),
                    report.exact_match_rate,
                    report.rank_2_share,
                    report.rank_3_or_worse_share
                )
            })
        }
        "table3" => {
            let outcomes: Vec<CandidateOutcome> = bundle.table3.replay_outcomes();
            let report = class_accuracy(&outcomes)?;
            emit(out, format, &report, || report.to_text())
        }
        other => bail!("unknown fixture `{other}`; expected paper/table1, paper/table2 or paper/table3"),
    }
}

/// Runs one non-serving command, writing its report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let file = load_config(cli.config.as_deref())?;
    let config = &file.engine;
    let format = cli.format;
    match &cli.command {
        Command::Lexicon(LexiconCommand::Validate { path }) => {
            let lex = load_lex(path.as_deref().or(cli.lexicon.as_deref()), config)?;
            let mut features = BTreeMap::new();
            for kind in FeatureKind::ALL {
                features.insert(kind.to_string(), lex.categories(kind).count());
            }
            let summary = LexiconSummary {
                taxonomy: lex.taxonomy().names().to_vec(),
                contexts: lex.contexts().iter().map(|c| c.to_string()).collect(),
                words: lex.words().len(),
                features,
            };
            emit(out, format, &summary, || {
                format!(
                    "lexicon ok: {} dimensions ({}), {} contexts, {} words, features {:?}\n",
                    summary.taxonomy.len(),
                    summary.taxonomy.join(", "),
                    summary.contexts.len(),
                    summary.words,
                    summary.features
                )
            })
        }
        Command::Learn { store, k, name } => {
            let lex = load_lex(cli.lexicon.as_deref(), config)?;
            let store = open_existing(store, config)?;
            let responses = store.read_responses()?;
            let variants = store.variants()?;
            let mut model = cluster_candidates(&responses, k.unwrap_or(config.num_classes), config)?;
            let with_profiles = match model.attach_medoid_profiles(&lex, &variants, config) {
                Ok(()) => true,
                Err(e) => {
                    tracing::warn!(error = %e, "medoid profiles unavailable; profiles saved without class");
                    false
                }
            };
            store.save_model(name, &model)?;
            for (id, rs) in group_by_candidate(&responses) {
                match build_profile(&id, &rs, &lex, &variants, with_profiles.then_some(&model), config) {
                    Ok(p) => store.save_profile(&p)?,
                    Err(e) => tracing::warn!(candidate = %id, error = %e, "profile skipped"),
                }
            }
            let mut class_sizes = BTreeMap::new();
            for c in model.assignments.values() {
                *class_sizes.entry(c.get()).or_insert(0) += 1;
            }
            let report = LearnReport {
                model: name.clone(),
                k: model.k,
                candidates: model.assignments.len(),
                objective: model.objective,
                iterations: model.iterations,
                converged: model.converged,
                medoids: model.medoids.iter().map(|m| m.candidate_id.clone()).collect(),
                class_sizes,
            };
            emit(out, format, &report, || {
                let mut s = format!(
                    "model `{}`: {} candidates, k = {}, objective {:.4}, {} swaps{}\n",
                    report.model,
                    report.candidates,
                    report.k,
                    report.objective,
                    report.iterations,
                    if report.converged { "" } else { " (iteration cap reached)" }
                );
                for (i, m) in report.medoids.iter().enumerate() {
                    let _ = writeln!(s, "class {:>2}  medoid {m:<16} members {}", i + 1, report.class_sizes.get(&(i + 1)).unwrap_or(&0));
                }
                s
            })
        }
        Command::Classify { store, model, responses } => {
            let lex = load_lex(cli.lexicon.as_deref(), config)?;
            let store = open_existing(store, config)?;
            let model = store.load_model(model)?.with_context(|| format!("no model named `{model}` in the store"))?;
            let rs = match responses {
                Some(p) => parse_responses_jsonl(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?, config)?,
                None => store.read_responses()?,
            };
            let variants = store.variants()?;
            let rows = group_by_candidate(&rs)
                .into_iter()
                .map(|(id, group)| {
                    Ok(Classification {
                        class: classify_responses(&group, &model, config)?.get(),
                        ev: derive_emotion_vector(&group, &lex, &variants, config).ok(),
                        candidate_id: id,
                    })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            emit(out, format, &rows, || {
                rows.iter()
                    .map(|r| match &r.ev {
                        Some(ev) => format!("{:<16} class {:>2}  ev {}\n", r.candidate_id, r.class, fmt_vec(ev.values())),
                        None => format!("{:<16} class {:>2}\n", r.candidate_id, r.class),
                    })
                    .collect()
            })
        }
        Command::Embed { template, target, color, shape, background } => {
            let lex = load_lex(cli.lexicon.as_deref(), config)?;
            let template = HeadlineTemplate::parse(template)?;
            let target = EmotionVector::from_weights(target.clone())?;
            let base = VariantFeatures { color: color.clone(), shape: shape.clone(), background: background.clone(), ..Default::default() };
            let e = embed_headline(&template, &target, &base, &lex, config)?;
            emit(out, format, &e, || format!("{}\nscore {:.4}  profile {}\n", e.text(), e.score, fmt_vec(e.profile.values())))
        }
        Command::Rank { reader, items } => {
            let reader = EmotionVector::from_weights(reader.clone())?;
            let text = std::fs::read_to_string(items).with_context(|| format!("reading {}", items.display()))?;
            let parsed: Vec<RankInput> = serde_json::from_str(&text).context("items must be a JSON array of {item_id, profile}")?;
            let ranking = rank_items(&reader, &parsed.into_iter().map(|i| (i.item_id, i.profile)).collect::<Vec<_>>())?;
            emit(out, format, &ranking, || {
                ranking.iter().map(|r| format!("{:>3}  {:<20} {:.4}\n", r.rank, r.item_id, r.score)).collect()
            })
        }
        Command::Eval { fixture, fixtures_dir, k, per_class, noise } => match fixture {
            Some(name) => eval_fixture(name, &fixtures(fixtures_dir.as_deref())?, config, format, out),
            None => {
                let lex = load_lex(cli.lexicon.as_deref(), config)?;
                let reports = std::thread::scope(|scope| {
                    let handles: Vec<_> = noise
                        .iter()
                        .map(|&n| {
                            let lex = &lex;
                            scope.spawn(move || {
                                let pop = generate_population(*k, *per_class, n, cli.seed, lex, config)?;
                                run_experiment(&pop, lex, config)
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("experiment thread panicked")).collect::<Result<Vec<_>, _>>()
                })?;
                emit(out, format, &reports, || {
                    let mut s = String::from("noise  classification  exact-match\n");
                    for r in &reports {
                        let _ = writeln!(s, "{:>5.2}  {:>13.1}%  {:>11.3}", r.noise_level, 100.0 * r.classification_accuracy, r.exact_match_rate);
                    }
                    s
                })
            }
        },
        Command::Synth { out: dir, k, per_class, noise } => {
            let lex = load_lex(cli.lexicon.as_deref(), config)?;
            let pop = generate_population(*k, *per_class, *noise, cli.seed, &lex, config)?;
            let store = ProfileStore::open(dir, config)?;
            store.register_variants(&pop.variant_catalog())?;
            let appended = store.append_responses(&pop.responses())?;
            let labels: BTreeMap<&str, usize> = pop.candidates.iter().map(|c| (c.candidate_id.as_str(), c.true_class.get())).collect();
            store.save_document("synthetic", "labels", &labels)?;
            let summary = serde_json::json!({
                "store": dir,
                "candidates": pop.candidates.len(),
                "responses": appended,
                "variants": pop.variant_catalog().len(),
                "seed": cli.seed,
            });
            emit(out, format, &summary, || {
                format!(
                    "wrote {} candidates, {} responses, {} variants to {} (seed {})\n",
                    pop.candidates.len(),
                    appended,
                    pop.variant_catalog().len(),
                    dir.display(),
                    cli.seed
                )
            })
        }
        Command::Serve { .. } => bail!("serve runs through `serve_blocking`"),
    }
}

/// Builds the service for `serve` from command line settings.
pub fn build_service(cli: &Cli, store: &Path, model: Option<&str>, catalog: Option<&Path>) -> anyhow::Result<ElicitationService> {
    let file = load_config(cli.config.as_deref())?;
    let lex = load_lex(cli.lexicon.as_deref(), &file.engine)?;
    let store = ProfileStore::open(store, &file.engine)?;
    let saved = match model {
        Some(name) => Some(store.load_model(name)?.with_context(|| format!("no model named `{name}` in the store"))?),
        None => None,
    };
    let mut svc = ElicitationService::new(file.engine, file.service, Some(lex), store)?;
    if let Some(m) = saved {
        svc = svc.with_model(m)?;
    }
    if let Some(p) = catalog {
        let items: Vec<CatalogItem> = serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?;
        let ids: BTreeSet<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
        if ids.len() != items.len() {
            bail!("catalog item ids must be unique");
        }
        svc = svc.with_catalog(items);
    }
    Ok(svc)
}

pub fn serve_blocking(cli: &Cli) -> anyhow::Result<()> {
    let Command::Serve { addr, store, model, catalog } = &cli.command else { bail!("not a serve command") };
    let svc = Arc::new(build_service(cli, store, model.as_deref(), catalog.as_deref())?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        http::serve(listener, svc).await?;
        Ok(())
    })
}
