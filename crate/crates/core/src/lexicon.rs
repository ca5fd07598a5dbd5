//! Emotion taxonomy, context word clusters and feature-to-profile maps.
//!
//! A lexicon is loaded from a versioned JSON document:
//!
//! ```json
//! {
//!   "version": 1,
//!   "taxonomy": ["devotion", "peace", "excitement", "trust", "urgency"],
//!   "words": [{"word": "serene", "context": "politics", "cluster": 2, "profile": [0, 1, 0, 0, 0]}],
//!   "features": [{"kind": "color", "category": "white", "profile": [0, 1, 0, 0, 0]}]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::types::{EmotionVector, EmotionalClass, FeatureKind, VariantFeatures, INGEST_SUM_TOLERANCE};

pub const LEXICON_VERSION: u32 = 1;

const DEFAULT_LEXICON: &str = include_str!("../fixtures/lexicon/default.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionTaxonomy {
    names: Vec<String>,
}

impl EmotionTaxonomy {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::Validation("empty taxonomy label".into()));
            }
            if !seen.insert(n) {
                return Err(Error::Validation(format!("duplicate taxonomy label `{n}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordEntry {
    pub word: String,
    #[serde(rename = "context")]
    pub context_id: String,
    #[serde(rename = "cluster")]
    pub cluster_id: usize,
    pub profile: EmotionVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawWord {
    word: String,
    context: String,
    cluster: usize,
    profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawFeature {
    kind: FeatureKind,
    category: String,
    profile: Vec<f64>,
}

/// The on-disk lexicon document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconDocument {
    version: u32,
    taxonomy: Vec<String>,
    words: Vec<RawWord>,
    #[serde(default)]
    features: Vec<RawFeature>,
}

pub type FeatureProfileMap = BTreeMap<(FeatureKind, String), EmotionVector>;

#[derive(Debug, Clone)]
pub struct Lexicon {
    taxonomy: EmotionTaxonomy,
    num_classes: usize,
    words: Vec<WordEntry>,
    features: FeatureProfileMap,
    // (context, cluster) -> word indices sorted by word
    by_cluster: BTreeMap<(String, usize), Vec<usize>>,
    word_profiles: BTreeMap<String, EmotionVector>,
    cluster_profiles: BTreeMap<usize, EmotionVector>,
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.taxonomy == other.taxonomy
            && self.num_classes == other.num_classes
            && self.words == other.words
            && self.features == other.features
    }
}

fn validated_profile(raw: Vec<f64>, m: usize, what: &str) -> Result<EmotionVector> {
    if raw.len() != m {
        return Err(Error::Validation(format!(
            "{what}: profile has {} dimensions, taxonomy has {m}",
            raw.len()
        )));
    }
    EmotionVector::from_simplex(raw, INGEST_SUM_TOLERANCE)
        .map_err(|e| Error::Validation(format!("{what}: {e}")))
}

fn mean_profile<'a>(profiles: impl Iterator<Item = &'a EmotionVector>) -> Option<EmotionVector> {
    let mut acc: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for p in profiles {
        let a = acc.get_or_insert_with(|| vec![0.0; p.len()]);
        for (s, v) in a.iter_mut().zip(p.values()) {
            *s += v;
        }
        n += 1;
    }
    acc.map(|a| EmotionVector::from_weights(a.into_iter().map(|s| s / n as f64).collect()).expect("mean of simplex vectors"))
}

/// Parses and validates a lexicon document.
pub fn load_lexicon(document: &str, config: &EngineConfig) -> Result<Lexicon> {
    let doc: LexiconDocument = serde_json::from_str(document)?;
    Lexicon::from_document(doc, config)
}

impl Lexicon {
    /// The shipped synthetic lexicon (devotion, peace, excitement, trust, urgency).
    pub fn builtin() -> Lexicon {
        load_lexicon(DEFAULT_LEXICON, &EngineConfig::default()).expect("bundled lexicon is valid")
    }

    pub fn builtin_document() -> &'static str {
        DEFAULT_LEXICON
    }

    pub fn from_document(doc: LexiconDocument, config: &EngineConfig) -> Result<Lexicon> {
        if doc.version != LEXICON_VERSION {
            return Err(Error::Validation(format!("unsupported lexicon version {}", doc.version)));
        }
        let m = config.emotion_dims;
        if doc.taxonomy.len() != m {
            return Err(Error::Validation(format!(
                "taxonomy has {} dimensions, engine expects {m}",
                doc.taxonomy.len()
            )));
        }
        let taxonomy = EmotionTaxonomy::new(doc.taxonomy)?;

        let mut words = Vec::with_capacity(doc.words.len());
        let mut seen = BTreeSet::new();
        for w in doc.words {
            if w.word.is_empty() || w.context.is_empty() {
                return Err(Error::Validation("word entry with empty word or context".into()));
            }
            if EmotionalClass::new(w.cluster, config.num_classes).is_err() {
                return Err(Error::Validation(format!(
                    "word `{}` cluster {} outside [1, {}]",
                    w.word, w.cluster, config.num_classes
                )));
            }
            if !seen.insert((w.context.clone(), w.word.clone())) {
                return Err(Error::Validation(format!("duplicate word `{}` in context `{}`", w.word, w.context)));
            }
            let profile = validated_profile(w.profile, m, &format!("word `{}`", w.word))?;
            words.push(WordEntry { word: w.word, context_id: w.context, cluster_id: w.cluster, profile });
        }

        let mut features = FeatureProfileMap::new();
        for f in doc.features {
            if f.category.is_empty() {
                return Err(Error::Validation("feature with empty category".into()));
            }
            let profile = validated_profile(f.profile, m, &format!("{} `{}`", f.kind, f.category))?;
            if features.insert((f.kind, f.category.clone()), profile).is_some() {
                return Err(Error::Validation(format!("duplicate {} `{}`", f.kind, f.category)));
            }
        }

        Ok(Self::index(taxonomy, config.num_classes, words, features))
    }

    fn index(taxonomy: EmotionTaxonomy, num_classes: usize, words: Vec<WordEntry>, features: FeatureProfileMap) -> Self {
        let mut order: Vec<usize> = (0..words.len()).collect();
        order.sort_by(|&a, &b| {
            (&words[a].context_id, &words[a].word).cmp(&(&words[b].context_id, &words[b].word))
        });

        let mut by_cluster: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
        let mut by_word: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_cluster_id: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &order {
            let w = &words[i];
            by_cluster.entry((w.context_id.clone(), w.cluster_id)).or_default().push(i);
            by_word.entry(w.word.clone()).or_default().push(i);
            by_cluster_id.entry(w.cluster_id).or_default().push(i);
        }
        for idx in by_cluster.values_mut() {
            idx.sort_by(|&a, &b| words[a].word.cmp(&words[b].word));
        }
        let word_profiles = by_word
            .into_iter()
            .map(|(w, idx)| (w, mean_profile(idx.iter().map(|&i| &words[i].profile)).unwrap()))
            .collect();
        let cluster_profiles = by_cluster_id
            .into_iter()
            .map(|(c, idx)| (c, mean_profile(idx.iter().map(|&i| &words[i].profile)).unwrap()))
            .collect();

        Self { taxonomy, num_classes, words, features, by_cluster, word_profiles, cluster_profiles }
    }

    pub fn to_document(&self) -> LexiconDocument {
        LexiconDocument {
            version: LEXICON_VERSION,
            taxonomy: self.taxonomy.names().to_vec(),
            words: self
                .words
                .iter()
                .map(|w| RawWord {
                    word: w.word.clone(),
                    context: w.context_id.clone(),
                    cluster: w.cluster_id,
                    profile: w.profile.values().to_vec(),
                })
                .collect(),
            features: self
                .features
                .iter()
                .map(|((kind, category), p)| RawFeature {
                    kind: *kind,
                    category: category.clone(),
                    profile: p.values().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("lexicon serializes")
    }

    pub fn taxonomy(&self) -> &EmotionTaxonomy {
        &self.taxonomy
    }

    pub fn dims(&self) -> usize {
        self.taxonomy.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn words(&self) -> &[WordEntry] {
        &self.words
    }

    pub fn features(&self) -> &FeatureProfileMap {
        &self.features
    }

    /// Contexts that have at least one word, sorted.
    pub fn contexts(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.words.iter().map(|w| w.context_id.as_str()).collect();
        set.into_iter().collect()
    }

    pub fn has_context(&self, context_id: &str) -> bool {
        self.words.iter().any(|w| w.context_id == context_id)
    }

    /// Categories mapped for a feature kind, sorted by label.
    pub fn categories(&self, kind: FeatureKind) -> impl Iterator<Item = (&str, &EmotionVector)> {
        self.features
            .iter()
            .filter(move |((k, _), _)| *k == kind)
            .map(|((_, c), p)| (c.as_str(), p))
    }

    pub fn feature_profile(&self, kind: FeatureKind, category: &str) -> Option<&EmotionVector> {
        self.features.get(&(kind, category.to_string()))
    }

    /// Mean profile of a word over every context that lists it.
    pub fn word_profile(&self, word: &str) -> Option<&EmotionVector> {
        self.word_profiles.get(word)
    }

    /// Mean profile of every word in a cluster, across contexts.
    pub fn cluster_profile(&self, cluster_id: usize) -> Option<&EmotionVector> {
        self.cluster_profiles.get(&cluster_id)
    }

    /// Distinct words of a context, sorted.
    pub fn context_vocabulary(&self, context_id: &str) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .words
            .iter()
            .filter(|w| w.context_id == context_id)
            .map(|w| w.word.as_str())
            .collect();
        set.into_iter().collect()
    }

    /// Cluster ids populated in at least one context, ascending.
    pub fn cluster_ids(&self) -> Vec<usize> {
        self.cluster_profiles.keys().copied().collect()
    }
}

/// Entries of one context's word cluster, sorted by word.
pub fn words_for_cluster<'a>(lex: &'a Lexicon, context_id: &str, cluster_id: usize) -> Result<Vec<&'a WordEntry>> {
    EmotionalClass::new(cluster_id, lex.num_classes)?;
    if !lex.has_context(context_id) {
        return Err(Error::UnknownContext(context_id.to_string()));
    }
    Ok(lex
        .by_cluster
        .get(&(context_id.to_string(), cluster_id))
        .map(|idx| idx.iter().map(|&i| &lex.words[i]).collect())
        .unwrap_or_default())
}

/// Emotion profile of a variant: the equal-weight mean of every component that resolves.
///
/// Components are the mapped color, shape and background, each inscribed word
/// found in the lexicon, and, when no words are inscribed, the text cluster's mean.
pub fn variant_profile(features: &VariantFeatures, lex: &Lexicon) -> Result<EmotionVector> {
    let mut components: Vec<&EmotionVector> = Vec::new();
    for kind in FeatureKind::ALL {
        if let Some(cat) = features.feature(kind) {
            match lex.feature_profile(kind, cat) {
                Some(p) => components.push(p),
                None => tracing::debug!(%kind, category = cat, "unmapped feature category"),
            }
        }
    }
    if features.inscribed_words.is_empty() {
        if let Some(p) = features.text_cluster.and_then(|c| lex.cluster_profile(c)) {
            components.push(p);
        }
    } else {
        // Sorted so the result does not depend on word order.
        let mut words: Vec<&str> = features.inscribed_words.iter().map(String::as_str).collect();
        words.sort_unstable();
        components.extend(words.into_iter().filter_map(|w| lex.word_profile(w)));
    }
    mean_profile(components.into_iter()).ok_or(Error::MissingProfile)
}
