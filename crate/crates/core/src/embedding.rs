//! Emotion embedding: choosing headline words and affective features that
//! maximize a target reader's predicted affinity, and generating variant sets
//! for elicitation rounds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::affinity::profile_affinity;
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::lexicon::{variant_profile, Lexicon};
use crate::types::{EmotionVector, FeatureKind, VariantFeatures};

pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateToken {
    Literal { literal: String },
    Slot { slot: String, context: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadlineTemplate {
    tokens: Vec<TemplateToken>,
}

#[derive(Deserialize, Serialize)]
struct TemplateDocument {
    version: u32,
    tokens: Vec<TemplateToken>,
}

impl HeadlineTemplate {
    pub fn new(tokens: Vec<TemplateToken>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Validation("template has no tokens".into()));
        }
        let mut names = BTreeSet::new();
        for t in &tokens {
            if let TemplateToken::Slot { slot, .. } = t {
                if !names.insert(slot.as_str()) {
                    return Err(Error::Validation(format!("duplicate slot `{slot}`")));
                }
            }
        }
        Ok(Self { tokens })
    }

    /// Parses `"Markets {mood:business} after rate cut"`-style shorthand:
    /// whitespace-separated literals, `{name:context}` for slots.
    pub fn parse(s: &str) -> Result<Self> {
        let tokens = s
            .split_whitespace()
            .map(|t| match t.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
                Some(inner) => {
                    let (slot, context) = inner
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("slot `{t}` needs name:context")))?;
                    Ok(TemplateToken::Slot { slot: slot.into(), context: context.into() })
                }
                None => Ok(TemplateToken::Literal { literal: t.into() }),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(tokens)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: TemplateDocument = serde_json::from_str(s)?;
        if doc.version != TEMPLATE_VERSION {
            return Err(Error::Validation(format!("unsupported template version {}", doc.version)));
        }
        Self::new(doc.tokens)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TemplateDocument { version: TEMPLATE_VERSION, tokens: self.tokens.clone() })
            .expect("template serializes")
    }

    pub fn tokens(&self) -> &[TemplateToken] {
        &self.tokens
    }

    fn slots(&self) -> Vec<(&str, &str)> {
        self.tokens
            .iter()
            .filter_map(|t| match t {
                TemplateToken::Slot { slot, context } => Some((slot.as_str(), context.as_str())),
                TemplateToken::Literal { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedVariant {
    pub headline: Vec<String>,
    pub features: VariantFeatures,
    pub profile: EmotionVector,
    pub score: f64,
}

impl EmbeddedVariant {
    pub fn text(&self) -> String {
        self.headline.join(" ")
    }
}

fn fill(template: &HeadlineTemplate, words: &[&str]) -> Vec<String> {
    let mut words = words.iter();
    template
        .tokens
        .iter()
        .map(|t| match t {
            TemplateToken::Literal { literal } => literal.clone(),
            TemplateToken::Slot { .. } => words.next().expect("one word per slot").to_string(),
        })
        .collect()
}

struct Scorer<'a> {
    target: &'a EmotionVector,
    base: &'a VariantFeatures,
    lex: &'a Lexicon,
}

impl Scorer<'_> {
    fn features(&self, words: &[&str]) -> VariantFeatures {
        let mut f = self.base.clone();
        f.inscribed_words.extend(words.iter().map(|w| w.to_string()));
        f
    }

    fn score(&self, words: &[&str]) -> Result<(f64, VariantFeatures, EmotionVector)> {
        let f = self.features(words);
        let p = variant_profile(&f, self.lex)?;
        Ok((profile_affinity(self.target, &p)?, f, p))
    }
}

/// Fills every slot of `template` so the variant's profile best matches `target`.
///
/// `base` carries features that are fixed for the item (color, background, ...);
/// chosen words are appended to its inscribed words. Searches exhaustively while
/// the combination count is within `config.exhaustive_limit`, greedily per slot
/// otherwise. Ties resolve to the lexicographically smallest words.
pub fn embed_headline(
    template: &HeadlineTemplate,
    target: &EmotionVector,
    base: &VariantFeatures,
    lex: &Lexicon,
    config: &EngineConfig,
) -> Result<EmbeddedVariant> {
    let slots = template.slots();
    let vocab: Vec<Vec<&str>> = slots
        .iter()
        .map(|(slot, context)| {
            let v = lex.context_vocabulary(context);
            if v.is_empty() {
                Err(Error::EmptySlotVocabulary { slot: slot.to_string(), context: context.to_string() })
            } else {
                Ok(v)
            }
        })
        .collect::<Result<_>>()?;
    let scorer = Scorer { target, base, lex };

    let combos = vocab.iter().try_fold(1usize, |acc, v| acc.checked_mul(v.len()));
    let chosen: Vec<&str> = match combos {
        Some(n) if n <= config.exhaustive_limit => exhaustive(&vocab, &scorer)?,
        _ => greedy(&vocab, &scorer)?,
    };

    let (score, features, profile) = scorer.score(&chosen)?;
    Ok(EmbeddedVariant { headline: fill(template, &chosen), features, profile, score })
}

fn exhaustive<'v>(vocab: &[Vec<&'v str>], scorer: &Scorer) -> Result<Vec<&'v str>> {
    let mut idx = vec![0usize; vocab.len()];
    let mut best: Option<(f64, Vec<&str>)> = None;
    loop {
        let words: Vec<&str> = idx.iter().zip(vocab).map(|(&i, v)| v[i]).collect();
        let (s, _, _) = scorer.score(&words)?;
        // Odometer order is lexicographic, so keeping the first maximum breaks ties low.
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, words));
        }
        let mut pos = vocab.len();
        loop {
            if pos == 0 {
                return Ok(best.map(|(_, w)| w).unwrap_or_default());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < vocab[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn greedy<'v>(vocab: &[Vec<&'v str>], scorer: &Scorer) -> Result<Vec<&'v str>> {
    let mut chosen: Vec<&str> = Vec::with_capacity(vocab.len());
    for v in vocab {
        let mut best: Option<(f64, &str)> = None;
        for &w in v {
            let mut trial = chosen.clone();
            trial.push(w);
            let (s, _, _) = scorer.score(&trial)?;
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, w));
            }
        }
        chosen.push(best.expect("non-empty vocabulary").1);
    }
    Ok(chosen)
}

/// Per kind, the category whose profile best matches `target`; ties go to the smaller label.
pub fn select_features(target: &EmotionVector, lex: &Lexicon, kinds: &BTreeSet<FeatureKind>) -> Result<VariantFeatures> {
    let mut out = VariantFeatures::default();
    for &kind in kinds {
        let mut best: Option<(f64, &str)> = None;
        for (cat, p) in lex.categories(kind) {
            let s = profile_affinity(target, p)?;
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, cat));
            }
        }
        let (_, cat) = best.ok_or_else(|| Error::NoMappedCategory(kind.to_string()))?;
        out.set_feature(kind, Some(cat.to_string()));
    }
    Ok(out)
}

/// How a variant set spreads over emotion dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum RoundPolicy {
    /// Round-robin over every dimension in index order.
    Coverage,
    /// Alternate between the two most probable dimensions (0-based).
    Discrimination { first: usize, second: usize },
}

struct PoolEntry {
    features: VariantFeatures,
    profile: EmotionVector,
}

fn variant_pool(base: &VariantFeatures, lex: &Lexicon) -> Vec<PoolEntry> {
    let colors: Vec<Option<&str>> =
        std::iter::once(None).chain(lex.categories(FeatureKind::Color).map(|(c, _)| Some(c))).collect();
    let backgrounds: Vec<Option<&str>> =
        std::iter::once(None).chain(lex.categories(FeatureKind::Background).map(|(c, _)| Some(c))).collect();
    let clusters: Vec<Option<usize>> = std::iter::once(None).chain(lex.cluster_ids().into_iter().map(Some)).collect();

    let mut seen = BTreeSet::new();
    let mut pool = Vec::new();
    for &c in &colors {
        for &b in &backgrounds {
            for &t in &clusters {
                if c.is_none() && b.is_none() && t.is_none() {
                    continue;
                }
                let mut f = base.clone();
                if let Some(c) = c {
                    f.color = Some(c.to_string());
                }
                if let Some(b) = b {
                    f.background = Some(b.to_string());
                }
                if let Some(t) = t {
                    f.text_cluster = Some(t);
                    f.inscribed_words.clear();
                }
                if !seen.insert(f.clone()) {
                    continue;
                }
                if let Ok(profile) = variant_profile(&f, lex) {
                    pool.push(PoolEntry { features: f, profile });
                }
            }
        }
    }
    pool
}

/// `count` distinct variants of one base stimulus, varying color, background and text cluster.
///
/// For each targeted dimension the unused variant with the highest mass on it
/// (among those dominated by it) is taken, preferring fewer components.
pub fn generate_variant_set(
    base: &VariantFeatures,
    lex: &Lexicon,
    count: usize,
    policy: RoundPolicy,
) -> Result<Vec<VariantFeatures>> {
    if count < 2 {
        return Err(Error::InvalidParams("variant set needs at least 2 variants".into()));
    }
    let m = lex.dims();
    let pool = variant_pool(base, lex);

    // Per dominant dimension, candidates ordered by purity, then simplicity, then content.
    let mut by_dim: BTreeMap<usize, Vec<&PoolEntry>> = BTreeMap::new();
    for e in &pool {
        by_dim.entry(e.profile.argmax()).or_default().push(e);
    }
    for (d, entries) in by_dim.iter_mut() {
        entries.sort_by(|a, b| {
            b.profile.values()[*d]
                .total_cmp(&a.profile.values()[*d])
                .then(a.features.component_count().cmp(&b.features.component_count()))
                .then(a.features.cmp(&b.features))
        });
    }
    let mut cursor: BTreeMap<usize, usize> = BTreeMap::new();

    let dims: Vec<usize> = match policy {
        RoundPolicy::Coverage => (0..m).collect(),
        RoundPolicy::Discrimination { first, second } => {
            if first >= m || second >= m {
                return Err(Error::InvalidParams("discrimination dimension out of range".into()));
            }
            if first == second { vec![first] } else { vec![first, second] }
        }
    };

    let mut out = Vec::with_capacity(count);
    let mut turn = 0usize;
    let mut misses = 0usize;
    while out.len() < count {
        let d = dims[turn % dims.len()];
        turn += 1;
        let next = cursor.entry(d).or_insert(0);
        match by_dim.get(&d).and_then(|e| e.get(*next)) {
            Some(entry) => {
                *next += 1;
                out.push(entry.features.clone());
                misses = 0;
            }
            None => {
                misses += 1;
                if misses >= dims.len() {
                    return Err(Error::InsufficientVocabulary { requested: count, available: out.len() });
                }
            }
        }
    }
    Ok(out)
}
