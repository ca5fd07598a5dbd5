//! Rank-comparison and per-class accuracy metrics, a seeded synthetic
//! population generator, and the end-to-end experiment runner.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::affinity::profile_affinity;
use crate::config::EngineConfig;
use crate::embedding::{embed_headline, generate_variant_set, select_features, HeadlineTemplate, RoundPolicy, TemplateToken};
use crate::error::{Error, Result};
use crate::learning::{classify_responses, cluster_candidates, derive_emotion_vector, VariantCatalog};
use crate::lexicon::{variant_profile, Lexicon};
use crate::ranking::{expected_rank, rank_items};
use crate::types::{fnv1a, EmotionVector, EmotionalClass, FeatureKind, Rating, ResponseExpression, VariantFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRow {
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RankComparison {
    pub rows: Vec<RankRow>,
}

impl RankComparison {
    pub fn new(rows: Vec<RankRow>) -> Result<Self> {
        if rows.iter().any(|r| r.expected == 0 || r.actual == 0) {
            return Err(Error::Validation("ranks start at 1".into()));
        }
        Ok(Self { rows })
    }

    /// Fraction of rows whose actual rank equals `rank`.
    pub fn share_at(&self, rank: usize) -> Result<f64> {
        self.share(|r| r.actual == rank)
    }

    /// Fraction of rows whose actual rank is `rank` or worse.
    pub fn share_at_or_below(&self, rank: usize) -> Result<f64> {
        self.share(|r| r.actual >= rank)
    }

    fn share(&self, pred: impl Fn(&RankRow) -> bool) -> Result<f64> {
        if self.rows.is_empty() {
            return Err(Error::EmptyComparison);
        }
        Ok(self.rows.iter().filter(|r| pred(r)).count() as f64 / self.rows.len() as f64)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("Serial No  Expected Rank  Actual Rank\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(s, "{:>9}  {:>13}  {:>11}", i + 1, r.expected, r.actual);
        }
        s
    }
}

/// Fraction of rows where the actual rank equals the expected rank.
pub fn exact_match_rate(cmp: &RankComparison) -> Result<f64> {
    cmp.share(|r| r.actual == r.expected)
}

/// One evaluated candidate: its class label and the actual rank its recommended item achieved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub candidate_id: String,
    pub class: Option<u32>,
    pub actual_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_class: BTreeMap<u32, f64>,
    pub counts: BTreeMap<u32, usize>,
    pub overall: f64,
}

impl AccuracyReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from("Emotional Type (Class)  Accuracy (%)  Candidates\n");
        for (c, pct) in &self.per_class {
            let _ = writeln!(s, "{:>22}  {:>12.1}  {:>10}", c, pct, self.counts[c]);
        }
        let _ = writeln!(s, "{:>22}  {:>12.1}  {:>10}", "overall", self.overall, self.counts.values().sum::<usize>());
        s
    }
}

/// Per class, the percentage of candidates whose recommended item reached actual rank 1.
pub fn class_accuracy(results: &[CandidateOutcome]) -> Result<AccuracyReport> {
    if results.is_empty() {
        return Err(Error::EmptyComparison);
    }
    let mut hits: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for r in results {
        let c = r.class.ok_or_else(|| Error::UnclassifiedCandidate(r.candidate_id.clone()))?;
        let e = hits.entry(c).or_default();
        e.0 += usize::from(r.actual_rank == 1);
        e.1 += 1;
    }
    let per_class = hits.iter().map(|(&c, &(h, n))| (c, 100.0 * h as f64 / n as f64)).collect();
    let counts = hits.iter().map(|(&c, &(_, n))| (c, n)).collect();
    let total_hits: usize = hits.values().map(|(h, _)| h).sum();
    let overall = 100.0 * total_hits as f64 / results.len() as f64;
    Ok(AccuracyReport { per_class, counts, overall })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusVariant {
    pub variant_id: String,
    pub features: VariantFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub stimulus_id: String,
    pub context_id: String,
    pub variants: Vec<StimulusVariant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCandidate {
    pub candidate_id: String,
    pub true_class: EmotionalClass,
    pub responses: Vec<ResponseExpression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPopulation {
    pub k: usize,
    pub noise_level: f64,
    pub seed: u64,
    pub prototypes: Vec<EmotionVector>,
    pub stimuli: Vec<Stimulus>,
    pub candidates: Vec<SyntheticCandidate>,
}

impl SyntheticPopulation {
    pub fn variant_catalog(&self) -> VariantCatalog {
        self.stimuli
            .iter()
            .flat_map(|s| s.variants.iter().map(|v| (v.variant_id.clone(), v.features.clone())))
            .collect()
    }

    pub fn responses(&self) -> Vec<ResponseExpression> {
        self.candidates.iter().flat_map(|c| c.responses.iter().cloned()).collect()
    }

    pub fn prototype(&self, class: EmotionalClass) -> &EmotionVector {
        &self.prototypes[class.get() - 1]
    }
}

/// Number of base stimuli each synthetic candidate rates.
pub const SYNTHETIC_STIMULI: usize = 5;

/// Maximum total off-dominant mass in a sampled prototype.
const PROTOTYPE_SPILL: f64 = 0.03;

/// Five base stimuli, each with one coverage-policy variant per emotion dimension.
pub fn stimulus_design(lex: &Lexicon) -> Result<Vec<Stimulus>> {
    let contexts = lex.contexts();
    if contexts.is_empty() {
        return Err(Error::InvalidParams("lexicon has no contexts".into()));
    }
    (0..SYNTHETIC_STIMULI)
        .map(|s| {
            let base = VariantFeatures { presentation_order: Some(s as u32 + 1), ..Default::default() };
            let variants = generate_variant_set(&base, lex, lex.dims().max(2), RoundPolicy::Coverage)?
                .into_iter()
                .map(|features| StimulusVariant { variant_id: features.content_id(), features })
                .collect();
            Ok(Stimulus {
                stimulus_id: format!("stimulus-{}", s + 1),
                context_id: contexts[s % contexts.len()].to_string(),
                variants,
            })
        })
        .collect()
}

/// Samples `k` near-one-hot prototypes and `per_class_count` candidates per class whose
/// ratings are `clamp(round(R * affinity(prototype, variant) + N(0, noise)), 0, R)`.
pub fn generate_population(
    k: usize,
    per_class_count: usize,
    noise_level: f64,
    seed: u64,
    lex: &Lexicon,
    config: &EngineConfig,
) -> Result<SyntheticPopulation> {
    let m = lex.dims();
    if k == 0 || per_class_count == 0 {
        return Err(Error::InvalidParams("k and per_class_count must be >= 1".into()));
    }
    if k > m {
        return Err(Error::InvalidParams(format!("k = {k} exceeds the {m} emotion dimensions")));
    }
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(Error::InvalidParams("noise_level must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stimuli = stimulus_design(lex)?;

    let prototypes = (0..k)
        .map(|c| {
            let mut w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * PROTOTYPE_SPILL / (m as f64 - 1.0).max(1.0)).collect();
            w[c] = 0.0;
            w[c] = 1.0 - w.iter().sum::<f64>();
            EmotionVector::from_weights(w)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut profiles: BTreeMap<&str, EmotionVector> = BTreeMap::new();
    for s in &stimuli {
        for v in &s.variants {
            profiles.insert(&v.variant_id, variant_profile(&v.features, lex)?);
        }
    }

    let r_max = f64::from(config.rating_max);
    let mut candidates = Vec::with_capacity(k * per_class_count);
    for (c, proto) in prototypes.iter().enumerate() {
        for _ in 0..per_class_count {
            let candidate_id = format!("cand-{:04}", candidates.len() + 1);
            let mut responses = Vec::new();
            for s in &stimuli {
                for v in &s.variants {
                    let noise: f64 = rng.sample(StandardNormal);
                    let raw = r_max * profile_affinity(proto, &profiles[v.variant_id.as_str()])? + noise_level * noise;
                    let (rating, _) = Rating::clamped(raw.round() as i64, config.rating_max);
                    responses.push(ResponseExpression::new(
                        candidate_id.clone(),
                        s.stimulus_id.clone(),
                        v.variant_id.clone(),
                        s.context_id.clone(),
                        rating,
                    ));
                }
            }
            candidates.push(SyntheticCandidate {
                candidate_id,
                true_class: EmotionalClass::new(c + 1, k)?,
                responses,
            });
        }
    }
    Ok(SyntheticPopulation { k, noise_level, seed, prototypes, stimuli, candidates })
}

/// splitmix64 finalizer; FNV-1a alone leaves ids that differ in their last
/// characters close together in the high bits.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic 80/20 split: the 20% of candidates with the smallest id hashes form the test set.
pub fn split_train_test(population: &SyntheticPopulation) -> (Vec<&SyntheticCandidate>, Vec<&SyntheticCandidate>) {
    let mut order: Vec<&SyntheticCandidate> = population.candidates.iter().collect();
    order.sort_by_key(|c| (mix(fnv1a(c.candidate_id.as_bytes())), c.candidate_id.clone()));
    let n_test = ((order.len() as f64 * 0.2).round() as usize).clamp(1, order.len());
    let train = order.split_off(n_test);
    (train, order)
}

/// An item in the experiment's candidate set: one news story embedded toward one emotion dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentItem {
    pub item_id: String,
    pub headline: String,
    pub features: VariantFeatures,
    pub profile: EmotionVector,
}

/// One story per emotion dimension, each with words and features embedded toward that dimension.
pub fn experiment_items(lex: &Lexicon, config: &EngineConfig) -> Result<Vec<ExperimentItem>> {
    let contexts = lex.contexts();
    if contexts.is_empty() {
        return Err(Error::InvalidParams("lexicon has no contexts".into()));
    }
    let kinds: BTreeSet<FeatureKind> = [FeatureKind::Color, FeatureKind::Background]
        .into_iter()
        .filter(|k| lex.categories(*k).next().is_some())
        .collect();
    (0..lex.dims())
        .map(|d| {
            let target = EmotionVector::one_hot(lex.dims(), d)?;
            let template = HeadlineTemplate::new(vec![
                TemplateToken::Literal { literal: format!("Story {}:", d + 1) },
                TemplateToken::Slot { slot: "tone".into(), context: contexts[d % contexts.len()].to_string() },
                TemplateToken::Literal { literal: "developments".into() },
            ])?;
            let base = select_features(&target, lex, &kinds)?;
            let e = embed_headline(&template, &target, &base, lex, config)?;
            Ok(ExperimentItem { item_id: format!("item-{}", d + 1), headline: e.text(), features: e.features, profile: e.profile })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub noise_level: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Fraction of test candidates assigned to the cluster whose training majority is their true class.
    pub classification_accuracy: f64,
    pub comparison: RankComparison,
    pub exact_match_rate: f64,
    pub accuracy: AccuracyReport,
}

impl ExperimentReport {
    pub fn to_text(&self) -> String {
        format!(
            "noise {:.2}: train {} / test {}, classification accuracy {:.1}%, exact match rate {:.3}\n{}\n{}",
            self.noise_level,
            self.train_size,
            self.test_size,
            100.0 * self.classification_accuracy,
            self.exact_match_rate,
            self.comparison.to_text(),
            self.accuracy.to_text()
        )
    }
}

/// Replays the learn / classify / embed / rank pipeline on a synthetic population.
///
/// Train candidates are clustered; each test candidate is classified, profiled, and
/// shown the engine's top item, whose rank under the candidate's true prototype is
/// the actual rank (expected rank is 1 by construction).
pub fn run_experiment(population: &SyntheticPopulation, lex: &Lexicon, config: &EngineConfig) -> Result<ExperimentReport> {
    let (train, test) = split_train_test(population);
    let train_responses: Vec<ResponseExpression> = train.iter().flat_map(|c| c.responses.iter().cloned()).collect();
    let model = cluster_candidates(&train_responses, population.k, config)?;

    // Cluster -> majority true class of its training members.
    let true_class: BTreeMap<&str, EmotionalClass> =
        train.iter().map(|c| (c.candidate_id.as_str(), c.true_class)).collect();
    let mut votes: BTreeMap<EmotionalClass, BTreeMap<EmotionalClass, usize>> = BTreeMap::new();
    for (id, cluster) in &model.assignments {
        *votes.entry(*cluster).or_default().entry(true_class[id.as_str()]).or_default() += 1;
    }
    let cluster_label: BTreeMap<EmotionalClass, EmotionalClass> = votes
        .into_iter()
        .map(|(cluster, v)| {
            let best = v.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(c, _)| *c).expect("non-empty cluster");
            (cluster, best)
        })
        .collect();

    let catalog = population.variant_catalog();
    let items = experiment_items(lex, config)?;
    let item_profiles: Vec<(String, EmotionVector)> = items.iter().map(|i| (i.item_id.clone(), i.profile.clone())).collect();

    let mut rows = Vec::with_capacity(test.len());
    let mut outcomes = Vec::with_capacity(test.len());
    let mut correct = 0usize;
    for c in &test {
        let predicted = classify_responses(&c.responses, &model, config)?;
        if cluster_label.get(&predicted) == Some(&c.true_class) {
            correct += 1;
        }
        let ev = derive_emotion_vector(&c.responses, lex, &catalog, config)?;
        let engine = rank_items(&ev, &item_profiles)?;
        let recommended = &engine[0].item_id;
        let truth = rank_items(population.prototype(c.true_class), &item_profiles)?;
        let row = RankRow { expected: expected_rank(recommended, &engine)?, actual: expected_rank(recommended, &truth)? };
        outcomes.push(CandidateOutcome {
            candidate_id: c.candidate_id.clone(),
            class: Some(c.true_class.get() as u32),
            actual_rank: row.actual,
        });
        rows.push(row);
    }
    let comparison = RankComparison::new(rows)?;
    Ok(ExperimentReport {
        noise_level: population.noise_level,
        train_size: train.len(),
        test_size: test.len(),
        classification_accuracy: correct as f64 / test.len() as f64,
        exact_match_rate: exact_match_rate(&comparison)?,
        comparison,
        accuracy: class_accuracy(&outcomes)?,
    })
}
