//! Reader profiling: personality and emotion vectors from ratings, k-medoids
//! clustering on the candidate affinity index, and class assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::affinity::{profile_affinity, ResponseSet};
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::lexicon::{variant_profile, Lexicon};
use crate::types::{EmotionVector, EmotionalClass, PersonalityVector, ResponseExpression, VariantFeatures};

pub const MODEL_VERSION: u32 = 1;

/// Variant id to features.
pub type VariantCatalog = BTreeMap<String, VariantFeatures>;

fn resolve_profiles(
    responses: &[ResponseExpression],
    lex: &Lexicon,
    variants: &VariantCatalog,
) -> Result<BTreeMap<String, EmotionVector>> {
    let mut out = BTreeMap::new();
    for r in responses {
        if out.contains_key(&r.variant_id) {
            continue;
        }
        let features = variants.get(&r.variant_id).ok_or_else(|| Error::UnknownVariant(r.variant_id.clone()))?;
        out.insert(r.variant_id.clone(), variant_profile(features, lex)?);
    }
    Ok(out)
}

/// `PV_i` is the mean of `rating / R` over responses whose variant's dominant dimension is `i`.
pub fn derive_personality_vector(
    responses: &[ResponseExpression],
    lex: &Lexicon,
    variants: &VariantCatalog,
    config: &EngineConfig,
) -> Result<PersonalityVector> {
    if responses.is_empty() {
        return Err(Error::EmptyResponses);
    }
    let m = config.emotion_dims;
    let profiles = resolve_profiles(responses, lex, variants)?;
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for r in responses {
        let p = &profiles[&r.variant_id];
        if p.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: p.len() });
        }
        let d = p.argmax();
        sums[d] += r.rating.weight(config.rating_max);
        counts[d] += 1;
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    PersonalityVector::new(values, counts.iter().map(|&c| c > 0).collect())
}

/// Normalized weighted sum of profiles; uniform when there is no positive evidence.
pub fn emotion_vector_from_evidence<'a>(
    evidence: impl IntoIterator<Item = (f64, &'a EmotionVector)>,
    m: usize,
) -> Result<EmotionVector> {
    let mut acc = vec![0.0; m];
    for (w, p) in evidence {
        if p.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: p.len() });
        }
        for (a, v) in acc.iter_mut().zip(p.values()) {
            *a += w * v;
        }
    }
    if acc.iter().sum::<f64>() > 0.0 {
        EmotionVector::from_weights(acc)
    } else {
        Ok(EmotionVector::uniform(m))
    }
}

/// Rating-weighted, normalized sum of the rated variants' profiles.
pub fn derive_emotion_vector(
    responses: &[ResponseExpression],
    lex: &Lexicon,
    variants: &VariantCatalog,
    config: &EngineConfig,
) -> Result<EmotionVector> {
    if responses.is_empty() {
        return Err(Error::EmptyResponses);
    }
    let profiles = resolve_profiles(responses, lex, variants)?;
    emotion_vector_from_evidence(
        responses.iter().map(|r| (r.rating.weight(config.rating_max), &profiles[&r.variant_id])),
        config.emotion_dims,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Medoid {
    pub candidate_id: String,
    pub responses: Vec<ResponseExpression>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ev: Option<EmotionVector>,
}

/// Result of affinity clustering. `medoids[c - 1]` is the medoid of class `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub version: u32,
    pub k: usize,
    pub medoids: Vec<Medoid>,
    pub assignments: BTreeMap<String, EmotionalClass>,
    pub objective: f64,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default = "default_true")]
    pub converged: bool,
}

fn default_true() -> bool {
    true
}

impl ClusterModel {
    pub fn medoid(&self, class: EmotionalClass) -> Option<&Medoid> {
        self.medoids.get(class.get() - 1)
    }

    /// Computes and stores each medoid's emotion vector for profile-based classification.
    pub fn attach_medoid_profiles(&mut self, lex: &Lexicon, variants: &VariantCatalog, config: &EngineConfig) -> Result<()> {
        for m in &mut self.medoids {
            m.ev = Some(derive_emotion_vector(&m.responses, lex, variants, config)?);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: ClusterModel = serde_json::from_str(s)?;
        if model.version != MODEL_VERSION {
            return Err(Error::Validation(format!("unsupported model version {}", model.version)));
        }
        if model.medoids.len() != model.k {
            return Err(Error::Validation("medoid count does not match k".into()));
        }
        Ok(model)
    }
}

/// Groups responses by candidate id, each group sorted by stimulus key.
pub fn group_by_candidate(responses: &[ResponseExpression]) -> BTreeMap<String, Vec<ResponseExpression>> {
    let mut groups: BTreeMap<String, Vec<ResponseExpression>> = BTreeMap::new();
    for r in responses {
        groups.entry(r.candidate_id.clone()).or_default().push(r.clone());
    }
    for g in groups.values_mut() {
        g.sort_by_key(ResponseExpression::key);
    }
    groups
}

/// Pairwise candidate affinity matrix in candidate-id order.
pub struct AffinityMatrix {
    pub ids: Vec<String>,
    values: Vec<f64>,
}

impl AffinityMatrix {
    pub fn build(groups: &BTreeMap<String, Vec<ResponseExpression>>, config: &EngineConfig) -> Result<Self> {
        let ids: Vec<String> = groups.keys().cloned().collect();
        let sets = groups.values().map(|g| ResponseSet::from_responses(g)).collect::<Result<Vec<_>>>()?;
        let n = ids.len();
        let mut values = vec![1.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let a = sets[i].affinity(&sets[j], config.rating_max)?;
                values[i * n + j] = a;
                values[j * n + i] = a;
            }
        }
        Ok(Self { ids, values })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    /// Sum over every candidate of its best affinity to any medoid.
    pub fn objective(&self, medoids: &[usize]) -> f64 {
        (0..self.len())
            .map(|i| medoids.iter().map(|&m| self.get(i, m)).fold(f64::NEG_INFINITY, f64::max))
            .sum()
    }
}

fn farthest_first(aff: &AffinityMatrix, k: usize) -> Vec<usize> {
    let mut medoids = vec![0];
    while medoids.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..aff.len() {
            if medoids.contains(&j) {
                continue;
            }
            let nearest = medoids.iter().map(|&m| aff.get(j, m)).fold(f64::NEG_INFINITY, f64::max);
            if best.is_none_or(|(_, b)| nearest < b) {
                best = Some((j, nearest));
            }
        }
        medoids.push(best.expect("k <= n").0);
        medoids.sort_unstable();
    }
    medoids
}

/// Medoid selection maximizing total affinity: farthest-first seeding, then
/// best-improvement swaps until none improves or the iteration cap is hit.
pub(crate) fn pam(aff: &AffinityMatrix, k: usize, config: &EngineConfig) -> (Vec<usize>, usize, bool) {
    let mut medoids = farthest_first(aff, k);
    let mut current = aff.objective(&medoids);
    let mut iterations = 0;
    loop {
        if iterations >= config.max_swap_iterations {
            return (medoids, iterations, false);
        }
        let mut best: Option<(f64, Vec<usize>)> = None;
        for pos in 0..k {
            for cand in 0..aff.len() {
                if medoids.contains(&cand) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[pos] = cand;
                trial.sort_unstable();
                let obj = aff.objective(&trial);
                let bar = best.as_ref().map_or(current, |(b, _)| *b);
                if obj > bar + config.tolerance {
                    best = Some((obj, trial));
                }
            }
        }
        match best {
            Some((obj, trial)) => {
                medoids = trial;
                current = obj;
                iterations += 1;
            }
            None => return (medoids, iterations, true),
        }
    }
}

/// Clusters candidates into `k` classes by affinity index.
pub fn cluster_candidates(responses: &[ResponseExpression], k: usize, config: &EngineConfig) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be >= 1".into()));
    }
    let groups = group_by_candidate(responses);
    if groups.len() < k {
        return Err(Error::TooFewCandidates { needed: k, have: groups.len() });
    }
    let aff = AffinityMatrix::build(&groups, config)?;
    let (medoids, iterations, converged) = pam(&aff, k, config);
    if !converged {
        tracing::warn!(iterations, "k-medoids stopped at the swap iteration cap");
    }

    let mut assignments = BTreeMap::new();
    let mut objective = 0.0;
    for i in 0..aff.len() {
        let class_idx = match medoids.iter().position(|&m| m == i) {
            Some(pos) => pos,
            None => {
                let mut best = 0;
                for (pos, &m) in medoids.iter().enumerate().skip(1) {
                    if aff.get(i, m) > aff.get(i, medoids[best]) {
                        best = pos;
                    }
                }
                best
            }
        };
        objective += aff.get(i, medoids[class_idx]);
        assignments.insert(aff.ids[i].clone(), EmotionalClass::new(class_idx + 1, k)?);
    }

    let medoids = medoids
        .iter()
        .map(|&i| Medoid { candidate_id: aff.ids[i].clone(), responses: groups[&aff.ids[i]].clone(), ev: None })
        .collect();
    Ok(ClusterModel { version: MODEL_VERSION, k, medoids, assignments, objective, iterations, converged })
}

fn best_class(scores: impl Iterator<Item = f64>, k: usize) -> Result<EmotionalClass> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    let (i, _) = best.ok_or(Error::EmptyModel)?;
    EmotionalClass::new(i + 1, k)
}

/// Class of the medoid with the highest candidate affinity; ties go to the lowest class.
pub fn classify_responses(
    responses: &[ResponseExpression],
    model: &ClusterModel,
    config: &EngineConfig,
) -> Result<EmotionalClass> {
    if model.medoids.is_empty() {
        return Err(Error::EmptyModel);
    }
    let set = ResponseSet::from_responses(responses)?;
    let scores = model
        .medoids
        .iter()
        .map(|m| set.affinity(&ResponseSet::from_responses(&m.responses)?, config.rating_max))
        .collect::<Result<Vec<_>>>()?;
    best_class(scores.into_iter(), model.k)
}

/// Class of the medoid whose emotion vector has the highest profile affinity.
pub fn classify_profile(ev: &EmotionVector, model: &ClusterModel) -> Result<EmotionalClass> {
    if model.medoids.is_empty() {
        return Err(Error::EmptyModel);
    }
    let scores = model
        .medoids
        .iter()
        .map(|m| {
            let mev = m.ev.as_ref().ok_or_else(|| Error::MissingMedoidProfile(m.candidate_id.clone()))?;
            profile_affinity(ev, mev)
        })
        .collect::<Result<Vec<_>>>()?;
    best_class(scores.into_iter(), model.k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProfile {
    pub candidate_id: String,
    pub pv: PersonalityVector,
    pub ev: EmotionVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<EmotionalClass>,
}

/// PV, EV and (when a model with medoid profiles is given) the class of one candidate.
pub fn build_profile(
    candidate_id: &str,
    responses: &[ResponseExpression],
    lex: &Lexicon,
    variants: &VariantCatalog,
    model: Option<&ClusterModel>,
    config: &EngineConfig,
) -> Result<CandidateProfile> {
    let pv = derive_personality_vector(responses, lex, variants, config)?;
    let ev = derive_emotion_vector(responses, lex, variants, config)?;
    let class = model.map(|m| classify_profile(&ev, m)).transpose()?;
    Ok(CandidateProfile { candidate_id: candidate_id.to_string(), pv, ev, class })
}
