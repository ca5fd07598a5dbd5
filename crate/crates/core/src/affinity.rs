//! Affinity index between candidates (rating agreement) and between a reader
//! and an item (emotion profile overlap).

use std::collections::BTreeMap;

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::types::{EmotionVector, ResponseExpression, StimulusKey};

/// A candidate's ratings keyed by stimulus, with duplicate keys rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSet {
    ratings: BTreeMap<StimulusKey, u8>,
}

impl ResponseSet {
    pub fn from_responses(responses: &[ResponseExpression]) -> Result<Self> {
        let mut ratings = BTreeMap::new();
        for r in responses {
            if ratings.insert(r.key(), r.rating.value()).is_some() {
                return Err(Error::DuplicateResponse {
                    candidate: r.candidate_id.clone(),
                    stimulus: r.stimulus_id.clone(),
                    variant: r.variant_id.clone(),
                    context: r.context_id.clone(),
                });
            }
        }
        Ok(Self { ratings })
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// Mean agreement `1 - |a - b| / R` over shared keys.
    pub fn affinity(&self, other: &ResponseSet, rating_max: u8) -> Result<f64> {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        let mut shared: u64 = 0;
        let mut diff: u64 = 0;
        for (key, a) in &small.ratings {
            if let Some(b) = large.ratings.get(key) {
                shared += 1;
                diff += u64::from(a.abs_diff(*b));
            }
        }
        if shared == 0 {
            return Err(Error::NoSharedStimuli);
        }
        // Integer accumulation keeps the result exactly symmetric and exactly 1 on identity.
        Ok(1.0 - diff as f64 / (shared as f64 * f64::from(rating_max)))
    }
}

/// Affinity index between two candidates' response lists.
pub fn candidate_affinity(
    a: &[ResponseExpression],
    b: &[ResponseExpression],
    config: &EngineConfig,
) -> Result<f64> {
    let a = ResponseSet::from_responses(a)?;
    let b = ResponseSet::from_responses(b)?;
    a.affinity(&b, config.rating_max)
}

/// Affinity index between a reader profile and an item profile: the simplex dot product.
pub fn profile_affinity(reader: &EmotionVector, item: &EmotionVector) -> Result<f64> {
    if reader.len() != item.len() {
        return Err(Error::DimensionMismatch { expected: reader.len(), found: item.len() });
    }
    let dot: f64 = reader.values().iter().zip(item.values()).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(0.0, 1.0))
}
