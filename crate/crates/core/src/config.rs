use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Engine-wide dimensions and numeric tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Number of emotion dimensions `m`.
    pub emotion_dims: usize,
    /// Number of emotional classes `k`.
    pub num_classes: usize,
    /// Top of the rating scale; ratings live in `[0, rating_max]`.
    pub rating_max: u8,
    /// Absolute tolerance for real comparisons.
    pub tolerance: f64,
    /// Headline embedding searches exhaustively up to this many word combinations.
    pub exhaustive_limit: usize,
    /// Cap on k-medoids swap iterations.
    pub max_swap_iterations: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            emotion_dims: 5,
            num_classes: 5,
            rating_max: 4,
            tolerance: 1e-9,
            exhaustive_limit: 4096,
            max_swap_iterations: 100,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.emotion_dims == 0 {
            return Err(Error::InvalidConfig("emotion_dims must be >= 1".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be >= 1".into()));
        }
        if self.rating_max == 0 {
            return Err(Error::InvalidConfig("rating_max must be >= 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = EngineConfig::default();
        c.validate().unwrap();
        assert_eq!((c.emotion_dims, c.num_classes, c.rating_max), (5, 5, 4));
    }

    #[test]
    fn rejects_zero_dims() {
        let c = EngineConfig { emotion_dims: 0, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let c = EngineConfig { tolerance: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
