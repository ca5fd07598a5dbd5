//! Domain values shared by every module: ratings, responses, profile vectors
//! and stimulus variant features.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};

/// Tolerance used when accepting externally supplied simplex vectors.
pub const INGEST_SUM_TOLERANCE: f64 = 1e-6;

/// A response on the `[0, R]` inclination scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rating(u8);

impl Rating {
    pub fn new(value: i64, max: u8) -> Result<Self> {
        if (0..=i64::from(max)).contains(&value) {
            Ok(Rating(value as u8))
        } else {
            Err(Error::OutOfRangeRating { value, max })
        }
    }

    /// Clamps a raw value onto the scale. The flag is set when clamping changed it.
    pub fn clamped(value: i64, max: u8) -> (Self, bool) {
        let c = value.clamp(0, i64::from(max));
        (Rating(c as u8), c != value)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Rating as a fraction of the scale maximum.
    pub fn weight(self, max: u8) -> f64 {
        f64::from(self.0) / f64::from(max)
    }
}

/// Identifies one stimulus variant shown in one context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StimulusKey {
    pub stimulus_id: String,
    pub variant_id: String,
    pub context_id: String,
}

/// One candidate's rating of one stimulus variant in one context.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResponseExpression {
    #[serde(rename = "candidate")]
    pub candidate_id: String,
    #[serde(rename = "stimulus")]
    pub stimulus_id: String,
    #[serde(rename = "variant")]
    pub variant_id: String,
    #[serde(rename = "context")]
    pub context_id: String,
    pub rating: Rating,
}

impl ResponseExpression {
    pub fn new(
        candidate_id: impl Into<String>,
        stimulus_id: impl Into<String>,
        variant_id: impl Into<String>,
        context_id: impl Into<String>,
        rating: Rating,
    ) -> Self {
        Self {
            candidate_id: candidate_id.into(),
            stimulus_id: stimulus_id.into(),
            variant_id: variant_id.into(),
            context_id: context_id.into(),
            rating,
        }
    }

    pub fn key(&self) -> StimulusKey {
        StimulusKey {
            stimulus_id: self.stimulus_id.clone(),
            variant_id: self.variant_id.clone(),
            context_id: self.context_id.clone(),
        }
    }

    pub fn validate(&self, config: &EngineConfig) -> Result<()> {
        for (name, v) in [
            ("candidate", &self.candidate_id),
            ("stimulus", &self.stimulus_id),
            ("variant", &self.variant_id),
            ("context", &self.context_id),
        ] {
            if v.is_empty() {
                return Err(Error::InvalidResponse(format!("empty {name} identifier")));
            }
        }
        if self.rating.value() > config.rating_max {
            return Err(Error::OutOfRangeRating {
                value: i64::from(self.rating.value()),
                max: config.rating_max,
            });
        }
        Ok(())
    }
}

/// Wire form of a response before its rating is checked against the scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub candidate: String,
    pub stimulus: String,
    pub variant: String,
    pub context: String,
    pub rating: i64,
}

impl RawResponse {
    /// Converts to a response, clamping the rating onto `[0, R]` with a warning.
    pub fn ingest(self, config: &EngineConfig) -> Result<ResponseExpression> {
        let (rating, clamped) = Rating::clamped(self.rating, config.rating_max);
        if clamped {
            tracing::warn!(
                candidate = %self.candidate,
                stimulus = %self.stimulus,
                raw = self.rating,
                clamped = rating.value(),
                "rating outside scale clamped on ingest"
            );
        }
        let r = ResponseExpression::new(self.candidate, self.stimulus, self.variant, self.context, rating);
        r.validate(config)?;
        Ok(r)
    }
}

/// Per-dimension preference intensities mined from a candidate's ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalityVector {
    values: Vec<f64>,
    support: Vec<bool>,
}

impl PersonalityVector {
    pub fn new(values: Vec<f64>, support: Vec<bool>) -> Result<Self> {
        if values.len() != support.len() {
            return Err(Error::DimensionMismatch { expected: values.len(), found: support.len() });
        }
        for (v, s) in values.iter().zip(&support) {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                return Err(Error::InvalidVector(format!("personality entry {v} outside [0, 1]")));
            }
            if !s && *v != 0.0 {
                return Err(Error::InvalidVector("unsupported entry must be 0".into()));
            }
        }
        Ok(Self { values, support })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A probability-simplex profile over emotion dimensions.
///
/// Every constructor normalizes, so entries are non-negative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmotionVector {
    values: Vec<f64>,
}

impl EmotionVector {
    /// Normalizes non-negative weights by their sum.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidVector("empty vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidVector("weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidVector("weights sum to zero".into()));
        }
        Ok(Self { values: weights.into_iter().map(|w| w / sum).collect() })
    }

    /// Accepts values that already sum to one within `tol`. Values off by more than
    /// float rounding are renormalized; the rest are kept bit-for-bit so stored
    /// vectors round-trip exactly.
    pub fn from_simplex(values: Vec<f64>, tol: f64) -> Result<Self> {
        if values.is_empty() || values.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidVector("entries must be finite and non-negative".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidVector(format!("entries sum to {sum}, expected 1")));
        }
        if (sum - 1.0).abs() <= 1e-12 {
            return Ok(Self { values });
        }
        Self::from_weights(values)
    }

    pub fn one_hot(m: usize, dim: usize) -> Result<Self> {
        if dim >= m {
            return Err(Error::DimensionMismatch { expected: m, found: dim + 1 });
        }
        let mut v = vec![0.0; m];
        v[dim] = 1.0;
        Ok(Self { values: v })
    }

    pub fn uniform(m: usize) -> Self {
        assert!(m > 0, "uniform vector needs at least one dimension");
        Self { values: vec![1.0 / m as f64; m] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    /// The two strongest dimensions, strongest first, ties to lower indices.
    pub fn top_two(&self) -> (usize, usize) {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        (idx[0], *idx.get(1).unwrap_or(&idx[0]))
    }
}

impl TryFrom<Vec<f64>> for EmotionVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        EmotionVector::from_simplex(v, INGEST_SUM_TOLERANCE)
    }
}

impl From<EmotionVector> for Vec<f64> {
    fn from(v: EmotionVector) -> Self {
        v.values
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// One of the `k` reader classes, numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionalClass(usize);

impl EmotionalClass {
    pub fn new(value: usize, k: usize) -> Result<Self> {
        if (1..=k).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidClass { value, k })
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for EmotionalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Affective features that can carry an emotion profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Color,
    Shape,
    Background,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Color, FeatureKind::Shape, FeatureKind::Background];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Color => "color",
            FeatureKind::Shape => "shape",
            FeatureKind::Background => "background",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "color" => Ok(FeatureKind::Color),
            "shape" => Ok(FeatureKind::Shape),
            "background" => Ok(FeatureKind::Background),
            other => Err(Error::Parse(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// The affective features of one stimulus variant.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariantFeatures {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation_order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_cluster: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inscribed_words: Vec<String>,
}

impl VariantFeatures {
    pub fn is_empty(&self) -> bool {
        self.color.is_none()
            && self.shape.is_none()
            && self.background.is_none()
            && self.presentation_order.is_none()
            && self.text_cluster.is_none()
            && self.inscribed_words.is_empty()
    }

    pub fn feature(&self, kind: FeatureKind) -> Option<&str> {
        match kind {
            FeatureKind::Color => self.color.as_deref(),
            FeatureKind::Shape => self.shape.as_deref(),
            FeatureKind::Background => self.background.as_deref(),
        }
    }

    pub fn set_feature(&mut self, kind: FeatureKind, category: Option<String>) {
        match kind {
            FeatureKind::Color => self.color = category,
            FeatureKind::Shape => self.shape = category,
            FeatureKind::Background => self.background = category,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Validation("variant has no features".into()));
        }
        if let Some(c) = self.text_cluster {
            EmotionalClass::new(c, k)?;
        }
        Ok(())
    }

    /// Number of populated affective fields.
    pub fn component_count(&self) -> usize {
        [self.color.is_some(), self.shape.is_some(), self.background.is_some(), self.text_cluster.is_some()]
            .into_iter()
            .filter(|b| *b)
            .count()
            + self.inscribed_words.len()
    }

    /// Stable content-derived identifier, equal for equal feature sets.
    pub fn content_id(&self) -> String {
        let json = serde_json::to_string(self).expect("features serialize");
        format!("v{:016x}", fnv1a(json.as_bytes()))
    }
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
