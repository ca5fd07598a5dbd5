//! Per-reader ordering of items by profile affinity.

use serde::{Deserialize, Serialize};

use crate::affinity::profile_affinity;
use crate::error::{Error, Result};
use crate::types::EmotionVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub item_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Sorts items by descending affinity to `reader`; ties go to the smaller item id. Rank 1 is best.
pub fn rank_items(reader: &EmotionVector, items: &[(String, EmotionVector)]) -> Result<Vec<RankedItem>> {
    if items.is_empty() {
        return Err(Error::EmptyItemSet);
    }
    let mut scored = items
        .iter()
        .map(|(id, p)| Ok((id.as_str(), profile_affinity(reader, p)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (id, score))| RankedItem { item_id: id.to_string(), score, rank: i + 1 })
        .collect())
}

/// Rank of `item_id` within `ranking`.
pub fn expected_rank(item_id: &str, ranking: &[RankedItem]) -> Result<usize> {
    ranking
        .iter()
        .find(|r| r.item_id == item_id)
        .map(|r| r.rank)
        .ok_or_else(|| Error::UnknownItem(item_id.to_string()))
}
