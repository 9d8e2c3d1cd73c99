use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnomalyError;
use crate::stats::{mean, median_mad, robust_z};
use crate::{Millis, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub node_id: NodeId,
    pub metric: String,
    pub spatial: f64,
    pub temporal: f64,
    pub window: (Millis, Millis),
}

impl AnomalyScore {
    pub fn combined(&self) -> f64 {
        self.spatial.max(self.temporal)
    }
}

/// Peer-deviation score per node: at each timestamp, every node's value is
/// compared with the cross-node median/MAD; a node's score is the mean of its
/// per-timestamp robust z. Timestamps seen by fewer than 3 nodes are skipped.
pub fn spatial_scores(matrix: &BTreeMap<NodeId, Vec<(Millis, f64)>>) -> Result<BTreeMap<NodeId, f64>, AnomalyError> {
    if matrix.len() < 3 {
        return Err(AnomalyError::TooFewPeers(matrix.len()));
    }
    let mut by_t: BTreeMap<Millis, Vec<(NodeId, f64)>> = BTreeMap::new();
    for (n, series) in matrix {
        for &(t, v) in series {
            by_t.entry(t).or_default().push((*n, v));
        }
    }
    let mut sums: BTreeMap<NodeId, (f64, usize)> = BTreeMap::new();
    for row in by_t.values().filter(|r| r.len() >= 3) {
        let values: Vec<f64> = row.iter().map(|r| r.1).collect();
        let (med, mad) = median_mad(&values).expect("non-empty");
        for &(n, v) in row {
            let e = sums.entry(n).or_default();
            e.0 += robust_z(v, med, mad);
            e.1 += 1;
        }
    }
    Ok(sums.into_iter().map(|(n, (s, c))| (n, s / c as f64)).collect())
}

/// Self-consistency score: robust z of the current window mean against the
/// node's own historical values.
pub fn temporal_score(current: &[f64], baseline: &[f64]) -> Result<f64, AnomalyError> {
    let (med, mad) = median_mad(baseline).ok_or(AnomalyError::EmptyBaseline)?;
    Ok(mean(current).map_or(0.0, |m| robust_z(m, med, mad)))
}

/// The node whose score is at least `k` times every other node's and at least
/// `min_score`, if any.
pub fn dominant(scores: &BTreeMap<NodeId, f64>, k: f64, min_score: f64) -> Option<NodeId> {
    let mut best: Option<(NodeId, f64)> = None;
    let mut second = 0.0f64;
    for (&n, &s) in scores {
        match best {
            Some((_, b)) if s <= b => second = second.max(s),
            _ => {
                if let Some((_, b)) = best {
                    second = second.max(b);
                }
                best = Some((n, s));
            }
        }
    }
    let (n, top) = best?;
    (top >= min_score && top >= k * second).then_some(n)
}
