use serde::{Deserialize, Serialize};

use crate::{secs, Millis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggOp {
    Mean,
    Max,
    Min,
    Count,
    /// Per-second slope of a counter, measured from the last sample before
    /// the window (or the window's first sample) to the window's last sample.
    Rate,
}

impl AggOp {
    pub fn name(self) -> &'static str {
        match self {
            AggOp::Mean => "mean",
            AggOp::Max => "max",
            AggOp::Min => "min",
            AggOp::Count => "count",
            AggOp::Rate => "rate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "mean" | "avg" => AggOp::Mean,
            "max" => AggOp::Max,
            "min" => AggOp::Min,
            "count" => AggOp::Count,
            "rate" => AggOp::Rate,
            _ => return None,
        })
    }

    /// Reduces a non-empty slice of values. `Rate` is not defined here.
    pub fn reduce(self, values: &[f64]) -> f64 {
        match self {
            AggOp::Mean => values.iter().sum::<f64>() / values.len() as f64,
            AggOp::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            AggOp::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            AggOp::Count => values.len() as f64,
            AggOp::Rate => panic!("rate needs timestamps"),
        }
    }
}

/// Tumbling-window aggregation of a time-sorted series.
///
/// Windows are `[t0 + i·w, t0 + (i+1)·w)`; samples before `t0` only serve as
/// the left edge for `Rate`. Empty windows produce no output point.
pub fn aggregate(series: &[(Millis, f64)], t0: Millis, window_s: f64, op: AggOp) -> Vec<(Millis, f64)> {
    assert!(window_s > 0.0, "window must be positive");
    let w = secs(window_s).max(1);
    let start = series.partition_point(|p| p.0 < t0);
    let mut out = Vec::new();
    let mut i = start;
    while i < series.len() {
        let k = (series[i].0 - t0) / w;
        let ws = t0 + k * w;
        let j = i + series[i..].partition_point(|p| p.0 < ws + w);
        let chunk = &series[i..j];
        let v = match op {
            AggOp::Rate => {
                let first = if i > 0 { series[i - 1] } else { chunk[0] };
                let last = chunk[chunk.len() - 1];
                if last.0 > first.0 {
                    (last.1 - first.1) / ((last.0 - first.0) as f64 / 1000.0)
                } else {
                    0.0
                }
            }
            _ => {
                let vals: Vec<f64> = chunk.iter().map(|p| p.1).collect();
                op.reduce(&vals)
            }
        };
        out.push((ws, v));
        i = j;
    }
    out
}
