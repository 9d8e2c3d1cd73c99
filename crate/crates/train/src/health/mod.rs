//! Training health: collapse precursors in layer-wise MoE norm profiles and
//! straggler noise in per-rank step timings.

mod straggler;
pub mod synthetic;
mod valley;

pub use straggler::{
    straggler_detect, throughput_stats, throughput_stats_observed, Evidence, NoisePattern, RankTimingTrace,
    StragglerConfig, Suspect, ThroughputStats,
};
pub use valley::{
    monitor_collapse, valley_score, CollapseMonitor, NormProfile, ValleyReport, DEFAULT_PERSISTENCE,
    DEFAULT_VALLEY_THRESHOLD,
};

use std::collections::BTreeMap;
use std::io::Read;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HealthError {
    #[error("profile has {0} layers, need at least 3")]
    DegenerateProfile(usize),
    #[error("value must be positive and finite: {0}")]
    NonPositive(String),
    #[error("need at least 3 ranks, got {0}")]
    TooFewRanks(usize),
    #[error("rank {rank} has {steps} steps, expected {expected}")]
    Ragged { rank: usize, steps: usize, expected: usize },
    #[error("empty input")]
    Empty,
    #[error("profile at iteration {0} is out of order")]
    OutOfOrder(u64),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for HealthError {
    fn from(e: csv::Error) -> Self {
        HealthError::Csv(e.to_string())
    }
}

#[derive(Deserialize)]
struct NormRow {
    iteration: u64,
    layer: usize,
    value: f64,
}

#[derive(Deserialize)]
struct TimingRow {
    rank: usize,
    step: usize,
    duration: f64,
}

/// Reads `iteration,layer,value` rows (1-based layers, any order) into
/// profiles sorted by iteration. Every iteration must list layers 1..=L.
pub fn read_norm_csv(r: impl Read) -> Result<Vec<NormProfile>, HealthError> {
    let mut by_it: BTreeMap<u64, BTreeMap<usize, f64>> = BTreeMap::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: NormRow = row?;
        by_it.entry(row.iteration).or_default().insert(row.layer, row.value);
    }
    let mut out = Vec::new();
    for (it, layers) in by_it {
        if layers.keys().copied().ne(1..=layers.len()) {
            return Err(HealthError::Csv(format!("iteration {it}: layers must be 1..={}", layers.len())));
        }
        let p = NormProfile::new(it, layers.into_values().collect());
        p.check()?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(HealthError::Empty);
    }
    Ok(out)
}

/// Reads `rank,step,duration` rows (0-based rank and step).
pub fn read_timing_csv(r: impl Read) -> Result<RankTimingTrace, HealthError> {
    let mut cells: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: TimingRow = row?;
        cells.entry(row.rank).or_default().insert(row.step, row.duration);
    }
    if cells.keys().copied().ne(0..cells.len()) {
        return Err(HealthError::Csv("ranks must be 0..R".into()));
    }
    let mut ranks = Vec::new();
    for (rank, steps) in cells {
        if steps.keys().copied().ne(0..steps.len()) {
            return Err(HealthError::Csv(format!("rank {rank}: steps must be 0..S")));
        }
        ranks.push(steps.into_values().collect());
    }
    RankTimingTrace::new(ranks)
}
