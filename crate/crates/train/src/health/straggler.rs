use faultline::stats::{mean, median, median_mad, population_std, EPSILON, MAD_SCALE};
use serde::{Deserialize, Serialize};

use super::HealthError;

/// Local (pre-synchronization) step durations in seconds, `ranks[r][s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTimingTrace {
    pub ranks: Vec<Vec<f64>>,
}

impl RankTimingTrace {
    pub fn new(ranks: Vec<Vec<f64>>) -> Result<Self, HealthError> {
        let t = Self { ranks };
        t.check()?;
        Ok(t)
    }

    pub fn steps(&self) -> usize {
        self.ranks.first().map_or(0, Vec::len)
    }

    pub fn check(&self) -> Result<(), HealthError> {
        let n = self.steps();
        if n == 0 {
            return Err(HealthError::Empty);
        }
        for (r, row) in self.ranks.iter().enumerate() {
            if row.len() != n {
                return Err(HealthError::Ragged { rank: r, steps: row.len(), expected: n });
            }
            if let Some(s) = row.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(HealthError::NonPositive(format!("rank {r} step {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePattern {
    /// Uniformly slower than its peers.
    Persistent,
    /// Spikes at a fixed step interval.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evidence {
    /// Rank median over the median of the other ranks' medians.
    pub median_ratio: f64,
    /// Lag of the autocorrelation peak of the rank's residual.
    pub lag: Option<usize>,
    pub autocorrelation: f64,
    /// Largest residual above its median, in units of scaled MAD.
    pub spike_mads: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Suspect {
    pub rank: usize,
    pub pattern: NoisePattern,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StragglerConfig {
    /// Last `window` steps are analyzed; all when `None`.
    pub window: Option<usize>,
    /// Relative excess of the rank median over the peer median.
    pub persistent_excess: f64,
    pub min_autocorrelation: f64,
    pub min_spike_mads: f64,
    pub min_lag: usize,
    pub max_lag: usize,
}

impl Default for StragglerConfig {
    fn default() -> Self {
        Self {
            window: None,
            persistent_excess: 0.05,
            min_autocorrelation: 0.5,
            min_spike_mads: 3.0,
            min_lag: 2,
            max_lag: 256,
        }
    }
}

/// Biased autocorrelation of `x` at lags `lo..=hi`; returns the peak
/// (first on ties) or `None` for a constant series.
fn acf_peak(x: &[f64], lo: usize, hi: usize) -> Option<(usize, f64)> {
    let m = mean(x)?;
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let var: f64 = d.iter().map(|v| v * v).sum();
    if var <= EPSILON * EPSILON * x.len() as f64 {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for lag in lo..=hi.min(x.len().saturating_sub(1)) {
        let c: f64 = d[..d.len() - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum::<f64>() / var;
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((lag, c));
        }
    }
    best
}

/// Flags ranks whose local step times deviate from their peers. Ranks come
/// back in rank order; a rank can carry both patterns.
pub fn straggler_detect(trace: &RankTimingTrace, cfg: &StragglerConfig) -> Result<Vec<Suspect>, HealthError> {
    trace.check()?;
    let r = trace.ranks.len();
    if r < 3 {
        return Err(HealthError::TooFewRanks(r));
    }
    let n = trace.steps();
    let start = cfg.window.map_or(0, |w| n.saturating_sub(w));
    let rows: Vec<&[f64]> = trace.ranks.iter().map(|row| &row[start..]).collect();
    let steps = n - start;
    let medians: Vec<f64> = rows.iter().map(|row| median(row).expect("non-empty")).collect();
    let mut out = Vec::new();
    for rank in 0..r {
        let peers: Vec<f64> = (0..r).filter(|&q| q != rank).map(|q| medians[q]).collect();
        let ratio = medians[rank] / median(&peers).expect("at least two peers");
        // residual against the per-step median of the other ranks removes
        // common-mode variation
        let residual: Vec<f64> = (0..steps)
            .map(|s| {
                let others: Vec<f64> = (0..r).filter(|&q| q != rank).map(|q| rows[q][s]).collect();
                rows[rank][s] - median(&others).expect("at least two peers")
            })
            .collect();
        let (med, mad) = median_mad(&residual).expect("non-empty");
        let max = residual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = (mad * MAD_SCALE).max(EPSILON);
        let spike_mads = (max - med) / scale;
        let peak = acf_peak(&residual, cfg.min_lag, cfg.max_lag.min(steps / 2));
        let evidence = Evidence {
            median_ratio: ratio,
            lag: peak.map(|p| p.0),
            autocorrelation: peak.map_or(0.0, |p| p.1),
            spike_mads,
        };
        if ratio - 1.0 > cfg.persistent_excess {
            out.push(Suspect { rank, pattern: NoisePattern::Persistent, evidence });
        }
        if evidence.autocorrelation > cfg.min_autocorrelation && spike_mads > cfg.min_spike_mads {
            out.push(Suspect { rank, pattern: NoisePattern::Periodic, evidence });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputStats {
    pub min_over_peak: f64,
    pub avg_over_peak: f64,
    /// Population standard deviation, in the series' units.
    pub std: f64,
}

pub fn throughput_stats(series: &[f64], peak: f64) -> Result<ThroughputStats, HealthError> {
    if series.is_empty() {
        return Err(HealthError::Empty);
    }
    if !(peak.is_finite() && peak > 0.0) {
        return Err(HealthError::NonPositive(format!("peak {peak}")));
    }
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ThroughputStats {
        min_over_peak: min / peak,
        avg_over_peak: mean(series).expect("non-empty") / peak,
        std: population_std(series).expect("non-empty"),
    })
}

/// [`throughput_stats`] with the series maximum as peak.
pub fn throughput_stats_observed(series: &[f64]) -> Result<ThroughputStats, HealthError> {
    let peak = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    throughput_stats(series, peak)
}
