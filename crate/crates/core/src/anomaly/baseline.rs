use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnomalyError;
use crate::stats::{mean, median_mad, robust_z};
use crate::telemetry::TelemetryView;
use crate::{Millis, NodeId};

/// Robust z at or above which a job KPI counts as a significant deviation.
pub const DEFAULT_Z: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiStats {
    pub median: f64,
    pub mad: f64,
    pub count: usize,
}

/// Healthy-run statistics of job KPIs, normalised per accelerator so that
/// runs of the same job family at different scales share one baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiBaseline {
    pub family: String,
    /// Accelerator count of the runs the baseline was learned from.
    pub accelerators: u32,
    pub kpis: BTreeMap<String, KpiStats>,
    pub min_samples: usize,
}

impl KpiBaseline {
    pub const DEFAULT_MIN_SAMPLES: usize = 30;

    /// Learns per-accelerator median/MAD from raw healthy KPI observations.
    pub fn learn(family: &str, accelerators: u32, healthy: &BTreeMap<String, Vec<f64>>) -> Self {
        let per = accelerators.max(1) as f64;
        let kpis = healthy
            .iter()
            .filter_map(|(k, v)| {
                let norm: Vec<f64> = v.iter().map(|x| x / per).collect();
                let (median, mad) = median_mad(&norm)?;
                Some((k.clone(), KpiStats { median, mad, count: norm.len() }))
            })
            .collect();
        Self { family: family.to_string(), accelerators, kpis, min_samples: Self::DEFAULT_MIN_SAMPLES }
    }

    pub fn check_usable(&self) -> Result<(), AnomalyError> {
        let have = self.kpis.values().map(|s| s.count).min().unwrap_or(0);
        if have < self.min_samples {
            return Err(AnomalyError::UnusableBaseline { have, need: self.min_samples });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobAnomaly {
    pub flagged: bool,
    /// Robust z of the window mean per KPI.
    pub deviations: BTreeMap<String, f64>,
}

/// Flags a job whose KPI window mean deviates from its baseline by at least
/// `z` robust standard deviations on any KPI. `accelerators` is the scale of
/// the observed run; values are normalised per accelerator before comparison.
pub fn detect_job_anomaly(
    kpis: &BTreeMap<String, Vec<f64>>,
    accelerators: u32,
    baseline: &KpiBaseline,
    z: f64,
) -> Result<JobAnomaly, AnomalyError> {
    baseline.check_usable()?;
    if kpis.values().all(Vec::is_empty) {
        return Err(AnomalyError::EmptyWindow);
    }
    let per = accelerators.max(1) as f64;
    let mut deviations = BTreeMap::new();
    for (k, values) in kpis {
        let (Some(stats), Some(m)) = (baseline.kpis.get(k), mean(values)) else { continue };
        deviations.insert(k.clone(), robust_z(m / per, stats.median, stats.mad));
    }
    let flagged = deviations.values().any(|d| *d >= z);
    Ok(JobAnomaly { flagged, deviations })
}

/// Job-level KPI values in `[t0, t1)`: every KPI node reports the same job
/// value, so one value per timestamp is kept.
pub fn job_kpi_window(
    view: &dyn TelemetryView,
    metric: &str,
    nodes: &[NodeId],
    t0: Millis,
    t1: Millis,
) -> Vec<(Millis, f64)> {
    let mut by_t: BTreeMap<Millis, f64> = BTreeMap::new();
    for &n in nodes {
        for (t, v) in view.numeric(metric, n, t0, t1).unwrap_or_default() {
            by_t.entry(t).or_insert(v);
        }
    }
    by_t.into_iter().collect()
}
