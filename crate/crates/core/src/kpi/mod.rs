//! Operational KPIs computed from the simulator event log: job
//! time-to-failure, recovery time, node recycling breakdown, utilization
//! and the share of incidents handled without an operator.

mod ledger;
mod tables;

pub use ledger::{utilization, utilization_ledgers, Utilization, UtilizationLedger};
pub use tables::{build_report, write_report, KpiReport, PeriodRow};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::{EventKind, SimEvent};
use crate::stats::median;
use crate::{to_hours, JobId, Millis, NodeId, MS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// Drop digits past the second decimal.
    Truncate,
    /// Round to nearest, ties to even.
    HalfEven,
}

impl Rounding {
    pub fn round2(self, x: f64) -> f64 {
        match self {
            Rounding::Truncate => ((x * 100.0) + 1e-9 * x.abs().max(1.0)).floor() / 100.0,
            Rounding::HalfEven => (x * 100.0).round_ties_even() / 100.0,
        }
    }

    /// `num / den × 100` rounded to hundredths using exact integer arithmetic.
    pub fn percent(self, num: u64, den: u64) -> f64 {
        if den == 0 {
            return 0.0;
        }
        let scaled = num as u128 * 10_000;
        let (q, r) = (scaled / den as u128, scaled % den as u128);
        let q = match self {
            Rounding::Truncate => q,
            Rounding::HalfEven => {
                if 2 * r > den as u128 || (2 * r == den as u128 && q % 2 == 1) {
                    q + 1
                } else {
                    q
                }
            }
        };
        q as f64 / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiConfig {
    /// Length of one reporting period.
    pub period: Millis,
    /// Display names for periods, in order; missing names use the index.
    #[serde(default)]
    pub period_names: Vec<String>,
    pub rounding: Rounding,
}

impl Default for KpiConfig {
    fn default() -> Self {
        Self { period: 30 * MS_PER_DAY, period_names: Vec::new(), rounding: Rounding::HalfEven }
    }
}

impl KpiConfig {
    pub fn period_of(&self, t: Millis) -> usize {
        (t / self.period.max(1)) as usize
    }

    pub fn period_name(&self, p: usize) -> String {
        self.period_names.get(p).cloned().unwrap_or_else(|| format!("P{}", p + 1))
    }
}

/// One hardware incident from fault to node return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub id: String,
    pub node_id: Option<NodeId>,
    pub job_id: Option<JobId>,
    pub t_fault: Millis,
    pub t_detected: Option<Millis>,
    pub t_recovered: Option<Millis>,
    pub t_node_available: Option<Millis>,
    pub automated: bool,
}

/// Reconstructs incidents from an event log.
///
/// A `fault-arrived` event opens an incident on its node (while none is
/// open there). The first `detection` on that node marks detection; the
/// detail word `automated` marks it as handled without an operator. The
/// job's first `job-training` after a `job-recovering` marks recovery, and
/// the node's next transition to available closes the incident.
pub fn incidents_from_events(events: &[SimEvent]) -> Vec<IncidentRecord> {
    let mut out: Vec<IncidentRecord> = Vec::new();
    let mut open: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut recovering: BTreeMap<JobId, Millis> = BTreeMap::new();
    for e in events {
        match e.kind {
            EventKind::FaultArrived => {
                let Some(n) = e.node_id else { continue };
                if open.contains_key(&n) {
                    continue;
                }
                open.insert(n, out.len());
                out.push(IncidentRecord {
                    id: format!("inc-{:05}", out.len() + 1),
                    node_id: Some(n),
                    job_id: e.job_id,
                    t_fault: e.t_ms,
                    t_detected: None,
                    t_recovered: None,
                    t_node_available: None,
                    automated: false,
                });
            }
            EventKind::Detection => {
                let Some(&i) = e.node_id.and_then(|n| open.get(&n)) else { continue };
                if out[i].t_detected.is_none() {
                    out[i].t_detected = Some(e.t_ms);
                    out[i].automated = e.detail.split_whitespace().any(|w| w == "automated" || w == "mode=automated");
                }
            }
            EventKind::JobRecovering => {
                if let Some(j) = e.job_id {
                    recovering.insert(j, e.t_ms);
                }
            }
            EventKind::JobTraining => {
                let Some(j) = e.job_id else { continue };
                if recovering.remove(&j).is_none() {
                    continue;
                }
                for rec in out.iter_mut().filter(|r| r.job_id == Some(j) && r.t_recovered.is_none()) {
                    if rec.t_detected.is_some_and(|d| d <= e.t_ms) {
                        rec.t_recovered = Some(e.t_ms);
                    }
                }
            }
            EventKind::NodeTransition => {
                let Some(n) = e.node_id else { continue };
                if !e.detail.contains("->available") {
                    continue;
                }
                if let Some(&i) = open.get(&n) {
                    if out[i].t_detected.is_some() {
                        out[i].t_node_available = Some(e.t_ms);
                        open.remove(&n);
                    }
                }
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtfSample {
    pub job_id: JobId,
    pub start: Millis,
    pub fault: Millis,
    pub hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtfReport {
    pub samples: Vec<TtfSample>,
    pub median_h: Option<f64>,
    pub max_h: Option<f64>,
}

/// Time from the start of each training segment (training after loading or
/// recovery) to the segment's first disruption.
pub fn time_to_failure(events: &[SimEvent]) -> TtfReport {
    let mut last: BTreeMap<JobId, EventKind> = BTreeMap::new();
    let mut start: BTreeMap<JobId, Millis> = BTreeMap::new();
    let mut samples = Vec::new();
    for e in events {
        let Some(j) = e.job_id else { continue };
        match e.kind {
            EventKind::JobTraining => {
                if matches!(last.get(&j), Some(EventKind::JobLoading | EventKind::JobRecovering)) {
                    start.insert(j, e.t_ms);
                }
            }
            EventKind::JobInterrupted | EventKind::JobHung | EventKind::JobDegraded => {
                if let Some(s) = start.remove(&j) {
                    samples.push(TtfSample { job_id: j, start: s, fault: e.t_ms, hours: to_hours(e.t_ms - s) });
                }
            }
            EventKind::JobCompleted => {
                start.remove(&j);
            }
            _ => {}
        }
        if matches!(
            e.kind,
            EventKind::JobLoading
                | EventKind::JobTraining
                | EventKind::JobDegraded
                | EventKind::JobHung
                | EventKind::JobInterrupted
                | EventKind::JobRecovering
                | EventKind::JobCompleted
        ) {
            last.insert(j, e.kind);
        }
    }
    let hours: Vec<f64> = samples.iter().map(|s| s.hours).collect();
    TtfReport { median_h: median(&hours), max_h: hours.iter().copied().reduce(f64::max), samples }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryStats {
    pub mean_h: Option<f64>,
    pub count: usize,
    /// Incidents without a recovery timestamp, left out of the mean.
    pub excluded: usize,
}

/// Mean fault-to-resumption time per period.
pub fn recovery_time(incidents: &[IncidentRecord], cfg: &KpiConfig) -> BTreeMap<usize, RecoveryStats> {
    let mut acc: BTreeMap<usize, (u64, usize, usize)> = BTreeMap::new();
    for r in incidents {
        let e = acc.entry(cfg.period_of(r.t_fault)).or_default();
        match r.t_recovered {
            Some(t) if t >= r.t_fault => {
                e.0 += t - r.t_fault;
                e.1 += 1;
            }
            _ => e.2 += 1,
        }
    }
    acc.into_iter()
        .map(|(p, (sum, n, ex))| {
            let mean_h = (n > 0).then(|| to_hours(sum) / n as f64);
            (p, RecoveryStats { mean_h, count: n, excluded: ex })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecycleStats {
    pub detection_h: f64,
    pub validation_h: f64,
    /// Always `detection_h + validation_h`.
    pub total_h: f64,
    pub count: usize,
}

/// Mean node recycling time per period, split into detection (fault to
/// detection) and validation (detection to available again).
pub fn recycle_breakdown(incidents: &[IncidentRecord], cfg: &KpiConfig) -> BTreeMap<usize, RecycleStats> {
    let mut acc: BTreeMap<usize, (u64, u64, usize)> = BTreeMap::new();
    for r in incidents {
        let (Some(d), Some(a)) = (r.t_detected, r.t_node_available) else { continue };
        let e = acc.entry(cfg.period_of(r.t_fault)).or_default();
        e.0 += d.saturating_sub(r.t_fault);
        e.1 += a.saturating_sub(d);
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(p, (det, val, n))| {
            let detection_h = to_hours(det) / n as f64;
            let validation_h = to_hours(val) / n as f64;
            (p, RecycleStats { detection_h, validation_h, total_h: detection_h + validation_h, count: n })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AutomationStats {
    pub automated: u64,
    pub total: u64,
    pub percent: f64,
}

/// Share of detected incidents handled without an operator, per period.
pub fn automation_ratio(incidents: &[IncidentRecord], cfg: &KpiConfig) -> BTreeMap<usize, AutomationStats> {
    let mut acc: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for r in incidents.iter().filter(|r| r.t_detected.is_some()) {
        let e = acc.entry(cfg.period_of(r.t_fault)).or_default();
        e.0 += r.automated as u64;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(p, (a, n))| (p, AutomationStats { automated: a, total: n, percent: cfg.rounding.percent(a, n) }))
        .collect()
}
