use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{KpiConfig, Rounding};
use crate::sim::{EventKind, SimEvent};
use crate::{JobId, Millis, MS_PER_HOUR};

/// Node-time accounting for one period, in node-milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilizationLedger {
    pub total: u64,
    /// Nodes healthy and schedulable (available or allocated).
    pub available: u64,
    pub allocated: u64,
    /// Allocated to a job that is making training progress.
    pub busy: u64,
}

impl UtilizationLedger {
    pub fn is_valid(&self) -> bool {
        self.busy <= self.allocated && self.allocated <= self.available && self.available <= self.total
    }

    pub fn total_node_hours(&self) -> f64 {
        self.total as f64 / MS_PER_HOUR as f64
    }

    fn add(&mut self, dt: u64, counts: (u64, u64, u64, u64)) {
        self.total += dt * counts.0;
        self.available += dt * counts.1;
        self.allocated += dt * counts.2;
        self.busy += dt * counts.3;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Utilization {
    pub available_pct: f64,
    pub allocated_pct: f64,
    pub effective_pct: f64,
}

/// Component node-time over total node-time, as rounded percentages.
pub fn utilization(ledger: &UtilizationLedger, rounding: Rounding) -> Utilization {
    debug_assert!(ledger.is_valid(), "ledger out of order: {ledger:?}");
    Utilization {
        available_pct: rounding.percent(ledger.available, ledger.total),
        allocated_pct: rounding.percent(ledger.allocated, ledger.total),
        effective_pct: rounding.percent(ledger.busy, ledger.total),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Available,
    Allocated,
    Out,
}

/// Replays node transitions and job progress events over `[0, end)` for a
/// cluster of `nodes` nodes that all start available, and returns one
/// ledger per period.
pub fn utilization_ledgers(
    events: &[SimEvent],
    nodes: usize,
    end: Millis,
    cfg: &KpiConfig,
) -> BTreeMap<usize, UtilizationLedger> {
    let mut slots = vec![Slot::Available; nodes];
    let mut owner: Vec<Option<JobId>> = vec![None; nodes];
    let mut busy_jobs: BTreeMap<JobId, bool> = BTreeMap::new();
    let mut out: BTreeMap<usize, UtilizationLedger> = BTreeMap::new();
    let mut t = 0;

    let counts = |slots: &[Slot], owner: &[Option<JobId>], busy_jobs: &BTreeMap<JobId, bool>| {
        let mut c = (slots.len() as u64, 0, 0, 0);
        for (s, o) in slots.iter().zip(owner) {
            match s {
                Slot::Available => c.1 += 1,
                Slot::Allocated => {
                    c.1 += 1;
                    c.2 += 1;
                    if o.is_some_and(|j| busy_jobs.get(&j).copied().unwrap_or(false)) {
                        c.3 += 1;
                    }
                }
                Slot::Out => {}
            }
        }
        c
    };
    let advance = |from: Millis, to: Millis, c: (u64, u64, u64, u64), out: &mut BTreeMap<usize, UtilizationLedger>| {
        let mut a = from;
        while a < to {
            let p = cfg.period_of(a);
            let b = to.min((p as u64 + 1) * cfg.period.max(1));
            out.entry(p).or_default().add(b - a, c);
            a = b;
        }
    };

    for e in events.iter().take_while(|e| e.t_ms < end) {
        if e.t_ms > t {
            advance(t, e.t_ms, counts(&slots, &owner, &busy_jobs), &mut out);
            t = e.t_ms;
        }
        match e.kind {
            EventKind::NodeTransition => {
                let Some(n) = e.node_id.map(|n| n.0 as usize).filter(|&n| n < nodes) else { continue };
                let to = e.detail.split_once("->").map(|(_, r)| r.split_whitespace().next().unwrap_or(""));
                match to {
                    Some("available") => {
                        slots[n] = Slot::Available;
                        owner[n] = None;
                    }
                    Some("allocated") => {
                        slots[n] = Slot::Allocated;
                        owner[n] = e.job_id;
                    }
                    Some(_) => {
                        slots[n] = Slot::Out;
                        owner[n] = None;
                    }
                    None => {}
                }
            }
            EventKind::JobTraining | EventKind::JobDegraded => {
                if let Some(j) = e.job_id {
                    busy_jobs.insert(j, true);
                }
            }
            EventKind::JobLoading
            | EventKind::JobHung
            | EventKind::JobInterrupted
            | EventKind::JobRecovering
            | EventKind::JobCompleted => {
                if let Some(j) = e.job_id {
                    busy_jobs.insert(j, false);
                }
            }
            _ => {}
        }
    }
    if end > t {
        advance(t, end, counts(&slots, &owner, &busy_jobs), &mut out);
    }
    out
}
