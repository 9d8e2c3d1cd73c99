use std::collections::BTreeMap;

use super::baseline::{detect_job_anomaly, KpiBaseline, DEFAULT_Z};
use super::AnomalyError;
use crate::sim::{JobState, NodeState, SimError, Simulator};
use crate::{JobId, NodeId};

#[derive(Debug, Clone)]
pub struct IsolationConfig {
    /// Telemetry windows the restarted job must stay healthy for.
    pub soak_windows: usize,
    pub z: f64,
    pub kpi: String,
}

impl Default for IsolationConfig {
    fn default() -> Self {
        Self { soak_windows: 10, z: DEFAULT_Z, kpi: "job_throughput".into() }
    }
}

/// Cordons `node`, restarts `job` on healthy spares and soaks it: verified
/// only if the job KPI stays inside the baseline band in every soak window.
pub fn confirm_by_isolation(
    sim: &mut Simulator,
    node: NodeId,
    job: JobId,
    baseline: &KpiBaseline,
    cfg: &IsolationConfig,
) -> Result<bool, AnomalyError> {
    let state = sim.node(node)?.state;
    if state.in_service() {
        sim.transition(node, NodeState::Suspect, "isolation")?;
    }
    if sim.node(node)?.state == NodeState::Suspect {
        sim.transition(node, NodeState::Cordoned, "isolation")?;
    }
    if sim.job(job)?.state.is_running() {
        return Ok(true);
    }
    match sim.restart_job(job) {
        Ok(_) => {}
        Err(SimError::NoSpareCapacity(j)) => return Err(AnomalyError::NoSpareCapacity(j.to_string())),
        Err(e) => return Err(e.into()),
    }
    let interval = sim.telemetry_interval();
    let accels = sim.job(job)?.spec.requested_accelerators;
    // wait for the reload to finish
    let load = crate::secs(sim.job(job)?.spec.load_time_s);
    sim.run_until(sim.now() + load);
    sim.emit_telemetry();
    for _ in 0..cfg.soak_windows {
        sim.advance(interval as f64 / 1000.0)?;
        let kpi: Vec<f64> = sim
            .emit_telemetry()
            .into_iter()
            .filter(|s| &*s.metric == cfg.kpi && s.job_id == Some(job))
            .filter_map(|s| s.value.as_number())
            .collect();
        let j = sim.job(job)?;
        if kpi.is_empty() || !matches!(j.state, JobState::Training) {
            return Ok(false);
        }
        let window = BTreeMap::from([(cfg.kpi.clone(), kpi)]);
        if detect_job_anomaly(&window, accels, baseline, cfg.z)?.flagged {
            return Ok(false);
        }
    }
    Ok(true)
}
