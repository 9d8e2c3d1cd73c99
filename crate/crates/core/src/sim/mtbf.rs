//! Monte-Carlo estimation of job time-to-failure under the weakest-link rule.

use rayon::prelude::*;

use super::{ComponentClass, FaultModel, JobSpec, JobState, SimConfig, Simulator};
use crate::{to_hours, Millis};

/// Runs one simulation with `nodes` nodes whose crash MTBF is `node_mtbf_h`
/// and a single job spanning all of them; returns the job's time to failure.
pub fn job_ttf_trial(seed: u64, nodes: u32, node_mtbf_h: f64) -> Millis {
    let cfg = SimConfig::new(seed, nodes)
        .without_telemetry()
        .with_fault(FaultModel::crash(ComponentClass::HostOs).with_rate(1.0 / node_mtbf_h));
    let apn = cfg.accelerators_per_node;
    let mut sim = Simulator::new(cfg).expect("valid config");
    let job = sim.submit_job(JobSpec::new(nodes * apn)).expect("capacity");
    loop {
        if !sim.step_until(Millis::MAX) {
            unreachable!("fault process ran dry");
        }
        let j = sim.job(job).expect("job");
        if j.state == JobState::Interrupted {
            return j.disrupted_at.expect("disruption time") - j.segment_start.expect("started");
        }
    }
}

/// Mean job time-to-failure in hours over `trials` seeded runs.
pub fn mean_job_ttf_hours(base_seed: u64, trials: u64, nodes: u32, node_mtbf_h: f64) -> f64 {
    let total: f64 = (0..trials)
        .into_par_iter()
        .map(|i| to_hours(job_ttf_trial(base_seed.wrapping_add(i), nodes, node_mtbf_h)))
        .sum();
    total / trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_mean_is_node_mtbf() {
        let m = mean_job_ttf_hours(11, 4000, 1, 5.0);
        assert!((m - 5.0).abs() / 5.0 < 0.05, "{m}");
    }
}
