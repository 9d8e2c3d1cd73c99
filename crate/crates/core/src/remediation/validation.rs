use serde::{Deserialize, Serialize};

use crate::sim::{ComponentClass, Simulator};
use crate::{Millis, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMode {
    Quick,
    Comprehensive,
}

/// Pass thresholds of the benchmark battery. Factors are relative to a
/// healthy node (1.0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub short_compute_min: f64,
    pub sustained_throughput_min: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { short_compute_min: 0.5, sustained_throughput_min: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub node_id: NodeId,
    pub mode: ValidationMode,
    pub t: Millis,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// Runs the battery against the simulated node. Quick mode is a health probe
/// and a short compute check; comprehensive adds sustained throughput,
/// interconnect loopback and memory stress. Dormant intermittent faults are
/// invisible to every check. A pass stamps the node's `last_validation`.
pub fn validate_node(
    sim: &mut Simulator,
    node: NodeId,
    mode: ValidationMode,
    cfg: &ValidationConfig,
) -> Result<ValidationReport, crate::sim::SimError> {
    let h = sim.node(node)?.health();
    let responsive = !(h.crashed || h.hung);
    let factor = if responsive { h.factor } else { 0.0 };
    let flag = |ok: bool| if ok { 1.0 } else { 0.0 };
    let mut checks = vec![
        CheckResult { name: "health-probe", value: flag(responsive), threshold: 1.0, passed: responsive },
        CheckResult {
            name: "short-compute",
            value: factor,
            threshold: cfg.short_compute_min,
            passed: factor >= cfg.short_compute_min,
        },
    ];
    if mode == ValidationMode::Comprehensive {
        let link = !h.classes.contains(&ComponentClass::Interconnect);
        let mem = !h.classes.contains(&ComponentClass::AcceleratorMemory);
        checks.push(CheckResult {
            name: "sustained-throughput",
            value: factor,
            threshold: cfg.sustained_throughput_min,
            passed: factor >= cfg.sustained_throughput_min,
        });
        checks.push(CheckResult { name: "interconnect-loopback", value: flag(link), threshold: 1.0, passed: link });
        checks.push(CheckResult { name: "memory-stress", value: flag(mem), threshold: 1.0, passed: mem });
    }
    let passed = checks.iter().all(|c| c.passed);
    let t = sim.now();
    if passed {
        sim.set_validated(node, Some(t))?;
    }
    Ok(ValidationReport { node_id: node, mode, t, passed, checks })
}
