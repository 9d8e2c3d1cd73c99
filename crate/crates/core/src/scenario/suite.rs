//! The standard detection suite (every fault class × cluster sizes × seeds)
//! and the bundled policy-ladder scenario.

use rayon::prelude::*;
use serde::Serialize;

use super::{run, Injection, Policy, RunOutcome, Scenario, ScenarioError, Via};
use crate::sim::ComponentClass;
use crate::{hours, Millis};

pub const SUITE_SIZES: [u32; 3] = [16, 32, 64];
pub const SUITE_SEEDS: u64 = 20;
/// Known variant, then the unknown variant twice.
pub const SUITE_INJECTIONS_H: [f64; 3] = [2.0, 4.0, 6.5];

pub const MARCH_TO_JULY: &str = include_str!("../../scenarios/march-to-july.yaml");

pub fn march_to_july() -> Scenario {
    Scenario::from_yaml(MARCH_TO_JULY).expect("bundled scenario parses")
}

/// One suite scenario: a healthy job on `nodes` nodes that takes the known
/// variant of `class`, then the unknown variant twice.
pub fn suite_scenario(class: ComponentClass, nodes: u32, seed: u64) -> Scenario {
    let inj = |at_h: f64, kind: &str| Injection { at_h, fault: format!("{}/{kind}", class.name()), node: None };
    Scenario {
        name: format!("suite-{}-{nodes}-{seed}", class.name()),
        seed,
        nodes,
        accelerators_per_node: 8,
        duration_days: 9.0 / 24.0,
        policy: Policy::Full,
        schedule: Vec::new(),
        operator: Default::default(),
        fault_rate_per_node_hour: 0.0,
        unknown_share: 0.0,
        injections: vec![
            inj(SUITE_INJECTIONS_H[0], "known"),
            inj(SUITE_INJECTIONS_H[1], "unknown"),
            inj(SUITE_INJECTIONS_H[2], "unknown"),
        ],
        job: Default::default(),
        telemetry_interval_s: 60.0,
        comm_fraction: 0.2,
        noise: Default::default(),
        kpi: Default::default(),
        outputs: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub class: ComponentClass,
    pub nodes: u32,
    pub seed: u64,
    /// Known injection matched by a rule within one telemetry interval.
    pub known_in_time: bool,
    pub known_latency: Option<Millis>,
    /// Diagnoses that confirmed a node, and how many of those carried a fault.
    pub confirmed: usize,
    pub confirmed_correct: usize,
    /// A rule was learned from the first unknown occurrence.
    pub learned: bool,
    /// The second unknown occurrence was caught by a learned rule without diagnosis.
    pub recurrence_by_rule: bool,
}

pub fn evaluate_case(sc: &Scenario, class: ComponentClass, out: &RunOutcome) -> CaseResult {
    let interval = (sc.telemetry_interval_s * 1000.0).round() as Millis;
    let rec = &out.record;
    let known = rec.injections.iter().find(|i| i.known);
    let unknown: Vec<_> = rec.injections.iter().filter(|i| !i.known).collect();
    let known_latency = known.and_then(|k| {
        rec.detections
            .iter()
            .filter(|d| d.node == k.node && d.t >= k.t && matches!(d.via, Via::Rule(_)))
            .map(|d| d.t - k.t)
            .min()
    });
    let confirmed: Vec<_> = rec.diagnoses.iter().filter(|d| d.confirmed.is_some()).collect();
    let confirmed_correct = confirmed.iter().filter(|d| d.faulty.contains(&d.confirmed.expect("filtered"))).count();
    let learned = rec.learning.iter().any(|l| l.accepted);
    let recurrence_by_rule = unknown.get(1).is_some_and(|second| {
        let caught = rec.detections.iter().any(|d| {
            d.node == second.node
                && d.t >= second.t
                && d.t <= second.t + hours(1.0)
                && matches!(&d.via, Via::Rule(r) if r.starts_with("learned-"))
        });
        let diagnosed = rec.diagnoses.iter().any(|d| d.t >= second.t);
        caught && !diagnosed
    });
    CaseResult {
        class,
        nodes: sc.nodes,
        seed: sc.seed,
        known_in_time: known_latency.is_some_and(|l| l <= interval),
        known_latency,
        confirmed: confirmed.len(),
        confirmed_correct,
        learned,
        recurrence_by_rule,
    }
}

/// Runs every suite case in parallel, ordered by class, size and seed.
pub fn run_suite(sizes: &[u32], seeds: u64) -> Result<Vec<CaseResult>, ScenarioError> {
    let cases: Vec<(ComponentClass, u32, u64)> = ComponentClass::ALL
        .into_iter()
        .flat_map(|c| sizes.iter().flat_map(move |&n| (0..seeds).map(move |s| (c, n, 1000 + s))))
        .collect();
    cases
        .into_par_iter()
        .map(|(c, n, s)| {
            let sc = suite_scenario(c, n, s);
            let out = run(&sc, None)?;
            Ok(evaluate_case(&sc, c, &out))
        })
        .collect()
}
