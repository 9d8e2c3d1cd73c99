//! Scenario files and the closed-loop runner that ties simulation,
//! telemetry, rules, diagnosis, remediation and KPI reporting together.

pub mod catalog;
mod config;
mod control;
pub mod suite;

pub use catalog::{archetypes, rated_catalog, variant, Archetype};
pub use config::{Injection, JobTemplate, KpiSection, OperatorConfig, Output, Policy, PolicyPhase, Scenario};
pub use control::{
    ControlPlane, DetectionRecord, DiagnosisRecord, InjectionRecord, LearningRecord, RunRecord, Via, KPI_Z,
    PLAYBOOK_DELAY, UNCLASSIFIED,
};

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::kb::{KbError, KnowledgeBase, Rule};
use crate::kpi::{build_report, write_report, KpiReport};
use crate::remediation::RemediationError;
use crate::sim::{SimError, SimEvent};
use crate::telemetry::TelemetryError;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Remediation(#[from] RemediationError),
    #[error("artifact directory {0} exists and was not produced by a scenario run")]
    ForeignArtifactDir(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub events: Vec<SimEvent>,
    pub report: KpiReport,
    pub rules: Vec<Rule>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    scenario: &'a str,
    seed: u64,
    nodes: u32,
    duration_days: f64,
    policies: Vec<(String, &'static str)>,
    events: usize,
    injections: usize,
    detections: usize,
    automated_detections: usize,
    diagnoses: usize,
    rules_learned: usize,
    rules: Vec<String>,
}

const MARKER: &str = "run.json";

fn prepare_dir(dir: &Path) -> Result<(), ScenarioError> {
    if dir.exists() {
        let empty = fs::read_dir(dir)?.next().is_none();
        if !empty {
            if !dir.join(MARKER).exists() {
                return Err(ScenarioError::ForeignArtifactDir(dir.display().to_string()));
            }
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Runs `scenario`. With `out`, the artifact directory is (re)created there.
pub fn run(scenario: &Scenario, out: Option<&Path>) -> Result<RunOutcome, ScenarioError> {
    scenario.check()?;
    let kb = match out {
        Some(dir) => {
            prepare_dir(dir)?;
            if scenario.wants(Output::Kb) {
                KnowledgeBase::open(dir.join("kb"))?
            } else {
                KnowledgeBase::new()
            }
        }
        None => KnowledgeBase::new(),
    };
    let mut cp = ControlPlane::new(scenario.clone(), kb)?;
    cp.run()?;
    if let Some(bad) = cp.sim.nodes().iter().find(|n| n.state == crate::sim::NodeState::Allocated && n.job.is_none()) {
        return Err(ScenarioError::Invariant(format!("{} allocated without a job", bad.id)));
    }
    let events = cp.sim.event_log().to_vec();
    let report = build_report(&events, scenario.nodes as usize, scenario.duration(), &scenario.kpi_config());
    let outcome = RunOutcome { record: cp.record.clone(), events, report, rules: cp.kb.rules() };
    if let Some(dir) = out {
        write_artifacts(dir, scenario, &cp, &outcome)?;
    }
    Ok(outcome)
}

fn write_lines<T>(path: &Path, items: &[T], f: impl Fn(&T) -> String) -> Result<(), ScenarioError> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for it in items {
        writeln!(w, "{}", f(it))?;
    }
    w.flush()?;
    Ok(())
}

fn write_artifacts(dir: &Path, sc: &Scenario, cp: &ControlPlane, out: &RunOutcome) -> Result<(), ScenarioError> {
    fs::write(dir.join("scenario.yaml"), sc.to_yaml())?;
    if sc.wants(Output::Events) {
        write_lines(&dir.join("events.jsonl"), &out.events, SimEvent::to_json_line)?;
        write_lines(&dir.join("detections.jsonl"), &out.record.detections, |d| {
            serde_json::to_string(d).expect("record serializes")
        })?;
        write_lines(&dir.join("injections.jsonl"), &out.record.injections, |d| {
            serde_json::to_string(d).expect("record serializes")
        })?;
    }
    if sc.wants(Output::Kpi) {
        write_report(&out.report, &dir.join("kpi"))?;
    }
    if sc.wants(Output::Diagnosis) {
        let d = dir.join("diagnosis");
        fs::create_dir_all(&d)?;
        for r in &out.record.diagnoses {
            fs::write(d.join(format!("{:04}-{}.json", r.seq, r.job)), r.session.to_json() + "\n")?;
        }
        write_lines(&d.join("index.jsonl"), &out.record.diagnoses, |d| {
            serde_json::to_string(d).expect("record serializes")
        })?;
    }
    if sc.wants(Output::Tickets) {
        write_lines(&dir.join("tickets.jsonl"), cp.remediator.client().journal_lines(), |l| l.clone())?;
    }
    if sc.wants(Output::Learning) {
        let d = dir.join("learning");
        fs::create_dir_all(&d)?;
        for r in &out.record.learning {
            let mut s = serde_json::to_string_pretty(r).expect("record serializes");
            s.push('\n');
            fs::write(d.join(format!("{}.json", r.rule_id)), s)?;
        }
    }
    let period = sc.kpi_config();
    let periods = out.report.rows.len().max(1);
    let summary = RunSummary {
        scenario: &sc.name,
        seed: sc.seed,
        nodes: sc.nodes,
        duration_days: sc.duration_days,
        policies: (0..periods)
            .map(|p| (period.period_name(p), sc.policy_at(p as u64 * period.period).name()))
            .collect(),
        events: out.events.len(),
        injections: out.record.injections.len(),
        detections: out.record.detections.len(),
        automated_detections: out.record.detections.iter().filter(|d| d.via.automated()).count(),
        diagnoses: out.record.diagnoses.len(),
        rules_learned: out.record.learning.iter().filter(|l| l.accepted).count(),
        rules: out.rules.iter().map(|r| format!("{} v{}", r.rule_id, r.version)).collect(),
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    fs::write(dir.join(MARKER), s)?;
    Ok(())
}

#[cfg(test)]
mod tests;
