use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::catalog::{self, rated_catalog};
use super::config::{Policy, Scenario};
use super::ScenarioError;
use crate::anomaly::{
    detect_job_anomaly, diagnose, job_kpi_window, DiagnosisConfig, DiagnosisContext, DiagnosisSession, DiagnosisStatus,
    KpiBaseline, LadderStrategy,
};
use crate::kb::{
    contextual_data_selection, default_rules, generate_rule, GenerateConfig, KnowledgeBase, Label, LabeledIncident,
    MatchScope, RuleAction, TraceEntry,
};
use crate::remediation::{Action, Cause, Diagnostics, Playbook, PlaybookOutcome, Remediator};
use crate::sim::{EventKind, JobState, NodeState, SimConfig, SimEvent, Simulator};
use crate::telemetry::{StoreConfig, TelemetryStore, TelemetryView};
use crate::{hours, JobId, Millis, NodeId, MS_PER_MIN};

/// Robust z the job KPI must exceed (mean of the last two samples) to open
/// an anomaly.
pub const KPI_Z: f64 = 8.0;
/// Time between cordoning a node and running its playbook.
pub const PLAYBOOK_DELAY: Millis = 20 * MS_PER_MIN;
/// Diagnosis attempts per anomaly before handing it to the operator.
pub const DIAGNOSIS_ATTEMPTS: usize = 3;
/// Gap between healthy reference snapshots of the running job.
pub const HEALTHY_EVERY: Millis = 2 * 60 * MS_PER_MIN;
const HEALTHY_KEEP: usize = 12;
const SNAPSHOT_SPAN: Millis = 10 * MS_PER_MIN;
const HISTORY_SPAN: Millis = 30 * MS_PER_MIN;
const RETENTION_TICKS: usize = 360;
/// Fault class for nodes found by diagnosis or learned rules.
pub const UNCLASSIFIED: &str = "unclassified";
const CONTROL_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "detail")]
pub enum Via {
    Rule(String),
    Diagnosis { iterations: usize },
    Probe,
    Operator,
}

impl Via {
    pub fn automated(&self) -> bool {
        !matches!(self, Via::Operator)
    }

    fn tag(&self) -> String {
        match self {
            Via::Rule(r) => format!("rule:{r}"),
            Via::Diagnosis { iterations } => format!("diagnosis:{iterations}"),
            Via::Probe => "probe".into(),
            Via::Operator => "operator".into(),
        }
    }
}

/// A node taken out of service, with the ground truth at that moment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub t: Millis,
    pub node: NodeId,
    pub job: Option<JobId>,
    pub via: Via,
    pub policy: Policy,
    /// Labels of the faults present on the node.
    pub faults: Vec<String>,
    /// Arrival of the earliest fault present on the node.
    pub fault_since: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosisRecord {
    pub seq: usize,
    pub t: Millis,
    pub job: JobId,
    pub confirmed: Option<NodeId>,
    pub iterations: usize,
    /// Nodes of the diagnosed job carrying a fault.
    pub faulty: Vec<NodeId>,
    #[serde(skip)]
    pub session: DiagnosisSession,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectionRecord {
    pub t: Millis,
    pub node: NodeId,
    pub fault: String,
    pub known: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningRecord {
    pub t: Millis,
    pub rule_id: String,
    pub node: NodeId,
    pub accepted: bool,
    pub rule: Option<String>,
    pub trace: Vec<TraceEntry>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunRecord {
    pub detections: Vec<DetectionRecord>,
    pub diagnoses: Vec<DiagnosisRecord>,
    pub injections: Vec<InjectionRecord>,
    pub learning: Vec<LearningRecord>,
}

#[derive(Debug, Clone)]
struct Anomaly {
    since: Millis,
    attempts: usize,
    operator_due: Option<Millis>,
}

#[derive(Debug, Clone)]
struct PendingPlaybook {
    due: Millis,
    node: NodeId,
    class: String,
    diagnostics: Diagnostics,
}

/// Closed loop over a simulated cluster: telemetry into the store, rules and
/// diagnosis over it, remediation back into the simulator.
pub struct ControlPlane {
    scenario: Scenario,
    pub sim: Simulator,
    pub store: TelemetryStore,
    pub kb: KnowledgeBase,
    pub remediator: Remediator,
    rng: ChaCha8Rng,
    baseline: KpiBaseline,
    diag_cfg: DiagnosisConfig,
    job: Option<JobId>,
    anomalies: BTreeMap<JobId, Anomaly>,
    node_operator: BTreeMap<NodeId, Millis>,
    playbooks: Vec<PendingPlaybook>,
    recover: BTreeSet<JobId>,
    healthy: Vec<LabeledIncident>,
    last_healthy: Option<Millis>,
    injections: Vec<(Millis, super::config::Injection)>,
    pub record: RunRecord,
}

fn sim_config(sc: &Scenario, with_faults: bool) -> SimConfig {
    let mut cfg = SimConfig::new(sc.seed, sc.nodes);
    cfg.accelerators_per_node = sc.accelerators_per_node;
    cfg.telemetry_interval = sc.telemetry_interval_s;
    cfg.comm_fraction = sc.comm_fraction;
    cfg.noise = sc.noise.clone();
    if with_faults && sc.fault_rate_per_node_hour > 0.0 {
        cfg.fault_models = rated_catalog(sc.fault_rate_per_node_hour, sc.unknown_share);
    }
    cfg
}

/// Learns the job KPI baseline from a fault-free run of the same job.
fn calibrate(sc: &Scenario) -> Result<KpiBaseline, ScenarioError> {
    let mut sim = Simulator::new(sim_config(sc, false))?;
    let spec = sc.job_spec();
    let accels = spec.requested_accelerators;
    let job = sim.submit_job(spec)?;
    let interval = sim.telemetry_interval();
    let ticks = KpiBaseline::DEFAULT_MIN_SAMPLES as u64 + 10;
    let end = sim.now() + hours(sc.job.load_time_s / 3600.0) + (ticks + 1) * interval;
    sim.run_until(end);
    let values: Vec<f64> = sim
        .emit_telemetry()
        .into_iter()
        .filter(|s| &*s.metric == "job_throughput" && s.job_id == Some(job))
        .filter_map(|s| s.value.as_number().map(|v| (s.t, v)))
        .collect::<BTreeMap<_, _>>()
        .into_values()
        .collect();
    Ok(KpiBaseline::learn(&sc.name, accels, &BTreeMap::from([("job_throughput".to_string(), values)])))
}

impl ControlPlane {
    pub fn new(scenario: Scenario, kb: KnowledgeBase) -> Result<Self, ScenarioError> {
        scenario.check()?;
        let baseline = calibrate(&scenario)?;
        let sim = Simulator::new(sim_config(&scenario, true))?;
        let store =
            TelemetryStore::with_collectors(StoreConfig { max_samples_per_series: RETENTION_TICKS }, sim.collectors())?;
        if kb.is_empty() {
            for r in default_rules() {
                kb.commit(r)?;
            }
        }
        let mut remediator = Remediator::default();
        remediator.playbooks.insert(
            UNCLASSIFIED.into(),
            Playbook::new(UNCLASSIFIED, vec![Action::Reboot, Action::ValidateComprehensive])?,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(CONTROL_STREAM);
        let mut injections: Vec<_> = scenario.injections.iter().map(|i| (hours(i.at_h), i.clone())).collect();
        injections.sort_by_key(|(t, _)| *t);
        Ok(Self {
            scenario,
            sim,
            store,
            kb,
            remediator,
            rng,
            baseline,
            diag_cfg: DiagnosisConfig::default(),
            job: None,
            anomalies: BTreeMap::new(),
            node_operator: BTreeMap::new(),
            playbooks: Vec::new(),
            recover: BTreeSet::new(),
            healthy: Vec::new(),
            last_healthy: None,
            injections,
            record: RunRecord::default(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Runs the scenario to its end.
    pub fn run(&mut self) -> Result<(), ScenarioError> {
        let end = self.scenario.duration();
        let interval = self.sim.telemetry_interval();
        self.ensure_job()?;
        self.sim.take_events();
        let mut t = self.sim.now();
        while t < end {
            t = (t + interval).min(end);
            self.step(t)?;
        }
        Ok(())
    }

    fn step(&mut self, t: Millis) -> Result<(), ScenarioError> {
        self.inject_due(t)?;
        self.sim.run_until(t);
        self.store.ingest(self.sim.emit_telemetry());
        let events = self.sim.take_events();
        let policy = self.scenario.policy_at(t);

        self.observe(&events, t, policy);
        self.check_kpi(t, policy);
        if policy.uses_rules() {
            self.rule_pass(t, policy)?;
        }
        if policy.diagnoses() {
            self.diagnosis_pass(t, policy)?;
        }
        self.operator_pass(t, policy)?;
        self.run_playbooks(t)?;
        self.remediator.poll(&mut self.sim)?;
        self.recover_jobs()?;
        self.ensure_job()?;
        self.snapshot_healthy(t);
        // control-plane side effects are already handled
        self.sim.take_events();
        Ok(())
    }

    fn draw_delay(&mut self) -> Millis {
        let rate = 1.0 / self.scenario.operator.delay_mean_h;
        let h: f64 = Exp::new(rate).expect("positive rate").sample(&mut self.rng);
        hours(h).max(1)
    }

    fn inject_due(&mut self, t: Millis) -> Result<(), ScenarioError> {
        let now = self.sim.now();
        while self.injections.first().is_some_and(|(at, _)| *at <= t) {
            let (_, inj) = self.injections.remove(0);
            let model = catalog::variant(&inj.fault).expect("checked when parsed");
            let node = match inj.node {
                Some(n) => NodeId(n),
                None => {
                    let members: Vec<NodeId> = self
                        .sim
                        .nodes()
                        .iter()
                        .filter(|n| n.state == NodeState::Allocated && !n.has_faults())
                        .map(|n| n.id)
                        .collect();
                    if members.is_empty() {
                        continue;
                    }
                    let i = rand::Rng::random_range(&mut self.rng, 0..members.len());
                    members[i]
                }
            };
            let ev = self.sim.inject_fault(node, model.clone(), now)?;
            self.sim.note(ev);
            self.record.injections.push(InjectionRecord { t: now, node, fault: model.label(), known: model.known });
        }
        Ok(())
    }

    fn open_anomaly(&mut self, job: JobId, t: Millis, policy: Policy) {
        if self.anomalies.contains_key(&job) || self.recover.contains(&job) {
            return;
        }
        let operator_due = (!policy.diagnoses()).then(|| t + self.draw_delay());
        self.anomalies.insert(job, Anomaly { since: t, attempts: 0, operator_due });
    }

    fn observe(&mut self, events: &[SimEvent], t: Millis, policy: Policy) {
        for e in events {
            match e.kind {
                EventKind::JobInterrupted => {
                    if let Some(j) = e.job_id {
                        self.open_anomaly(j, t, policy);
                    }
                }
                EventKind::NodeUnhealthy => {
                    let Some(n) = e.node_id else { continue };
                    if policy.uses_rules() {
                        let _ = self.take_out(n, Via::Probe, UNCLASSIFIED, Diagnostics::default(), t, policy);
                    } else if !self.node_operator.contains_key(&n) {
                        let due = t + self.draw_delay();
                        self.node_operator.insert(n, due);
                    }
                }
                _ => {}
            }
        }
    }

    fn check_kpi(&mut self, t: Millis, policy: Policy) {
        let Some(job) = self.job else { return };
        let Ok(j) = self.sim.job(job) else { return };
        if !matches!(j.state, JobState::Training | JobState::Degraded | JobState::Hung) {
            return;
        }
        let interval = self.sim.telemetry_interval();
        let nodes = j.assigned_nodes.clone();
        let accels = j.spec.requested_accelerators;
        let window = job_kpi_window(&self.store, "job_throughput", &nodes, (t + 1).saturating_sub(2 * interval), t + 1);
        if window.len() < 2 {
            return;
        }
        let values = BTreeMap::from([("job_throughput".to_string(), window.iter().map(|(_, v)| *v).collect())]);
        if let Ok(a) = detect_job_anomaly(&values, accels, &self.baseline, KPI_Z) {
            if a.flagged {
                self.open_anomaly(job, t, policy);
            }
        }
    }

    /// Cordons `node`, queues its playbook and the recovery of its job.
    fn take_out(
        &mut self,
        node: NodeId,
        via: Via,
        class: &str,
        mut diagnostics: Diagnostics,
        t: Millis,
        policy: Policy,
    ) -> Result<(), ScenarioError> {
        let n = self.sim.node(node)?;
        if !matches!(n.state, NodeState::Available | NodeState::Allocated | NodeState::Suspect) {
            return Ok(());
        }
        let job = n.job;
        let faults: Vec<String> = n.faults.iter().map(|f| f.model.label()).collect();
        let fault_since = n.faults.iter().map(|f| f.since).min();
        let mode = if via.automated() { "automated" } else { "manual" };
        let mut ev = SimEvent::new(t, EventKind::Detection).node(node).detail(format!("mode={mode} via={}", via.tag()));
        if let Some(j) = job {
            ev = ev.job(j);
        }
        self.sim.note(ev);
        self.record.detections.push(DetectionRecord { t, node, job, via: via.clone(), policy, faults, fault_since });
        let cause = match &via {
            Via::Rule(r) => Cause::Rule(r.clone()),
            Via::Diagnosis { .. } => Cause::Diagnosis(format!("{node}")),
            Via::Probe => Cause::Manual("health-probe".into()),
            Via::Operator => Cause::Manual("operator".into()),
        };
        self.remediator.cordon(&mut self.sim, node, cause)?;
        self.node_operator.remove(&node);
        if let Some(j) = job {
            self.anomalies.remove(&j);
            self.recover.insert(j);
        }
        diagnostics.fault_class = class.to_string();
        self.playbooks.push(PendingPlaybook { due: t + PLAYBOOK_DELAY, node, class: class.to_string(), diagnostics });
        Ok(())
    }

    /// Rules see only nodes of jobs inside a run segment, and only evidence
    /// from that segment, so load phases and pre-repair history do not match.
    fn rule_pass(&mut self, t: Millis, policy: Policy) -> Result<(), ScenarioError> {
        let mut scopes = Vec::new();
        for job in self.sim.jobs() {
            let Some(start) = job.segment_start else { continue };
            let nodes: Vec<NodeId> = job
                .assigned_nodes
                .iter()
                .copied()
                .filter(|n| self.sim.node(*n).is_ok_and(|x| x.state == NodeState::Allocated && x.job == Some(job.id)))
                .collect();
            if !nodes.is_empty() {
                scopes.push(MatchScope::new(nodes, t, start));
            }
        }
        let mut matches = Vec::new();
        for scope in &scopes {
            matches.extend(self.kb.match_rules(&self.store, scope)?.matches);
        }
        let mut done = BTreeSet::new();
        for m in matches {
            if !done.insert(m.node_id) {
                continue;
            }
            let diagnostics = Diagnostics {
                fault_class: String::new(),
                rule_id: Some(m.rule_id.to_string()),
                diagnosis: None,
                evidence_window: Some(m.evidence.window),
                evidence: m.evidence.terms.clone(),
                detail: format!("rule {} v{}", m.rule_id, m.version),
            };
            let class = m.fault_class.clone().unwrap_or_else(|| UNCLASSIFIED.to_string());
            let class = if self.remediator.playbooks.contains_key(&class) { class } else { UNCLASSIFIED.to_string() };
            self.take_out(m.node_id, Via::Rule(m.rule_id.to_string()), &class, diagnostics, t, policy)?;
        }
        Ok(())
    }

    fn diagnosis_pass(&mut self, t: Millis, policy: Policy) -> Result<(), ScenarioError> {
        let interval = self.sim.telemetry_interval();
        let due: Vec<(JobId, Anomaly)> = self
            .anomalies
            .iter()
            .filter(|(_, a)| {
                a.attempts < DIAGNOSIS_ATTEMPTS && t >= a.since + interval * (self.diag_cfg.persistence as u64 - 1)
            })
            .map(|(j, a)| (*j, a.clone()))
            .collect();
        for (job, an) in due {
            let nodes: Vec<NodeId> = self
                .sim
                .job(job)?
                .assigned_nodes
                .iter()
                .copied()
                .filter(|n| self.sim.node(*n).is_ok_and(|x| x.state == NodeState::Allocated && x.job == Some(job)))
                .collect();
            let ctx = DiagnosisContext {
                nodes: nodes.clone(),
                t0: an.since,
                t1: t + 1,
                sub_window: interval,
                history: (an.since.saturating_sub(HISTORY_SPAN), an.since),
            };
            let session = diagnose(
                DiagnosisSession::new(Some(job), ctx, self.diag_cfg.clone()),
                &self.store,
                &mut LadderStrategy,
            );
            let faulty: Vec<NodeId> =
                nodes.iter().copied().filter(|n| self.sim.node(*n).is_ok_and(|x| x.has_faults())).collect();
            let confirmed = session.confirmed();
            let iterations = session.iterations.len();
            self.sim.note(SimEvent::new(t, EventKind::Diagnosis).job(job).detail(match confirmed {
                Some(n) => format!("confirmed {n} iterations={iterations}"),
                None => format!("inconclusive iterations={iterations}"),
            }));
            let seq = self.record.diagnoses.len() + 1;
            self.record.diagnoses.push(DiagnosisRecord {
                seq,
                t,
                job,
                confirmed,
                iterations,
                faulty,
                session: session.clone(),
            });
            match (session.status, confirmed) {
                (DiagnosisStatus::Confirmed(_), Some(n)) => {
                    if policy.learns() {
                        self.learn(n, &nodes, an.since, t);
                    }
                    let diagnostics = Diagnostics {
                        fault_class: String::new(),
                        rule_id: None,
                        diagnosis: Some(format!("diagnosis-{seq:04}")),
                        evidence_window: Some((an.since, t + 1)),
                        evidence: Vec::new(),
                        detail: format!("confirmed after {iterations} iterations"),
                    };
                    self.take_out(n, Via::Diagnosis { iterations }, UNCLASSIFIED, diagnostics, t, policy)?;
                }
                _ => {
                    let delay = self.draw_delay();
                    if let Some(a) = self.anomalies.get_mut(&job) {
                        a.attempts += 1;
                        if a.attempts >= DIAGNOSIS_ATTEMPTS {
                            a.operator_due = Some(t + delay);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Turns a diagnosed incident into a rule, judged against the healthy
    /// reference snapshots collected so far.
    fn learn(&mut self, node: NodeId, nodes: &[NodeId], since: Millis, t: Millis) {
        let seq = self.record.learning.len() + 1;
        let rule_id = format!("learned-{seq:03}");
        let incident = LabeledIncident::capture(
            &format!("incident-{seq:03}"),
            Label::HardwareFault,
            Some(node),
            &self.store,
            nodes,
            since,
            t,
        );
        let mut rec = LearningRecord {
            t,
            rule_id: rule_id.clone(),
            node,
            accepted: false,
            rule: None,
            trace: Vec::new(),
            error: None,
        };
        let result = contextual_data_selection(&incident, &self.healthy, 4).and_then(|contrast| {
            let mut corpus = vec![incident.clone()];
            corpus.extend(self.healthy.iter().cloned());
            let mut cfg = GenerateConfig::new(&rule_id);
            cfg.fault_class = Some(UNCLASSIFIED.into());
            cfg.action = RuleAction::Reboot;
            cfg.seed = self.scenario.seed ^ seq as u64;
            generate_rule(&self.kb, &incident, &contrast, &corpus, &self.store.schema(), &cfg)
        });
        match result {
            Ok(g) => {
                rec.trace = g.trace().to_vec();
                if let Some(c) = g.accepted() {
                    rec.accepted = true;
                    rec.rule = Some(format!("{} => {}", c.rule.predicate, c.rule.implicates));
                    self.sim.note(
                        SimEvent::new(t, EventKind::RuleLearned)
                            .node(node)
                            .detail(format!("{rule_id} {}", c.rule.predicate)),
                    );
                }
            }
            Err(e) => rec.error = Some(e.to_string()),
        }
        self.record.learning.push(rec);
    }

    fn operator_pass(&mut self, t: Millis, policy: Policy) -> Result<(), ScenarioError> {
        let jobs: Vec<JobId> =
            self.anomalies.iter().filter(|(_, a)| a.operator_due.is_some_and(|d| d <= t)).map(|(j, _)| *j).collect();
        for job in jobs {
            self.anomalies.remove(&job);
            let faulty: Vec<(NodeId, String)> = self
                .sim
                .job(job)?
                .assigned_nodes
                .iter()
                .filter_map(|n| {
                    let node = self.sim.node(*n).ok()?;
                    let f = node.faults.first()?;
                    (node.state == NodeState::Allocated && node.job == Some(job))
                        .then(|| (*n, f.model.component_class.name().to_string()))
                })
                .collect();
            for (n, class) in faulty {
                let diagnostics = Diagnostics { detail: "operator investigation".into(), ..Default::default() };
                self.take_out(n, Via::Operator, &class, diagnostics, t, policy)?;
            }
            self.recover.insert(job);
        }
        let nodes: Vec<NodeId> = self.node_operator.iter().filter(|(_, d)| **d <= t).map(|(n, _)| *n).collect();
        for n in nodes {
            self.node_operator.remove(&n);
            let class = self.sim.node(n)?.faults.first().map(|f| f.model.component_class.name().to_string());
            let class = class.unwrap_or_else(|| UNCLASSIFIED.to_string());
            self.take_out(n, Via::Operator, &class, Diagnostics::default(), t, policy)?;
        }
        Ok(())
    }

    fn run_playbooks(&mut self, t: Millis) -> Result<(), ScenarioError> {
        let (due, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.playbooks).into_iter().partition(|p| p.due <= t);
        self.playbooks = rest;
        for p in due {
            if self.sim.node(p.node)?.state != NodeState::Cordoned {
                continue;
            }
            let run = self.remediator.run_playbook(&mut self.sim, p.node, &p.class, p.diagnostics)?;
            if let PlaybookOutcome::AwaitingTicket = run.outcome {
                // poll() keeps retrying the ticket
            }
        }
        Ok(())
    }

    fn recover_jobs(&mut self) -> Result<(), ScenarioError> {
        for job in std::mem::take(&mut self.recover) {
            let state = self.sim.job(job)?.state;
            if !matches!(state, JobState::Interrupted | JobState::Hung | JobState::Degraded) {
                continue;
            }
            match self.remediator.recover_job(&mut self.sim, job) {
                Ok(_) => {}
                Err(crate::remediation::RemediationError::NoSpareCapacity(_)) => {
                    self.recover.insert(job);
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    fn ensure_job(&mut self) -> Result<(), ScenarioError> {
        if self.job.is_some_and(|j| self.sim.job(j).is_ok_and(|j| j.state != JobState::Completed)) {
            return Ok(());
        }
        match self.sim.submit_job(self.scenario.job_spec()) {
            Ok(j) => {
                self.job = Some(j);
                Ok(())
            }
            Err(crate::sim::SimError::InsufficientCapacity { .. }) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn snapshot_healthy(&mut self, t: Millis) {
        if !self.scenario.policy_at(t).learns() && !self.scenario.schedule.iter().any(|p| p.policy.learns()) {
            return;
        }
        if self.last_healthy.is_some_and(|l| t < l + HEALTHY_EVERY) || t < HEALTHY_EVERY / 2 {
            return;
        }
        let Some(job) = self.job else { return };
        let Ok(j) = self.sim.job(job) else { return };
        let settled = j.state == JobState::Training && j.segment_start.is_some_and(|s| s + SNAPSHOT_SPAN <= t);
        if !settled || !self.anomalies.is_empty() || !self.recover.is_empty() {
            return;
        }
        let nodes = j.assigned_nodes.clone();
        let id = format!("healthy-{:05}", t / MS_PER_MIN);
        self.healthy.push(LabeledIncident::capture(
            &id,
            Label::Healthy,
            None,
            &self.store,
            &nodes,
            t - SNAPSHOT_SPAN,
            t,
        ));
        if self.healthy.len() > HEALTHY_KEEP {
            self.healthy.remove(0);
        }
        self.last_healthy = Some(t);
    }
}
