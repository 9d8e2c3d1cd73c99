//! Closed-loop node lifecycle: cordon, job recovery, playbooks, incident
//! tickets, migration handling and re-validation before return to service.

mod playbook;
mod ticket;
mod validation;

pub use playbook::{default_playbooks, Action, ActionRecord, Playbook, PlaybookOutcome, PlaybookRun};
pub use ticket::{Diagnostics, MockTicketClient, Ticket, TicketPort, TicketStatus};
pub use validation::{validate_node, CheckResult, ValidationConfig, ValidationMode, ValidationReport};

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::sim::{EventKind, JobState, NodeState, Recovery, SimError, SimEvent, Simulator};
use crate::{JobId, Millis, NodeId, MS_PER_SEC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemediationError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{node} has no passed validation since it was cordoned")]
    StaleValidation { node: NodeId },
    #[error("{0} is not cordoned")]
    NotCordoned(NodeId),
    #[error("no playbook for fault class `{0}`")]
    UnknownFaultClass(String),
    #[error("playbook for `{0}` must end with a validation action")]
    InvalidPlaybook(String),
    #[error("ticket client unavailable")]
    ClientUnavailable,
    #[error("unknown ticket `{0}`")]
    UnknownTicket(String),
    #[error("no spare capacity to recover {0}")]
    NoSpareCapacity(JobId),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cause {
    Rule(String),
    Diagnosis(String),
    Validation,
    Ticket(String),
    Manual(String),
}

impl Cause {
    fn tag(&self) -> String {
        match self {
            Cause::Rule(r) => format!("rule:{r}"),
            Cause::Diagnosis(d) => format!("diagnosis:{d}"),
            Cause::Validation => "validation".into(),
            Cause::Ticket(t) => format!("ticket:{t}"),
            Cause::Manual(m) => format!("manual:{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifecycleTransition {
    pub node_id: NodeId,
    pub from: NodeState,
    pub to: NodeState,
    pub cause: Cause,
    pub t: Millis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub base_backoff: Millis,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 4, base_backoff: 30 * MS_PER_SEC }
    }
}

/// Drives node remediation against a simulator. Per-node operations are
/// applied one at a time through `&mut self`.
pub struct Remediator<P: TicketPort = MockTicketClient> {
    pub playbooks: BTreeMap<String, Playbook>,
    pub validation: ValidationConfig,
    pub retry: RetryPolicy,
    client: P,
    tickets: BTreeMap<String, Ticket>,
    cordoned_at: BTreeMap<NodeId, Millis>,
    awaiting: BTreeMap<NodeId, Diagnostics>,
    transitions: Vec<LifecycleTransition>,
}

impl Default for Remediator<MockTicketClient> {
    fn default() -> Self {
        Self::new(MockTicketClient::default())
    }
}

impl<P: TicketPort> Remediator<P> {
    pub fn new(client: P) -> Self {
        Self {
            playbooks: default_playbooks(),
            validation: ValidationConfig::default(),
            retry: RetryPolicy::default(),
            client,
            tickets: BTreeMap::new(),
            cordoned_at: BTreeMap::new(),
            awaiting: BTreeMap::new(),
            transitions: Vec::new(),
        }
    }

    pub fn client(&self) -> &P {
        &self.client
    }

    pub fn client_mut(&mut self) -> &mut P {
        &mut self.client
    }

    pub fn tickets(&self) -> impl Iterator<Item = &Ticket> {
        self.tickets.values()
    }

    pub fn transitions(&self) -> &[LifecycleTransition] {
        &self.transitions
    }

    pub fn cordoned_at(&self, node: NodeId) -> Option<Millis> {
        self.cordoned_at.get(&node).copied()
    }

    fn step(
        &mut self,
        sim: &mut Simulator,
        node: NodeId,
        to: NodeState,
        cause: &Cause,
    ) -> Result<LifecycleTransition, RemediationError> {
        let from = sim.node(node)?.state;
        sim.transition(node, to, &cause.tag())?;
        let tr = LifecycleTransition { node_id: node, from, to, cause: cause.clone(), t: sim.now() };
        self.transitions.push(tr.clone());
        Ok(tr)
    }

    /// Takes a node out of scheduling. An allocated node's job loses it and
    /// is interrupted.
    pub fn cordon(
        &mut self,
        sim: &mut Simulator,
        node: NodeId,
        cause: Cause,
    ) -> Result<LifecycleTransition, RemediationError> {
        let state = sim.node(node)?.state;
        if matches!(state, NodeState::Available | NodeState::Allocated) {
            self.step(sim, node, NodeState::Suspect, &cause)?;
        } else if state != NodeState::Suspect {
            return Err(SimError::IllegalTransition { node, from: state, to: NodeState::Cordoned }.into());
        }
        let tr = self.step(sim, node, NodeState::Cordoned, &cause)?;
        self.cordoned_at.insert(node, tr.t);
        Ok(tr)
    }

    /// Returns a validating node to service. Requires a passed validation
    /// no older than the most recent cordon.
    pub fn uncordon(&mut self, sim: &mut Simulator, node: NodeId) -> Result<LifecycleTransition, RemediationError> {
        let n = sim.node(node)?;
        if n.state != NodeState::Validating {
            return Err(SimError::IllegalTransition { node, from: n.state, to: NodeState::Available }.into());
        }
        let since = self.cordoned_at.get(&node).copied().unwrap_or(0);
        if !n.last_validation.is_some_and(|t| t >= since) {
            return Err(RemediationError::StaleValidation { node });
        }
        self.step(sim, node, NodeState::Available, &Cause::Validation)
    }

    pub fn validate(
        &mut self,
        sim: &mut Simulator,
        node: NodeId,
        mode: ValidationMode,
    ) -> Result<ValidationReport, RemediationError> {
        let report = validate_node(sim, node, mode, &self.validation)?;
        let mode_s = match mode {
            ValidationMode::Quick => "quick",
            ValidationMode::Comprehensive => "comprehensive",
        };
        sim.note(
            SimEvent::new(sim.now(), EventKind::Validation)
                .node(node)
                .detail(format!("mode={mode_s} {}", if report.passed { "pass" } else { "fail" })),
        );
        Ok(report)
    }

    /// Restarts a disrupted job from its last checkpoint on healthy nodes.
    pub fn recover_job(&mut self, sim: &mut Simulator, job: JobId) -> Result<Recovery, RemediationError> {
        match sim.restart_job(job) {
            Ok(r) => {
                sim.note(
                    SimEvent::new(sim.now(), EventKind::JobRecovering)
                        .job(job)
                        .detail(format!("resumed_at={} lost_steps={}", r.resumed_at_step, r.lost_steps)),
                );
                Ok(r)
            }
            Err(SimError::NoSpareCapacity(j)) => Err(RemediationError::NoSpareCapacity(j)),
            Err(e) => Err(e.into()),
        }
    }

    /// Files a ticket for a cordoned node, retrying with exponential backoff.
    /// The idempotency key is the node and its cordon time, so retries and
    /// duplicate deliveries map to one ticket per cordon.
    pub fn open_ticket(
        &mut self,
        sim: &mut Simulator,
        node: NodeId,
        diagnostics: Diagnostics,
    ) -> Result<Ticket, RemediationError> {
        if sim.node(node)?.state != NodeState::Cordoned {
            return Err(RemediationError::NotCordoned(node));
        }
        let cordon_t = self.cordoned_at.get(&node).copied().unwrap_or(sim.node(node)?.state_since);
        let key = format!("{node}@{cordon_t}");
        let mut delay = 0;
        let mut backoff = self.retry.base_backoff;
        for _ in 0..self.retry.attempts.max(1) {
            match self.client.create(&key, node, &diagnostics, sim.now() + delay) {
                Ok(id) => {
                    self.awaiting.remove(&node);
                    let t = sim.now() + delay;
                    let ticket = self.tickets.entry(id.clone()).or_insert_with(|| Ticket {
                        ticket_id: id.clone(),
                        node_id: node,
                        idempotency_key: key.clone(),
                        diagnostics: diagnostics.clone(),
                        status: TicketStatus::Open,
                        timeline: vec![(TicketStatus::Open, t)],
                    });
                    let ticket = ticket.clone();
                    sim.note(
                        SimEvent::new(sim.now(), EventKind::Ticket)
                            .node(node)
                            .detail(format!("{id} open {}", diagnostics.fault_class)),
                    );
                    return Ok(ticket);
                }
                Err(RemediationError::ClientUnavailable) => {
                    delay += backoff;
                    backoff *= 2;
                }
                Err(e) => return Err(e),
            }
        }
        self.awaiting.insert(node, diagnostics);
        Err(RemediationError::ClientUnavailable)
    }

    fn escalate(
        &mut self,
        sim: &mut Simulator,
        node: NodeId,
        diagnostics: Diagnostics,
        log: &mut Vec<ActionRecord>,
    ) -> PlaybookOutcome {
        let t = sim.now();
        match self.open_ticket(sim, node, diagnostics) {
            Ok(tk) => {
                log.push(ActionRecord { t, action: Action::OpenTicket, ok: true, detail: tk.ticket_id.clone() });
                PlaybookOutcome::Ticketed(tk.ticket_id)
            }
            Err(e) => {
                log.push(ActionRecord { t, action: Action::OpenTicket, ok: false, detail: e.to_string() });
                PlaybookOutcome::AwaitingTicket
            }
        }
    }

    /// Validates a cordoned node in place and returns it to service on a
    /// pass; on a failure it is cordoned again (a new cordon epoch).
    fn validate_in_place(
        &mut self,
        sim: &mut Simulator,
        node: NodeId,
        mode: ValidationMode,
    ) -> Result<bool, RemediationError> {
        self.step(sim, node, NodeState::Validating, &Cause::Validation)?;
        let report = self.validate(sim, node, mode)?;
        if report.passed {
            self.uncordon(sim, node)?;
        } else {
            let tr = self.step(sim, node, NodeState::Cordoned, &Cause::Validation)?;
            self.cordoned_at.insert(node, tr.t);
        }
        Ok(report.passed)
    }

    /// Executes the playbook for `fault_class` on a cordoned node.
    pub fn run_playbook(
        &mut self,
        sim: &mut Simulator,
        node: NodeId,
        fault_class: &str,
        diagnostics: Diagnostics,
    ) -> Result<PlaybookRun, RemediationError> {
        let pb = self
            .playbooks
            .get(fault_class)
            .cloned()
            .ok_or_else(|| RemediationError::UnknownFaultClass(fault_class.to_string()))?;
        if sim.node(node)?.state != NodeState::Cordoned {
            return Err(RemediationError::NotCordoned(node));
        }
        let mut log = Vec::new();
        let mut outcome = None;
        for action in pb.actions {
            let t = sim.now();
            match action {
                Action::Reboot => {
                    let clean = sim.reboot(node)?;
                    log.push(ActionRecord {
                        t,
                        action,
                        ok: clean,
                        detail: if clean { "cleared" } else { "fault persists" }.into(),
                    });
                    if !clean {
                        outcome = Some(self.escalate(sim, node, diagnostics.clone(), &mut log));
                        break;
                    }
                }
                Action::OpenTicket => {
                    outcome = Some(self.escalate(sim, node, diagnostics.clone(), &mut log));
                    break;
                }
                Action::ValidateQuick | Action::ValidateComprehensive => {
                    let mode = if action == Action::ValidateQuick {
                        ValidationMode::Quick
                    } else {
                        ValidationMode::Comprehensive
                    };
                    let passed = self.validate_in_place(sim, node, mode)?;
                    log.push(ActionRecord {
                        t,
                        action,
                        ok: passed,
                        detail: if passed { "pass" } else { "fail" }.into(),
                    });
                    outcome = Some(if passed {
                        PlaybookOutcome::Returned
                    } else {
                        self.escalate(sim, node, diagnostics.clone(), &mut log)
                    });
                    break;
                }
            }
        }
        let outcome = outcome.expect("playbooks end in validation");
        let summary: Vec<String> =
            log.iter().map(|a| format!("{:?}:{}", a.action, if a.ok { "ok" } else { "fail" })).collect();
        sim.note(
            SimEvent::new(sim.now(), EventKind::Playbook)
                .node(node)
                .detail(format!("{fault_class} [{}]", summary.join(","))),
        );
        Ok(PlaybookRun { node_id: node, fault_class: fault_class.to_string(), actions: log, outcome })
    }

    /// Puts a migrated node into comprehensive validation. A pass returns it
    /// to service; a failure cordons it again under a new ticket.
    pub fn on_migration_detected(
        &mut self,
        sim: &mut Simulator,
        node: NodeId,
    ) -> Result<ValidationReport, RemediationError> {
        let cause = Cause::Manual("migration".into());
        self.step(sim, node, NodeState::Validating, &cause)?;
        let report = self.validate(sim, node, ValidationMode::Comprehensive)?;
        if report.passed {
            self.uncordon(sim, node)?;
        } else {
            let tr = self.step(sim, node, NodeState::Cordoned, &Cause::Validation)?;
            self.cordoned_at.insert(node, tr.t);
            let diag = Diagnostics {
                fault_class: "validation-failure".into(),
                detail: "post-migration validation failed".into(),
                ..Default::default()
            };
            let _ = self.open_ticket(sim, node, diag);
        }
        Ok(report)
    }

    /// Retries pending ticket creation and follows open tickets: a
    /// deallocated host goes to repair, a migrated one is re-validated.
    pub fn poll(&mut self, sim: &mut Simulator) -> Result<(), RemediationError> {
        let awaiting: Vec<(NodeId, Diagnostics)> = self.awaiting.iter().map(|(n, d)| (*n, d.clone())).collect();
        for (node, diag) in awaiting {
            if sim.node(node)?.state == NodeState::Cordoned {
                let _ = self.open_ticket(sim, node, diag);
            } else {
                self.awaiting.remove(&node);
            }
        }
        let open: Vec<String> =
            self.tickets.values().filter(|t| t.status != TicketStatus::Closed).map(|t| t.ticket_id.clone()).collect();
        for id in open {
            let now = sim.now();
            let status = match self.client.poll(&id, now) {
                Ok(s) => s,
                Err(RemediationError::ClientUnavailable) => continue,
                Err(e) => return Err(e),
            };
            let node = self.tickets[&id].node_id;
            let cause = Cause::Ticket(id.clone());
            if status >= TicketStatus::HostDeallocated && sim.node(node)?.state == NodeState::Cordoned {
                self.tickets.get_mut(&id).expect("ticket").advance(TicketStatus::HostDeallocated, now);
                self.step(sim, node, NodeState::InRepair, &cause)?;
            }
            if status >= TicketStatus::Migrated && sim.node(node)?.state == NodeState::InRepair {
                self.tickets.get_mut(&id).expect("ticket").advance(TicketStatus::Migrated, now);
                self.step(sim, node, NodeState::Migrated, &cause)?;
                self.on_migration_detected(sim, node)?;
                if self.client.close(&id, now).is_ok() {
                    self.tickets.get_mut(&id).expect("ticket").advance(TicketStatus::Closed, now);
                }
            }
        }
        Ok(())
    }

    /// Whether any job is currently training on a node outside Allocated.
    pub fn safety_violation(sim: &Simulator) -> bool {
        sim.jobs().any(|j| {
            j.state == JobState::Training
                && j.assigned_nodes
                    .iter()
                    .any(|n| sim.node(*n).map(|x| x.state != NodeState::Allocated).unwrap_or(true))
        })
    }
}

#[cfg(test)]
mod tests;
