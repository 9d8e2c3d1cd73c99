use super::*;
use crate::hours;
use crate::sim::{ComponentClass, FaultModel, JobSpec, Manifestation, SimConfig};

fn sim(nodes: u32) -> Simulator {
    Simulator::new(SimConfig::new(7, nodes).without_telemetry()).unwrap()
}

fn quick_job(sim: &mut Simulator) -> JobId {
    let mut spec = JobSpec::new(8);
    spec.step_time_s = 1.0;
    spec.load_time_s = 0.0;
    spec.total_steps = None;
    let j = sim.submit_job(spec).unwrap();
    sim.advance(1.0).unwrap();
    j
}

fn fault(class: ComponentClass, m: Manifestation, persistent: bool) -> FaultModel {
    let mut f = FaultModel::new(class, m);
    f.persistent = persistent;
    f
}

fn diag(class: &str) -> Diagnostics {
    Diagnostics {
        fault_class: class.into(),
        rule_id: Some("r1".into()),
        evidence_window: Some((0, 60_000)),
        evidence: vec![("max(accel_mem_ecc, 60s) > 5".into(), 21.0)],
        ..Default::default()
    }
}

#[test]
fn cordon_allocated_interrupts_job() {
    let mut s = sim(2);
    let j = quick_job(&mut s);
    let node = s.job(j).unwrap().assigned_nodes[0];
    let mut r = Remediator::default();
    let tr = r.cordon(&mut s, node, Cause::Manual("test".into())).unwrap();
    assert_eq!(tr.to, NodeState::Cordoned);
    assert_eq!(s.node(node).unwrap().state, NodeState::Cordoned);
    assert_eq!(s.job(j).unwrap().state, JobState::Interrupted);
    assert!(!s.schedulable().contains(&node));
}

#[test]
fn uncordon_requires_fresh_validation() {
    let mut s = sim(1);
    let mut r = Remediator::default();
    r.cordon(&mut s, NodeId(0), Cause::Manual("t".into())).unwrap();
    assert!(matches!(r.uncordon(&mut s, NodeId(0)), Err(RemediationError::Sim(SimError::IllegalTransition { .. }))));
    s.transition(NodeId(0), NodeState::Validating, "test").unwrap();
    assert_eq!(r.uncordon(&mut s, NodeId(0)), Err(RemediationError::StaleValidation { node: NodeId(0) }));
}

#[test]
fn cordon_validate_uncordon_lifecycle() {
    let mut s = sim(1);
    let mut r = Remediator::default();
    r.cordon(&mut s, NodeId(0), Cause::Manual("t".into())).unwrap();
    s.advance(60.0).unwrap();
    s.transition(NodeId(0), NodeState::Validating, "test").unwrap();
    assert!(r.validate(&mut s, NodeId(0), ValidationMode::Quick).unwrap().passed);
    r.uncordon(&mut s, NodeId(0)).unwrap();
    assert_eq!(s.node(NodeId(0)).unwrap().state, NodeState::Available);
    assert_eq!(s.schedulable(), vec![NodeId(0)]);
}

fn recover_at(steps: f64) -> Recovery {
    let mut s = sim(2);
    let j = quick_job(&mut s);
    s.advance(steps - 1.0 + 0.5).unwrap();
    let node = s.job(j).unwrap().assigned_nodes[0];
    let mut r = Remediator::default();
    r.cordon(&mut s, node, Cause::Manual("t".into())).unwrap();
    r.recover_job(&mut s, j).unwrap()
}

#[test]
fn rollback_arithmetic() {
    let rec = recover_at(1234.0);
    assert_eq!((rec.resumed_at_step, rec.lost_steps), (1000, 234));
    let rec = recover_at(1000.0);
    assert_eq!((rec.resumed_at_step, rec.lost_steps), (1000, 0));
}

#[test]
fn recovery_without_spares_fails() {
    let mut s = sim(1);
    let j = quick_job(&mut s);
    let mut r = Remediator::default();
    r.cordon(&mut s, NodeId(0), Cause::Manual("t".into())).unwrap();
    assert_eq!(r.recover_job(&mut s, j), Err(RemediationError::NoSpareCapacity(j)));
    assert_eq!(s.job(j).unwrap().state, JobState::Interrupted);
}

#[test]
fn host_os_playbook_reboots_and_returns() {
    let mut s = sim(1);
    s.inject_fault(NodeId(0), fault(ComponentClass::HostOs, Manifestation::Crash, false), 0).unwrap();
    s.advance(1.0).unwrap();
    let mut r = Remediator::default();
    r.cordon(&mut s, NodeId(0), Cause::Rule("host-soft-lockup".into())).unwrap();
    let run = r.run_playbook(&mut s, NodeId(0), "host-os", diag("host-os")).unwrap();
    let acts: Vec<Action> = run.actions.iter().map(|a| a.action).collect();
    assert_eq!(acts, vec![Action::Reboot, Action::ValidateQuick]);
    assert_eq!(run.outcome, PlaybookOutcome::Returned);
    assert_eq!(s.node(NodeId(0)).unwrap().state, NodeState::Available);
}

#[test]
fn memory_playbook_opens_ticket() {
    let mut s = sim(1);
    s.inject_fault(NodeId(0), fault(ComponentClass::AcceleratorMemory, Manifestation::Hang, true), 0).unwrap();
    s.advance(1.0).unwrap();
    let mut r = Remediator::default();
    r.cordon(&mut s, NodeId(0), Cause::Rule("r1".into())).unwrap();
    let run = r.run_playbook(&mut s, NodeId(0), "accelerator-memory", diag("accelerator-memory")).unwrap();
    assert_eq!(run.actions[0].action, Action::OpenTicket);
    assert!(matches!(run.outcome, PlaybookOutcome::Ticketed(_)));
    let t = r.tickets().next().unwrap();
    assert_eq!(t.status, TicketStatus::Open);
    assert_eq!(t.diagnostics.rule_id.as_deref(), Some("r1"));
    assert_eq!(t.diagnostics.evidence_window, Some((0, 60_000)));
    assert!(r.client().journal_lines()[0].contains("\"rule_id\":\"r1\""));
}

#[test]
fn failed_reboot_escalates() {
    let mut s = sim(1);
    s.inject_fault(NodeId(0), fault(ComponentClass::HostOs, Manifestation::Crash, true), 0).unwrap();
    s.advance(1.0).unwrap();
    let mut r = Remediator::default();
    r.cordon(&mut s, NodeId(0), Cause::Manual("t".into())).unwrap();
    let run = r.run_playbook(&mut s, NodeId(0), "host-os", diag("host-os")).unwrap();
    assert!(!run.actions[0].ok);
    assert_eq!(run.actions[1].action, Action::OpenTicket);
    assert!(matches!(run.outcome, PlaybookOutcome::Ticketed(_)));
    assert_eq!(s.node(NodeId(0)).unwrap().state, NodeState::Cordoned);
}

#[test]
fn unknown_class_and_bad_playbook() {
    let mut s = sim(1);
    let mut r = Remediator::default();
    r.cordon(&mut s, NodeId(0), Cause::Manual("t".into())).unwrap();
    assert_eq!(
        r.run_playbook(&mut s, NodeId(0), "cosmic-rays", Diagnostics::default()),
        Err(RemediationError::UnknownFaultClass("cosmic-rays".into()))
    );
    assert!(Playbook::new("x", vec![Action::Reboot]).is_err());
}

#[test]
fn flaky_client_yields_one_ticket() {
    for lose_ack in [false, true] {
        let mut s = sim(1);
        let mut r = Remediator::default();
        r.cordon(&mut s, NodeId(0), Cause::Manual("t".into())).unwrap();
        r.client_mut().set_outage(2, lose_ack);
        let t = r.open_ticket(&mut s, NodeId(0), diag("interconnect")).unwrap();
        assert_eq!(r.client().created(), 1);
        // a duplicate delivery for the same cordon maps to the same ticket
        let again = r.open_ticket(&mut s, NodeId(0), diag("interconnect")).unwrap();
        assert_eq!(t.ticket_id, again.ticket_id);
        assert_eq!(r.client().created(), 1);
        assert_eq!(r.tickets().count(), 1);
    }
}

#[test]
fn outage_leaves_node_cordoned_until_poll() {
    let mut s = sim(1);
    let mut r = Remediator::default();
    r.cordon(&mut s, NodeId(0), Cause::Manual("t".into())).unwrap();
    r.client_mut().set_outage(10, false);
    assert_eq!(r.open_ticket(&mut s, NodeId(0), diag("interconnect")), Err(RemediationError::ClientUnavailable));
    assert_eq!(s.node(NodeId(0)).unwrap().state, NodeState::Cordoned);
    r.client_mut().set_outage(0, false);
    r.poll(&mut s).unwrap();
    assert_eq!(r.client().created(), 1);
}

#[test]
fn ticket_migration_loop_returns_node() {
    let mut s = sim(1);
    s.inject_fault(NodeId(0), fault(ComponentClass::Interconnect, Manifestation::Degrade(0.5), true), 0).unwrap();
    s.advance(1.0).unwrap();
    let mut r = Remediator::default();
    r.cordon(&mut s, NodeId(0), Cause::Rule("interconnect-link-down".into())).unwrap();
    r.run_playbook(&mut s, NodeId(0), "interconnect", diag("interconnect")).unwrap();
    s.advance(0.6 * 3600.0).unwrap();
    r.poll(&mut s).unwrap();
    assert_eq!(s.node(NodeId(0)).unwrap().state, NodeState::InRepair);
    s.advance(4.0 * 3600.0).unwrap();
    r.poll(&mut s).unwrap();
    assert_eq!(s.node(NodeId(0)).unwrap().state, NodeState::Available);
    let t = r.tickets().next().unwrap();
    assert_eq!(t.status, TicketStatus::Closed);
    let states: Vec<TicketStatus> = t.timeline.iter().map(|x| x.0).collect();
    assert_eq!(
        states,
        vec![TicketStatus::Open, TicketStatus::HostDeallocated, TicketStatus::Migrated, TicketStatus::Closed]
    );
    let path: Vec<NodeState> = r.transitions().iter().map(|t| t.to).collect();
    assert_eq!(
        path,
        vec![
            NodeState::Suspect,
            NodeState::Cordoned,
            NodeState::InRepair,
            NodeState::Migrated,
            NodeState::Validating,
            NodeState::Available
        ]
    );
    assert!(s.now() >= hours(4.0));
}

#[test]
fn failed_post_migration_validation_recordons() {
    let mut s = sim(1);
    let mut r = Remediator::default();
    r.cordon(&mut s, NodeId(0), Cause::Manual("t".into())).unwrap();
    s.transition(NodeId(0), NodeState::InRepair, "t").unwrap();
    s.transition(NodeId(0), NodeState::Migrated, "t").unwrap();
    let at = s.now();
    s.inject_fault(NodeId(0), fault(ComponentClass::AcceleratorMemory, Manifestation::Degrade(0.95), true), at)
        .unwrap();
    s.advance(1.0).unwrap();
    let rep = r.on_migration_detected(&mut s, NodeId(0)).unwrap();
    assert!(!rep.passed);
    assert_eq!(s.node(NodeId(0)).unwrap().state, NodeState::Cordoned);
    assert_eq!(r.tickets().count(), 1);
}

#[test]
fn quick_and_comprehensive_disagree_on_mild_degrade() {
    let mut s = sim(1);
    s.inject_fault(NodeId(0), fault(ComponentClass::ThroughputDegradation, Manifestation::Degrade(0.7), true), 0)
        .unwrap();
    s.advance(1.0).unwrap();
    let cfg = ValidationConfig::default();
    assert!(validate_node(&mut s, NodeId(0), ValidationMode::Quick, &cfg).unwrap().passed);
    let full = validate_node(&mut s, NodeId(0), ValidationMode::Comprehensive, &cfg).unwrap();
    assert!(!full.passed);
    assert!(!full.checks.iter().find(|c| c.name == "sustained-throughput").unwrap().passed);
}

#[test]
fn healthy_quick_validation_passes_and_stamps() {
    let mut s = sim(1);
    s.set_validated(NodeId(0), None).unwrap();
    s.advance(30.0).unwrap();
    let rep = validate_node(&mut s, NodeId(0), ValidationMode::Quick, &ValidationConfig::default()).unwrap();
    assert!(rep.passed);
    assert_eq!(s.node(NodeId(0)).unwrap().last_validation, Some(30_000));
    assert_eq!(s.schedulable(), vec![NodeId(0)]);
}
