use std::collections::BTreeMap;
use std::path::Path;

use super::suite::*;
use super::*;
use crate::sim::ComponentClass;

fn busy_scenario(seed: u64) -> Scenario {
    Scenario::from_yaml(&format!(
        "name: busy\nseed: {seed}\nnodes: 12\nduration_days: 3\npolicy: full\n\
         fault_rate_per_node_hour: 0.004\ninjections:\n  - {{ at_h: 5, fault: silent-hang/unknown }}\n\
         kpi:\n  period_days: 1\n"
    ))
    .unwrap()
}

fn dir_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn every_class_passes_its_suite_case() {
    for c in ComponentClass::ALL {
        let sc = suite_scenario(c, 16, 1000);
        let out = run(&sc, None).unwrap();
        let r = evaluate_case(&sc, c, &out);
        assert!(r.known_in_time, "{r:?}");
        assert_eq!(r.known_latency, Some(sc.telemetry_interval_s as u64 * 1000), "{r:?}");
        assert!(r.confirmed >= 1 && r.confirmed_correct == r.confirmed, "{r:?}");
        assert!(r.learned && r.recurrence_by_rule, "{r:?}");
    }
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sc = busy_scenario(7);
    run(&sc, Some(a.path())).unwrap();
    run(&sc, Some(b.path())).unwrap();
    let (da, db) = (dir_bytes(a.path()), dir_bytes(b.path()));
    assert!(da.contains_key("events.jsonl") && da.contains_key("kpi/summary.json") && da.contains_key("run.json"));
    assert_eq!(da.keys().collect::<Vec<_>>(), db.keys().collect::<Vec<_>>());
    for (k, v) in &da {
        assert!(v == &db[k], "{k} differs");
    }
}

#[test]
fn rerun_into_same_dir_replaces_it() {
    let d = tempfile::tempdir().unwrap();
    run(&busy_scenario(3), Some(d.path())).unwrap();
    let first = dir_bytes(d.path());
    run(&busy_scenario(3), Some(d.path())).unwrap();
    assert_eq!(first, dir_bytes(d.path()));
}

#[test]
fn different_seed_changes_the_run() {
    let a = run(&busy_scenario(1), None).unwrap();
    let b = run(&busy_scenario(2), None).unwrap();
    assert_ne!(a.events, b.events);
}

#[test]
fn foreign_directory_is_left_alone() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("notes.txt"), "keep").unwrap();
    let err = run(&busy_scenario(1), Some(d.path())).unwrap_err();
    assert!(matches!(err, ScenarioError::ForeignArtifactDir(_)));
    assert_eq!(std::fs::read_to_string(d.path().join("notes.txt")).unwrap(), "keep");
}

#[test]
fn bundled_scenario_parses_and_round_trips() {
    let sc = march_to_july();
    sc.check().unwrap();
    assert_eq!(sc.policy_at(0), Policy::Manual);
    assert_eq!(sc.policy_at(crate::MS_PER_DAY * 95), Policy::Full);
    let back = Scenario::from_yaml(&sc.to_yaml()).unwrap();
    assert_eq!(back, sc);
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    assert!(matches!(
        Scenario::from_yaml("name: x\nseed: 1\nnodes: 8\nduration_days: 1\nbogus: 2\n"),
        Err(ScenarioError::Parse(_))
    ));
    let small = Scenario::from_yaml("name: x\nseed: 1\nnodes: 2\nduration_days: 1\npolicy: manual\n");
    assert!(matches!(small, Err(ScenarioError::Invalid(_))));
}

#[test]
fn manual_policy_never_automates() {
    let mut sc = busy_scenario(5);
    sc.policy = Policy::Manual;
    sc.injections.clear();
    let out = run(&sc, None).unwrap();
    assert!(!out.record.detections.is_empty());
    assert!(out.record.detections.iter().all(|d| !d.via.automated()));
    assert!(out.record.diagnoses.is_empty() && out.record.learning.is_empty());
}

#[test]
fn detections_name_a_node_that_had_a_fault_or_a_rule_hit() {
    let out = run(&busy_scenario(11), None).unwrap();
    for d in &out.record.detections {
        if !matches!(d.via, Via::Rule(_)) {
            assert!(!d.faults.is_empty(), "{d:?}");
        }
    }
}
