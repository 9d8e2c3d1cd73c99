use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use faultline_train::health::synthetic::{NoiseSim, PersistentNoise};

fn faultline(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faultline"))
        .args(args)
        .env("FAULTLINE_ARTIFACT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const QUIET: &str = "name: quiet\nseed: 3\nnodes: 8\nduration_days: 2\npolicy: full\nfault_rate_per_node_hour: 0\nkpi:\n  period_days: 1\n";

#[test]
fn fault_free_scenario_runs_into_the_artifact_root() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = tmp.path().join("quiet.yaml");
    fs::write(&sc, QUIET).unwrap();
    let out = stdout(&faultline(&["simulate", sc.to_str().unwrap()], tmp.path()));
    assert!(out.contains("0 injections"), "{out}");
    let run = tmp.path().join("quiet");
    assert!(run.join("kpi/utilization.csv").is_file());
    assert!(run.join("scenario.yaml").is_file());

    let rep = stdout(&faultline(&["report", run.to_str().unwrap()], tmp.path()));
    for table in ["== ttf", "== recovery", "== recycle", "== utilization", "== automation"] {
        assert!(rep.contains(table), "{rep}");
    }
}

#[test]
fn simulate_seed_override_and_explicit_out() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = tmp.path().join("quiet.yaml");
    fs::write(&sc, QUIET).unwrap();
    let out = tmp.path().join("elsewhere");
    let text = stdout(&faultline(
        &["simulate", sc.to_str().unwrap(), "--seed", "11", "--out", out.to_str().unwrap()],
        tmp.path(),
    ));
    assert!(text.contains("seed 11"), "{text}");
    assert!(out.join("kpi").is_dir());
    assert!(!tmp.path().join("quiet").exists());
}

#[test]
fn bad_scenario_and_missing_run_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = tmp.path().join("bad.yaml");
    fs::write(&sc, "name: x\nbogus: 1\n").unwrap();
    let o = faultline(&["simulate", sc.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = faultline(&["report", tmp.path().join("nope").to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn memory_fault_replay_learns_a_rule() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stdout(&faultline(&["replay", "--fixture", "memory-fault"], tmp.path()));
    assert!(out.contains("accepted after"), "{out}");
    let dir = tmp.path().join("replay-memory-fault");
    let rule = fs::read_to_string(dir.join("rule.yaml")).unwrap();
    assert!(rule.contains("Memory access fault"), "{rule}");
    assert!(dir.join("generation.json").is_file());
}

#[test]
fn saved_bundle_replays_to_the_same_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("nan-bundle");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let first = stdout(&faultline(
        &[
            "replay",
            "--fixture",
            "nan-loss",
            "--seed",
            "4",
            "--save-bundle",
            bundle.to_str().unwrap(),
            "--out",
            a.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    assert!(first.contains("Confirmed"), "{first}");
    assert!(bundle.join("bundle.json").is_file());
    let second = stdout(&faultline(&["replay", bundle.to_str().unwrap(), "--out", b.to_str().unwrap()], tmp.path()));
    assert_eq!(first.lines().next(), second.lines().next());
    assert_eq!(fs::read(a.join("diagnosis.json")).unwrap(), fs::read(b.join("diagnosis.json")).unwrap());
}

#[test]
fn empty_bundle_directory_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = faultline(&["replay", empty.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tune_lists_ranked_configs_and_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("tune.csv");
    let out = stdout(&faultline(
        &["tune", "--nodes", "2048", "--gbs", "16777216", "--top", "5", "--out", csv.to_str().unwrap()],
        tmp.path(),
    ));
    assert!(out.contains("TP1-CP1-EP8-PP8"), "{out}");
    let rows = fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 6);

    let o = faultline(&["tune", "--nodes", "3", "--gbs", "1000"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_traces_flags_the_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    stdout(&faultline(&["validate-traces", "--write-fixture", fx.to_str().unwrap()], tmp.path()));
    let (r, c) = (fx.join("reference.trace"), fx.join("candidate.trace"));
    let csv = tmp.path().join("cmp.csv");
    let args = ["validate-traces", "--reference", r.to_str().unwrap(), "--candidate", c.to_str().unwrap()];
    let mut with_out = args.to_vec();
    with_out.extend(["--out", csv.to_str().unwrap()]);
    let out = stdout(&faultline(&with_out, tmp.path()));
    assert!(out.contains("7 abnormal of 11"), "{out}");
    assert!(csv.is_file());

    let mut strict = args.to_vec();
    strict.push("--fail-on-abnormal");
    assert_eq!(faultline(&strict, tmp.path()).status.code(), Some(2));

    let same = [
        "validate-traces",
        "--reference",
        r.to_str().unwrap(),
        "--candidate",
        r.to_str().unwrap(),
        "--fail-on-abnormal",
    ];
    let out = stdout(&faultline(&same, tmp.path()));
    assert!(out.contains("0 abnormal"), "{out}");
}

#[test]
fn health_collapse_alarms_on_a_persistent_valley() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("iteration,layer,value\n");
    for it in 0..10u64 {
        for layer in 1..=8usize {
            let dip = it >= 5 && (3..=5).contains(&layer);
            let v = if dip { 0.1 } else { layer as f64 };
            writeln!(csv, "{},{layer},{v}", it * 100).unwrap();
        }
    }
    let p = tmp.path().join("norms.csv");
    fs::write(&p, csv).unwrap();
    let out = stdout(&faultline(&["health", "collapse", p.to_str().unwrap()], tmp.path()));
    assert!(out.contains("collapse alarm at iteration 700"), "{out}");
}

#[test]
fn health_stragglers_finds_the_slow_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = NoiseSim {
        ranks: 8,
        steps: 200,
        persistent: Some(PersistentNoise { rank: 5, slowdown: 0.2 }),
        ..NoiseSim::default()
    };
    let mut csv = String::from("rank,step,duration\n");
    for (rank, row) in sim.simulate(9).trace.ranks.iter().enumerate() {
        for (step, d) in row.iter().enumerate() {
            writeln!(csv, "{rank},{step},{d}").unwrap();
        }
    }
    let p = tmp.path().join("timings.csv");
    fs::write(&p, csv).unwrap();
    let out = stdout(&faultline(&["health", "stragglers", p.to_str().unwrap()], tmp.path()));
    assert!(out.contains("rank    5 Persistent"), "{out}");
    assert!(out.contains("1 suspects among 8 ranks"), "{out}");
}
