//! End-to-end acceptance checks. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use faultline::kb::{
    evaluate_rules, generate_rule_with, stratified_split, GenerateConfig, KnowledgeBase, Label, LabeledIncident,
    ProposalContext, Rule, RuleAction, RuleProposer, RuleStats, TemplateProposer,
};
use faultline::kpi::{build_report, KpiConfig};
use faultline::scenario::{self, suite};
use faultline::sim::{mtbf, EventKind, SimEvent};
use faultline::telemetry::{Snapshot, Source, TelemetrySample, TelemetryView};
use faultline::{hours, JobId, NodeId, RuleId, MS_PER_MIN};
use faultline_train::health::synthetic::{collapse_stream, two_straggler_sim};
use faultline_train::health::{
    monitor_collapse, straggler_detect, throughput_stats_observed, valley_score, NoisePattern, NormProfile,
    StragglerConfig, DEFAULT_PERSISTENCE, DEFAULT_VALLEY_THRESHOLD,
};
use faultline_train::numerics::{compare_traces, cosine, fixture, CompareOptions, TraceKind};
use faultline_train::tuner::{
    brute_force, derive_dp, search, Calibration, Constraint, ParallelismConfig, Space, Workload, MOE_64L_CALIBRATION,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn c1() -> Outcome {
    let start = Instant::now();
    let trials = 10_000;
    let m = mtbf::mean_job_ttf_hours(2024, trials, 256, 683.5);
    let took = start.elapsed();
    let rel = (m - 2.67).abs() / 2.67;
    outcome(
        rel <= 0.05 && took < Duration::from_secs(60),
        format!(
            "mean TTF {m:.4} h over {trials} trials (closed form {:.4}), off by {:.2}%, {took:.1?}",
            683.5 / 256.0,
            rel * 100.0
        ),
    )
}

fn c2_c3() -> (Outcome, Outcome) {
    let results = match suite::run_suite(&suite::SUITE_SIZES, suite::SUITE_SEEDS) {
        Ok(r) => r,
        Err(e) => return (outcome(false, format!("suite failed: {e}")), outcome(false, "suite failed")),
    };
    let n = results.len();
    let known = results.iter().filter(|r| r.known_in_time).count();
    let confirmed: usize = results.iter().map(|r| r.confirmed).sum();
    let correct: usize = results.iter().map(|r| r.confirmed_correct).sum();
    let precision = if confirmed == 0 { 0.0 } else { correct as f64 / confirmed as f64 };
    let recurrence = results.iter().filter(|r| r.recurrence_by_rule).count();
    for r in results.iter().filter(|r| !r.known_in_time || !r.recurrence_by_rule || r.confirmed_correct < r.confirmed) {
        eprintln!("  {:?} nodes {} seed {}: {:?}", r.class, r.nodes, r.seed, r);
    }
    (
        outcome(
            known == n && precision >= 0.95,
            format!("{known}/{n} known faults matched within one interval; diagnosis precision {correct}/{confirmed} = {precision:.4}"),
        ),
        outcome(recurrence == n, format!("{recurrence}/{n} second occurrences caught by a learned rule without diagnosis")),
    )
}

fn incident(id: &str, label: Label, gt: Option<u32>, hot: (u32, f64)) -> LabeledIncident {
    let schema = [("m".to_string(), Source::Accelerator), ("noise".to_string(), Source::Accelerator)];
    let mut snap = Snapshot::new(schema);
    for tick in 0..6u64 {
        let t = tick * MS_PER_MIN;
        for n in 0..4u32 {
            let m = if n == hot.0 { hot.1 } else { 1.0 };
            snap.push(TelemetrySample::number("m", t, NodeId(n), None, m));
            snap.push(TelemetrySample::number("noise", t, NodeId(n), None, n as f64 * 0.1 + tick as f64 * 0.01));
        }
    }
    LabeledIncident {
        id: id.to_string(),
        label,
        ground_truth: gt.map(NodeId),
        fault_class: None,
        nodes: (0..4).map(NodeId).collect(),
        since: 0,
        at: 5 * MS_PER_MIN,
        snapshot: snap,
    }
}

struct Scripted(Vec<Rule>);

impl RuleProposer for Scripted {
    fn propose(&mut self, _: usize, _: &ProposalContext<'_>) -> Option<Rule> {
        (!self.0.is_empty()).then(|| self.0.remove(0))
    }
}

/// A round proposes either scripted threshold rules or runs the template
/// search seeded from one positive incident.
#[derive(Debug, Clone)]
enum Round {
    Scripted(Vec<(f64, bool)>),
    Template(usize),
}

fn c4() -> Outcome {
    let corpus_s = proptest::collection::vec((any::<bool>(), 0u32..4, 0.0f64..8.0), 6..16);
    let round_s = prop_oneof![
        proptest::collection::vec((0.0f64..8.0, any::<bool>()), 1..4).prop_map(Round::Scripted),
        (0usize..32).prop_map(Round::Template),
    ];
    let strategy = (corpus_s, proptest::collection::vec(round_s, 1..6), 0.0f64..1.0);
    let cases = 120;
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let result = runner.run(&strategy, |(hot, rounds, floor)| {
        let mut corpus: Vec<LabeledIncident> = hot
            .iter()
            .enumerate()
            .map(|(i, &(pos, node, v))| {
                if pos {
                    incident(&format!("p{i:02}"), Label::HardwareFault, Some(node), (node, v))
                } else {
                    incident(&format!("n{i:02}"), Label::Healthy, None, (node, v))
                }
            })
            .collect();
        corpus.push(incident("pos", Label::HardwareFault, Some(1), (1, 5.0)));
        corpus.push(incident("neg", Label::Healthy, None, (0, 1.0)));
        let schema = corpus[0].snapshot.schema();
        let kb = KnowledgeBase::new();
        let mut cfg = GenerateConfig::new("g");
        cfg.precision_floor = floor;
        let (_, hold) = stratified_split(&corpus, cfg.seed);
        let positives: Vec<&LabeledIncident> = corpus.iter().filter(|c| c.is_positive()).collect();
        let mut prev = RuleStats::default();
        let id = RuleId::new("g");
        for round in rounds {
            let out = match round {
                Round::Scripted(drafts) => {
                    let rules = drafts
                        .iter()
                        .map(|&(thr, all)| {
                            let imp = if all { "all" } else { "argmax mean(m, 3m)" };
                            Rule::parse("g", &format!("mean(m, 3m) > {thr}"), imp, RuleAction::Ticket, None).unwrap()
                        })
                        .collect();
                    generate_rule_with(&mut Scripted(rules), &kb, &corpus[0], &[], &corpus, &schema, &cfg)
                }
                Round::Template(k) => {
                    let seed = positives[k % positives.len()];
                    generate_rule_with(&mut TemplateProposer::new(), &kb, seed, &[], &corpus, &schema, &cfg)
                }
            }
            .unwrap();
            if let Some(c) = out.accepted() {
                prop_assert!(c.stats.precision >= floor);
            }
            if kb.get(&id).is_some() {
                let now = evaluate_rules(&kb, &hold).unwrap().per_rule[&id];
                prop_assert!(now.dominates(&prev), "{:?} after {:?}", now, prev);
                prev = now;
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => outcome(true, format!("holdout precision and recall never dropped over {cases} random corpora")),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c5_c11() -> (Outcome, Outcome) {
    let sc = suite::march_to_july();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let first = match scenario::run(&sc, Some(a.path())) {
        Ok(o) => o,
        Err(e) => return (outcome(false, format!("run failed: {e}")), outcome(false, "run failed")),
    };
    let took = start.elapsed();
    let rows = &first.report.rows;
    let recovery: Vec<f64> = rows.iter().map(|r| r.recovery_mean_h.unwrap_or(f64::NAN)).collect();
    let automation: Vec<f64> = rows.iter().map(|r| r.automation_pct.unwrap_or(f64::NAN)).collect();
    let drop = recovery.first().copied().unwrap_or(f64::NAN) / recovery.last().copied().unwrap_or(f64::NAN);
    let monotone = automation.windows(2).all(|w| w[1] >= w[0]);
    let last = automation.last().copied().unwrap_or(0.0);
    let names: Vec<&str> = rows.iter().map(|r| r.period.as_str()).collect();
    let c5 = outcome(
        drop >= 10.0 && monotone && last >= 95.0 && took < Duration::from_secs(300),
        format!(
            "periods {names:?}: recovery h {recovery:.2?} (drop {drop:.1}x), automation % {automation:.2?}, {took:.1?}"
        ),
    );

    let mut files = 0;
    let mut same = true;
    let mut checks = Vec::new();
    let again = scenario::run(&sc, Some(b.path()));
    let (da, db) = (dir_bytes(a.path()), dir_bytes(b.path()));
    same &= again.is_ok() && da == db;
    files += da.len();
    checks.push(format!("march-to-july twice: {} files {}", da.len(), if da == db { "identical" } else { "differ" }));
    // re-running into the same directory replaces it with identical content
    let rerun = scenario::run(&sc, Some(a.path()));
    let dr = dir_bytes(a.path());
    same &= rerun.is_ok() && dr == db;
    checks.push(format!("rerun in place {}", if dr == db { "identical" } else { "differs" }));
    for (class, nodes, seed) in
        [(faultline::sim::ComponentClass::ALL[0], 16, 7), (faultline::sim::ComponentClass::ALL[3], 32, 8)]
    {
        let s = suite::suite_scenario(class, nodes, seed);
        let (x, y) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ok = scenario::run(&s, Some(x.path())).is_ok() && scenario::run(&s, Some(y.path())).is_ok();
        let (dx, dy) = (dir_bytes(x.path()), dir_bytes(y.path()));
        same &= ok && dx == dy;
        files += dx.len();
        checks.push(format!("{}: {}", s.name, if dx == dy { "identical" } else { "differ" }));
    }
    (c5, outcome(same, format!("{files} files compared; {}", checks.join("; "))))
}

fn c6() -> Outcome {
    let (n, j) = (NodeId(0), JobId(0));
    let ev = SimEvent::new;
    let f = hours(3.0);
    let recycle_log = vec![
        ev(0, EventKind::NodeTransition).node(n).job(j).detail("available->allocated cause=scheduler"),
        ev(0, EventKind::JobLoading).job(j),
        ev(hours(0.5), EventKind::JobTraining).job(j),
        ev(f, EventKind::FaultArrived).node(n).job(j),
        ev(f + hours(26.79), EventKind::Detection).node(n).detail("mode=manual"),
        ev(f + hours(26.79), EventKind::NodeTransition).node(n).detail("allocated->cordoned cause=operator"),
        ev(f + hours(40.0), EventKind::NodeTransition).node(n).detail("cordoned->validating cause=operator"),
        ev(f + hours(26.79 + 28.75), EventKind::NodeTransition)
            .node(n)
            .detail("validating->available cause=validation"),
    ];
    let cfg = KpiConfig { period_names: vec!["Mar".into()], ..KpiConfig::default() };
    let report = build_report(&recycle_log, 1, hours(200.0), &cfg);
    let mar = report.row("Mar");
    let parts = mar.map(|r| (r.detection_h, r.validation_h, r.recycle_total_h));
    let recycle_ok = parts == Some((Some(26.79), Some(28.75), Some(55.54)));

    // one node over a July period: allocated, training after a short load,
    // released, then taken out of service
    let (load, allocated, available, total) = (1_389, 1_459_395, 1_510_028, 1_543_680);
    let util_log = vec![
        ev(0, EventKind::NodeTransition).node(n).job(j).detail("available->allocated cause=scheduler"),
        ev(0, EventKind::JobLoading).job(j),
        ev(load, EventKind::JobTraining).job(j),
        ev(allocated, EventKind::JobCompleted).job(j),
        ev(allocated, EventKind::NodeTransition).node(n).detail("allocated->available cause=scheduler"),
        ev(available, EventKind::NodeTransition).node(n).detail("available->cordoned cause=operator"),
    ];
    let cfg = KpiConfig { period: total, period_names: vec!["Jul".into()], ..KpiConfig::default() };
    let report = build_report(&util_log, 1, total, &cfg);
    let jul = report.row("Jul").map(|r| (r.available_pct, r.allocated_pct, r.effective_pct));
    let util_ok = jul == Some((97.82, 94.54, 94.45));
    outcome(
        recycle_ok && util_ok,
        format!("Mar recycle (detection, validation, total) = {parts:?}; Jul utilization = {jul:?}"),
    )
}

/// Textbook cosine with plain f64 accumulation.
fn straight_cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut ab = 0.0f64;
    let mut aa = 0.0f64;
    let mut bb = 0.0f64;
    for i in 0..a.len() {
        ab += a[i] as f64 * b[i] as f64;
        aa += a[i] as f64 * a[i] as f64;
        bb += b[i] as f64 * b[i] as f64;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

fn c7() -> Outcome {
    let expected: [(&str, TraceKind, f64); 7] = [
        ("Attention", TraceKind::Parameters, 0.1626),
        ("Attention", TraceKind::Gradients, 0.5815),
        ("Bias-Dropout-Add", TraceKind::Outputs, 0.9309),
        ("Bias-Dropout-Add", TraceKind::Gradients, 0.9000),
        ("Embedding", TraceKind::Outputs, 0.8995),
        ("Embedding", TraceKind::Gradients, 0.9142),
        ("MoE", TraceKind::Gradients, 0.9484),
    ];
    let (r, c) = fixture::stack_divergence();
    let report = match compare_traces(&r, &c, &CompareOptions::default()) {
        Ok(x) => x,
        Err(e) => return outcome(false, format!("compare failed: {e}")),
    };
    let mut flagged: Vec<(String, TraceKind, f64)> =
        report.abnormal().map(|x| (x.module.clone(), x.kind, (x.min_cosine * 1e4).round() / 1e4)).collect();
    flagged.sort_by(|a, b| (&a.0, a.1.code()).cmp(&(&b.0, b.1.code())));
    let want: Vec<(String, TraceKind, f64)> = expected.iter().map(|(m, k, v)| (m.to_string(), *k, *v)).collect();
    let exact = flagged == want;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let len = rng.random_range(1..2048);
        let scale = 10f32.powi(rng.random_range(-6..6));
        let a: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0f32..1.0) * scale).collect();
        let b: Vec<f32> =
            a.iter().map(|x| x + rng.random_range(-1.0f32..1.0) * scale * rng.random_range(0.0f32..2.0)).collect();
        let got = cosine(&a, &b).unwrap();
        let want = straight_cosine(&a, &b);
        worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
    }
    outcome(
        exact && worst <= 1e-12,
        format!(
            "flagged {} of {} entries, exact set {exact}; worst relative cosine gap {worst:.2e} over 2000 random pairs",
            flagged.len(),
            report.entries.len()
        ),
    )
}

fn brute_depth(n: &[f64]) -> f64 {
    let mean = n.iter().sum::<f64>() / n.len() as f64;
    let mut best = 0.0f64;
    for j in 1..n.len() - 1 {
        let left = n[..j].iter().copied().fold(f64::MIN, f64::max);
        let right = n[j + 1..].iter().copied().fold(f64::MIN, f64::max);
        best = best.max((left.min(right) - n[j]).max(0.0));
    }
    best / mean
}

fn c8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut flagged = 0;
    let mut mismatches = 0;
    for i in 0..1000u64 {
        let layers = rng.random_range(3..96);
        let mut acc = 0.0;
        let rising: Vec<f64> = (0..layers)
            .map(|_| {
                acc += rng.random_range(0.001..5.0);
                acc
            })
            .collect();
        let v = valley_score(&NormProfile::new(i, rising), DEFAULT_VALLEY_THRESHOLD).unwrap();
        flagged += v.flagged as usize;
        let random: Vec<f64> = (0..layers).map(|_| rng.random_range(0.01..100.0)).collect();
        let v = valley_score(&NormProfile::new(i, random.clone()), DEFAULT_VALLEY_THRESHOLD).unwrap();
        mismatches += (v.depth != brute_depth(&random)) as usize;
    }
    let (onset, interval) = (6000, 500);
    let stream = collapse_stream(48, interval, onset, 30_000, 3);
    let alarm = monitor_collapse(&stream, DEFAULT_PERSISTENCE, DEFAULT_VALLEY_THRESHOLD).unwrap();
    let window_end = onset + (DEFAULT_PERSISTENCE as u64 - 1) * interval;
    let in_window = alarm.is_some_and(|a| (onset..=window_end).contains(&a));
    outcome(
        flagged == 0 && mismatches == 0 && in_window,
        format!(
            "{flagged}/1000 monotone profiles flagged; {mismatches}/1000 depth mismatches vs brute force; alarm at {alarm:?} for onset {onset} (window ends {window_end})"
        ),
    )
}

fn c9() -> Outcome {
    let mut ok = 0;
    let mut min_ratio = f64::INFINITY;
    let mut ratios = Vec::new();
    for seed in 0..100u64 {
        let sim = two_straggler_sim(seed);
        let run = sim.simulate(seed);
        let sus = straggler_detect(&run.trace, &StragglerConfig::default()).unwrap();
        let (p, s) = (sim.periodic.unwrap(), sim.persistent.unwrap());
        let got: Vec<(usize, NoisePattern)> = sus.iter().map(|x| (x.rank, x.pattern)).collect();
        let lag_ok = sus
            .iter()
            .any(|x| x.rank == p.rank && x.pattern == NoisePattern::Periodic && x.evidence.lag == Some(p.every));
        if got.len() == 2
            && got.contains(&(p.rank, NoisePattern::Periodic))
            && got.contains(&(s.rank, NoisePattern::Persistent))
            && lag_ok
        {
            ok += 1;
        } else {
            eprintln!("  seed {seed}: found {got:?}, injected periodic {p:?} persistent {s:?}");
        }
        let before = throughput_stats_observed(&run.throughput).unwrap();
        let after = throughput_stats_observed(&sim.suppressed().simulate(seed).throughput).unwrap();
        let r = before.std / after.std;
        min_ratio = min_ratio.min(r);
        ratios.push(r);
    }
    ratios.sort_by(f64::total_cmp);
    outcome(
        ok >= 95 && min_ratio >= 5.0,
        format!("{ok}/100 seeds with both stragglers at the right rank and pattern; throughput std reduction min {min_ratio:.1}x, median {:.1}x", ratios[50]),
    )
}

fn random_space(rng: &mut ChaCha8Rng) -> Space {
    let pick = |rng: &mut ChaCha8Rng, all: &[u32]| -> Vec<u32> {
        loop {
            let v: Vec<u32> = all.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
            if !v.is_empty() {
                return v;
            }
        }
    };
    loop {
        let s = Space {
            tp: pick(rng, &[1, 2, 4, 8]),
            cp: pick(rng, &[1, 2]),
            ep: pick(rng, &[1, 2, 4, 8, 16]),
            pp: pick(rng, &[1, 2, 4, 8, 16]),
            vpp: pick(rng, &[1, 2, 4]),
            mbs: pick(rng, &[1, 2, 4, 8]),
        };
        if s.grid_size() <= 200 {
            return s;
        }
    }
}

fn c10() -> Outcome {
    let base = Calibration::from_toml(MOE_64L_CALIBRATION).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut equal = 0;
    let mut identities = true;
    let mut checked = 0;
    let spaces = 50;
    for _ in 0..spaces {
        let space = random_space(&mut rng);
        let mut cal = base.clone();
        cal.cost.layer_compute_s *= rng.random_range(0.3..3.0);
        cal.memory.capacity_gb = rng.random_range(20.0..120.0);
        let n = [16, 64, 256, 2048][rng.random_range(0..4)];
        let w = Workload::new(n, 4096);
        let k = rng.random_range(1..20);
        let cons = [Constraint::FitsMemory];
        if search(&space, &cal, &w, &cons, k) == brute_force(&space, &cal, &w, &cons, k) {
            equal += 1;
        }
        for c in space.enumerate(&cal.model, &w) {
            checked += 1;
            identities &= c.tp * c.cp * c.pp * c.dp == n && c.dp * c.mbs * c.accum == w.gbs_samples;
            identities &= derive_dp(n, c.tp, c.cp, c.pp, w.gbs_samples, c.mbs) == Ok((c.dp, c.accum));
        }
    }
    let w = Workload::from_tokens(2048, 16 << 20, base.model.seq_len).unwrap();
    let (dp, accum) = derive_dp(2048, 1, 1, 8, w.gbs_samples, 1).unwrap();
    let baseline = ParallelismConfig { tp: 1, cp: 1, ep: 8, pp: 8, vpp: 1, mbs: 1, dp, accum };
    let est = base.estimate(&baseline, &w);
    let feasible = est.is_some_and(|e| e.feasible);
    outcome(
        equal == spaces && identities && dp == 256 && feasible,
        format!(
            "search == brute force on {equal}/{spaces} spaces; identities hold on {checked} configs: {identities}; TP1-CP1-EP8-PP8 N=2048 -> DP {dp}, accum {accum}, memory {:.2} GB, feasible {feasible}",
            est.map_or(f64::NAN, |e| e.memory_gb)
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let timed = |name: &'static str, f: &mut dyn FnMut() -> Vec<Outcome>| {
        let start = Instant::now();
        let outs = f();
        eprintln!("  ({name} took {:.1?})", start.elapsed());
        outs
    };
    let mut push = |names: &[&'static str], outs: Vec<Outcome>| {
        for (n, o) in names.iter().zip(outs) {
            println!("[{}] {n}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((n, o));
        }
    };
    push(&["C1"], timed("C1", &mut || vec![c1()]));
    push(
        &["C2", "C3"],
        timed("C2/C3", &mut || {
            let (a, b) = c2_c3();
            vec![a, b]
        }),
    );
    push(&["C4"], timed("C4", &mut || vec![c4()]));
    let (c5, c11) = {
        let mut v = timed("C5/C11", &mut || {
            let (a, b) = c5_c11();
            vec![a, b]
        });
        let b = v.pop().unwrap();
        (v.pop().unwrap(), b)
    };
    push(&["C5"], vec![c5]);
    push(&["C6"], vec![c6()]);
    push(&["C7"], vec![c7()]);
    push(&["C8"], timed("C8", &mut || vec![c8()]));
    push(&["C9"], timed("C9", &mut || vec![c9()]));
    push(&["C10"], timed("C10", &mut || vec![c10()]));
    push(&["C11"], vec![c11]);
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
