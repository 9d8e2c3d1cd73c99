use super::*;
use crate::telemetry::{Snapshot, Source, TelemetrySample, TelemetryView};
use crate::{NodeId, MS_PER_MIN};

fn schema() -> Vec<(String, Source)> {
    vec![
        ("m".to_string(), Source::Accelerator),
        ("noise".to_string(), Source::Accelerator),
        ("driver-log".to_string(), Source::DriverLog),
    ]
}

/// Six one-minute ticks on four nodes; `m` is 1.0 everywhere except
/// `hot` (node, value); `noise` is a fixed per-node ramp.
fn incident(
    id: &str,
    label: Label,
    gt: Option<u32>,
    hot: Option<(u32, f64)>,
    log: Option<(u32, &str)>,
) -> LabeledIncident {
    let mut snap = Snapshot::new(schema());
    for tick in 0..6u64 {
        let t = tick * MS_PER_MIN;
        for n in 0..4u32 {
            let m = match hot {
                Some((h, v)) if h == n => v,
                _ => 1.0,
            };
            snap.push(TelemetrySample::number("m", t, NodeId(n), None, m));
            snap.push(TelemetrySample::number("noise", t, NodeId(n), None, n as f64 * 0.1 + tick as f64 * 0.01));
            if let Some((ln, text)) = log {
                if ln == n && tick == 5 {
                    snap.push(TelemetrySample::line("driver-log", t, NodeId(n), None, text));
                }
            }
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

fn rule(id: &str, pred: &str, imp: &str) -> Rule {
    Rule::parse(id, pred, imp, RuleAction::Ticket, None).unwrap()
}

#[test]
fn default_rules_round_trip() {
    let rules = default_rules();
    assert_eq!(rules.len(), 5);
    for r in rules {
        assert_eq!(Rule::from_yaml(&r.to_yaml()).unwrap(), r);
    }
}

#[test]
fn schema_check() {
    let s = schema();
    assert!(rule("a", "max(m, 60s) > 1", "argmax max(m, 60s)").check_schema(&s).is_ok());
    assert!(rule("a", "max(zzz, 60s) > 1", "all").check_schema(&s).is_err());
    assert!(rule("a", "max(driver-log, 60s) > 1", "all").check_schema(&s).is_err());
    assert!(rule("a", "max(m, 0s) > 1", "all").check_schema(&s).is_err());
}

#[test]
fn versions_increment_and_persist() {
    let dir = tempfile::tempdir().unwrap();
    let kb = KnowledgeBase::open(dir.path()).unwrap();
    let r = rule("hot-m", "max(m, 60s) > 5", "argmax max(m, 60s)");
    assert_eq!(kb.commit(r.clone()).unwrap().version, 1);
    assert_eq!(kb.commit(r.clone()).unwrap().version, 2);
    kb.quarantine(&r.rule_id, "test").unwrap();
    drop(kb);
    let kb = KnowledgeBase::open(dir.path()).unwrap();
    assert_eq!(kb.get(&r.rule_id).unwrap().version, 2);
    assert_eq!(kb.history(&r.rule_id).len(), 1);
    assert!(kb.is_quarantined(&r.rule_id));
    assert_eq!(kb.audit().len(), 3);
    assert!(dir.path().join("history/hot-m.v1.yaml").exists());
    assert!(kb.commit(rule("../evil", "max(m, 60s) > 5", "all")).is_err());
}

#[test]
fn quarantine_excludes_and_reaccept_restores() {
    let kb = KnowledgeBase::with_rules([rule("hot-m", "max(m, 60s) > 5", "argmax max(m, 60s)")]).unwrap();
    let inc = incident("a", Label::HardwareFault, Some(2), Some((2, 9.0)), None);
    let id = RuleId::new("hot-m");
    assert_eq!(kb.match_rules(&inc.snapshot, &inc.scope()).unwrap().matches.len(), 1);
    kb.quarantine(&id, "manual").unwrap();
    let audit = kb.audit().len();
    kb.quarantine(&id, "manual").unwrap();
    assert_eq!(kb.audit().len(), audit);
    assert!(kb.match_rules(&inc.snapshot, &inc.scope()).unwrap().matches.is_empty());
    let review = evaluate_rule_set(&[kb.get(&id).unwrap()], &[inc.clone()]).unwrap();
    assert!(review.per_rule[&id].precision >= 0.95);
    kb.reaccept(&id, "review passed").unwrap();
    let m = kb.match_rules(&inc.snapshot, &inc.scope()).unwrap().matches;
    assert_eq!(m[0].node_id, NodeId(2));
    assert!(matches!(kb.quarantine(&RuleId::new("nope"), "x"), Err(KbError::UnknownRule(_))));
}

#[test]
fn runtime_error_quarantines() {
    let mut bad = rule("bad", "max(m, 60s) > 5", "all");
    bad.predicate = parse_predicate("max(driver-log, 60s) > 1").unwrap();
    let kb = KnowledgeBase::with_rules([bad, rule("ok", "max(m, 60s) > 5", "all")]).unwrap();
    let inc = incident("a", Label::HardwareFault, Some(2), Some((2, 9.0)), None);
    let out = kb.match_rules(&inc.snapshot, &inc.scope()).unwrap();
    assert_eq!(out.quarantined.len(), 1);
    assert!(kb.is_quarantined(&RuleId::new("bad")));
    assert_eq!(out.matches.len(), 1);
}

#[test]
fn match_order_is_independent_of_commit_order() {
    let a = rule("a", "max(m, 60s) > 5", "all");
    let b = rule("b", "min(m, 60s) > 0.5", "all");
    let inc = incident("x", Label::HardwareFault, Some(2), Some((2, 9.0)), None);
    let k1 = KnowledgeBase::with_rules([a.clone(), b.clone()]).unwrap();
    let k2 = KnowledgeBase::with_rules([b, a]).unwrap();
    assert_eq!(
        k1.match_rules(&inc.snapshot, &inc.scope()).unwrap(),
        k2.match_rules(&inc.snapshot, &inc.scope()).unwrap()
    );
}

#[test]
fn log_count_terms() {
    let inc = incident(
        "x",
        Label::HardwareFault,
        Some(1),
        None,
        Some((1, "Memory access fault by Node-1 (Agent handle: 0x7f)")),
    );
    let r = rule(
        "log",
        r#"count("Memory access fault by Node-*", 60s) >= 1"#,
        r#"argmax count("Memory access fault", 60s)"#,
    );
    let m = evaluate_rule(&inc.snapshot, &r, &inc.scope()).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].node_id, NodeId(1));
    assert_eq!(m[0].evidence.terms[0].1, 1.0);
}

#[test]
fn window_is_clipped_at_since() {
    let inc = incident("x", Label::Healthy, None, Some((0, 9.0)), None);
    let late = LabeledIncident { since: 5 * MS_PER_MIN, ..inc.clone() };
    let r = rule("c", "count(m, 1h) >= 6", "all");
    assert_eq!(evaluate_rule(&inc.snapshot, &r, &inc.scope()).unwrap().len(), 4);
    assert!(evaluate_rule(&late.snapshot, &r, &late.scope()).unwrap().is_empty());
}

#[test]
fn never_firing_rule_convention() {
    let corpus = vec![incident("p", Label::HardwareFault, Some(2), Some((2, 9.0)), None)];
    let r = rule("never", "max(m, 60s) > 100", "all");
    let st = evaluate_rule_set(&[r], &corpus).unwrap().per_rule[&RuleId::new("never")];
    assert_eq!((st.precision, st.recall), (1.0, 0.0));
}

#[test]
fn wrong_node_is_a_false_positive() {
    // hardware fault on node 2, but node 3 is the hottest; one healthy
    // incident where the rule stays quiet; one where it fires.
    let corpus = vec![
        incident("right", Label::HardwareFault, Some(2), Some((2, 9.0)), None),
        incident("wrong", Label::HardwareFault, Some(2), Some((3, 9.0)), None),
        incident("quiet", Label::Healthy, None, None, None),
        incident("loud", Label::UserError, None, Some((0, 9.0)), None),
    ];
    let r = rule("hot", "max(m, 60s) > 5", "argmax max(m, 60s)");
    let rep = evaluate_rule_set(&[r], &corpus).unwrap();
    let st = rep.per_rule[&RuleId::new("hot")];
    assert_eq!((st.tp, st.fp, st.fn_, st.tn), (1, 2, 1, 1));
    assert!((st.precision - 1.0 / 3.0).abs() < 1e-12);
    assert!((st.recall - 0.5).abs() < 1e-12);
    assert_eq!(rep.corpus.tp, 1);
}

#[test]
fn perfect_separator_scores_one() {
    let mut corpus = Vec::new();
    for i in 0..10 {
        corpus.push(incident(&format!("p{i}"), Label::HardwareFault, Some(i % 4), Some((i % 4, 5.0 + i as f64)), None));
        corpus.push(incident(&format!("n{i}"), Label::Healthy, None, None, None));
    }
    let r = rule("hot", "mean(m, 3m) > 3", "argmax mean(m, 3m)");
    let st = evaluate_rule_set(&[r], &corpus).unwrap().per_rule[&RuleId::new("hot")];
    assert_eq!((st.precision, st.recall), (1.0, 1.0));
}

#[test]
fn feature_selection_identical_sets() {
    let a = vec![incident("a", Label::HardwareFault, Some(0), None, None)];
    let n = vec![incident("n", Label::Healthy, None, None, None)];
    let f = contrastive_feature_selection(&a, &n, 10).unwrap();
    // node 0 has the lowest noise ramp, so only `m` ties at zero
    let m = f.iter().find(|s| s.feature == Feature::Metric("m".into())).unwrap();
    assert_eq!(m.score, 0.0);
    let same = contrastive_feature_selection(&n, &n, 10).unwrap();
    assert!(same.iter().all(|s| s.score == 0.0));
    let names: Vec<String> = same.iter().map(|s| s.feature.name()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert!(matches!(contrastive_feature_selection(&[], &n, 3), Err(KbError::EmptySet)));
}

#[test]
fn feature_selection_finds_shifted_metric() {
    let a: Vec<_> =
        (0..5).map(|i| incident(&format!("a{i}"), Label::HardwareFault, Some(1), Some((1, 6.0)), None)).collect();
    let n: Vec<_> = (0..5).map(|i| incident(&format!("n{i}"), Label::Healthy, None, None, None)).collect();
    let f = contrastive_feature_selection(&a, &n, 1).unwrap();
    assert_eq!(f[0].feature, Feature::Metric("m".into()));
}

#[test]
fn contextual_selection() {
    let base = incident("x", Label::HardwareFault, Some(0), None, None);
    assert!(matches!(
        contextual_data_selection(&base, &[incident("y", Label::HardwareFault, Some(0), None, None)], 1),
        Err(KbError::NoContrastAvailable)
    ));
    // all `m` values on node 0 move the profile mean by v/4
    let near = incident("near", Label::UserError, None, Some((0, 1.0 + 4.0)), None);
    let far = incident("far", Label::Healthy, None, Some((0, 1.0 + 36.0)), None);
    let same = incident("same", Label::HardwareFault, Some(0), None, None);
    let got = contextual_data_selection(&base, &[far, same, near], 1).unwrap();
    assert_eq!(got[0].id, "near");
}

#[test]
fn bundle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = vec![
        incident("a", Label::HardwareFault, Some(1), Some((1, 3.5)), Some((1, "x 0x1f"))),
        incident("b", Label::Healthy, None, None, None),
    ];
    save_corpus(dir.path(), &corpus).unwrap();
    assert_eq!(load_corpus(dir.path()).unwrap(), corpus);
}

fn separable_corpus(n: usize) -> Vec<LabeledIncident> {
    let mut c = Vec::new();
    for i in 0..n {
        let v = 3.0 + (i % 5) as f64;
        c.push(incident(
            &format!("p{i:02}"),
            Label::HardwareFault,
            Some((i % 4) as u32),
            Some(((i % 4) as u32, v)),
            None,
        ));
        let hv = 1.0 + (i % 3) as f64 * 0.3;
        c.push(incident(&format!("n{i:02}"), Label::Healthy, None, Some((((i + 1) % 4) as u32, hv)), None));
    }
    c
}

/// Best threshold on `mean(m)` by sweeping every midpoint of observed values.
fn brute_force_best(corpus: &[LabeledIncident]) -> (f64, f64) {
    let mut values: Vec<f64> = Vec::new();
    for inc in corpus {
        for &n in &inc.nodes {
            values.extend(inc.snapshot.numeric_values("m", n, 0, inc.at + 1).unwrap());
        }
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut best = (0.0, 0.0);
    for w in values.windows(2) {
        let thr = (w[0] + w[1]) / 2.0;
        let r = rule("bf", &format!("mean(m, 3m) > {thr}"), "argmax mean(m, 3m)");
        let st = evaluate_rule_set(&[r], corpus).unwrap().per_rule[&RuleId::new("bf")];
        if (st.precision, st.recall) > best {
            best = (st.precision, st.recall);
        }
    }
    best
}

#[test]
fn generation_matches_brute_force_on_separable_corpus() {
    let corpus = separable_corpus(10);
    assert_eq!(brute_force_best(&corpus), (1.0, 1.0));
    let kb = KnowledgeBase::new();
    let cfg = GenerateConfig::new("learned");
    let out = generate_rule(&kb, &corpus[0], &corpus[1..4], &corpus, &schema(), &cfg).unwrap();
    let cand = out.accepted().expect("separable corpus yields a rule");
    assert_eq!((cand.stats.precision, cand.stats.recall), (1.0, 1.0));
    assert_eq!(cand.rule.provenance, Provenance::Generated);
    assert_eq!(kb.get(&RuleId::new("learned")).unwrap().version, 1);
    let full = evaluate_rule_set(&[cand.rule.clone()], &corpus).unwrap();
    assert_eq!(full.per_rule[&RuleId::new("learned")].recall, 1.0);
}

#[test]
fn generation_is_deterministic() {
    let corpus = separable_corpus(8);
    let run = || {
        let kb = KnowledgeBase::new();
        let out = generate_rule(&kb, &corpus[0], &[], &corpus, &schema(), &GenerateConfig::new("g")).unwrap();
        out.accepted().unwrap().rule.to_yaml()
    };
    assert_eq!(run(), run());
}

#[test]
fn degenerate_corpus_rejected() {
    let corpus: Vec<_> = (0..4).map(|i| incident(&format!("n{i}"), Label::Healthy, None, None, None)).collect();
    let kb = KnowledgeBase::new();
    let err = generate_rule(&kb, &corpus[0], &[], &corpus, &schema(), &GenerateConfig::new("g")).unwrap_err();
    assert_eq!(err, KbError::ValidationCorpusDegenerate);
}

#[test]
fn regeneration_never_regresses() {
    let corpus = separable_corpus(10);
    let kb = KnowledgeBase::new();
    let cfg = GenerateConfig::new("g");
    generate_rule(&kb, &corpus[0], &[], &corpus, &schema(), &cfg).unwrap();
    let (_, hold) = stratified_split(&corpus, cfg.seed);
    let before = evaluate_rules(&kb, &hold).unwrap().per_rule[&RuleId::new("g")];
    // a second round on the same corpus may only keep or improve the rule
    generate_rule(&kb, &corpus[1], &[], &corpus, &schema(), &cfg).unwrap();
    let after = evaluate_rules(&kb, &hold).unwrap().per_rule[&RuleId::new("g")];
    assert!(after.dominates(&before));
}

struct Scripted(Vec<Rule>);

impl RuleProposer for Scripted {
    fn propose(&mut self, _: usize, _: &ProposalContext<'_>) -> Option<Rule> {
        if self.0.is_empty() {
            None
        } else {
            Some(self.0.remove(0))
        }
    }
}

#[test]
fn repair_fixes_or_discards_drafts() {
    let corpus = separable_corpus(6);
    let mut unknown = rule("g", "mean(m, 3m) > 2", "argmax mean(m, 3m)");
    unknown.predicate.terms.push(parse_predicate("max(bogus, 60s) > 1").unwrap().terms.remove(0));
    let mut log_agg = rule("g", "mean(m, 3m) > 2", "all");
    log_agg.predicate = parse_predicate("max(driver-log, 60s) > 1").unwrap();
    let mut p = Scripted(vec![log_agg, unknown]);
    let kb = KnowledgeBase::new();
    let out = generate_rule_with(&mut p, &kb, &corpus[0], &[], &corpus, &schema(), &GenerateConfig::new("g")).unwrap();
    let trace = out.trace();
    assert!(trace[0].summary.starts_with("discarded"));
    assert!(trace[1].summary.contains("repaired"));
    assert_eq!(out.accepted().unwrap().rule.predicate.terms.len(), 1);
}

#[test]
fn low_precision_drafts_are_rejected() {
    let corpus = separable_corpus(6);
    let mut p = Scripted(vec![rule("g", "mean(m, 3m) > 0", "all")]);
    let kb = KnowledgeBase::new();
    let out = generate_rule_with(&mut p, &kb, &corpus[0], &[], &corpus, &schema(), &GenerateConfig::new("g")).unwrap();
    assert!(matches!(out, Generated::Rejected(ref t) if t.len() == 1 && !t[0].accepted));
    assert!(kb.is_empty());
}

fn random_corpus(hot: &[(bool, u32, f64)]) -> Vec<LabeledIncident> {
    hot.iter()
        .enumerate()
        .map(|(i, &(pos, node, v))| {
            let node = node % 4;
            if pos {
                incident(&format!("p{i:02}"), Label::HardwareFault, Some(node), Some((node, v)), None)
            } else {
                incident(&format!("n{i:02}"), Label::Healthy, None, Some((node, v)), None)
            }
        })
        .collect()
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(120))]

    #[test]
    fn holdout_scores_never_drop_across_generations(
        hot in proptest::collection::vec((proptest::bool::ANY, 0u32..4, 0.0f64..8.0), 6..16),
        rounds in proptest::collection::vec(proptest::collection::vec((0.0f64..8.0, proptest::bool::ANY), 1..4), 1..6),
        floor in 0.0f64..1.0,
    ) {
        let mut corpus = random_corpus(&hot);
        corpus.push(incident("pos", Label::HardwareFault, Some(1), Some((1, 5.0)), None));
        corpus.push(incident("neg", Label::Healthy, None, None, None));
        let kb = KnowledgeBase::new();
        let mut cfg = GenerateConfig::new("g");
        cfg.precision_floor = floor;
        let (_, hold) = stratified_split(&corpus, cfg.seed);
        let mut prev = RuleStats::default();
        for drafts in rounds {
            let rules = drafts
                .iter()
                .map(|&(thr, all)| rule("g", &format!("mean(m, 3m) > {thr}"), if all { "all" } else { "argmax mean(m, 3m)" }))
                .collect();
            let out = generate_rule_with(&mut Scripted(rules), &kb, &corpus[0], &[], &corpus, &schema(), &cfg).unwrap();
            if let Some(c) = out.accepted() {
                proptest::prop_assert!(c.stats.precision >= floor);
            }
            if kb.get(&RuleId::new("g")).is_some() {
                let now = evaluate_rules(&kb, &hold).unwrap().per_rule[&RuleId::new("g")];
                proptest::prop_assert!(now.dominates(&prev), "{now:?} after {prev:?}");
                prev = now;
            }
        }
    }
}
