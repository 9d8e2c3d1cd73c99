use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dsl::{normalize_line, Cmp, Expr, Implicates, Pattern, Predicate, Term, MAX_TERMS};
use super::eval::{evaluate_rule, expr_value, RuleMatch};
use super::incident::LabeledIncident;
use super::rule::{Provenance, Rule, RuleAction, Severity};
use super::store::KnowledgeBase;
use super::KbError;
use crate::stats::{mean, quantile, sample_variance, EPSILON};
use crate::telemetry::{AggOp, Source, TelemetryView};
use crate::{Millis, NodeId, RuleId, MS_PER_SEC};

/// Look-back used to summarize a node for feature ranking.
pub const FEATURE_WINDOW: Millis = 180 * MS_PER_SEC;

const QUANTILES: [f64; 9] = [0.0, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 1.0];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Feature {
    Metric(String),
    LogPattern { channel: String, pattern: String },
}

impl Feature {
    pub fn name(&self) -> String {
        match self {
            Feature::Metric(m) => m.clone(),
            Feature::LogPattern { channel, pattern } => format!("{channel}:{pattern}"),
        }
    }

    pub fn is_log(&self) -> bool {
        matches!(self, Feature::LogPattern { .. })
    }

    fn expr(&self, op: AggOp, window: Millis) -> Expr {
        match self {
            Feature::Metric(m) => Expr::Agg { op, metric: m.clone(), window },
            Feature::LogPattern { pattern, .. } => {
                Expr::Count { pattern: Pattern::new(pattern).expect("normalized lines are valid patterns"), window }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureScore {
    pub feature: Feature,
    /// Absolute standardized mean difference between the two sets.
    pub score: f64,
    pub mean_anomalous: f64,
    pub mean_normal: f64,
}

/// Nodes of an incident that count as anomalous and as normal examples.
fn split_nodes(inc: &LabeledIncident) -> (Vec<NodeId>, Vec<NodeId>) {
    match (inc.is_positive(), inc.ground_truth) {
        (true, Some(gt)) => (vec![gt], inc.nodes.iter().copied().filter(|&n| n != gt).collect()),
        _ => (vec![], inc.nodes.clone()),
    }
}

fn feature_value(inc: &LabeledIncident, expr: &Expr, node: NodeId) -> Option<f64> {
    expr_value(&inc.snapshot, expr, node, &inc.scope()).ok().flatten()
}

fn pooled_d(a: &[f64], n: &[f64]) -> f64 {
    let (Some(ma), Some(mn)) = (mean(a), mean(n)) else { return 0.0 };
    let dof = (a.len() + n.len()).saturating_sub(2).max(1) as f64;
    let pooled =
        (((a.len().max(1) - 1) as f64 * sample_variance(a) + (n.len().max(1) - 1) as f64 * sample_variance(n)) / dof)
            .sqrt()
            .max(EPSILON);
    (ma - mn).abs() / pooled
}

/// Ranks features by how well they separate the anomalous node of each
/// anomalous incident from the nodes of the normal incidents.
///
/// Numeric metrics are summarized by their mean over the last
/// [`FEATURE_WINDOW`]; log features are normalized line patterns seen on the
/// anomalous nodes, summarized by their match count. Job KPIs carry one
/// value for every node of a job, so they cannot implicate a node and are
/// not candidates. Ties keep name order.
pub fn contrastive_feature_selection(
    anomalous: &[LabeledIncident],
    normal: &[LabeledIncident],
    top_k: usize,
) -> Result<Vec<FeatureScore>, KbError> {
    if anomalous.is_empty() || normal.is_empty() {
        return Err(KbError::EmptySet);
    }
    let mut features: BTreeSet<Feature> = BTreeSet::new();
    for inc in anomalous.iter().chain(normal) {
        for (metric, source) in inc.snapshot.schema() {
            if !source.is_log() && source != Source::JobKpi {
                features.insert(Feature::Metric(metric));
            }
        }
    }
    for inc in anomalous {
        let nodes = if inc.ground_truth.is_some() { split_nodes(inc).0 } else { inc.nodes.clone() };
        let scope = inc.scope();
        let (lo, hi) = scope.range(FEATURE_WINDOW);
        for (channel, source) in inc.snapshot.schema() {
            if !source.is_log() {
                continue;
            }
            for &node in &nodes {
                for (_, line) in inc.snapshot.lines(&channel, node, lo, hi).unwrap_or_default() {
                    features.insert(Feature::LogPattern { channel: channel.clone(), pattern: normalize_line(&line) });
                }
            }
        }
    }
    let mut scored = Vec::new();
    for f in features {
        let expr = f.expr(AggOp::Mean, FEATURE_WINDOW);
        let values = |incs: &[LabeledIncident], pick_anomalous: bool| -> Vec<f64> {
            let mut out = Vec::new();
            for inc in incs {
                let (a, n) = split_nodes(inc);
                let nodes = match (pick_anomalous, inc.ground_truth.is_some()) {
                    (true, true) => a,
                    (true, false) => inc.nodes.clone(),
                    (false, _) => {
                        let mut all = n;
                        all.extend(a);
                        all
                    }
                };
                out.extend(nodes.into_iter().filter_map(|node| feature_value(inc, &expr, node)));
            }
            out
        };
        let a = values(anomalous, true);
        let n = values(normal, false);
        scored.push(FeatureScore {
            score: pooled_d(&a, &n),
            mean_anomalous: mean(&a).unwrap_or(0.0),
            mean_normal: mean(&n).unwrap_or(0.0),
            feature: f,
        });
    }
    scored.sort_by(|x, y| y.score.total_cmp(&x.score).then_with(|| x.feature.name().cmp(&y.feature.name())));
    scored.truncate(top_k);
    Ok(scored)
}

/// Picks the `top_k` incidents closest to `incident` by KPI profile whose
/// label differs from it. Each profile dimension is scaled by its standard
/// deviation over the incident and history together.
pub fn contextual_data_selection(
    incident: &LabeledIncident,
    history: &[LabeledIncident],
    top_k: usize,
) -> Result<Vec<LabeledIncident>, KbError> {
    if history.is_empty() {
        return Err(KbError::EmptyCorpus);
    }
    let target = incident.kpi_profile();
    let profiles: Vec<Vec<f64>> = history.iter().map(|h| h.kpi_profile()).collect();
    let dims = profiles.iter().map(Vec::len).chain([target.len()]).max().unwrap_or(0);
    let scale: Vec<f64> = (0..dims)
        .map(|d| {
            let col: Vec<f64> = profiles.iter().chain([&target]).map(|p| p.get(d).copied().unwrap_or(0.0)).collect();
            let s = sample_variance(&col).sqrt();
            if s > EPSILON {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut ranked: Vec<(f64, usize)> = history
        .iter()
        .enumerate()
        .filter(|(_, h)| h.label != incident.label)
        .map(|(i, _)| {
            let d2: f64 = (0..dims)
                .map(|d| {
                    let a = target.get(d).copied().unwrap_or(0.0);
                    let b = profiles[i].get(d).copied().unwrap_or(0.0);
                    ((a - b) / scale[d]).powi(2)
                })
                .sum();
            (d2.sqrt(), i)
        })
        .collect();
    if ranked.is_empty() {
        return Err(KbError::NoContrastAvailable);
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| history[a.1].id.cmp(&history[b.1].id)));
    Ok(ranked.into_iter().take(top_k).map(|(_, i)| history[i].clone()).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RuleStats {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
}

impl RuleStats {
    fn finish(mut self) -> Self {
        self.precision = if self.tp + self.fp == 0 { 1.0 } else { self.tp as f64 / (self.tp + self.fp) as f64 };
        self.recall = if self.tp + self.fn_ == 0 { 1.0 } else { self.tp as f64 / (self.tp + self.fn_) as f64 };
        self
    }

    fn count(&mut self, inc: &LabeledIncident, implicated: &BTreeSet<NodeId>) {
        match (inc.is_positive(), inc.ground_truth) {
            (true, Some(gt)) if implicated.contains(&gt) => self.tp += 1,
            (true, _) => {
                self.fn_ += 1;
                if !implicated.is_empty() {
                    self.fp += 1;
                }
            }
            (false, _) if implicated.is_empty() => self.tn += 1,
            (false, _) => self.fp += 1,
        }
    }

    /// True when neither precision nor recall is below `other`'s.
    pub fn dominates(&self, other: &RuleStats) -> bool {
        self.precision >= other.precision && self.recall >= other.recall
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_rule: BTreeMap<RuleId, RuleStats>,
    /// Counts for the rule set as a whole: an incident is caught when any
    /// rule implicates its ground-truth node.
    pub corpus: RuleStats,
    pub runtime_errors: Vec<(RuleId, String)>,
}

/// Scores rules on a labeled corpus.
///
/// A rule fires correctly iff it fires on a hardware-fault incident and
/// implicates the ground-truth node. Firing on a hardware-fault incident
/// without implicating that node counts as a false positive and a miss.
/// Firing on any other incident is a false positive. A rule that never fires
/// reports precision 1.0; with no positives recall is 1.0.
pub fn evaluate_rule_set(rules: &[Rule], corpus: &[LabeledIncident]) -> Result<EvalReport, KbError> {
    if corpus.is_empty() {
        return Err(KbError::EmptyCorpus);
    }
    let mut report = EvalReport::default();
    let mut union: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); corpus.len()];
    for rule in rules {
        let mut st = RuleStats::default();
        for (i, inc) in corpus.iter().enumerate() {
            let implicated: BTreeSet<NodeId> = match evaluate_rule(&inc.snapshot, rule, &inc.scope()) {
                Ok(m) => m.iter().map(|m: &RuleMatch| m.node_id).collect(),
                Err(e) => {
                    if !report.runtime_errors.iter().any(|(id, _)| id == &rule.rule_id) {
                        report.runtime_errors.push((rule.rule_id.clone(), e.message));
                    }
                    BTreeSet::new()
                }
            };
            st.count(inc, &implicated);
            union[i].extend(implicated);
        }
        report.per_rule.insert(rule.rule_id.clone(), st.finish());
    }
    let mut corpus_stats = RuleStats::default();
    for (inc, implicated) in corpus.iter().zip(&union) {
        corpus_stats.count(inc, implicated);
    }
    report.corpus = corpus_stats.finish();
    Ok(report)
}

/// [`evaluate_rule_set`] over the active rules of a KB.
pub fn evaluate_rules(kb: &KnowledgeBase, corpus: &[LabeledIncident]) -> Result<EvalReport, KbError> {
    evaluate_rule_set(&kb.active_rules(), corpus)
}

/// Seeded split into (train, holdout), stratified by positive/negative.
/// Each half gets half of each class; a class with a single member appears
/// in both halves.
pub fn stratified_split(corpus: &[LabeledIncident], seed: u64) -> (Vec<LabeledIncident>, Vec<LabeledIncident>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for positive in [true, false] {
        let mut idx: Vec<usize> = (0..corpus.len()).filter(|&i| corpus[i].is_positive() == positive).collect();
        idx.shuffle(&mut rng);
        if idx.len() == 1 {
            train.push(corpus[idx[0]].clone());
            hold.push(corpus[idx[0]].clone());
            continue;
        }
        let half = idx.len() / 2;
        for (k, &i) in idx.iter().enumerate() {
            if k < half {
                train.push(corpus[i].clone());
            } else {
                hold.push(corpus[i].clone());
            }
        }
    }
    (train, hold)
}

#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub rule_id: String,
    pub fault_class: Option<String>,
    pub action: RuleAction,
    pub seed: u64,
    /// Maximum propose/repair/review iterations.
    pub budget: usize,
    pub precision_floor: f64,
    pub top_features: usize,
    pub windows: Vec<Millis>,
    pub ops: Vec<AggOp>,
}

impl GenerateConfig {
    pub fn new(rule_id: &str) -> Self {
        Self {
            rule_id: rule_id.to_string(),
            fault_class: None,
            action: RuleAction::Ticket,
            seed: 0,
            budget: 6,
            precision_floor: 0.95,
            top_features: 6,
            windows: vec![60 * MS_PER_SEC, FEATURE_WINDOW],
            ops: vec![AggOp::Mean, AggOp::Max, AggOp::Min],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub precision: f64,
    pub recall: f64,
    pub accepted: bool,
    pub summary: String,
}

/// An accepted rule together with how it was found.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleCandidate {
    pub rule: Rule,
    pub stats: RuleStats,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generated {
    Accepted(RuleCandidate),
    Rejected(Vec<TraceEntry>),
}

impl Generated {
    pub fn accepted(&self) -> Option<&RuleCandidate> {
        match self {
            Generated::Accepted(c) => Some(c),
            Generated::Rejected(_) => None,
        }
    }

    pub fn trace(&self) -> &[TraceEntry] {
        match self {
            Generated::Accepted(c) => &c.trace,
            Generated::Rejected(t) => t,
        }
    }
}

/// Data the proposer may learn from.
pub struct ProposalContext<'a> {
    pub learning: &'a [LabeledIncident],
    pub features: &'a [FeatureScore],
    pub config: &'a GenerateConfig,
}

/// Source of rule drafts for the generation loop. Drafts need not be valid;
/// the repair step fixes or discards them.
pub trait RuleProposer {
    fn propose(&mut self, iteration: usize, ctx: &ProposalContext<'_>) -> Option<Rule>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Repair {
    Ok(Rule),
    Fixed(Rule, Vec<String>),
    Discarded(String),
}

/// Checks a draft against the schema, dropping offending terms where that
/// leaves a usable rule, then executes it on `sample` to catch runtime errors.
pub fn repair(rule: Rule, schema: &[(String, Source)], sample: &LabeledIncident) -> Repair {
    let mut notes = Vec::new();
    let mut rule = rule;
    if rule.check_schema(schema).is_err() {
        let before = rule.predicate.terms.len();
        let shell = Rule { predicate: Predicate { terms: vec![] }, implicates: Implicates::All, ..rule.clone() };
        rule.predicate.terms.retain(|t| {
            let probe = Rule { predicate: Predicate { terms: vec![t.clone()] }, ..shell.clone() };
            probe.check_schema(schema).is_ok()
        });
        if rule.predicate.terms.len() < before {
            notes.push(format!("dropped {} invalid term(s)", before - rule.predicate.terms.len()));
        }
        if rule.check_schema(schema).is_err() && !rule.predicate.terms.is_empty() {
            rule.implicates = Implicates::All;
            notes.push("reset implicates to all".into());
        }
        if let Err(e) = rule.check_schema(schema) {
            return Repair::Discarded(e.to_string());
        }
    }
    if rule.predicate.terms.len() > MAX_TERMS {
        rule.predicate.terms.truncate(MAX_TERMS);
        notes.push(format!("truncated to {MAX_TERMS} terms"));
    }
    if let Err(e) = evaluate_rule(&sample.snapshot, &rule, &sample.scope()) {
        return Repair::Discarded(e.message);
    }
    if notes.is_empty() {
        Repair::Ok(rule)
    } else {
        Repair::Fixed(rule, notes)
    }
}

#[derive(Clone)]
struct TermDraft {
    expr: usize,
    cmp: Cmp,
    threshold: f64,
    margin: f64,
    /// Worst-case delay, in ms, between a step change crossing the
    /// threshold and the aggregate crossing it.
    lag: f64,
    /// Index into the selected features.
    feature: usize,
}

fn term_lag(expr: &Expr, cmp: Cmp) -> f64 {
    let Expr::Agg { op, window, .. } = expr else { return 0.0 };
    let frac = match (op, cmp) {
        (AggOp::Min, Cmp::Lt | Cmp::Le) | (AggOp::Max, Cmp::Gt | Cmp::Ge) => 0.0,
        (AggOp::Max, Cmp::Lt | Cmp::Le) | (AggOp::Min, Cmp::Gt | Cmp::Ge) => 1.0,
        _ => 0.5,
    };
    frac * *window as f64
}

#[derive(Clone, Copy, PartialEq)]
enum ImpDraft {
    All,
    Max(usize),
    Min(usize),
}

struct Draft {
    terms: Vec<usize>,
    imp: ImpDraft,
    key: DraftKey,
    text: String,
}

/// Exhaustive template search over the top contrastive features. Candidates
/// are ranked once on the learning set; iteration `i` proposes the best
/// untried candidate with at most `i` terms.
#[derive(Default)]
pub struct TemplateProposer {
    ranked: Option<Vec<Rule>>,
    terms_of: Vec<usize>,
    tried: BTreeSet<usize>,
}

struct Learning<'a> {
    incs: &'a [LabeledIncident],
    exprs: Vec<Expr>,
    /// `values[expr][incident][node]`, node order as in the incident.
    values: Vec<Vec<Vec<Option<f64>>>>,
}

impl Learning<'_> {
    fn add_expr(&mut self, e: Expr) -> usize {
        if let Some(i) = self.exprs.iter().position(|x| x == &e) {
            return i;
        }
        let vals = self.incs.iter().map(|inc| inc.nodes.iter().map(|&n| feature_value(inc, &e, n)).collect()).collect();
        self.exprs.push(e);
        self.values.push(vals);
        self.exprs.len() - 1
    }

    fn class_values(&self, expr: usize) -> (Vec<f64>, Vec<f64>) {
        let mut a = Vec::new();
        let mut n = Vec::new();
        for (i, inc) in self.incs.iter().enumerate() {
            for (k, node) in inc.nodes.iter().enumerate() {
                let Some(v) = self.values[expr][i][k] else { continue };
                if inc.is_positive() && inc.ground_truth == Some(*node) {
                    a.push(v);
                } else {
                    n.push(v);
                }
            }
        }
        (a, n)
    }

    fn stats(&self, terms: &[&TermDraft], imp: ImpDraft) -> RuleStats {
        let mut st = RuleStats::default();
        for (i, inc) in self.incs.iter().enumerate() {
            let sat: Vec<usize> = (0..inc.nodes.len())
                .filter(|&k| {
                    terms.iter().all(|t| self.values[t.expr][i][k].is_some_and(|v| t.cmp.holds(v, t.threshold)))
                })
                .collect();
            let chosen: BTreeSet<NodeId> = match imp {
                ImpDraft::All => sat.iter().map(|&k| inc.nodes[k]).collect(),
                ImpDraft::Max(e) | ImpDraft::Min(e) => {
                    let mut best: Option<(usize, f64)> = None;
                    for &k in &sat {
                        let Some(v) = self.values[e][i][k] else { continue };
                        let better = match best {
                            None => true,
                            Some((_, b)) => {
                                matches!(imp, ImpDraft::Max(_)) && v > b || matches!(imp, ImpDraft::Min(_)) && v < b
                            }
                        };
                        if better {
                            best = Some((k, v));
                        }
                    }
                    match (best, sat.first()) {
                        (Some((k, _)), _) => BTreeSet::from([inc.nodes[k]]),
                        (None, Some(&k)) => BTreeSet::from([inc.nodes[k]]),
                        (None, None) => BTreeSet::new(),
                    }
                }
            };
            st.count(inc, &chosen);
        }
        st.finish()
    }
}

fn threshold_grid(a: &[f64], n: &[f64]) -> Vec<f64> {
    let qa: Vec<f64> = QUANTILES.iter().filter_map(|&q| quantile(a, q)).collect();
    let qn: Vec<f64> = QUANTILES.iter().filter_map(|&q| quantile(n, q)).collect();
    let mut grid: Vec<f64> = qa.iter().chain(&qn).copied().collect();
    for x in &qa {
        for y in &qn {
            grid.push((x + y) / 2.0);
        }
    }
    grid.retain(|v| v.is_finite());
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn margin(values: &[f64], thr: f64) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if values.is_empty() {
        return 0.0;
    }
    let near = values.iter().map(|v| (v - thr).abs()).fold(f64::INFINITY, f64::min);
    near / (hi - lo + EPSILON)
}

/// (meets floor, recall, precision, terms, implicates all, lag, margin)
type DraftKey = (bool, f64, f64, usize, bool, f64, f64);

fn cmp_key(a: &DraftKey, b: &DraftKey) -> Ordering {
    b.0.cmp(&a.0)
        .then(b.1.total_cmp(&a.1))
        .then(b.2.total_cmp(&a.2))
        .then(a.3.cmp(&b.3))
        .then(a.4.cmp(&b.4))
        .then(a.5.total_cmp(&b.5))
        .then(b.6.total_cmp(&a.6))
}

impl TemplateProposer {
    pub fn new() -> Self {
        Self::default()
    }

    fn build(&mut self, ctx: &ProposalContext<'_>) {
        let cfg = ctx.config;
        let mut l = Learning { incs: ctx.learning, exprs: Vec::new(), values: Vec::new() };
        let mut singles: Vec<TermDraft> = Vec::new();
        for (fi, f) in ctx.features.iter().enumerate() {
            for &w in &cfg.windows {
                let ops: &[AggOp] = if f.feature.is_log() { &[AggOp::Count] } else { &cfg.ops };
                for &op in ops {
                    let e = l.add_expr(f.feature.expr(op, w));
                    let (a, n) = l.class_values(e);
                    if a.is_empty() {
                        continue;
                    }
                    let all: Vec<f64> = a.iter().chain(&n).copied().collect();
                    let cmps: &[Cmp] = if f.feature.is_log() { &[Cmp::Ge] } else { &[Cmp::Gt, Cmp::Lt] };
                    for &cmp in cmps {
                        for thr in threshold_grid(&a, &n) {
                            if f.feature.is_log() && thr < 1.0 {
                                continue;
                            }
                            let lag = term_lag(&l.exprs[e], cmp);
                            singles.push(TermDraft {
                                expr: e,
                                cmp,
                                threshold: thr,
                                margin: margin(&all, thr),
                                lag,
                                feature: fi,
                            });
                        }
                    }
                }
            }
        }
        let natural = |t: &TermDraft| match t.cmp {
            Cmp::Gt | Cmp::Ge => ImpDraft::Max(t.expr),
            _ => ImpDraft::Min(t.expr),
        };
        // Beam of terms used for conjunctions: the term of every feature
        // that most often holds on the faulty node (ties between nodes would
        // hide it from an argmax), then the best few thresholds per
        // expression and direction, by recall first.
        let mut scored: Vec<(RuleStats, usize)> =
            singles.iter().enumerate().map(|(i, t)| (l.stats(&[t], natural(t)), i)).collect();
        scored.sort_by(|x, y| {
            y.0.recall
                .total_cmp(&x.0.recall)
                .then(y.0.precision.total_cmp(&x.0.precision))
                .then(singles[y.1].margin.total_cmp(&singles[x.1].margin))
                .then(x.1.cmp(&y.1))
        });
        let mut per_slot: BTreeMap<(usize, Cmp), usize> = BTreeMap::new();
        let mut beam = Vec::new();
        let mut cover: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
        for (i, t) in singles.iter().enumerate() {
            let st = l.stats(&[t], ImpDraft::All);
            let best = cover.entry(t.feature).or_insert((0.0, 0.0, usize::MAX));
            if st.recall > 0.0 && (st.recall, st.precision) > (best.0, best.1) {
                *best = (st.recall, st.precision, i);
            }
        }
        for &(_, _, i) in cover.values().filter(|c| c.2 != usize::MAX) {
            *per_slot.entry((singles[i].expr, singles[i].cmp)).or_default() += 1;
            beam.push(i);
        }
        for (st, i) in &scored {
            if beam.contains(i) {
                continue;
            }
            if st.recall <= 0.0 {
                continue;
            }
            let slot = per_slot.entry((singles[*i].expr, singles[*i].cmp)).or_default();
            if *slot < 2 && beam.len() < 24 {
                *slot += 1;
                beam.push(*i);
            }
        }
        let mut combos: Vec<Vec<usize>> = (0..singles.len()).map(|i| vec![i]).collect();
        let distinct = |c: &[usize]| {
            let s: BTreeSet<usize> = c.iter().map(|&i| singles[i].expr).collect();
            s.len() == c.len()
        };
        // Pairs over the whole beam, triples and quadruples over its head.
        for size in 2..=MAX_TERMS {
            let head = match size {
                2 => beam.len(),
                3 => beam.len().min(10),
                _ => beam.len().min(6),
            };
            let mut idx: Vec<usize> = (0..size).collect();
            while size <= head {
                let c: Vec<usize> = idx.iter().map(|&k| beam[k]).collect();
                if distinct(&c) {
                    combos.push(c);
                }
                // next lexicographic combination of `size` out of `head`
                let Some(pos) = (0..size).rev().find(|&p| idx[p] < head - size + p) else { break };
                idx[pos] += 1;
                for q in pos + 1..size {
                    idx[q] = idx[q - 1] + 1;
                }
            }
        }
        let mut drafts: Vec<Draft> = Vec::new();
        for c in combos {
            let ts: Vec<&TermDraft> = c.iter().map(|&i| &singles[i]).collect();
            let mut imps: Vec<ImpDraft> = ts.iter().map(|t| natural(t)).collect();
            imps.push(ImpDraft::All);
            let m = ts.iter().map(|t| t.margin).fold(f64::INFINITY, f64::min);
            let lag = ts.iter().map(|t| t.lag).fold(0.0, f64::max);
            for imp in imps {
                let st = l.stats(&ts, imp);
                let key = (
                    st.precision >= cfg.precision_floor,
                    st.recall,
                    st.precision,
                    c.len(),
                    imp == ImpDraft::All,
                    lag,
                    m,
                );
                drafts.push(Draft { terms: c.clone(), imp, key, text: String::new() });
            }
        }
        let to_rule = |d: &Draft| -> Rule {
            let terms = d
                .terms
                .iter()
                .map(|&i| Term {
                    expr: l.exprs[singles[i].expr].clone(),
                    cmp: singles[i].cmp,
                    threshold: singles[i].threshold,
                })
                .collect();
            let implicates = match d.imp {
                ImpDraft::All => Implicates::All,
                ImpDraft::Max(e) => Implicates::ArgMax(l.exprs[e].clone()),
                ImpDraft::Min(e) => Implicates::ArgMin(l.exprs[e].clone()),
            };
            Rule {
                rule_id: RuleId::new(&cfg.rule_id),
                name: cfg.rule_id.clone(),
                predicate: Predicate { terms },
                implicates,
                severity: Severity::High,
                action: cfg.action,
                provenance: Provenance::Generated,
                version: 0,
                fault_class: cfg.fault_class.clone(),
            }
        };
        for d in &mut drafts {
            d.text = to_rule(d).to_string();
        }
        drafts.sort_by(|a, b| cmp_key(&a.key, &b.key).then_with(|| a.text.cmp(&b.text)));
        self.terms_of = drafts.iter().map(|d| d.terms.len()).collect();
        self.ranked = Some(drafts.iter().map(to_rule).collect());
    }
}

impl RuleProposer for TemplateProposer {
    fn propose(&mut self, iteration: usize, ctx: &ProposalContext<'_>) -> Option<Rule> {
        if self.ranked.is_none() {
            self.build(ctx);
        }
        let max_terms = iteration.clamp(1, MAX_TERMS);
        let ranked = self.ranked.as_ref()?;
        let pick = (0..ranked.len()).find(|i| self.terms_of[*i] <= max_terms && !self.tried.contains(i))?;
        self.tried.insert(pick);
        Some(ranked[pick].clone())
    }
}

/// Learns a rule for `incident` with the built-in template search and
/// commits it to `kb` when it passes review.
pub fn generate_rule(
    kb: &KnowledgeBase,
    incident: &LabeledIncident,
    contrast: &[LabeledIncident],
    corpus: &[LabeledIncident],
    schema: &[(String, Source)],
    cfg: &GenerateConfig,
) -> Result<Generated, KbError> {
    generate_rule_with(&mut TemplateProposer::new(), kb, incident, contrast, corpus, schema, cfg)
}

/// The propose → repair → review loop.
///
/// The corpus is split 50/50 (stratified, seeded). The proposer sees the
/// incident, the contrast set and the training half; review scores each
/// draft on the holdout half. A draft is accepted when its precision meets
/// the floor and neither precision nor recall falls below the best accepted
/// so far, which starts from the KB's current version of the rule.
pub fn generate_rule_with(
    proposer: &mut dyn RuleProposer,
    kb: &KnowledgeBase,
    incident: &LabeledIncident,
    contrast: &[LabeledIncident],
    corpus: &[LabeledIncident],
    schema: &[(String, Source)],
    cfg: &GenerateConfig,
) -> Result<Generated, KbError> {
    let positives = corpus.iter().filter(|i| i.is_positive()).count();
    if positives == 0 || positives == corpus.len() {
        return Err(KbError::ValidationCorpusDegenerate);
    }
    let (train, hold) = stratified_split(corpus, cfg.seed);
    let hold_ids: BTreeSet<&str> = hold.iter().map(|i| i.id.as_str()).collect();
    let mut learning = vec![incident.clone()];
    let mut seen: BTreeSet<String> = BTreeSet::from([incident.id.clone()]);
    for inc in contrast.iter().filter(|c| !hold_ids.contains(c.id.as_str())).chain(&train) {
        if seen.insert(inc.id.clone()) {
            learning.push(inc.clone());
        }
    }
    let (anomalous, normal): (Vec<LabeledIncident>, Vec<LabeledIncident>) =
        learning.iter().cloned().partition(|i| i.is_positive());
    let features = contrastive_feature_selection(&anomalous, &normal, cfg.top_features)?;
    let ctx = ProposalContext { learning: &learning, features: &features, config: cfg };

    let id = RuleId::new(&cfg.rule_id);
    let mut best: Option<(Rule, RuleStats)> = None;
    let mut floor = RuleStats { precision: 0.0, recall: 0.0, ..Default::default() };
    if let Some(prev) = kb.get(&id) {
        floor = evaluate_rule_set(std::slice::from_ref(&prev), &hold)?.per_rule[&id];
    }
    let mut trace = Vec::new();
    for iteration in 1..=cfg.budget {
        let Some(draft) = proposer.propose(iteration, &ctx) else { break };
        let (rule, note) = match repair(draft, schema, incident) {
            Repair::Ok(r) => (r, String::new()),
            Repair::Fixed(r, notes) => (r, format!(" (repaired: {})", notes.join("; "))),
            Repair::Discarded(why) => {
                trace.push(TraceEntry {
                    iteration,
                    precision: 0.0,
                    recall: 0.0,
                    accepted: false,
                    summary: format!("discarded: {why}"),
                });
                continue;
            }
        };
        let st = evaluate_rule_set(std::slice::from_ref(&rule), &hold)?.per_rule[&rule.rule_id];
        let ok = st.precision >= cfg.precision_floor && st.dominates(&floor);
        trace.push(TraceEntry {
            iteration,
            precision: st.precision,
            recall: st.recall,
            accepted: ok,
            summary: format!("{} => {}{note}", rule.predicate, rule.implicates),
        });
        if ok {
            floor = st;
            best = Some((rule, st));
            if st.precision >= 1.0 && st.recall >= 1.0 {
                break;
            }
        }
    }
    match best {
        Some((rule, stats)) => {
            let rule = kb.commit(rule)?;
            Ok(Generated::Accepted(RuleCandidate { rule, stats, trace }))
        }
        None => Ok(Generated::Rejected(trace)),
    }
}
