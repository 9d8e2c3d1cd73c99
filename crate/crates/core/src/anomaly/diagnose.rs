use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::score::{dominant, spatial_scores, temporal_score};
use crate::telemetry::{Source, TelemetryView};
use crate::{JobId, Millis, NodeId};

/// A set of metrics (or log channels) examined together as one hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricGroup {
    pub name: String,
    pub metrics: Vec<String>,
}

impl MetricGroup {
    pub fn new(name: &str, metrics: &[&str]) -> Self {
        Self { name: name.to_string(), metrics: metrics.iter().map(|m| m.to_string()).collect() }
    }
}

/// Ladder order used by [`LadderStrategy`].
pub const LADDER: [&str; 5] = ["job-kpi", "accelerator", "interconnect", "host-os", "logs"];

/// Groups the metrics known to `view` by source, in ladder order. Empty groups
/// are omitted.
pub fn default_groups(view: &dyn TelemetryView) -> Vec<MetricGroup> {
    let schema = view.schema();
    let pick = |f: &dyn Fn(Source) -> bool| -> Vec<String> {
        schema.iter().filter(|(_, s)| f(*s)).map(|(m, _)| m.clone()).collect()
    };
    let groups = [
        ("job-kpi", pick(&|s| s == Source::JobKpi)),
        ("accelerator", pick(&|s| s == Source::Accelerator)),
        ("interconnect", pick(&|s| s == Source::Interconnect)),
        ("host-os", pick(&|s| matches!(s, Source::Pcie | Source::OsLog))),
        ("logs", pick(&|s| s.is_log())),
    ];
    groups
        .into_iter()
        .filter(|(_, m)| !m.is_empty())
        .map(|(name, metrics)| MetricGroup { name: name.to_string(), metrics })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisConfig {
    /// A node dominates when its score is at least `k` times the runner-up's.
    pub k: f64,
    /// ... and at least this large in absolute terms.
    pub min_outlier_score: f64,
    /// Consecutive dominated sub-windows required for a confirmation.
    pub persistence: usize,
    pub max_iterations: usize,
}

impl Default for DiagnosisConfig {
    fn default() -> Self {
        Self { k: 3.0, min_outlier_score: 3.0, persistence: 2, max_iterations: 8 }
    }
}

/// What to look at: the suspect nodes, the anomalous window split into
/// sub-windows, and the history used for temporal baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisContext {
    pub nodes: Vec<NodeId>,
    pub t0: Millis,
    pub t1: Millis,
    pub sub_window: Millis,
    pub history: (Millis, Millis),
}

impl DiagnosisContext {
    pub fn windows(&self) -> Vec<(Millis, Millis)> {
        let w = self.sub_window.max(1);
        let mut out = Vec::new();
        let mut a = self.t0;
        while a < self.t1 {
            out.push((a, (a + w).min(self.t1)));
            a += w;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verdict", content = "node")]
pub enum Verdict {
    Confirmed(NodeId),
    /// Outliers exist but none dominates persistently.
    Ambiguous,
    /// Nothing anomalous in this group.
    Exonerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScores {
    pub t0: Millis,
    pub t1: Millis,
    /// Combined score (max of spatial and temporal, max over the group's metrics).
    pub scores: BTreeMap<NodeId, f64>,
    /// Metric that produced each node's score.
    pub driver: BTreeMap<NodeId, String>,
    pub dominant: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub index: usize,
    pub hypothesis: MetricGroup,
    pub windows: Vec<WindowScores>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "node")]
pub enum DiagnosisStatus {
    Running,
    Confirmed(NodeId),
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisSession {
    pub job_id: Option<JobId>,
    pub context: DiagnosisContext,
    pub config: DiagnosisConfig,
    pub iterations: Vec<Iteration>,
    pub status: DiagnosisStatus,
}

impl DiagnosisSession {
    pub fn new(job_id: Option<JobId>, context: DiagnosisContext, config: DiagnosisConfig) -> Self {
        Self { job_id, context, config, iterations: Vec::new(), status: DiagnosisStatus::Running }
    }

    pub fn confirmed(&self) -> Option<NodeId> {
        match self.status {
            DiagnosisStatus::Confirmed(n) => Some(n),
            _ => None,
        }
    }

    pub fn tried(&self, group: &str) -> bool {
        self.iterations.iter().any(|i| i.hypothesis.name == group)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }
}

/// Chooses the next metric group to examine, or `None` to stop.
pub trait DiagnosisStrategy {
    fn next_hypothesis(&mut self, session: &DiagnosisSession, available: &[MetricGroup]) -> Option<MetricGroup>;
}

/// Walks the fixed ladder, then retries the union of the groups that showed
/// outliers without a dominant node. Exonerated groups are never revisited.
#[derive(Debug, Clone, Default)]
pub struct LadderStrategy;

impl DiagnosisStrategy for LadderStrategy {
    fn next_hypothesis(&mut self, session: &DiagnosisSession, available: &[MetricGroup]) -> Option<MetricGroup> {
        let ordered = LADDER
            .iter()
            .filter_map(|name| available.iter().find(|g| g.name == *name))
            .chain(available.iter().filter(|g| !LADDER.contains(&g.name.as_str())));
        for g in ordered {
            if !session.tried(&g.name) {
                return Some(g.clone());
            }
        }
        if session.tried("combined") {
            return None;
        }
        let ambiguous: Vec<&Iteration> =
            session.iterations.iter().filter(|i| i.verdict == Verdict::Ambiguous).collect();
        if ambiguous.len() < 2 {
            return None;
        }
        let mut metrics: Vec<String> = Vec::new();
        for i in ambiguous {
            for m in &i.hypothesis.metrics {
                if !metrics.contains(m) {
                    metrics.push(m.clone());
                }
            }
        }
        Some(MetricGroup { name: "combined".into(), metrics })
    }
}

fn count_bins(lines: &[(Millis, String)], start: Millis, end: Millis, w: Millis) -> Vec<f64> {
    let n = ((end.saturating_sub(start)) / w.max(1)) as usize;
    let mut bins = vec![0.0; n];
    for (t, _) in lines {
        if *t >= start && *t < start + n as Millis * w {
            bins[((t - start) / w) as usize] += 1.0;
        }
    }
    bins
}

/// Scores one metric group over every sub-window of the context.
pub fn score_group(
    view: &dyn TelemetryView,
    ctx: &DiagnosisContext,
    group: &MetricGroup,
    cfg: &DiagnosisConfig,
) -> Vec<WindowScores> {
    let windows = ctx.windows();
    let mut out: Vec<WindowScores> = windows
        .iter()
        .map(|&(a, b)| WindowScores { t0: a, t1: b, scores: BTreeMap::new(), driver: BTreeMap::new(), dominant: None })
        .collect();
    let (h0, h1) = ctx.history;
    for metric in &group.metrics {
        let is_log = view.source_of(metric).is_some_and(Source::is_log);
        // per node: history values and per-window current values
        let mut history: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        let mut current: Vec<BTreeMap<NodeId, Vec<(Millis, f64)>>> = vec![BTreeMap::new(); windows.len()];
        for &n in &ctx.nodes {
            if is_log {
                let w = ctx.sub_window.max(1);
                let hist = view.lines(metric, n, h0, h1).unwrap_or_default();
                history.insert(n, count_bins(&hist, h0, h1, w));
                let cur = view.lines(metric, n, ctx.t0, ctx.t1).unwrap_or_default();
                for (i, &(a, b)) in windows.iter().enumerate() {
                    let c = cur.iter().filter(|(t, _)| *t >= a && *t < b).count() as f64;
                    current[i].insert(n, vec![(a, c)]);
                }
            } else {
                history.insert(n, view.numeric_values(metric, n, h0, h1).unwrap_or_default());
                let cur = view.numeric(metric, n, ctx.t0, ctx.t1).unwrap_or_default();
                for (i, &(a, b)) in windows.iter().enumerate() {
                    let pts: Vec<(Millis, f64)> = cur.iter().copied().filter(|(t, _)| *t >= a && *t < b).collect();
                    if !pts.is_empty() {
                        current[i].insert(n, pts);
                    }
                }
            }
        }
        for (i, matrix) in current.iter().enumerate() {
            let spatial = spatial_scores(matrix).unwrap_or_default();
            for (n, pts) in matrix {
                let vals: Vec<f64> = pts.iter().map(|p| p.1).collect();
                let hist = &history[n];
                let temporal = if hist.len() >= 3 { temporal_score(&vals, hist).unwrap_or(0.0) } else { 0.0 };
                let s = spatial.get(n).copied().unwrap_or(0.0).max(temporal);
                match out[i].scores.get(n) {
                    Some(&prev) if prev >= s => {}
                    _ => {
                        out[i].scores.insert(*n, s);
                        out[i].driver.insert(*n, metric.clone());
                    }
                }
            }
        }
    }
    for w in &mut out {
        w.dominant = dominant(&w.scores, cfg.k, cfg.min_outlier_score);
    }
    out
}

fn verdict(windows: &[WindowScores], cfg: &DiagnosisConfig) -> Verdict {
    let need = cfg.persistence.max(1);
    let mut run: Option<(NodeId, usize)> = None;
    for w in windows {
        run = match (run, w.dominant) {
            (Some((n, c)), Some(d)) if n == d => Some((n, c + 1)),
            (_, Some(d)) => Some((d, 1)),
            (_, None) => None,
        };
        if let Some((n, c)) = run {
            if c >= need {
                return Verdict::Confirmed(n);
            }
        }
    }
    let any_outlier = windows.iter().any(|w| w.scores.values().any(|s| *s >= cfg.min_outlier_score));
    if any_outlier {
        Verdict::Ambiguous
    } else {
        Verdict::Exonerated
    }
}

/// Runs the hypothesise/score/refine loop until a node is confirmed, the
/// strategy gives up, or the iteration budget is spent.
pub fn diagnose(
    mut session: DiagnosisSession,
    view: &dyn TelemetryView,
    strategy: &mut dyn DiagnosisStrategy,
) -> DiagnosisSession {
    let available = default_groups(view);
    while session.iterations.len() < session.config.max_iterations {
        let Some(group) = strategy.next_hypothesis(&session, &available) else { break };
        let windows = score_group(view, &session.context, &group, &session.config);
        let verdict = verdict(&windows, &session.config);
        let index = session.iterations.len() + 1;
        session.iterations.push(Iteration { index, hypothesis: group, windows, verdict: verdict.clone() });
        if let Verdict::Confirmed(n) = verdict {
            session.status = DiagnosisStatus::Confirmed(n);
            return session;
        }
    }
    session.status = DiagnosisStatus::Inconclusive;
    session
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{Snapshot, TelemetrySample};

    fn snapshot(nodes: u32, f: impl Fn(u32, u64) -> f64) -> Snapshot {
        let mut s = Snapshot::new([("util".to_string(), Source::Accelerator), ("dmesg".to_string(), Source::OsLog)]);
        for n in 0..nodes {
            for t in 0..20u64 {
                s.push(TelemetrySample::number("util", t * 60_000, NodeId(n), None, f(n, t)));
            }
        }
        s
    }

    fn ctx(nodes: u32) -> DiagnosisContext {
        DiagnosisContext {
            nodes: (0..nodes).map(NodeId).collect(),
            t0: 10 * 60_000,
            t1: 13 * 60_000,
            sub_window: 60_000,
            history: (0, 10 * 60_000),
        }
    }

    fn jitter(n: u32, t: u64) -> f64 {
        0.9 + 0.01 * (((n as u64 * 7919 + t * 104_729) % 13) as f64 - 6.0) / 6.0
    }

    #[test]
    fn dropout_confirmed() {
        let snap = snapshot(16, |n, t| if n == 5 && t >= 10 { 0.0 } else { jitter(n, t) });
        let s = diagnose(DiagnosisSession::new(None, ctx(16), DiagnosisConfig::default()), &snap, &mut LadderStrategy);
        assert_eq!(s.status, DiagnosisStatus::Confirmed(NodeId(5)));
        assert!(s.iterations.len() <= 3);
    }

    #[test]
    fn healthy_is_inconclusive() {
        let snap = snapshot(16, jitter);
        let s = diagnose(DiagnosisSession::new(None, ctx(16), DiagnosisConfig::default()), &snap, &mut LadderStrategy);
        assert_eq!(s.status, DiagnosisStatus::Inconclusive);
        assert!(s.iterations.iter().all(|i| i.verdict != Verdict::Ambiguous || i.hypothesis.name != "combined"));
    }

    #[test]
    fn single_window_spike_not_confirmed() {
        let snap = snapshot(16, |n, t| if n == 2 && t == 11 { 0.0 } else { jitter(n, t) });
        let s = diagnose(DiagnosisSession::new(None, ctx(16), DiagnosisConfig::default()), &snap, &mut LadderStrategy);
        assert_eq!(s.status, DiagnosisStatus::Inconclusive);
    }

    #[test]
    fn iteration_budget_respected() {
        let snap = snapshot(8, jitter);
        let cfg = DiagnosisConfig { max_iterations: 1, ..Default::default() };
        let s = diagnose(DiagnosisSession::new(None, ctx(8), cfg), &snap, &mut LadderStrategy);
        assert_eq!(s.iterations.len(), 1);
        assert_eq!(s.status, DiagnosisStatus::Inconclusive);
    }
}
