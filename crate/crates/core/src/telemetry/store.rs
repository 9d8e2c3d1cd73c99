use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::Serialize;

use super::collector::validate;
use super::view::{TelemetryView, ViewError};
use super::{load_collectors, CollectorSpec, Labels, SampleValue, Source, TelemetryError, TelemetrySample};
use crate::{JobId, Millis, NodeId};

#[derive(Debug, Clone)]
pub struct StoreConfig {
    /// Oldest samples of a (metric, node) series are evicted beyond this bound.
    pub max_samples_per_series: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self { max_samples_per_series: 1 << 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Node,
    Job,
    None,
}

#[derive(Debug, Clone)]
pub struct SeriesQuery {
    pub metric: String,
    pub t0: Millis,
    pub t1: Millis,
    pub nodes: Option<BTreeSet<NodeId>>,
    pub job: Option<JobId>,
    pub group_by: GroupBy,
}

impl SeriesQuery {
    pub fn new(metric: impl Into<String>, t0: Millis, t1: Millis) -> Self {
        Self { metric: metric.into(), t0, t1, nodes: None, job: None, group_by: GroupBy::None }
    }

    pub fn group_by(mut self, g: GroupBy) -> Self {
        self.group_by = g;
        self
    }

    pub fn nodes(mut self, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        self.nodes = Some(nodes.into_iter().collect());
        self
    }

    pub fn job(mut self, job: JobId) -> Self {
        self.job = Some(job);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum GroupKey {
    Node(NodeId),
    Job(Option<JobId>),
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesGroup {
    pub key: GroupKey,
    pub samples: Vec<TelemetrySample>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub accepted: usize,
    /// Index into the submitted batch and the reason that entry was refused.
    pub rejected: Vec<(usize, TelemetryError)>,
}

#[derive(Debug, Clone)]
struct Point {
    t: Millis,
    job: Option<JobId>,
    value: SampleValue,
    labels: Labels,
}

#[derive(Debug, Default)]
struct Inner {
    active: Vec<CollectorSpec>,
    /// Active metric/channel name → source.
    active_metrics: BTreeMap<String, Source>,
    /// Every metric/channel ever declared; survives reloads.
    known: BTreeMap<String, Source>,
    names: BTreeMap<String, Arc<str>>,
    series: BTreeMap<Arc<str>, BTreeMap<NodeId, VecDeque<Point>>>,
}

/// Thread-safe in-memory time-series and log store.
///
/// A batch passed to [`TelemetryStore::ingest`] becomes visible atomically.
#[derive(Debug, Default)]
pub struct TelemetryStore {
    config: StoreConfig,
    inner: RwLock<Inner>,
}

fn declared(specs: &[CollectorSpec]) -> BTreeMap<String, Source> {
    let mut out = BTreeMap::new();
    for s in specs {
        if s.source.is_log() {
            out.insert(s.name.clone(), s.source);
        } else {
            for m in &s.metrics {
                out.insert(m.clone(), s.source);
            }
        }
    }
    out
}

impl TelemetryStore {
    pub fn new(config: StoreConfig) -> Self {
        Self { config, inner: RwLock::new(Inner::default()) }
    }

    pub fn with_collectors(config: StoreConfig, specs: Vec<CollectorSpec>) -> Result<Self, TelemetryError> {
        let store = Self::new(config);
        store.set_collectors(specs)?;
        Ok(store)
    }

    /// Parses `document` and atomically replaces the active collector set.
    /// Stored history is untouched.
    pub fn load_collectors(&self, document: &str) -> Result<Vec<CollectorSpec>, TelemetryError> {
        let specs = load_collectors(document)?;
        self.set_collectors(specs.clone())?;
        Ok(specs)
    }

    pub fn set_collectors(&self, specs: Vec<CollectorSpec>) -> Result<(), TelemetryError> {
        validate(&specs)?;
        let active = declared(&specs);
        let mut inner = self.inner.write();
        for (m, s) in &active {
            inner.known.insert(m.clone(), *s);
        }
        inner.active_metrics = active;
        inner.active = specs;
        Ok(())
    }

    pub fn collectors(&self) -> Vec<CollectorSpec> {
        self.inner.read().active.clone()
    }

    pub fn ingest(&self, samples: impl IntoIterator<Item = TelemetrySample>) -> IngestReport {
        let mut report = IngestReport::default();
        let mut inner = self.inner.write();
        let cap = self.config.max_samples_per_series.max(1);
        for (i, s) in samples.into_iter().enumerate() {
            let Some(source) = inner.active_metrics.get(&*s.metric).copied() else {
                report.rejected.push((i, TelemetryError::UnknownCollector(s.metric.to_string())));
                continue;
            };
            match &s.value {
                SampleValue::Number(v) => {
                    if source.is_log() {
                        report.rejected.push((i, TelemetryError::WrongKind(s.metric.to_string())));
                        continue;
                    }
                    if !v.is_finite() {
                        report.rejected.push((
                            i,
                            TelemetryError::NonFiniteValue { metric: s.metric.to_string(), node: s.node_id },
                        ));
                        continue;
                    }
                }
                SampleValue::Line(_) => {
                    if !source.is_log() {
                        report.rejected.push((i, TelemetryError::WrongKind(s.metric.to_string())));
                        continue;
                    }
                }
            }
            let key = match inner.names.get(&*s.metric) {
                Some(k) => k.clone(),
                None => {
                    let k: Arc<str> = s.metric.clone();
                    inner.names.insert(k.to_string(), k.clone());
                    k
                }
            };
            let series = inner.series.entry(key).or_default().entry(s.node_id).or_default();
            let point = Point { t: s.t, job: s.job_id, value: s.value, labels: s.labels };
            match series.back() {
                Some(last) if last.t > point.t => {
                    let idx = series.partition_point(|p| p.t <= point.t);
                    series.insert(idx, point);
                }
                _ => series.push_back(point),
            }
            while series.len() > cap {
                series.pop_front();
            }
            report.accepted += 1;
        }
        report
    }

    pub fn query(&self, q: &SeriesQuery) -> Result<Vec<SeriesGroup>, TelemetryError> {
        if q.t0 >= q.t1 {
            return Err(TelemetryError::InvalidRange(q.t0, q.t1));
        }
        let inner = self.inner.read();
        if !inner.known.contains_key(&q.metric) && !inner.series.contains_key(q.metric.as_str()) {
            return Err(TelemetryError::UnknownMetric(q.metric.clone()));
        }
        let Some((name, per_node)) = inner.series.get_key_value(q.metric.as_str()) else {
            return Ok(Vec::new());
        };
        let mut groups: BTreeMap<GroupKey, Vec<TelemetrySample>> = BTreeMap::new();
        for (node, points) in per_node {
            if q.nodes.as_ref().is_some_and(|n| !n.contains(node)) {
                continue;
            }
            let lo = points.partition_point(|p| p.t < q.t0);
            for p in points.range(lo..).take_while(|p| p.t < q.t1) {
                if q.job.is_some() && p.job != q.job {
                    continue;
                }
                let key = match q.group_by {
                    GroupBy::Node => GroupKey::Node(*node),
                    GroupBy::Job => GroupKey::Job(p.job),
                    GroupBy::None => GroupKey::All,
                };
                groups.entry(key).or_default().push(TelemetrySample {
                    metric: name.clone(),
                    t: p.t,
                    node_id: *node,
                    job_id: p.job,
                    value: p.value.clone(),
                    labels: p.labels.clone(),
                });
            }
        }
        Ok(groups
            .into_iter()
            .map(|(key, mut samples)| {
                samples.sort_by_key(|s| (s.t, s.node_id));
                SeriesGroup { key, samples }
            })
            .collect())
    }

    /// Number of stored samples across all series.
    pub fn len(&self) -> usize {
        self.inner.read().series.values().flat_map(|m| m.values()).map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn points<R>(&self, metric: &str, node: NodeId, t0: Millis, t1: Millis, f: impl FnMut(&Point) -> R) -> Vec<R> {
        let inner = self.inner.read();
        let Some(points) = inner.series.get(metric).and_then(|m| m.get(&node)) else {
            return Vec::new();
        };
        let lo = points.partition_point(|p| p.t < t0);
        points.range(lo..).take_while(|p| p.t < t1).map(f).collect()
    }

    fn source(&self, metric: &str) -> Option<Source> {
        self.inner.read().known.get(metric).copied()
    }
}

impl TelemetryView for TelemetryStore {
    fn numeric(&self, metric: &str, node: NodeId, t0: Millis, t1: Millis) -> Result<Vec<(Millis, f64)>, ViewError> {
        if self.source(metric).is_some_and(Source::is_log) {
            return Err(ViewError::NotNumeric(metric.to_string()));
        }
        Ok(self.points(metric, node, t0, t1, |p| p.value.as_number().map(|v| (p.t, v))).into_iter().flatten().collect())
    }

    fn lines(&self, channel: &str, node: NodeId, t0: Millis, t1: Millis) -> Result<Vec<(Millis, String)>, ViewError> {
        if self.source(channel).is_some_and(|s| !s.is_log()) {
            return Err(ViewError::NotLog(channel.to_string()));
        }
        Ok(self
            .points(channel, node, t0, t1, |p| p.value.as_line().map(|l| (p.t, l.to_string())))
            .into_iter()
            .flatten()
            .collect())
    }

    fn source_of(&self, metric: &str) -> Option<Source> {
        self.source(metric)
    }

    fn schema(&self) -> Vec<(String, Source)> {
        self.inner.read().known.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    fn nodes(&self) -> BTreeSet<NodeId> {
        self.inner.read().series.values().flat_map(|m| m.keys().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::aggregate::{aggregate, AggOp};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn store() -> TelemetryStore {
        let s = TelemetryStore::new(StoreConfig::default());
        s.load_collectors(
            "collectors:\n  - {name: accel, source: accelerator, metrics: [util], interval_s: 1}\n  - {name: dmesg, source: os-log, interval_s: 1}\n",
        )
        .unwrap();
        s
    }

    #[test]
    fn ingest_counts_valid_samples() {
        let s = store();
        let batch = (0..100).map(|i| TelemetrySample::number("util", i * 1000, NodeId(i as u32 % 4), None, 0.5));
        let r = s.ingest(batch);
        assert_eq!(r.accepted, 100);
        assert!(r.rejected.is_empty());
        assert_eq!(s.len(), 100);
    }

    #[test]
    fn nan_entry_rejected_others_kept() {
        let s = store();
        let r = s.ingest(vec![
            TelemetrySample::number("util", 0, NodeId(0), None, 1.0),
            TelemetrySample::number("util", 1, NodeId(0), None, f64::NAN),
        ]);
        assert_eq!(r.accepted, 1);
        assert!(matches!(r.rejected[0], (1, TelemetryError::NonFiniteValue { .. })));
    }

    #[test]
    fn unknown_collector_rejected() {
        let s = store();
        let r = s.ingest(vec![TelemetrySample::number("bogus", 0, NodeId(0), None, 1.0)]);
        assert_eq!(r.accepted, 0);
        assert!(matches!(r.rejected[0].1, TelemetryError::UnknownCollector(_)));
        let r = s.ingest(vec![TelemetrySample::number("dmesg", 0, NodeId(0), None, 1.0)]);
        assert!(matches!(r.rejected[0].1, TelemetryError::WrongKind(_)));
    }

    #[test]
    fn out_of_order_ingest_queries_sorted() {
        let s = store();
        let mut samples: Vec<_> =
            (0..200).map(|i| TelemetrySample::number("util", i * 10, NodeId((i % 3) as u32), None, i as f64)).collect();
        let mut oracle = samples.clone();
        samples.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(7));
        s.ingest(samples);
        let got = s.query(&SeriesQuery::new("util", 0, 10_000)).unwrap();
        oracle.sort_by_key(|x| (x.t, x.node_id));
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].samples, oracle);
    }

    #[test]
    fn empty_range_and_unknown_metric() {
        let s = store();
        assert!(s.query(&SeriesQuery::new("util", 0, 10)).unwrap().is_empty());
        assert!(matches!(s.query(&SeriesQuery::new("nope", 0, 10)), Err(TelemetryError::UnknownMetric(_))));
        assert!(matches!(s.query(&SeriesQuery::new("util", 10, 10)), Err(TelemetryError::InvalidRange(..))));
    }

    #[test]
    fn group_by_node_partitions() {
        let s = store();
        s.ingest((0..40).map(|i| TelemetrySample::number("util", i, NodeId((i % 4) as u32), None, 1.0)));
        let groups = s.query(&SeriesQuery::new("util", 0, 100).group_by(GroupBy::Node)).unwrap();
        assert_eq!(groups.len(), 4);
        let mut seen = BTreeSet::new();
        for g in &groups {
            let GroupKey::Node(n) = g.key else { panic!() };
            assert!(g.samples.iter().all(|x| x.node_id == n));
            assert!(seen.insert(n));
        }
    }

    #[test]
    fn windowed_mean_matches_brute_force() {
        let s = store();
        let pts: Vec<(u64, f64)> = (0..97).map(|i| (i * 700, ((i * 37) % 11) as f64)).collect();
        s.ingest(pts.iter().map(|&(t, v)| TelemetrySample::number("util", t, NodeId(0), None, v)));
        let q = s.query(&SeriesQuery::new("util", 0, 100_000)).unwrap();
        let series: Vec<(u64, f64)> = q[0].samples.iter().map(|x| (x.t, x.value.as_number().unwrap())).collect();
        let agg = aggregate(&series, 0, 5.0, AggOp::Mean);
        for (start, v) in agg {
            let inside: Vec<f64> = pts.iter().filter(|(t, _)| *t >= start && *t < start + 5000).map(|p| p.1).collect();
            let oracle = inside.iter().sum::<f64>() / inside.len() as f64;
            assert!((v - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn reload_removing_collector_keeps_history() {
        let s = store();
        let script = |t: u64| {
            vec![
                TelemetrySample::number("util", t, NodeId(0), None, 1.0),
                TelemetrySample::line("dmesg", t, NodeId(0), None, "hello"),
            ]
        };
        assert_eq!(s.ingest(script(0)).accepted, 2);
        let before = s.query(&SeriesQuery::new("dmesg", 0, 100)).unwrap();
        s.load_collectors("collectors:\n  - {name: accel, source: accelerator, metrics: [util], interval_s: 1}\n")
            .unwrap();
        let r = s.ingest(script(10));
        assert_eq!(r.accepted, 1);
        assert!(matches!(r.rejected[0].1, TelemetryError::UnknownCollector(_)));
        let after = s.query(&SeriesQuery::new("dmesg", 0, 100)).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn ring_retention_evicts_oldest() {
        let s = TelemetryStore::new(StoreConfig { max_samples_per_series: 3 });
        s.load_collectors("collectors:\n  - {name: a, source: pcie, metrics: [x], interval_s: 1}\n").unwrap();
        s.ingest((0..5).map(|i| TelemetrySample::number("x", i, NodeId(0), None, i as f64)));
        assert_eq!(s.numeric_values("x", NodeId(0), 0, 10).unwrap(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn concurrent_ingest_and_query() {
        let s = Arc::new(store());
        std::thread::scope(|scope| {
            for p in 0..4u32 {
                let s = s.clone();
                scope.spawn(move || {
                    for i in 0..250u64 {
                        s.ingest(vec![TelemetrySample::number("util", i, NodeId(p), None, 1.0)]);
                    }
                });
            }
            let s2 = s.clone();
            scope.spawn(move || {
                for _ in 0..50 {
                    let _ = s2.query(&SeriesQuery::new("util", 0, 1000));
                }
            });
        });
        assert_eq!(s.len(), 1000);
    }
}
