use std::collections::{BTreeMap, BTreeSet};

use super::view::{TelemetryView, ViewError};
use super::{SampleValue, Source, TelemetrySample};
use crate::{Millis, NodeId};

/// A bounded, self-contained export of telemetry that can be replayed without
/// the live store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    schema: BTreeMap<String, Source>,
    series: BTreeMap<String, BTreeMap<NodeId, Vec<TelemetrySample>>>,
}

impl Snapshot {
    pub fn new(schema: impl IntoIterator<Item = (String, Source)>) -> Self {
        Self { schema: schema.into_iter().collect(), series: BTreeMap::new() }
    }

    /// Copies `[t0, t1)` of every series known to `view` for the given nodes.
    pub fn capture(view: &dyn TelemetryView, nodes: &BTreeSet<NodeId>, t0: Millis, t1: Millis) -> Self {
        let mut snap = Self::new(view.schema());
        let schema = snap.schema.clone();
        for (metric, source) in &schema {
            for &node in nodes {
                if source.is_log() {
                    for (t, line) in view.lines(metric, node, t0, t1).unwrap_or_default() {
                        snap.push(TelemetrySample::line(metric, t, node, None, line));
                    }
                } else {
                    for (t, v) in view.numeric(metric, node, t0, t1).unwrap_or_default() {
                        snap.push(TelemetrySample::number(metric, t, node, None, v));
                    }
                }
            }
        }
        snap
    }

    pub fn declare(&mut self, metric: &str, source: Source) {
        self.schema.insert(metric.to_string(), source);
    }

    /// Adds a sample, keeping per-series time order.
    pub fn push(&mut self, s: TelemetrySample) {
        let v = self.series.entry(s.metric.to_string()).or_default().entry(s.node_id).or_default();
        if v.last().is_some_and(|l| l.t > s.t) {
            let idx = v.partition_point(|p| p.t <= s.t);
            v.insert(idx, s);
        } else {
            v.push(s);
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = &TelemetrySample> {
        self.series.values().flat_map(|m| m.values()).flatten()
    }

    pub fn len(&self) -> usize {
        self.samples().count()
    }

    pub fn is_empty(&self) -> bool {
        self.series.values().all(|m| m.values().all(Vec::is_empty))
    }

    /// Earliest and latest sample timestamps.
    pub fn span(&self) -> Option<(Millis, Millis)> {
        let mut it = self.samples().map(|s| s.t);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }

    /// Copy restricted to `[t0, t1)` with the same schema.
    pub fn clip(&self, t0: Millis, t1: Millis) -> Snapshot {
        let mut out = Snapshot::new(self.schema.clone());
        for s in self.samples().filter(|s| s.t >= t0 && s.t < t1) {
            out.push(s.clone());
        }
        out
    }

    fn range(&self, metric: &str, node: NodeId, t0: Millis, t1: Millis) -> &[TelemetrySample] {
        let Some(v) = self.series.get(metric).and_then(|m| m.get(&node)) else {
            return &[];
        };
        let lo = v.partition_point(|s| s.t < t0);
        let hi = v.partition_point(|s| s.t < t1);
        &v[lo..hi.max(lo)]
    }
}

impl TelemetryView for Snapshot {
    fn numeric(&self, metric: &str, node: NodeId, t0: Millis, t1: Millis) -> Result<Vec<(Millis, f64)>, ViewError> {
        if self.schema.get(metric).is_some_and(|s| s.is_log()) {
            return Err(ViewError::NotNumeric(metric.to_string()));
        }
        Ok(self.range(metric, node, t0, t1).iter().filter_map(|s| s.value.as_number().map(|v| (s.t, v))).collect())
    }

    fn lines(&self, channel: &str, node: NodeId, t0: Millis, t1: Millis) -> Result<Vec<(Millis, String)>, ViewError> {
        if self.schema.get(channel).is_some_and(|s| !s.is_log()) {
            return Err(ViewError::NotLog(channel.to_string()));
        }
        Ok(self
            .range(channel, node, t0, t1)
            .iter()
            .filter_map(|s| match &s.value {
                SampleValue::Line(l) => Some((s.t, l.clone())),
                SampleValue::Number(_) => None,
            })
            .collect())
    }

    fn source_of(&self, metric: &str) -> Option<Source> {
        self.schema.get(metric).copied()
    }

    fn schema(&self) -> Vec<(String, Source)> {
        self.schema.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    fn nodes(&self) -> BTreeSet<NodeId> {
        self.series.values().flat_map(|m| m.keys().copied()).collect()
    }
}
