use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::MatchScope;
use super::KbError;
use crate::telemetry::{read_snapshot_csv, write_snapshot_csv, Snapshot, Source, TelemetryView};
use crate::{Millis, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    HardwareFault,
    UserError,
    Healthy,
}

/// A bounded telemetry export with a ground-truth label. Rules are evaluated
/// against it as if the clock stood at `at`, with nothing visible before
/// `since`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledIncident {
    pub id: String,
    pub label: Label,
    pub ground_truth: Option<NodeId>,
    pub fault_class: Option<String>,
    pub nodes: Vec<NodeId>,
    pub since: Millis,
    pub at: Millis,
    pub snapshot: Snapshot,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    id: String,
    label: Label,
    ground_truth: Option<NodeId>,
    #[serde(default)]
    fault_class: Option<String>,
    nodes: Vec<NodeId>,
    since: Millis,
    at: Millis,
    schema: Vec<(String, Source)>,
}

fn io(e: impl std::fmt::Display) -> KbError {
    KbError::Io(e.to_string())
}

impl LabeledIncident {
    /// Captures `[since, at]` of `view` for `nodes`.
    pub fn capture(
        id: &str,
        label: Label,
        ground_truth: Option<NodeId>,
        view: &dyn TelemetryView,
        nodes: &[NodeId],
        since: Millis,
        at: Millis,
    ) -> Self {
        let set: BTreeSet<NodeId> = nodes.iter().copied().collect();
        Self {
            id: id.to_string(),
            label,
            ground_truth,
            fault_class: None,
            nodes: set.iter().copied().collect(),
            since,
            at,
            snapshot: Snapshot::capture(view, &set, since, at + 1),
        }
    }

    pub fn with_class(mut self, class: &str) -> Self {
        self.fault_class = Some(class.to_string());
        self
    }

    pub fn is_positive(&self) -> bool {
        self.label == Label::HardwareFault && self.ground_truth.is_some()
    }

    pub fn scope(&self) -> MatchScope {
        MatchScope::new(self.nodes.iter().copied(), self.at, self.since)
    }

    /// Same telemetry, evaluated at a different instant.
    pub fn at_time(&self, id: &str, at: Millis) -> Self {
        Self { id: id.to_string(), at, ..self.clone() }
    }

    /// Mean of every numeric metric over the incident window and nodes, in
    /// schema order (metrics without data contribute 0).
    pub fn kpi_profile(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (metric, source) in self.snapshot.schema() {
            if source.is_log() {
                continue;
            }
            let mut sum = 0.0;
            let mut n = 0usize;
            for &node in &self.nodes {
                for v in self.snapshot.numeric_values(&metric, node, self.since, self.at + 1).unwrap_or_default() {
                    sum += v;
                    n += 1;
                }
            }
            out.push(if n == 0 { 0.0 } else { sum / n as f64 });
        }
        out
    }

    /// Writes `manifest.json` and `telemetry.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), KbError> {
        fs::create_dir_all(dir).map_err(io)?;
        let m = Manifest {
            id: self.id.clone(),
            label: self.label,
            ground_truth: self.ground_truth,
            fault_class: self.fault_class.clone(),
            nodes: self.nodes.clone(),
            since: self.since,
            at: self.at,
            schema: self.snapshot.schema(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m).map_err(io)?).map_err(io)?;
        let f = fs::File::create(dir.join("telemetry.csv")).map_err(io)?;
        write_snapshot_csv(std::io::BufWriter::new(f), &self.snapshot).map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, KbError> {
        let m: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).map_err(io)?).map_err(io)?;
        let mut snapshot = Snapshot::new(m.schema);
        let f = fs::File::open(dir.join("telemetry.csv")).map_err(io)?;
        read_snapshot_csv(std::io::BufReader::new(f), &mut snapshot).map_err(io)?;
        Ok(Self {
            id: m.id,
            label: m.label,
            ground_truth: m.ground_truth,
            fault_class: m.fault_class,
            nodes: m.nodes,
            since: m.since,
            at: m.at,
            snapshot,
        })
    }
}

/// Saves a corpus as one bundle directory per incident, named by position and id.
pub fn save_corpus(dir: &Path, corpus: &[LabeledIncident]) -> Result<(), KbError> {
    for (i, inc) in corpus.iter().enumerate() {
        inc.save(&dir.join(format!("{i:05}-{}", inc.id)))?;
    }
    Ok(())
}

pub fn load_corpus(dir: &Path) -> Result<Vec<LabeledIncident>, KbError> {
    let mut dirs: Vec<_> =
        fs::read_dir(dir).map_err(io)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    dirs.sort();
    dirs.iter().map(|d| LabeledIncident::load(d)).collect()
}
