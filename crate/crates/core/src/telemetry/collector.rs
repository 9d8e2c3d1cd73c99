use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::TelemetryError;

/// Where a collector scrapes from. Log sources produce text lines, the rest numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    DriverLog,
    OsLog,
    Accelerator,
    Pcie,
    Interconnect,
    JobKpi,
}

impl Source {
    pub fn is_log(self) -> bool {
        matches!(self, Source::DriverLog | Source::OsLog)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectorSpec {
    pub name: String,
    pub source: Source,
    #[serde(default)]
    pub metrics: Vec<String>,
    pub interval_s: f64,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default)]
    collectors: Vec<CollectorSpec>,
}

/// Collector set used by the simulator and scenarios unless overridden.
pub const DEFAULT_COLLECTORS: &str = r#"collectors:
  - name: accel
    source: accelerator
    metrics: [accel_util, accel_mem_ecc, accel_mem_bw]
    interval_s: 60
  - name: ib
    source: interconnect
    metrics: [ib_bw]
    interval_s: 60
  - name: pcie
    source: pcie
    metrics: [pcie_bw]
    interval_s: 60
  - name: driver-log
    source: driver-log
    interval_s: 60
  - name: os-log
    source: os-log
    interval_s: 60
  - name: job-kpi
    source: job-kpi
    metrics: [job_throughput]
    interval_s: 60
"#;

/// Parses and validates a collector document.
pub fn load_collectors(document: &str) -> Result<Vec<CollectorSpec>, TelemetryError> {
    if document.trim().is_empty() {
        return Ok(Vec::new());
    }
    let doc: Document = serde_yaml::from_str(document).map_err(|e| TelemetryError::Parse(e.to_string()))?;
    validate(&doc.collectors)?;
    Ok(doc.collectors)
}

pub(crate) fn validate(specs: &[CollectorSpec]) -> Result<(), TelemetryError> {
    let mut names = BTreeSet::new();
    let mut metrics = BTreeSet::new();
    for spec in specs {
        if spec.name.is_empty() {
            return Err(TelemetryError::Validation("collector with empty name".into()));
        }
        if !names.insert(spec.name.as_str()) {
            return Err(TelemetryError::Validation(format!("duplicate collector name `{}`", spec.name)));
        }
        if !(spec.interval_s.is_finite() && spec.interval_s > 0.0) {
            return Err(TelemetryError::Validation(format!(
                "collector `{}` has nonpositive interval {}",
                spec.name, spec.interval_s
            )));
        }
        if spec.source.is_log() && !spec.metrics.is_empty() {
            return Err(TelemetryError::Validation(format!("log collector `{}` must not declare metrics", spec.name)));
        }
        if !spec.source.is_log() && spec.metrics.is_empty() {
            return Err(TelemetryError::Validation(format!("collector `{}` declares no metrics", spec.name)));
        }
        let declared = if spec.source.is_log() {
            vec![spec.name.as_str()]
        } else {
            spec.metrics.iter().map(String::as_str).collect()
        };
        for m in declared {
            if !metrics.insert(m) {
                return Err(TelemetryError::Validation(format!("metric `{m}` declared twice")));
            }
        }
    }
    Ok(())
}
