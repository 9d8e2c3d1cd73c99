//! Offline replay of recorded incidents: runs the diagnosis loop and rule
//! generation on a captured snapshot, with no live simulation.
//!
//! A bundle is a directory holding `bundle.json` (what to run), `incident/`
//! (a labeled incident as written by [`LabeledIncident::save`]) and, when rule
//! generation is requested, `corpus/` (labeled history).

mod fixtures;

pub use fixtures::{converging_diagnosis_bundle, memory_fault_bundle};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::TelemetryView;

use crate::anomaly::{diagnose, DiagnosisConfig, DiagnosisContext, DiagnosisSession, LadderStrategy};
use crate::kb::{
    contextual_data_selection, generate_rule, load_corpus, save_corpus, GenerateConfig, Generated, KbError,
    KnowledgeBase, LabeledIncident, Rule, RuleStats, TraceEntry,
};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("bundle schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosisRequest {
    pub context: DiagnosisContext,
    #[serde(default)]
    pub config: DiagnosisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnRequest {
    pub rule_id: String,
    #[serde(default)]
    pub fault_class: Option<String>,
    /// Contrasting incidents picked from the corpus by KPI-profile distance.
    #[serde(default = "default_contrast")]
    pub contrast: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_contrast() -> usize {
    3
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    #[serde(default)]
    pub diagnosis: Option<DiagnosisRequest>,
    #[serde(default)]
    pub learn: Option<LearnRequest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: BundleManifest,
    pub incident: LabeledIncident,
    pub corpus: Vec<LabeledIncident>,
}

impl Bundle {
    pub fn check(&self) -> Result<(), ReplayError> {
        let m = &self.manifest;
        if m.diagnosis.is_none() && m.learn.is_none() {
            return Err(ReplayError::Schema("bundle requests neither diagnosis nor learning".into()));
        }
        if let Some(d) = &m.diagnosis {
            if d.context.nodes.is_empty() || d.context.t1 <= d.context.t0 || d.context.sub_window == 0 {
                return Err(ReplayError::Schema("diagnosis context needs nodes and a non-empty window".into()));
            }
        }
        if m.learn.is_some() && self.corpus.is_empty() {
            return Err(ReplayError::Schema("learning needs a corpus".into()));
        }
        if self.incident.snapshot.schema().is_empty() {
            return Err(ReplayError::Schema("incident has no telemetry".into()));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), ReplayError> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.manifest).map_err(|e| ReplayError::Schema(e.to_string()))?;
        fs::write(dir.join("bundle.json"), json)?;
        self.incident.save(&dir.join("incident"))?;
        if !self.corpus.is_empty() {
            save_corpus(&dir.join("corpus"), &self.corpus)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ReplayError> {
        let path = dir.join("bundle.json");
        if !path.is_file() {
            return Err(ReplayError::Schema(format!("{} is missing", path.display())));
        }
        let manifest: BundleManifest =
            serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| ReplayError::Schema(e.to_string()))?;
        let inc_dir = dir.join("incident");
        if !inc_dir.join("manifest.json").is_file() {
            return Err(ReplayError::Schema(format!("{} is missing", inc_dir.join("manifest.json").display())));
        }
        let incident = LabeledIncident::load(&inc_dir)?;
        let corpus_dir = dir.join("corpus");
        let corpus = if corpus_dir.is_dir() { load_corpus(&corpus_dir)? } else { Vec::new() };
        let b = Bundle { manifest, incident, corpus };
        b.check()?;
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome {
    pub contrast: Vec<String>,
    pub generated: Generated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub diagnosis: Option<DiagnosisSession>,
    pub learn: Option<LearnOutcome>,
}

impl ReplayOutcome {
    pub fn rule(&self) -> Option<&Rule> {
        self.learn.as_ref().and_then(|l| l.generated.accepted()).map(|c| &c.rule)
    }
}

pub fn replay(bundle: &Bundle) -> Result<ReplayOutcome, ReplayError> {
    bundle.check()?;
    let inc = &bundle.incident;
    let diagnosis = bundle.manifest.diagnosis.as_ref().map(|req| {
        let session = DiagnosisSession::new(None, req.context.clone(), req.config.clone());
        diagnose(session, &inc.snapshot, &mut LadderStrategy)
    });
    let learn = match &bundle.manifest.learn {
        None => None,
        Some(req) => {
            let history: Vec<LabeledIncident> = bundle.corpus.iter().filter(|c| c.id != inc.id).cloned().collect();
            let contrast = contextual_data_selection(inc, &history, req.contrast)?;
            let mut cfg = GenerateConfig::new(&req.rule_id);
            cfg.fault_class = req.fault_class.clone();
            cfg.seed = req.seed;
            let kb = KnowledgeBase::new();
            let generated = generate_rule(&kb, inc, &contrast, &bundle.corpus, &inc.snapshot.schema(), &cfg)?;
            Some(LearnOutcome { contrast: contrast.iter().map(|c| c.id.clone()).collect(), generated })
        }
    };
    Ok(ReplayOutcome { diagnosis, learn })
}

#[derive(Serialize)]
struct GenerationReport<'a> {
    rule_id: &'a str,
    accepted: bool,
    contrast: &'a [String],
    holdout: Option<RuleStats>,
    trace: &'a [TraceEntry],
}

/// Writes `diagnosis.json`, `generation.json` and, for an accepted rule,
/// `rule.yaml` into `dir`.
pub fn write_artifacts(bundle: &Bundle, out: &ReplayOutcome, dir: &Path) -> Result<(), ReplayError> {
    fs::create_dir_all(dir)?;
    if let Some(s) = &out.diagnosis {
        fs::write(dir.join("diagnosis.json"), s.to_json() + "\n")?;
    }
    if let (Some(l), Some(req)) = (&out.learn, &bundle.manifest.learn) {
        let report = GenerationReport {
            rule_id: &req.rule_id,
            accepted: l.generated.accepted().is_some(),
            contrast: &l.contrast,
            holdout: l.generated.accepted().map(|c| c.stats),
            trace: l.generated.trace(),
        };
        let json = serde_json::to_string_pretty(&report).map_err(|e| ReplayError::Schema(e.to_string()))?;
        fs::write(dir.join("generation.json"), json + "\n")?;
        if let Some(r) = out.rule() {
            fs::write(dir.join("rule.yaml"), r.to_yaml())?;
        }
    }
    Ok(())
}
