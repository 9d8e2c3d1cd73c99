use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::kpi::{KpiConfig, Rounding};
use crate::sim::{JobSpec, NoiseConfig};
use crate::{hours, Millis, MS_PER_DAY};

/// How incidents are detected and handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// An operator notices each disruption after a random delay.
    Manual,
    /// Signature rules; anything they miss falls back to the operator.
    RulesOnly,
    /// Rules, then automated diagnosis of job anomalies.
    RulesDiagnosis,
    /// Rules and diagnosis, and every diagnosed incident is turned into a new rule.
    Full,
}

impl Policy {
    pub fn uses_rules(self) -> bool {
        self != Policy::Manual
    }

    pub fn diagnoses(self) -> bool {
        matches!(self, Policy::RulesDiagnosis | Policy::Full)
    }

    pub fn learns(self) -> bool {
        self == Policy::Full
    }

    pub fn name(self) -> &'static str {
        match self {
            Policy::Manual => "manual",
            Policy::RulesOnly => "rules-only",
            Policy::RulesDiagnosis => "rules-diagnosis",
            Policy::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPhase {
    pub from_day: f64,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorConfig {
    /// Mean of the exponential delay before an operator acts on a disruption.
    pub delay_mean_h: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self { delay_mean_h: 2.5 }
    }
}

/// Fault injected at a fixed time. Without `node` a member of a running job
/// is picked with the scenario RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub at_h: f64,
    /// Catalog variant name or `<class>/known` / `<class>/unknown`.
    pub fault: String,
    #[serde(default)]
    pub node: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JobTemplate {
    /// Nodes per job; defaults to the cluster minus spares.
    pub nodes: Option<u32>,
    pub step_time_s: f64,
    pub checkpoint_interval: u64,
    pub load_time_s: f64,
    pub peak_throughput: f64,
}

impl Default for JobTemplate {
    fn default() -> Self {
        Self { nodes: None, step_time_s: 10.0, checkpoint_interval: 30, load_time_s: 300.0, peak_throughput: 1.0e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KpiSection {
    pub period_days: f64,
    pub period_names: Vec<String>,
    pub rounding: Rounding,
}

impl Default for KpiSection {
    fn default() -> Self {
        Self { period_days: 30.0, period_names: Vec::new(), rounding: Rounding::HalfEven }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Output {
    Events,
    Kpi,
    Diagnosis,
    Kb,
    Tickets,
    Learning,
}

impl Output {
    pub const ALL: [Output; 6] =
        [Output::Events, Output::Kpi, Output::Diagnosis, Output::Kb, Output::Tickets, Output::Learning];
}

fn all_outputs() -> Vec<Output> {
    Output::ALL.to_vec()
}

fn default_accels() -> u32 {
    8
}

fn default_interval() -> f64 {
    60.0
}

fn default_comm() -> f64 {
    0.2
}

fn default_unknown_share() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub nodes: u32,
    #[serde(default = "default_accels")]
    pub accelerators_per_node: u32,
    pub duration_days: f64,
    pub policy: Policy,
    /// Policy changes over time; the first phase starting at or before a
    /// time wins over `policy`.
    #[serde(default)]
    pub schedule: Vec<PolicyPhase>,
    #[serde(default)]
    pub operator: OperatorConfig,
    /// Total rate of catalog faults; zero disables random faults.
    #[serde(default)]
    pub fault_rate_per_node_hour: f64,
    #[serde(default = "default_unknown_share")]
    pub unknown_share: f64,
    #[serde(default)]
    pub injections: Vec<Injection>,
    #[serde(default)]
    pub job: JobTemplate,
    #[serde(default = "default_interval")]
    pub telemetry_interval_s: f64,
    #[serde(default = "default_comm")]
    pub comm_fraction: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub kpi: KpiSection,
    #[serde(default = "all_outputs")]
    pub outputs: Vec<Output>,
}

impl Scenario {
    pub fn from_yaml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_yaml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("scenario serializes")
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.nodes < 4 {
            return bad("nodes must be at least 4".into());
        }
        if !(self.duration_days > 0.0) {
            return bad("duration_days must be positive".into());
        }
        if !(self.fault_rate_per_node_hour >= 0.0) || !(0.0..=1.0).contains(&self.unknown_share) {
            return bad("fault rate must be >= 0 and unknown_share in [0,1]".into());
        }
        if !(self.operator.delay_mean_h > 0.0) {
            return bad("operator.delay_mean_h must be positive".into());
        }
        if !(self.kpi.period_days > 0.0) {
            return bad("kpi.period_days must be positive".into());
        }
        if self.job_nodes() + 1 > self.nodes {
            return bad("job must leave at least one spare node".into());
        }
        for i in &self.injections {
            if super::catalog::variant(&i.fault).is_none() {
                return bad(format!("unknown fault variant `{}`", i.fault));
            }
            if i.node.is_some_and(|n| n >= self.nodes) || !(i.at_h >= 0.0) {
                return bad(format!("injection of `{}` has a bad node or time", i.fault));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> Millis {
        (self.duration_days * MS_PER_DAY as f64).round() as Millis
    }

    pub fn job_nodes(&self) -> u32 {
        self.job.nodes.unwrap_or_else(|| self.nodes - (self.nodes / 8).max(2))
    }

    pub fn job_spec(&self) -> JobSpec {
        let mut spec = JobSpec::new(self.job_nodes() * self.accelerators_per_node);
        spec.name = format!("{}-train", self.name);
        spec.step_time_s = self.job.step_time_s;
        spec.checkpoint_interval = self.job.checkpoint_interval;
        spec.load_time_s = self.job.load_time_s;
        spec.peak_throughput = self.job.peak_throughput;
        spec
    }

    pub fn policy_at(&self, t: Millis) -> Policy {
        let day = t as f64 / MS_PER_DAY as f64;
        self.schedule.iter().filter(|p| p.from_day <= day).last().map(|p| p.policy).unwrap_or(self.policy)
    }

    pub fn kpi_config(&self) -> KpiConfig {
        KpiConfig {
            period: hours(self.kpi.period_days * 24.0),
            period_names: self.kpi.period_names.clone(),
            rounding: self.kpi.rounding,
        }
    }

    pub fn wants(&self, o: Output) -> bool {
        self.outputs.contains(&o)
    }
}
