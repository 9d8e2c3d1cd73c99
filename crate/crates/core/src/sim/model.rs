use std::fmt;

use serde::{Deserialize, Serialize};

use crate::telemetry::DEFAULT_COLLECTORS;
use crate::RuleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentClass {
    AcceleratorMemory,
    Interconnect,
    HostOs,
    SilentHang,
    ThroughputDegradation,
}

impl ComponentClass {
    pub const ALL: [ComponentClass; 5] = [
        ComponentClass::AcceleratorMemory,
        ComponentClass::Interconnect,
        ComponentClass::HostOs,
        ComponentClass::SilentHang,
        ComponentClass::ThroughputDegradation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ComponentClass::AcceleratorMemory => "accelerator-memory",
            ComponentClass::Interconnect => "interconnect",
            ComponentClass::HostOs => "host-os",
            ComponentClass::SilentHang => "silent-hang",
            ComponentClass::ThroughputDegradation => "throughput-degradation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for ComponentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Manifestation {
    /// The node dies; any job on it is interrupted.
    Crash,
    /// The node stops making progress; its job stalls without terminating.
    Hang,
    /// The node runs at `factor` of its healthy speed.
    Degrade(f64),
    /// The text is appended to the node's driver log on every telemetry tick.
    LogPattern(String),
}

impl Manifestation {
    pub fn is_disruptive(&self) -> bool {
        matches!(self, Manifestation::Crash | Manifestation::Hang)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectMode {
    Scale,
    Add,
    Set,
}

/// Adjustment applied to one metric of the faulty node while the fault is active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEffect {
    pub metric: String,
    pub mode: EffectMode,
    pub value: f64,
}

/// Log line written while a fault is active. `{node}` expands to the node
/// index and `{hex}` to a random 8-digit hex word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEmission {
    pub channel: String,
    pub text: String,
    /// Number of other job nodes that also log the line (error propagation),
    /// starting one tick after the faulty node.
    #[serde(default)]
    pub peers: usize,
}

/// Fault that alternates between active and dormant phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyCycle {
    pub on_s: f64,
    pub off_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    #[serde(default)]
    pub name: String,
    pub component_class: ComponentClass,
    /// Failures per node-hour.
    #[serde(default)]
    pub rate: f64,
    pub manifestation: Manifestation,
    #[serde(default)]
    pub known: bool,
    #[serde(default)]
    pub signature_id: Option<RuleId>,
    #[serde(default)]
    pub log: Option<LogEmission>,
    #[serde(default)]
    pub effects: Vec<MetricEffect>,
    /// Survives a reboot; only replacing the host clears it.
    #[serde(default)]
    pub persistent: bool,
    #[serde(default)]
    pub duty_cycle: Option<DutyCycle>,
}

impl FaultModel {
    pub fn new(class: ComponentClass, manifestation: Manifestation) -> Self {
        Self {
            name: String::new(),
            component_class: class,
            rate: 0.0,
            manifestation,
            known: false,
            signature_id: None,
            log: None,
            effects: Vec::new(),
            persistent: false,
            duty_cycle: None,
        }
    }

    pub fn crash(class: ComponentClass) -> Self {
        Self::new(class, Manifestation::Crash)
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }

    pub fn with_log(mut self, channel: &str, text: &str) -> Self {
        self.log = Some(LogEmission { channel: channel.into(), text: text.into(), peers: 0 });
        self
    }

    pub fn with_effect(mut self, metric: &str, mode: EffectMode, value: f64) -> Self {
        self.effects.push(MetricEffect { metric: metric.into(), mode, value });
        self
    }

    pub fn known_as(mut self, rule: &str) -> Self {
        self.known = true;
        self.signature_id = Some(RuleId::new(rule));
        self
    }

    pub fn label(&self) -> String {
        if self.name.is_empty() {
            self.component_class.name().to_string()
        } else {
            self.name.clone()
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(format!("fault `{}`: rate must be finite and >= 0", self.label()));
        }
        if let Manifestation::Degrade(f) = self.manifestation {
            if !(f > 0.0 && f < 1.0) {
                return Err(format!("fault `{}`: degrade factor must be in (0,1)", self.label()));
            }
        }
        if self.known && self.signature_id.is_none() {
            return Err(format!("fault `{}`: known faults need a signature_id", self.label()));
        }
        if let Some(d) = self.duty_cycle {
            if !(d.on_s > 0.0 && d.off_s > 0.0) {
                return Err(format!("fault `{}`: duty cycle phases must be positive", self.label()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    #[serde(default)]
    pub name: String,
    pub requested_accelerators: u32,
    /// Steps between checkpoints.
    pub checkpoint_interval: u64,
    pub step_time_s: f64,
    /// Tokens per second with every node healthy.
    pub peak_throughput: f64,
    /// Time spent loading data and checkpoints before training (re)starts.
    #[serde(default)]
    pub load_time_s: f64,
    #[serde(default)]
    pub total_steps: Option<u64>,
}

impl JobSpec {
    pub fn new(requested_accelerators: u32) -> Self {
        Self {
            name: String::new(),
            requested_accelerators,
            checkpoint_interval: 500,
            step_time_s: 10.0,
            peak_throughput: 1.0e6,
            load_time_s: 0.0,
            total_steps: None,
        }
    }
}

/// Per-metric healthy noise: Gaussian with the given mean/σ, truncated at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub mean: f64,
    pub sd: f64,
}

impl Level {
    pub const fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }
}

/// Healthy operating levels of the modelled metrics, busy (in a job) vs idle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub accel_util: (Level, Level),
    pub accel_mem_ecc: (Level, Level),
    pub accel_mem_bw: (Level, Level),
    pub ib_bw: (Level, Level),
    pub pcie_bw: (Level, Level),
    /// Used for metrics the simulator has no model for.
    pub other: (Level, Level),
    /// Relative σ of the job throughput KPI.
    pub throughput_rel_sd: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            accel_util: (Level::new(0.92, 0.02), Level::new(0.02, 0.01)),
            accel_mem_ecc: (Level::new(0.2, 0.3), Level::new(0.2, 0.3)),
            accel_mem_bw: (Level::new(0.8, 0.02), Level::new(0.05, 0.02)),
            ib_bw: (Level::new(20.0, 0.5), Level::new(0.5, 0.2)),
            pcie_bw: (Level::new(12.0, 0.3), Level::new(0.3, 0.1)),
            other: (Level::new(1.0, 0.01), Level::new(0.0, 0.01)),
            throughput_rel_sd: 0.005,
        }
    }
}

impl NoiseConfig {
    /// (busy, idle) levels for `metric`.
    pub fn levels(&self, metric: &str) -> (Level, Level) {
        match metric {
            "accel_util" => self.accel_util,
            "accel_mem_ecc" => self.accel_mem_ecc,
            "accel_mem_bw" => self.accel_mem_bw,
            "ib_bw" => self.ib_bw,
            "pcie_bw" => self.pcie_bw,
            _ => self.other,
        }
    }
}

fn default_accels() -> u32 {
    8
}

fn default_interval() -> f64 {
    60.0
}

fn default_collectors() -> String {
    DEFAULT_COLLECTORS.to_string()
}

fn default_comm_fraction() -> f64 {
    0.2
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub node_count: u32,
    #[serde(default = "default_accels")]
    pub accelerators_per_node: u32,
    #[serde(default)]
    pub fault_models: Vec<FaultModel>,
    /// Seconds between telemetry ticks.
    #[serde(default = "default_interval")]
    pub telemetry_interval: f64,
    #[serde(default)]
    pub job_templates: Vec<JobSpec>,
    /// Collector document (YAML) that decides which samples a tick emits.
    #[serde(default = "default_collectors")]
    pub collectors: String,
    #[serde(default = "yes")]
    pub telemetry: bool,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Share of a training step spent in communication, which a slow node
    /// does not stretch.
    #[serde(default = "default_comm_fraction")]
    pub comm_fraction: f64,
    /// Whether nodes start validated and schedulable.
    #[serde(default = "yes")]
    pub prevalidated: bool,
}

impl SimConfig {
    pub fn new(seed: u64, node_count: u32) -> Self {
        Self {
            seed,
            node_count,
            accelerators_per_node: default_accels(),
            fault_models: Vec::new(),
            telemetry_interval: default_interval(),
            job_templates: Vec::new(),
            collectors: default_collectors(),
            telemetry: true,
            noise: NoiseConfig::default(),
            comm_fraction: default_comm_fraction(),
            prevalidated: true,
        }
    }

    pub fn without_telemetry(mut self) -> Self {
        self.telemetry = false;
        self
    }

    pub fn with_fault(mut self, f: FaultModel) -> Self {
        self.fault_models.push(f);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeState {
    Available,
    Allocated,
    Suspect,
    Cordoned,
    InRepair,
    Migrated,
    Validating,
}

impl NodeState {
    /// Edges of the lifecycle graph. `Cordoned → Validating` serves playbooks
    /// that repair in place (reboot) without a host migration.
    pub fn can_transition(self, to: NodeState) -> bool {
        use NodeState::*;
        matches!(
            (self, to),
            (Available, Allocated)
                | (Allocated, Available)
                | (Available, Suspect)
                | (Allocated, Suspect)
                | (Suspect, Cordoned)
                | (Cordoned, InRepair)
                | (InRepair, Migrated)
                | (Migrated, Validating)
                | (Cordoned, Validating)
                | (Validating, Available)
                | (Validating, Cordoned)
        )
    }

    pub fn in_service(self) -> bool {
        matches!(self, NodeState::Available | NodeState::Allocated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobState {
    Pending,
    Loading,
    Training,
    Hung,
    Degraded,
    Interrupted,
    Recovering,
    Completed,
}

impl JobState {
    /// States in which the job reports its throughput KPI.
    pub fn emits_kpi(self) -> bool {
        matches!(self, JobState::Training | JobState::Degraded | JobState::Hung)
    }

    pub fn is_running(self) -> bool {
        matches!(self, JobState::Training | JobState::Degraded)
    }
}
