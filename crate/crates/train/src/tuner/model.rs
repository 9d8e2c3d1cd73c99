use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{stage_layers, ParallelismConfig, TunerError, Workload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub layers: u32,
    pub experts: u32,
    pub seq_len: u32,
}

/// Per-accelerator memory in GB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryModel {
    pub capacity_gb: f64,
    /// Attention and other dense weights of one layer, sharded by TP.
    pub dense_gb_per_layer: f64,
    /// Expert weights of one layer, sharded by EP·TP.
    pub expert_gb_per_layer: f64,
    /// Embedding and output head, held by the first and last stage.
    pub embedding_gb: f64,
    /// Gradient bytes per parameter byte.
    pub grad_multiplier: f64,
    /// Optimizer-state bytes per parameter byte.
    pub optimizer_multiplier: f64,
    /// Shards optimizer state across DP.
    pub distributed_optimizer: bool,
    /// Activations of one sample through one layer, sharded by TP·CP.
    pub activation_gb_per_sample_layer: f64,
    /// Fraction of activations kept; below 1 models selective recompute.
    pub recompute_factor: f64,
}

/// Measured values keyed by subgroup size. A size between two keys takes
/// the value of the largest key below it; sizes below every key take the
/// smallest key's value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpTable(pub BTreeMap<u32, f64>);

impl OpTable {
    pub fn at(&self, size: u32) -> f64 {
        self.0.range(..=size).next_back().or_else(|| self.0.iter().next()).map_or(0.0, |(_, v)| *v)
    }

    pub fn zeroed(&self) -> Self {
        OpTable(self.0.keys().map(|&k| (k, 0.0)).collect())
    }
}

impl Serialize for OpTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<String, f64> = self.0.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for OpTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = BTreeMap::<String, f64>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (k, v) in m {
            let size: u32 = k.parse().map_err(|_| serde::de::Error::custom(format!("subgroup size {k:?}")))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(serde::de::Error::custom(format!("value for size {k} must be finite and >= 0")));
            }
            out.insert(size, v);
        }
        Ok(OpTable(out))
    }
}

/// Per-operator times in seconds, measured at small scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Fixed cost per layer per microbatch.
    pub launch_s: f64,
    /// Forward and backward compute of one sample through one layer.
    pub layer_compute_s: f64,
    /// Slowdown of TP-sharded compute relative to perfect scaling.
    pub tp_efficiency: OpTable,
    /// Per sample per layer.
    pub tp_comm_s: OpTable,
    pub cp_comm_s: OpTable,
    pub ep_comm_s: OpTable,
    /// Per sample per pipeline chunk boundary.
    pub pp_p2p_s: OpTable,
    /// Gradient all-reduce per GB of local gradients.
    pub dp_allreduce_s_per_gb: OpTable,
}

impl CostModel {
    pub fn without_communication(&self) -> Self {
        Self {
            tp_comm_s: self.tp_comm_s.zeroed(),
            cp_comm_s: self.cp_comm_s.zeroed(),
            ep_comm_s: self.ep_comm_s.zeroed(),
            pp_p2p_s: self.pp_p2p_s.zeroed(),
            dp_allreduce_s_per_gb: self.dp_allreduce_s_per_gb.zeroed(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub model: ModelShape,
    pub memory: MemoryModel,
    pub cost: CostModel,
}

impl Calibration {
    pub fn from_toml(s: &str) -> Result<Self, TunerError> {
        let c: Calibration = toml::from_str(s).map_err(|e| TunerError::Calibration(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, TunerError> {
        let s = std::fs::read_to_string(path).map_err(|e| TunerError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration serializes")
    }

    fn check(&self) -> Result<(), TunerError> {
        let m = &self.memory;
        let c = &self.cost;
        if self.model.layers == 0 || self.model.experts == 0 || self.model.seq_len == 0 {
            return Err(TunerError::Calibration("model dimensions must be positive".into()));
        }
        let nonneg = [
            m.capacity_gb,
            m.dense_gb_per_layer,
            m.expert_gb_per_layer,
            m.embedding_gb,
            m.grad_multiplier,
            m.optimizer_multiplier,
            m.activation_gb_per_sample_layer,
            m.recompute_factor,
            c.launch_s,
            c.layer_compute_s,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(TunerError::Calibration("memory and cost values must be finite and >= 0".into()));
        }
        if c.layer_compute_s <= 0.0 || c.tp_efficiency.0.is_empty() {
            return Err(TunerError::Calibration("layer_compute_s and tp_efficiency are required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub step_time_s: f64,
    pub time_per_sample_s: f64,
    /// (PP−1)/(PP·VPP·accum).
    pub bubble_fraction: f64,
    /// Peak over pipeline stages.
    pub memory_gb: f64,
    pub feasible: bool,
}

impl Calibration {
    /// Static and activation memory of the most loaded stage.
    pub fn memory_gb(&self, c: &ParallelismConfig, stages: &[u32]) -> f64 {
        let m = &self.memory;
        let (tp, cp, ep) = (c.tp as f64, c.cp as f64, c.ep as f64);
        let inflight = c.pp.min(c.accum) as f64;
        let interleave = if c.vpp > 1 { 1.0 + (c.pp as f64 - 1.0) / (c.pp as f64 * c.vpp as f64) } else { 1.0 };
        let opt_shard = if m.distributed_optimizer { c.dp as f64 } else { 1.0 };
        let last = stages.len() - 1;
        stages
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let l = l as f64;
                let mut params = l * (m.dense_gb_per_layer / tp + m.expert_gb_per_layer / (ep * tp));
                if i == 0 || i == last {
                    params += m.embedding_gb / tp;
                }
                let fixed = params * (1.0 + m.grad_multiplier) + params * m.optimizer_multiplier / opt_shard;
                let act = m.activation_gb_per_sample_layer * c.mbs as f64 * l / (tp * cp)
                    * m.recompute_factor
                    * inflight
                    * interleave;
                fixed + act
            })
            .fold(0.0, f64::max)
    }

    /// Additive compute and communication per microbatch on the slowest
    /// stage, stretched by the interleaved 1F1B bubble, plus the gradient
    /// all-reduce.
    pub fn estimate(&self, c: &ParallelismConfig, w: &Workload) -> Option<Estimate> {
        let stages = stage_layers(c, &self.model, w)?;
        let k = &self.cost;
        let mbs = c.mbs as f64;
        let per_layer = k.launch_s
            + mbs
                * (k.layer_compute_s * k.tp_efficiency.at(c.tp) / (c.tp as f64 * c.cp as f64)
                    + k.tp_comm_s.at(c.tp)
                    + k.cp_comm_s.at(c.cp)
                    + k.ep_comm_s.at(c.ep));
        let boundary = if c.pp > 1 { mbs * k.pp_p2p_s.at(c.pp) * c.vpp as f64 } else { 0.0 };
        let slowest = stages.iter().map(|&l| l as f64 * per_layer + boundary).fold(0.0, f64::max);
        let bubble = (c.pp as f64 - 1.0) / (c.pp as f64 * c.vpp as f64 * c.accum as f64);
        let m = &self.memory;
        let grads_gb = stages
            .iter()
            .map(|&l| l as f64 * (m.dense_gb_per_layer / c.tp as f64 + m.expert_gb_per_layer / (c.ep * c.tp) as f64))
            .fold(0.0, f64::max)
            * m.grad_multiplier;
        let step = c.accum as f64 * slowest * (1.0 + bubble) + k.dp_allreduce_s_per_gb.at(c.dp) * grads_gb;
        let memory_gb = self.memory_gb(c, &stages);
        Some(Estimate {
            step_time_s: step,
            time_per_sample_s: step / w.gbs_samples as f64,
            bubble_fraction: bubble,
            memory_gb,
            feasible: memory_gb <= m.capacity_gb,
        })
    }
}
