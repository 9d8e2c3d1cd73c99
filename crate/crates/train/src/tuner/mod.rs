//! Pruned parallelism tuning: enumerate (TP, CP, EP, PP, VPP, MBS), derive
//! DP and gradient accumulation, prune by constraints and rank feasible
//! configurations by a calibrated cost model.

mod constraints;
mod model;
mod search;

pub use constraints::{default_space, prune, Constraint, ConstraintFile, Dim};
pub use model::{Calibration, CostModel, Estimate, MemoryModel, ModelShape, OpTable};
pub use search::{brute_force, search, write_csv, Ranked};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Calibration of a 64-layer, 64-expert MoE model measured on 16 accelerators.
pub const MOE_64L_CALIBRATION: &str = include_str!("../../data/moe-64l.toml");
/// Constraints found at small scale for that model.
pub const MOE_64L_CONSTRAINTS: &str = include_str!("../../data/topology.toml");

#[derive(Debug, Error, PartialEq)]
pub enum TunerError {
    #[error("{0} is not divisible")]
    NonDivisible(String),
    #[error("parameters must be positive: {0}")]
    NonPositive(String),
    #[error("no feasible configuration")]
    NoFeasibleConfig,
    #[error("empty search space")]
    EmptySpace,
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("constraints: {0}")]
    Constraints(String),
    #[error("io: {0}")]
    Io(String),
}

/// One point of the search space with its derived DP and accumulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParallelismConfig {
    pub tp: u32,
    pub cp: u32,
    pub ep: u32,
    pub pp: u32,
    pub vpp: u32,
    pub mbs: u32,
    pub dp: u32,
    pub accum: u32,
}

impl ParallelismConfig {
    pub fn get(&self, d: Dim) -> u32 {
        match d {
            Dim::Tp => self.tp,
            Dim::Cp => self.cp,
            Dim::Ep => self.ep,
            Dim::Pp => self.pp,
            Dim::Vpp => self.vpp,
            Dim::Mbs => self.mbs,
            Dim::Dp => self.dp,
            Dim::Accum => self.accum,
        }
    }

    /// Short label such as `TP1-CP1-EP8-PP8-VPP1-MBS1`.
    pub fn label(&self) -> String {
        format!("TP{}-CP{}-EP{}-PP{}-VPP{}-MBS{}", self.tp, self.cp, self.ep, self.pp, self.vpp, self.mbs)
    }
}

/// What is being trained and on how many accelerators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub accelerators: u32,
    /// Global batch in samples: a token batch divided by the sequence length.
    pub gbs_samples: u32,
    /// Manual per-stage layer counts, used for configs whose PP equals its
    /// length. Otherwise layers split evenly.
    #[serde(default)]
    pub stage_layers: Option<Vec<u32>>,
}

impl Workload {
    pub fn new(accelerators: u32, gbs_samples: u32) -> Self {
        Self { accelerators, gbs_samples, stage_layers: None }
    }

    /// Global batch in samples for a token budget.
    pub fn from_tokens(accelerators: u32, gbs_tokens: u64, seq_len: u32) -> Result<Self, TunerError> {
        if seq_len == 0 || gbs_tokens % seq_len as u64 != 0 {
            return Err(TunerError::NonDivisible(format!("{gbs_tokens} tokens by sequence length {seq_len}")));
        }
        let samples = u32::try_from(gbs_tokens / seq_len as u64)
            .map_err(|_| TunerError::NonPositive(format!("{gbs_tokens} tokens is too large")))?;
        Ok(Self::new(accelerators, samples))
    }
}

/// DP = N/(TP·CP·PP) and accum = GBS/(DP·MBS), both exact.
pub fn derive_dp(n: u32, tp: u32, cp: u32, pp: u32, gbs_samples: u32, mbs: u32) -> Result<(u32, u32), TunerError> {
    if [n, tp, cp, pp, gbs_samples, mbs].contains(&0) {
        return Err(TunerError::NonPositive(format!("n={n} tp={tp} cp={cp} pp={pp} gbs={gbs_samples} mbs={mbs}")));
    }
    let model = tp as u64 * cp as u64 * pp as u64;
    if n as u64 % model != 0 {
        return Err(TunerError::NonDivisible(format!("{n} accelerators by TP·CP·PP = {model}")));
    }
    let dp = (n as u64 / model) as u32;
    let per_step = dp as u64 * mbs as u64;
    if gbs_samples as u64 % per_step != 0 {
        return Err(TunerError::NonDivisible(format!("global batch {gbs_samples} by DP·MBS = {per_step}")));
    }
    Ok((dp, (gbs_samples as u64 / per_step) as u32))
}

/// Candidate values per dimension; the space is their product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Space {
    pub tp: Vec<u32>,
    pub cp: Vec<u32>,
    pub ep: Vec<u32>,
    pub pp: Vec<u32>,
    pub vpp: Vec<u32>,
    pub mbs: Vec<u32>,
}

impl Space {
    pub fn grid_size(&self) -> usize {
        [&self.tp, &self.cp, &self.ep, &self.pp, &self.vpp, &self.mbs].iter().map(|v| v.len()).product()
    }

    /// Structurally valid configs in lexicographic (TP, CP, EP, PP, VPP,
    /// MBS) order: DP and accum derive exactly, EP divides DP and the expert
    /// count, PP divides the layers (unless a manual stage split applies)
    /// and VPP divides the layers of every stage.
    pub fn enumerate(&self, shape: &ModelShape, w: &Workload) -> Vec<ParallelismConfig> {
        let mut out = Vec::new();
        for &tp in &self.tp {
            for &cp in &self.cp {
                for &ep in &self.ep {
                    for &pp in &self.pp {
                        for &vpp in &self.vpp {
                            for &mbs in &self.mbs {
                                let Ok((dp, accum)) = derive_dp(w.accelerators, tp, cp, pp, w.gbs_samples, mbs) else {
                                    continue;
                                };
                                let c = ParallelismConfig { tp, cp, ep, pp, vpp, mbs, dp, accum };
                                if valid(&c, shape, w) {
                                    out.push(c);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Layers held by each pipeline stage, or `None` if they cannot be split.
pub fn stage_layers(c: &ParallelismConfig, shape: &ModelShape, w: &Workload) -> Option<Vec<u32>> {
    if let Some(s) = w.stage_layers.as_ref().filter(|s| s.len() == c.pp as usize) {
        return (s.iter().sum::<u32>() == shape.layers && s.iter().all(|&l| l > 0)).then(|| s.clone());
    }
    (c.pp > 0 && shape.layers % c.pp == 0).then(|| vec![shape.layers / c.pp; c.pp as usize])
}

fn valid(c: &ParallelismConfig, shape: &ModelShape, w: &Workload) -> bool {
    if c.ep == 0 || c.vpp == 0 || c.dp % c.ep != 0 || shape.experts % c.ep != 0 {
        return false;
    }
    stage_layers(c, shape, w).is_some_and(|s| s.iter().all(|l| l % c.vpp == 0))
}

#[cfg(test)]
mod tests;
