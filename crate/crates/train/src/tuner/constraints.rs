use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Calibration, ParallelismConfig, Space, TunerError, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dim {
    Tp,
    Cp,
    Ep,
    Pp,
    Vpp,
    Mbs,
    Dp,
    Accum,
}

/// A pure predicate over a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConstraint", into = "RawConstraint")]
pub enum Constraint {
    OneOf(Dim, Vec<u32>),
    Range {
        dim: Dim,
        min: Option<u32>,
        max: Option<u32>,
    },
    /// Fits in accelerator memory under the calibration's memory model.
    FitsMemory,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<Dim>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    memory: Option<bool>,
}

impl TryFrom<RawConstraint> for Constraint {
    type Error = String;

    fn try_from(r: RawConstraint) -> Result<Self, String> {
        match (r.dim, r.values, r.min, r.max, r.memory) {
            (None, None, None, None, Some(true)) => Ok(Constraint::FitsMemory),
            (Some(d), Some(v), None, None, None) => Ok(Constraint::OneOf(d, v)),
            (Some(dim), None, min, max, None) if min.is_some() || max.is_some() => {
                Ok(Constraint::Range { dim, min, max })
            }
            _ => Err("a constraint is `memory = true`, `dim` with `values`, or `dim` with `min`/`max`".into()),
        }
    }
}

impl From<Constraint> for RawConstraint {
    fn from(c: Constraint) -> Self {
        match c {
            Constraint::OneOf(d, v) => RawConstraint { dim: Some(d), values: Some(v), ..Default::default() },
            Constraint::Range { dim, min, max } => RawConstraint { dim: Some(dim), min, max, ..Default::default() },
            Constraint::FitsMemory => RawConstraint { memory: Some(true), ..Default::default() },
        }
    }
}

impl Constraint {
    pub fn holds(&self, c: &ParallelismConfig, cal: &Calibration, w: &Workload) -> bool {
        match self {
            Constraint::OneOf(d, v) => v.contains(&c.get(*d)),
            Constraint::Range { dim, min, max } => {
                let x = c.get(*dim);
                min.is_none_or(|m| x >= m) && max.is_none_or(|m| x <= m)
            }
            Constraint::FitsMemory => cal.estimate(c, w).is_some_and(|e| e.feasible),
        }
    }
}

/// Configs satisfying every constraint, in their original order.
pub fn prune(
    configs: &[ParallelismConfig],
    constraints: &[Constraint],
    cal: &Calibration,
    w: &Workload,
) -> Vec<ParallelismConfig> {
    configs.iter().filter(|c| constraints.iter().all(|k| k.holds(c, cal, w))).copied().collect()
}

/// Search space and constraints, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFile {
    #[serde(default = "default_space")]
    pub space: Space,
    #[serde(default)]
    pub constraint: Vec<Constraint>,
}

impl Default for ConstraintFile {
    fn default() -> Self {
        Self { space: default_space(), constraint: Vec::new() }
    }
}

/// Powers of two commonly worth trying on one to a few thousand
/// accelerators.
pub fn default_space() -> Space {
    Space {
        tp: vec![1, 2, 4, 8],
        cp: vec![1, 2],
        ep: vec![1, 2, 4, 8, 16],
        pp: vec![1, 2, 4, 8, 16],
        vpp: vec![1, 2, 4],
        mbs: vec![1, 2, 4, 8],
    }
}

impl ConstraintFile {
    pub fn from_toml(s: &str) -> Result<Self, TunerError> {
        toml::from_str(s).map_err(|e| TunerError::Constraints(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TunerError> {
        let s = std::fs::read_to_string(path).map_err(|e| TunerError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("constraints serialize")
    }
}
