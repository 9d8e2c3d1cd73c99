//! Deterministic discrete-event simulator of nodes, faults and synchronous
//! training jobs.

mod engine;
mod event;
mod model;
pub mod mtbf;

pub use engine::{ActiveFault, Job, Node, NodeHealth, Recovery, Simulator, DRIVER_LOG};
pub use event::{EventKind, SimEvent};
pub use model::{
    ComponentClass, DutyCycle, EffectMode, FaultModel, JobSpec, JobState, Level, LogEmission, Manifestation,
    MetricEffect, NodeState, NoiseConfig, SimConfig,
};

use thiserror::Error;

use crate::{JobId, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("duration must be positive")]
    InvalidDuration,
    #[error("need {needed} validated available nodes, have {available}")]
    InsufficientCapacity { needed: usize, available: usize },
    #[error("no spare capacity to recover {0}")]
    NoSpareCapacity(JobId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error("illegal transition {from:?} -> {to:?} on {node}")]
    IllegalTransition { node: NodeId, from: NodeState, to: NodeState },
    #[error("{job} cannot be recovered from state {state:?}")]
    NotRecoverable { job: JobId, state: JobState },
    #[error("fault time {0} is in the past")]
    PastTime(u64),
}
