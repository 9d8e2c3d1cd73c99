//! Training-side tooling: cross-backend numerical validation, training
//! health analysis and parallelism tuning.

pub mod health;
pub mod numerics;
pub mod tuner;
