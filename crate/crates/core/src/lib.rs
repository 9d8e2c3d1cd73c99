//! Reliability control plane for simulated training clusters: a discrete-event
//! cluster simulator, telemetry store, anomaly isolation, a failure-signature
//! knowledge base, node remediation and operational KPI reports.

pub mod anomaly;
mod ids;
pub mod kb;
pub mod kpi;
pub mod remediation;
pub mod replay;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod telemetry;

pub use ids::*;
