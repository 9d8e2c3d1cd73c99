use serde::{Deserialize, Serialize};

use super::HealthError;

pub const DEFAULT_VALLEY_THRESHOLD: f64 = 0.25;
pub const DEFAULT_PERSISTENCE: usize = 3;

/// Layer-wise averaged MoE parameter norms at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormProfile {
    pub iteration: u64,
    pub norms: Vec<f64>,
}

impl NormProfile {
    pub fn new(iteration: u64, norms: Vec<f64>) -> Self {
        Self { iteration, norms }
    }

    pub fn check(&self) -> Result<(), HealthError> {
        if self.norms.len() < 3 {
            return Err(HealthError::DegenerateProfile(self.norms.len()));
        }
        if let Some(i) = self.norms.iter().position(|n| !(n.is_finite() && *n > 0.0)) {
            return Err(HealthError::NonPositive(format!("iteration {} layer {}", self.iteration, i + 1)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValleyReport {
    /// Deepest dip below the lower of the two side maxima, over the mean norm.
    pub depth: f64,
    /// 1-based layer of the deepest dip; `None` when depth is 0.
    pub layer: Option<usize>,
    pub flagged: bool,
}

/// depth = max over interior j of [min(max_{i<j} n_i, max_{k>j} n_k) − n_j]⁺ / mean(n).
/// Ties keep the shallowest layer.
pub fn valley_score(profile: &NormProfile, threshold: f64) -> Result<ValleyReport, HealthError> {
    profile.check()?;
    let n = &profile.norms;
    let l = n.len();
    let mut suffix = vec![f64::NEG_INFINITY; l];
    for j in (0..l - 1).rev() {
        suffix[j] = suffix[j + 1].max(n[j + 1]);
    }
    let mean = n.iter().sum::<f64>() / l as f64;
    let (mut best, mut layer) = (0.0, None);
    let mut prefix = n[0];
    for j in 1..l - 1 {
        let dip = (prefix.min(suffix[j]) - n[j]).max(0.0);
        if dip > best {
            best = dip;
            layer = Some(j + 1);
        }
        prefix = prefix.max(n[j]);
    }
    let depth = best / mean;
    Ok(ValleyReport { depth, layer, flagged: depth > threshold })
}

/// Streaming collapse alarm: fires once, at the profile that completes
/// `persistence` consecutive flagged profiles.
#[derive(Debug, Clone)]
pub struct CollapseMonitor {
    threshold: f64,
    persistence: usize,
    run: usize,
    alarm: Option<u64>,
}

impl CollapseMonitor {
    pub fn new(threshold: f64, persistence: usize) -> Self {
        Self { threshold, persistence: persistence.max(1), run: 0, alarm: None }
    }

    /// Returns the alarm iteration the first time it fires.
    pub fn push(&mut self, profile: &NormProfile) -> Result<Option<u64>, HealthError> {
        let r = valley_score(profile, self.threshold)?;
        if self.alarm.is_some() {
            return Ok(None);
        }
        self.run = if r.flagged { self.run + 1 } else { 0 };
        if self.run >= self.persistence {
            self.alarm = Some(profile.iteration);
            return Ok(self.alarm);
        }
        Ok(None)
    }

    pub fn alarm(&self) -> Option<u64> {
        self.alarm
    }
}

/// First alarm iteration over a stream in iteration order.
pub fn monitor_collapse<'a>(
    profiles: impl IntoIterator<Item = &'a NormProfile>,
    persistence: usize,
    threshold: f64,
) -> Result<Option<u64>, HealthError> {
    let mut m = CollapseMonitor::new(threshold, persistence);
    let mut last = None;
    for p in profiles {
        if last.is_some_and(|it| p.iteration <= it) {
            return Err(HealthError::OutOfOrder(p.iteration));
        }
        last = Some(p.iteration);
        if let Some(at) = m.push(p)? {
            return Ok(Some(at));
        }
    }
    Ok(None)
}
