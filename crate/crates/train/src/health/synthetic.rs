//! Shape-mimicking synthetic inputs: norm profiles of healthy and collapsing
//! models, and per-rank step timings with injected noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{NormProfile, RankTimingTrace};

/// Norms rising with depth, each layer shaved by up to `max_dip` of its value.
pub fn rising_profile(iteration: u64, layers: usize, max_dip: f64, rng: &mut impl Rng) -> NormProfile {
    let growth = rng.random_range(0.5..2.0);
    let curve = rng.random_range(0.5..2.0);
    let norms = (0..layers)
        .map(|i| {
            let x = i as f64 / (layers - 1).max(1) as f64;
            let base = 1.0 + growth * x.powf(curve);
            let dip = if rng.random_bool(0.3) { rng.random_range(0.0..max_dip) } else { 0.0 };
            base * (1.0 - dip)
        })
        .collect();
    NormProfile::new(iteration, norms)
}

/// A rising profile with a smooth valley over the middle third of the
/// layers, `severity` being the relative depth at its center.
pub fn valley_profile(iteration: u64, layers: usize, severity: f64, rng: &mut impl Rng) -> NormProfile {
    let mut p = rising_profile(iteration, layers, 0.02, rng);
    let (lo, hi) = (layers as f64 / 3.0, 2.0 * layers as f64 / 3.0);
    for (i, n) in p.norms.iter_mut().enumerate() {
        let x = i as f64;
        if x > lo && x < hi {
            let phase = (x - lo) / (hi - lo) * std::f64::consts::PI;
            *n *= 1.0 - severity * phase.sin();
        }
    }
    p
}

/// Profiles sampled every `interval` iterations up to `end`. Healthy before
/// `onset`; from `onset` a valley that deepens linearly from `0.5` to `0.9`
/// relative severity at `end`.
pub fn collapse_stream(layers: usize, interval: u64, onset: u64, end: u64, seed: u64) -> Vec<NormProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=end / interval)
        .map(|k| {
            let it = k * interval;
            if it < onset {
                rising_profile(it, layers, 0.05, &mut rng)
            } else {
                let frac = (it - onset) as f64 / (end - onset).max(1) as f64;
                valley_profile(it, layers, 0.5 + 0.4 * frac, &mut rng)
            }
        })
        .collect()
}

/// A healthy stream with one valley profile at `glitch`.
pub fn glitch_stream(layers: usize, interval: u64, glitch: u64, end: u64, seed: u64) -> Vec<NormProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=end / interval)
        .map(|k| {
            let it = k * interval;
            if it == glitch {
                valley_profile(it, layers, 0.8, &mut rng)
            } else {
                rising_profile(it, layers, 0.05, &mut rng)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicNoise {
    pub rank: usize,
    pub every: usize,
    pub extra_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistentNoise {
    pub rank: usize,
    /// Relative slowdown, e.g. 0.08 for 8 %.
    pub slowdown: f64,
}

/// Synchronous data-parallel steps: every rank computes locally, then all
/// wait for the slowest before a fixed-cost collective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSim {
    pub ranks: usize,
    pub steps: usize,
    pub step_s: f64,
    pub jitter_s: f64,
    pub sync_s: f64,
    pub tokens_per_step: f64,
    pub periodic: Option<PeriodicNoise>,
    pub persistent: Option<PersistentNoise>,
}

impl Default for NoiseSim {
    fn default() -> Self {
        Self {
            ranks: 16,
            steps: 1000,
            step_s: 1.0,
            jitter_s: 0.002,
            sync_s: 0.05,
            tokens_per_step: 4.0e6,
            periodic: None,
            persistent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRun {
    pub trace: RankTimingTrace,
    /// Tokens per second of each synchronized step.
    pub throughput: Vec<f64>,
}

impl NoiseSim {
    /// The same cluster with both noise sources removed.
    pub fn suppressed(&self) -> Self {
        Self { periodic: None, persistent: None, ..self.clone() }
    }

    pub fn simulate(&self, seed: u64) -> NoiseRun {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = Normal::new(0.0, self.jitter_s).expect("finite jitter");
        let phase = self.periodic.map_or(0, |p| rng.random_range(0..p.every.max(1)));
        let mut ranks = vec![Vec::with_capacity(self.steps); self.ranks];
        for s in 0..self.steps {
            for (r, row) in ranks.iter_mut().enumerate() {
                let mut d = self.step_s;
                if let Some(p) = self.persistent.filter(|p| p.rank == r) {
                    d *= 1.0 + p.slowdown;
                }
                if let Some(p) = self.periodic.filter(|p| p.rank == r && (s + phase) % p.every == 0) {
                    d += p.extra_s;
                }
                row.push((d + jitter.sample(&mut rng)).max(self.step_s * 0.01));
            }
        }
        let throughput = (0..self.steps)
            .map(|s| {
                let slowest = ranks.iter().map(|row| row[s]).fold(0.0, f64::max);
                self.tokens_per_step / (slowest + self.sync_s)
            })
            .collect();
        NoiseRun { trace: RankTimingTrace { ranks }, throughput }
    }
}

/// A noisy cluster with one periodic and one persistent straggler on
/// distinct ranks, parameters drawn from `seed`.
pub fn two_straggler_sim(seed: u64) -> NoiseSim {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ranks = rng.random_range(8..=32);
    let periodic = rng.random_range(0..ranks);
    let persistent = (periodic + rng.random_range(1..ranks)) % ranks;
    let slowdown = rng.random_range(0.08..0.15);
    let every = rng.random_range(20..=80);
    // spikes must stand out above the persistent straggler or the slowest
    // rank hides them from throughput
    let extra_s = slowdown + rng.random_range(0.08..0.25);
    NoiseSim {
        ranks,
        periodic: Some(PeriodicNoise { rank: periodic, every, extra_s }),
        persistent: Some(PersistentNoise { rank: persistent, slowdown }),
        ..NoiseSim::default()
    }
}
