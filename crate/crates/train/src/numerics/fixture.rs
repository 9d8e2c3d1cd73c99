//! Synthetic trace pairs with prescribed similarities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{TraceKind, TraceSet};

/// Module, kind and target minimum cosine for a cross-backend comparison of
/// a small MoE transformer; Bias-Dropout-Add has no parameters.
pub const STACK_DIVERGENCE: [(&str, TraceKind, f64); 11] = [
    ("Attention", TraceKind::Outputs, 0.9998),
    ("Attention", TraceKind::Parameters, 0.1626),
    ("Attention", TraceKind::Gradients, 0.5815),
    ("Bias-Dropout-Add", TraceKind::Outputs, 0.9309),
    ("Bias-Dropout-Add", TraceKind::Gradients, 0.9000),
    ("Embedding", TraceKind::Outputs, 0.8995),
    ("Embedding", TraceKind::Parameters, 0.9993),
    ("Embedding", TraceKind::Gradients, 0.9142),
    ("MoE", TraceKind::Outputs, 0.9998),
    ("MoE", TraceKind::Parameters, 0.9994),
    ("MoE", TraceKind::Gradients, 0.9484),
];

const FIXTURE_LEN: usize = 512;

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A vector with the norm of `a` at cosine `c` from it.
fn at_cosine(rng: &mut ChaCha8Rng, a: &[f64], c: f64) -> Vec<f64> {
    let na = dot(a, a).sqrt();
    let mut u = normal_vec(rng, a.len());
    let k = dot(&u, a) / (na * na);
    u.iter_mut().zip(a).for_each(|(x, y)| *x -= k * y);
    let nu = dot(&u, &u).sqrt();
    let s = (1.0 - c * c).max(0.0).sqrt();
    a.iter().zip(&u).map(|(x, y)| c * x + s * na * y / nu).collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Reference and candidate sets where each listed entry's per-step cosine
/// falls linearly from 1 towards its target, reaching it at the last step,
/// like an error that accumulates over optimizer steps.
pub fn with_targets(targets: &[(&str, TraceKind, f64)], steps: usize, len: usize, seed: u64) -> (TraceSet, TraceSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut reference, mut candidate) = (TraceSet::new(), TraceSet::new());
    for &(module, kind, target) in targets {
        for s in 1..=steps {
            let a = normal_vec(&mut rng, len);
            let c = 1.0 - (1.0 - target) * s as f64 / steps as f64;
            let b = at_cosine(&mut rng, &a, c);
            reference.push(module, kind, s as u32, to_f32(&a)).expect("generated traces are well formed");
            candidate.push(module, kind, s as u32, to_f32(&b)).expect("generated traces are well formed");
        }
    }
    (reference, candidate)
}

/// The cross-backend comparison fixture over [`STACK_DIVERGENCE`].
pub fn stack_divergence() -> (TraceSet, TraceSet) {
    with_targets(&STACK_DIVERGENCE, super::DEFAULT_STEPS, FIXTURE_LEN, 7)
}

/// Random traces for every module in `modules` and every kind.
pub fn random_set(modules: &[&str], steps: usize, len: usize, seed: u64) -> TraceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = TraceSet::new();
    for m in modules {
        for k in TraceKind::ALL {
            for s in 1..=steps {
                set.push(m, k, s as u32, to_f32(&normal_vec(&mut rng, len))).expect("generated traces are well formed");
            }
        }
    }
    set
}

/// Copy of `set` with Gaussian noise of relative norm `rel` added to every
/// step of `module`/`kind`.
pub fn perturbed(set: &TraceSet, module: &str, kind: TraceKind, rel: f64, seed: u64) -> TraceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = set.clone();
    if let Some(t) = out.get_mut(module, kind) {
        for v in &mut t.steps {
            let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let scale = rel * norm / (v.len().max(1) as f64).sqrt();
            for x in v.iter_mut() {
                *x += (scale * rng.sample::<f64, _>(StandardNormal)) as f32;
            }
        }
    }
    out
}
