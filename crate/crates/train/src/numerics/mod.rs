//! Cross-backend numerical validation: module traces from a reference and a
//! candidate backend are compared by their minimum cosine similarity over
//! optimizer steps.

pub mod fixture;
mod trace;

pub use trace::{ModuleTrace, TraceKind, TraceSet, MAGIC};

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_THRESHOLD: f64 = 0.99;
pub const DEFAULT_STEPS: usize = 10;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("trace schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("trace format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.c
    }
}

/// Cosine similarity a·b / (‖a‖‖b‖).
///
/// Products of two f32 values are exact in f64; the three sums are
/// compensated. Two zero vectors give 1.0, exactly one gives 0.0.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, NumericsError> {
    if a.len() != b.len() {
        return Err(NumericsError::LengthMismatch { left: a.len(), right: b.len() });
    }
    let (mut ab, mut aa, mut bb) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        if !x.is_finite() || !y.is_finite() {
            return Err(NumericsError::NonFinite(format!("index {i}")));
        }
        let (x, y) = (x as f64, y as f64);
        ab.add(x * y);
        aa.add(x * x);
        bb.add(y * y);
    }
    let (aa, bb) = (aa.total(), bb.total());
    Ok(match (aa == 0.0, bb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        // f32 inputs keep aa·bb far from f64 overflow
        _ => (ab.total() / (aa * bb).sqrt()).clamp(-1.0, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub steps: usize,
    pub threshold: f64,
    /// Per-module thresholds that replace `threshold`.
    pub overrides: BTreeMap<String, f64>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { steps: DEFAULT_STEPS, threshold: DEFAULT_THRESHOLD, overrides: BTreeMap::new() }
    }
}

impl CompareOptions {
    pub fn threshold_for(&self, module: &str) -> f64 {
        self.overrides.get(module).copied().unwrap_or(self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub module: String,
    pub kind: TraceKind,
    pub min_cosine: f64,
    /// 1-based step where the minimum occurs (first one on ties).
    pub worst_step: usize,
    pub threshold: f64,
    pub abnormal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub steps: usize,
    /// Abnormal entries first, then module and kind order.
    pub entries: Vec<Comparison>,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn abnormal(&self) -> impl Iterator<Item = &Comparison> {
        self.entries.iter().filter(|e| e.abnormal)
    }

    pub fn get(&self, module: &str, kind: TraceKind) -> Option<&Comparison> {
        self.entries.iter().find(|e| e.module == module && e.kind == kind)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<(), NumericsError> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| NumericsError::Format(e.to_string());
        out.write_record(["module", "kind", "min_cosine", "worst_step", "threshold", "abnormal"]).map_err(csv_err)?;
        for e in &self.entries {
            out.write_record([
                e.module.clone(),
                e.kind.name().to_string(),
                format!("{:.6}", e.min_cosine),
                e.worst_step.to_string(),
                e.threshold.to_string(),
                e.abnormal.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Module × kind grid at 4 dp; `-` where a kind is absent, `*` marks
    /// abnormal values.
    pub fn grid(&self, modules: &[String]) -> String {
        let mut s = String::from("module,outputs,parameters,gradients\n");
        for m in modules {
            s.push_str(m);
            for k in TraceKind::ALL {
                s.push(',');
                match self.get(m, k) {
                    Some(e) => {
                        s.push_str(&format!("{:.4}", e.min_cosine));
                        if e.abnormal {
                            s.push('*');
                        }
                    }
                    None => s.push('-'),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Compares the first `opts.steps` steps of every (module, kind) pair.
/// Both sets must hold the same pairs with the same vector lengths.
pub fn compare_traces(
    reference: &TraceSet,
    candidate: &TraceSet,
    opts: &CompareOptions,
) -> Result<ComparisonReport, NumericsError> {
    if opts.steps == 0 {
        return Err(NumericsError::SchemaMismatch("at least one step must be compared".into()));
    }
    let keys = |s: &TraceSet| s.iter().map(|t| (t.module.clone(), t.kind)).collect::<std::collections::BTreeSet<_>>();
    let (kr, kc) = (keys(reference), keys(candidate));
    if kr != kc {
        let diff: Vec<String> = kr.symmetric_difference(&kc).map(|(m, k)| format!("{m}/{}", k.name())).collect();
        return Err(NumericsError::SchemaMismatch(format!("unmatched entries: {}", diff.join(", "))));
    }
    let mut entries = Vec::new();
    for r in reference.iter() {
        let c = candidate.get(&r.module, r.kind).expect("key sets match");
        let label = format!("{}/{}", r.module, r.kind.name());
        if r.len() != c.len() {
            return Err(NumericsError::SchemaMismatch(format!("{label}: length {} vs {}", r.len(), c.len())));
        }
        if r.steps.len() < opts.steps || c.steps.len() < opts.steps {
            return Err(NumericsError::SchemaMismatch(format!(
                "{label}: {} and {} steps, need {}",
                r.steps.len(),
                c.steps.len(),
                opts.steps
            )));
        }
        let mut min = f64::INFINITY;
        let mut worst = 0;
        for s in 0..opts.steps {
            let v = cosine(&r.steps[s], &c.steps[s])?;
            if v < min {
                min = v;
                worst = s + 1;
            }
        }
        let threshold = opts.threshold_for(&r.module);
        entries.push(Comparison {
            module: r.module.clone(),
            kind: r.kind,
            min_cosine: min,
            worst_step: worst,
            threshold,
            abnormal: min < threshold,
        });
    }
    entries.sort_by_key(|e| !e.abnormal);
    let pass = entries.iter().all(|e| !e.abnormal);
    Ok(ComparisonReport { steps: opts.steps, entries, pass })
}
