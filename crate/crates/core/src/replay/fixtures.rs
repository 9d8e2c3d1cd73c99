use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bundle, BundleManifest, DiagnosisRequest, LearnRequest};
use crate::anomaly::{DiagnosisConfig, DiagnosisContext};
use crate::kb::{Label, LabeledIncident};
use crate::telemetry::{Snapshot, Source, TelemetrySample};
use crate::{Millis, NodeId, MS_PER_MIN};

const FAULT_LINE: &str = "Memory access fault by Node-9";

fn fault_line(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{FAULT_LINE} (Agent handle: 0x{:x}) on address 0x{:x}. Reason: Unknown.",
        rng.random_range(0x1000u64..0xffff_ffff),
        rng.random_range(0x1000u64..0xffff_ffff_ffff)
    )
}

#[derive(Clone, Copy, PartialEq)]
enum MemCase {
    /// Faulty DRAM on one node; every rank of the job crashes with the fault line.
    Hardware,
    /// A bad pointer in user code: the same crash text, healthy DRAM.
    User,
    /// Correctable-error burst that does not crash anything.
    Benign,
    Quiet,
}

fn memory_incident(id: &str, case: MemCase, rng: &mut ChaCha8Rng) -> LabeledIncident {
    const NODES: u32 = 8;
    const TICKS: u64 = 10;
    let schema = [
        ("dram_ecc_corrected".to_string(), Source::Accelerator),
        ("accel_temp".to_string(), Source::Accelerator),
        ("driver-log".to_string(), Source::DriverLog),
    ];
    let mut snap = Snapshot::new(schema);
    let hot = NodeId(rng.random_range(0..NODES));
    let crashed: Vec<NodeId> = match case {
        MemCase::Hardware | MemCase::User => {
            let mut v: Vec<NodeId> = (0..NODES).map(NodeId).filter(|_| rng.random_bool(0.5)).collect();
            if case == MemCase::Hardware && !v.contains(&hot) {
                v.push(hot);
            }
            if v.is_empty() {
                v.push(hot);
            }
            v
        }
        _ => Vec::new(),
    };
    for tick in 0..TICKS {
        let t = tick * MS_PER_MIN;
        for n in (0..NODES).map(NodeId) {
            let mut ecc = rng.random_range(0.0..2.0f64).floor();
            if n == hot && tick >= 6 && matches!(case, MemCase::Hardware | MemCase::Benign) {
                ecc += rng.random_range(40.0..90.0f64).floor();
            }
            let temp = 60.0 + rng.random_range(-4.0..4.0);
            snap.push(TelemetrySample::number("dram_ecc_corrected", t, n, None, ecc));
            snap.push(TelemetrySample::number("accel_temp", t, n, None, temp));
            if crashed.contains(&n) && tick == 8 {
                snap.push(TelemetrySample::line("driver-log", t + 30_000, n, None, fault_line(rng)));
            }
        }
    }
    let (label, gt) = match case {
        MemCase::Hardware => (Label::HardwareFault, Some(hot)),
        MemCase::User => (Label::UserError, None),
        MemCase::Benign | MemCase::Quiet => (Label::Healthy, None),
    };
    LabeledIncident {
        id: id.to_string(),
        label,
        ground_truth: gt,
        fault_class: (case == MemCase::Hardware).then(|| "memory-fault".to_string()),
        nodes: (0..NODES).map(NodeId).collect(),
        since: 0,
        at: (TICKS - 1) * MS_PER_MIN,
        snapshot: snap,
    }
}

/// A hardware memory fault whose crash text also appears in user-code
/// crashes, with history of both plus benign correctable-error bursts.
/// Neither the log line nor the DRAM counter alone separates the classes.
pub fn memory_fault_bundle(seed: u64) -> Bundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let incident = memory_incident("memfault-000", MemCase::Hardware, &mut rng);
    let mut corpus = vec![incident.clone()];
    for i in 1..12 {
        corpus.push(memory_incident(&format!("memfault-{i:03}"), MemCase::Hardware, &mut rng));
    }
    for (prefix, case) in [("user", MemCase::User), ("benign", MemCase::Benign), ("quiet", MemCase::Quiet)] {
        for i in 0..12 {
            corpus.push(memory_incident(&format!("{prefix}-{i:03}"), case, &mut rng));
        }
    }
    let manifest = BundleManifest {
        diagnosis: None,
        learn: Some(LearnRequest {
            rule_id: "memory-fault-learned".into(),
            fault_class: Some("memory-fault".into()),
            contrast: 3,
            seed,
        }),
    };
    Bundle { manifest, incident, corpus }
}

/// Loss went to NaN on a 16-node job. Seven nodes show elevated ECC
/// activity; one of them started earliest and keeps logging page
/// retirements. Returns the bundle and the faulty node.
pub fn converging_diagnosis_bundle(seed: u64) -> (Bundle, NodeId) {
    const NODES: u32 = 16;
    const MINUTES: u64 = 60;
    const ONSET: u64 = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = (0..NODES).collect();
    let mut elevated = Vec::new();
    for _ in 0..7 {
        elevated.push(NodeId(ids.swap_remove(rng.random_range(0..ids.len()))));
    }
    let culprit = elevated[0];
    let schema = [("hbm_ecc_rate".to_string(), Source::Accelerator), ("driver-log".to_string(), Source::DriverLog)];
    let mut snap = Snapshot::new(schema);
    for m in 0..MINUTES {
        let t: Millis = m * MS_PER_MIN;
        for n in (0..NODES).map(NodeId) {
            let onset = if n == culprit { ONSET } else { ONSET + 5 };
            let mut v = 2.0 + rng.random_range(-0.3..0.3);
            if elevated.contains(&n) && m >= onset {
                v += rng.random_range(35.0..45.0);
            }
            snap.push(TelemetrySample::number("hbm_ecc_rate", t, n, None, v));
            if n == culprit && m > ONSET && m % 2 == 1 {
                let line = format!(
                    "page retirement pending on HBM stack {} row 0x{:x}",
                    m % 4,
                    rng.random_range(0x100u32..0xffff)
                );
                snap.push(TelemetrySample::line("driver-log", t + 17_000, n, None, line));
            }
        }
    }
    let nodes: Vec<NodeId> = (0..NODES).map(NodeId).collect();
    let incident = LabeledIncident {
        id: "nan-loss".into(),
        label: Label::HardwareFault,
        ground_truth: Some(culprit),
        fault_class: None,
        nodes: nodes.clone(),
        since: 0,
        at: MINUTES * MS_PER_MIN - 1,
        snapshot: snap,
    };
    let context = DiagnosisContext {
        nodes,
        t0: ONSET * MS_PER_MIN,
        t1: MINUTES * MS_PER_MIN,
        sub_window: 5 * MS_PER_MIN,
        history: (0, ONSET * MS_PER_MIN),
    };
    let manifest = BundleManifest {
        diagnosis: Some(DiagnosisRequest { context, config: DiagnosisConfig::default() }),
        learn: None,
    };
    (Bundle { manifest, incident, corpus: Vec::new() }, culprit)
}
