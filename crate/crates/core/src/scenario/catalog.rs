use crate::sim::{ComponentClass, EffectMode, FaultModel, Manifestation};

/// A fault class with one variant the default rules recognise and one they
/// do not.
#[derive(Debug, Clone, PartialEq)]
pub struct Archetype {
    pub class: ComponentClass,
    pub known: FaultModel,
    pub unknown: FaultModel,
}

fn named(name: &str, class: ComponentClass, m: Manifestation) -> FaultModel {
    let mut f = FaultModel::new(class, m);
    f.name = name.to_string();
    f
}

fn persistent(mut f: FaultModel) -> FaultModel {
    f.persistent = true;
    f
}

pub fn archetypes() -> Vec<Archetype> {
    use ComponentClass::*;
    vec![
        Archetype {
            class: AcceleratorMemory,
            known: persistent(
                named("hbm-access-fault", AcceleratorMemory, Manifestation::Crash)
                    .with_log("driver-log", "Memory access fault by Node-{node} on address 0x{hex}")
                    .with_effect("accel_mem_ecc", EffectMode::Add, 40.0)
                    .known_as("accelerator-memory-fault"),
            ),
            unknown: persistent(
                named("hbm-row-remap-failure", AcceleratorMemory, Manifestation::Crash)
                    .with_log("driver-log", "amdgpu: HBM row remap failed, bank {hex} retired")
                    .with_effect("accel_mem_ecc", EffectMode::Add, 25.0),
            ),
        },
        Archetype {
            class: Interconnect,
            known: persistent(
                named("ib-link-down", Interconnect, Manifestation::Degrade(0.5))
                    .with_log("os-log", "mlx5_core 0000:{hex}: Port 1 link down")
                    .with_effect("ib_bw", EffectMode::Scale, 0.1)
                    .known_as("interconnect-link-down"),
            ),
            unknown: persistent(
                named("ib-symbol-errors", Interconnect, Manifestation::Degrade(0.55))
                    .with_log("os-log", "mlx5_core: excessive symbol errors on port 1 ({hex})")
                    .with_effect("ib_bw", EffectMode::Scale, 0.3),
            ),
        },
        Archetype {
            class: HostOs,
            known: named("soft-lockup", HostOs, Manifestation::Crash)
                .with_log("os-log", "watchdog: BUG: soft lockup - CPU#{hex} stuck for 22s")
                .known_as("host-soft-lockup"),
            unknown: named("kernel-panic", HostOs, Manifestation::Crash)
                .with_log("os-log", "Kernel panic - not syncing: Fatal exception in interrupt"),
        },
        Archetype {
            class: SilentHang,
            known: named("collective-hang", SilentHang, Manifestation::Hang).known_as("silent-hang"),
            unknown: named("dma-stall", SilentHang, Manifestation::Hang)
                .with_effect("accel_util", EffectMode::Set, 0.93)
                .with_effect("pcie_bw", EffectMode::Set, 0.0),
        },
        Archetype {
            class: ThroughputDegradation,
            known: named("clock-throttle", ThroughputDegradation, Manifestation::Degrade(0.6))
                .with_log("driver-log", "GPU clocks throttled: thermal slowdown on device {hex}")
                .known_as("clock-throttling"),
            unknown: named("power-brake", ThroughputDegradation, Manifestation::Degrade(0.65))
                .with_log("driver-log", "power brake asserted, slowdown factor {hex}")
                .with_effect("accel_mem_bw", EffectMode::Scale, 0.7),
        },
    ]
}

/// Looks up a variant by name or as `<class>/known` / `<class>/unknown`.
pub fn variant(spec: &str) -> Option<FaultModel> {
    let all = archetypes();
    if let Some((class, kind)) = spec.split_once('/') {
        let a = all.into_iter().find(|a| a.class.name() == class)?;
        return match kind {
            "known" => Some(a.known),
            "unknown" => Some(a.unknown),
            _ => None,
        };
    }
    all.into_iter().flat_map(|a| [a.known, a.unknown]).find(|f| f.name == spec)
}

/// Every variant with a rate such that the catalog totals
/// `rate_per_node_hour`, `unknown_share` of it on unknown variants.
pub fn rated_catalog(rate_per_node_hour: f64, unknown_share: f64) -> Vec<FaultModel> {
    let all = archetypes();
    let n = all.len() as f64;
    all.into_iter()
        .flat_map(|a| {
            [
                a.known.with_rate(rate_per_node_hour * (1.0 - unknown_share) / n),
                a.unknown.with_rate(rate_per_node_hour * unknown_share / n),
            ]
        })
        .collect()
}
