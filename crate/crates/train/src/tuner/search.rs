use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{derive_dp, Calibration, Constraint, Estimate, ParallelismConfig, Space, TunerError, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ranked {
    pub config: ParallelismConfig,
    pub estimate: Estimate,
}

/// Faster first; ties prefer smaller PP, then larger MBS, then the
/// lexicographically smaller config.
fn rank_order(a: &Ranked, b: &Ranked) -> Ordering {
    a.estimate
        .step_time_s
        .total_cmp(&b.estimate.step_time_s)
        .then(a.config.pp.cmp(&b.config.pp))
        .then(b.config.mbs.cmp(&a.config.mbs))
        .then(a.config.cmp(&b.config))
}

/// Top `top_k` feasible configs of `space` that satisfy `constraints`.
/// Value constraints prune the space before any estimate is computed; the
/// survivors are estimated in parallel.
pub fn search(
    space: &Space,
    cal: &Calibration,
    w: &Workload,
    constraints: &[Constraint],
    top_k: usize,
) -> Result<Vec<Ranked>, TunerError> {
    if space.grid_size() == 0 {
        return Err(TunerError::EmptySpace);
    }
    // memory is checked with the estimate below
    let values: Vec<&Constraint> = constraints.iter().filter(|c| !matches!(c, Constraint::FitsMemory)).collect();
    let pruned: Vec<ParallelismConfig> =
        space.enumerate(&cal.model, w).into_iter().filter(|c| values.iter().all(|k| k.holds(c, cal, w))).collect();
    let mut ranked: Vec<Ranked> = pruned
        .par_iter()
        .filter_map(|c| cal.estimate(c, w).filter(|e| e.feasible).map(|estimate| Ranked { config: *c, estimate }))
        .collect();
    if ranked.is_empty() {
        return Err(TunerError::NoFeasibleConfig);
    }
    ranked.sort_by(rank_order);
    ranked.truncate(top_k);
    Ok(ranked)
}

/// Exhaustive reference: walks the full grid, evaluates every point and
/// sorts by the ranking key.
pub fn brute_force(
    space: &Space,
    cal: &Calibration,
    w: &Workload,
    constraints: &[Constraint],
    top_k: usize,
) -> Result<Vec<Ranked>, TunerError> {
    let mut all = Vec::new();
    for &tp in &space.tp {
        for &cp in &space.cp {
            for &ep in &space.ep {
                for &pp in &space.pp {
                    for &vpp in &space.vpp {
                        for &mbs in &space.mbs {
                            let Ok((dp, accum)) = derive_dp(w.accelerators, tp, cp, pp, w.gbs_samples, mbs) else {
                                continue;
                            };
                            let c = ParallelismConfig { tp, cp, ep, pp, vpp, mbs, dp, accum };
                            if dp % ep != 0 || cal.model.experts % ep != 0 {
                                continue;
                            }
                            let Some(stages) = super::stage_layers(&c, &cal.model, w) else { continue };
                            if stages.iter().any(|l| l % vpp != 0) {
                                continue;
                            }
                            if !constraints.iter().all(|k| k.holds(&c, cal, w)) {
                                continue;
                            }
                            let e = cal.estimate(&c, w).expect("stages split");
                            if e.feasible {
                                all.push((e.step_time_s, pp, std::cmp::Reverse(mbs), (tp, cp, ep, pp, vpp, mbs), c, e));
                            }
                        }
                    }
                }
            }
        }
    }
    if all.is_empty() {
        return Err(TunerError::NoFeasibleConfig);
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));
    Ok(all.into_iter().take(top_k).map(|t| Ranked { config: t.4, estimate: t.5 }).collect())
}

pub fn write_csv(ranked: &[Ranked], w: impl Write) -> Result<(), TunerError> {
    let io = |e: csv::Error| TunerError::Io(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "rank",
        "config",
        "tp",
        "cp",
        "ep",
        "pp",
        "vpp",
        "mbs",
        "dp",
        "accum",
        "step_time_s",
        "time_per_sample_s",
        "bubble_fraction",
        "memory_gb",
    ])
    .map_err(io)?;
    for (i, r) in ranked.iter().enumerate() {
        let c = &r.config;
        let e = &r.estimate;
        out.write_record([
            (i + 1).to_string(),
            c.label(),
            c.tp.to_string(),
            c.cp.to_string(),
            c.ep.to_string(),
            c.pp.to_string(),
            c.vpp.to_string(),
            c.mbs.to_string(),
            c.dp.to_string(),
            c.accum.to_string(),
            format!("{:.6}", e.step_time_s),
            format!("{:.9}", e.time_per_sample_s),
            format!("{:.6}", e.bubble_fraction),
            format!("{:.3}", e.memory_gb),
        ])
        .map_err(io)?;
    }
    out.flush().map_err(|e| TunerError::Io(e.to_string()))?;
    Ok(())
}
