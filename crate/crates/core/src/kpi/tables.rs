use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::{
    automation_ratio, incidents_from_events, recovery_time, recycle_breakdown, time_to_failure, utilization,
    utilization_ledgers, IncidentRecord, KpiConfig, Rounding,
};
use crate::sim::SimEvent;
use crate::stats::median;
use crate::Millis;

/// All KPIs for one reporting period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRow {
    pub period: String,
    pub ttf_max_h: Option<f64>,
    pub ttf_median_h: Option<f64>,
    pub ttf_segments: usize,
    pub recovery_mean_h: Option<f64>,
    pub recovery_count: usize,
    pub recovery_excluded: usize,
    pub detection_h: Option<f64>,
    pub validation_h: Option<f64>,
    pub recycle_total_h: Option<f64>,
    pub available_pct: f64,
    pub allocated_pct: f64,
    pub effective_pct: f64,
    pub automated: u64,
    pub incidents: u64,
    pub automation_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiReport {
    pub rounding: Rounding,
    pub period_ms: Millis,
    pub ttf_median_h: Option<f64>,
    pub ttf_max_h: Option<f64>,
    pub rows: Vec<PeriodRow>,
    pub incidents: Vec<IncidentRecord>,
}

impl KpiReport {
    pub fn row(&self, period: &str) -> Option<&PeriodRow> {
        self.rows.iter().find(|r| r.period == period)
    }
}

/// Computes every KPI over `[0, end)` for a cluster of `nodes` nodes.
pub fn build_report(events: &[SimEvent], nodes: usize, end: Millis, cfg: &KpiConfig) -> KpiReport {
    let r = cfg.rounding;
    let incidents = incidents_from_events(events);
    let ttf = time_to_failure(events);
    let recovery = recovery_time(&incidents, cfg);
    let recycle = recycle_breakdown(&incidents, cfg);
    let automation = automation_ratio(&incidents, cfg);
    let ledgers = utilization_ledgers(events, nodes, end, cfg);

    let periods = if end == 0 { 0 } else { cfg.period_of(end - 1) + 1 };
    let rows = (0..periods)
        .map(|p| {
            let ttf_h: Vec<f64> = ttf.samples.iter().filter(|s| cfg.period_of(s.fault) == p).map(|s| s.hours).collect();
            let rec = recovery.get(&p);
            let cyc = recycle.get(&p);
            let util = utilization(&ledgers.get(&p).copied().unwrap_or_default(), r);
            let auto = automation.get(&p);
            // The displayed total is the sum of the displayed parts so rows re-add exactly.
            let (det, val) = (cyc.map(|c| r.round2(c.detection_h)), cyc.map(|c| r.round2(c.validation_h)));
            PeriodRow {
                period: cfg.period_name(p),
                ttf_max_h: ttf_h.iter().copied().reduce(f64::max).map(|x| r.round2(x)),
                ttf_median_h: median(&ttf_h).map(|x| r.round2(x)),
                ttf_segments: ttf_h.len(),
                recovery_mean_h: rec.and_then(|s| s.mean_h).map(|x| r.round2(x)),
                recovery_count: rec.map_or(0, |s| s.count),
                recovery_excluded: rec.map_or(0, |s| s.excluded),
                detection_h: det,
                validation_h: val,
                recycle_total_h: det.zip(val).map(|(d, v)| ((d + v) * 100.0).round() / 100.0),
                available_pct: util.available_pct,
                allocated_pct: util.allocated_pct,
                effective_pct: util.effective_pct,
                automated: auto.map_or(0, |a| a.automated),
                incidents: auto.map_or(0, |a| a.total),
                automation_pct: auto.map(|a| a.percent),
            }
        })
        .collect();
    KpiReport { rounding: r, period_ms: cfg.period, ttf_median_h: ttf.median_h, ttf_max_h: ttf.max_h, rows, incidents }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn write_table(path: &Path, periods: &[String], rows: &[(&str, Vec<String>)]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["metric".to_string()];
    header.extend(periods.iter().cloned());
    w.write_record(&header)?;
    for (name, cells) in rows {
        let mut rec = vec![name.to_string()];
        rec.extend(cells.iter().cloned());
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Writes one CSV per KPI table (periods as columns) and `summary.json`.
pub fn write_report(report: &KpiReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let periods: Vec<String> = report.rows.iter().map(|r| r.period.clone()).collect();
    let col = |f: &dyn Fn(&PeriodRow) -> String| report.rows.iter().map(f).collect::<Vec<_>>();

    write_table(
        &dir.join("ttf.csv"),
        &periods,
        &[
            ("max_time_to_failure_h", col(&|r| cell(r.ttf_max_h))),
            ("median_time_to_failure_h", col(&|r| cell(r.ttf_median_h))),
        ],
    )?;
    write_table(
        &dir.join("recovery.csv"),
        &periods,
        &[
            ("mean_job_recovery_h", col(&|r| cell(r.recovery_mean_h))),
            ("incidents", col(&|r| r.recovery_count.to_string())),
            ("incomplete_excluded", col(&|r| r.recovery_excluded.to_string())),
        ],
    )?;
    write_table(
        &dir.join("recycle.csv"),
        &periods,
        &[
            ("detection_h", col(&|r| cell(r.detection_h))),
            ("validation_h", col(&|r| cell(r.validation_h))),
            ("total_h", col(&|r| cell(r.recycle_total_h))),
        ],
    )?;
    write_table(
        &dir.join("utilization.csv"),
        &periods,
        &[
            ("available_pct", col(&|r| format!("{:.2}", r.available_pct))),
            ("allocated_pct", col(&|r| format!("{:.2}", r.allocated_pct))),
            ("effective_pct", col(&|r| format!("{:.2}", r.effective_pct))),
        ],
    )?;
    write_table(
        &dir.join("automation.csv"),
        &periods,
        &[
            ("automated", col(&|r| r.automated.to_string())),
            ("incidents", col(&|r| r.incidents.to_string())),
            ("automation_pct", col(&|r| cell(r.automation_pct))),
        ],
    )?;
    let mut summary = serde_json::to_vec_pretty(report).map_err(io::Error::other)?;
    summary.push(b'\n');
    fs::write(dir.join("summary.json"), summary)
}
