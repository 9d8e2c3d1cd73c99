//! `faultline`: runs scenarios, replays incident bundles, tunes parallelism
//! layouts and checks training traces.
//!
//! Artifacts go under `$FAULTLINE_ARTIFACT_ROOT` (default `artifacts/`)
//! unless `--out` names a directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use faultline::replay::{self, Bundle};
use faultline::scenario::{self, suite, Scenario};
use faultline_train::health::{
    monitor_collapse, read_norm_csv, read_timing_csv, straggler_detect, valley_score, StragglerConfig,
    DEFAULT_PERSISTENCE, DEFAULT_VALLEY_THRESHOLD,
};
use faultline_train::numerics::{compare_traces, fixture, CompareOptions, TraceSet, DEFAULT_STEPS, DEFAULT_THRESHOLD};
use faultline_train::tuner::{self, Calibration, ConstraintFile, Workload, MOE_64L_CALIBRATION, MOE_64L_CONSTRAINTS};

const ARTIFACT_ROOT_VAR: &str = "FAULTLINE_ARTIFACT_ROOT";

#[derive(Parser)]
#[command(name = "faultline", version, about = "Reliability control plane for simulated training clusters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its artifact directory.
    Simulate {
        /// Scenario YAML. Omit with --bundled.
        scenario: Option<PathBuf>,
        /// Run a bundled scenario instead of a file.
        #[arg(long, value_enum, conflicts_with = "scenario")]
        bundled: Option<BundledScenario>,
        /// Replace the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Artifact directory; defaults to <artifact root>/<scenario name>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run diagnosis and rule generation on a recorded incident bundle.
    Replay {
        /// Bundle directory. Omit with --fixture.
        bundle: Option<PathBuf>,
        /// Replay a built-in bundle instead of a directory.
        #[arg(long, value_enum, conflicts_with = "bundle")]
        fixture: Option<ReplayFixture>,
        /// Seed for the built-in bundle.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the bundle itself to this directory.
        #[arg(long)]
        save_bundle: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank parallelism layouts under a calibrated cost model.
    Tune {
        /// Total accelerators.
        #[arg(long)]
        nodes: u32,
        /// Global batch in tokens.
        #[arg(long)]
        gbs: u64,
        /// Sequence length; defaults to the calibration's.
        #[arg(long)]
        seq: Option<u32>,
        /// Calibration TOML; defaults to the bundled 64-layer MoE model.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Space and constraint TOML; defaults to the bundled topology file.
        #[arg(long)]
        constraints: Option<PathBuf>,
        /// Search the full default space with memory as the only constraint.
        #[arg(long, conflicts_with = "constraints")]
        unconstrained: bool,
        /// Comma-separated layers per pipeline stage.
        #[arg(long, value_delimiter = ',')]
        stage_layers: Option<Vec<u32>>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Write the ranking as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare per-module traces of a reference and a candidate run.
    ValidateTraces {
        #[arg(long, required_unless_present = "write_fixture")]
        reference: Option<PathBuf>,
        #[arg(long, required_unless_present = "write_fixture")]
        candidate: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Per-module threshold, as MODULE=VALUE; repeatable.
        #[arg(long = "module-threshold", value_parser = parse_override)]
        module_thresholds: Vec<(String, f64)>,
        /// Write the comparison as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 2 when any trace is abnormal.
        #[arg(long)]
        fail_on_abnormal: bool,
        /// Write the bundled divergence fixture (reference.trace,
        /// candidate.trace) to this directory and exit.
        #[arg(long, conflicts_with_all = ["reference", "candidate"])]
        write_fixture: Option<PathBuf>,
    },
    /// Training-health checks on exported CSV series.
    Health {
        #[command(subcommand)]
        check: HealthCheck,
    },
    /// Print the KPI tables of an artifact directory.
    Report { run: PathBuf },
}

#[derive(Subcommand)]
enum HealthCheck {
    /// Gradient-norm valley detection over per-layer norms (iteration,layer,value).
    Collapse {
        norms: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VALLEY_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_PERSISTENCE)]
        persistence: usize,
    },
    /// Straggler detection over per-rank step times (rank,step,duration).
    Stragglers {
        timings: PathBuf,
        /// Analyze only the last N steps.
        #[arg(long)]
        window: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BundledScenario {
    MarchToJuly,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReplayFixture {
    /// Memory-access fault that user crashes imitate; expects a learned rule.
    MemoryFault,
    /// NaN loss with several noisy nodes; expects one confirmed node.
    NanLoss,
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (m, v) = s.split_once('=').ok_or("expected MODULE=VALUE")?;
    let v: f64 = v.parse().map_err(|e| format!("{v}: {e}"))?;
    Ok((m.to_string(), v))
}

fn artifact_root() -> PathBuf {
    std::env::var_os(ARTIFACT_ROOT_VAR).map_or_else(|| PathBuf::from("artifacts"), PathBuf::from)
}

fn simulate(
    file: Option<PathBuf>,
    bundled: Option<BundledScenario>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut sc = match (file, bundled) {
        (Some(path), _) => {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            Scenario::from_yaml(&text).with_context(|| format!("in {}", path.display()))?
        }
        (None, Some(BundledScenario::MarchToJuly)) => suite::march_to_july(),
        (None, None) => bail!("give a scenario file or --bundled"),
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    let dir = out.unwrap_or_else(|| artifact_root().join(&sc.name));
    let outcome = scenario::run(&sc, Some(&dir))?;
    println!(
        "{} seed {}: {} events, {} injections, {} detections, {} diagnoses, {} rules",
        sc.name,
        sc.seed,
        outcome.events.len(),
        outcome.record.injections.len(),
        outcome.record.detections.len(),
        outcome.record.diagnoses.len(),
        outcome.rules.len()
    );
    print_rows(&outcome.report);
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn print_rows(report: &faultline::kpi::KpiReport) {
    println!(
        "{:<10} {:>12} {:>10} {:>11} {:>11} {:>10}",
        "period", "recovery_h", "incidents", "automated%", "effective%", "ttf_max_h"
    );
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    for r in &report.rows {
        println!(
            "{:<10} {:>12} {:>10} {:>11} {:>11.2} {:>10}",
            r.period,
            f(r.recovery_mean_h),
            r.incidents,
            f(r.automation_pct),
            r.effective_pct,
            f(r.ttf_max_h)
        );
    }
}

fn replay_cmd(
    bundle: Option<PathBuf>,
    fixture: Option<ReplayFixture>,
    seed: u64,
    save: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let (b, name) = match (bundle, fixture) {
        (Some(dir), _) => {
            let b = Bundle::load(&dir).with_context(|| format!("loading bundle {}", dir.display()))?;
            let name = dir.file_name().map_or("bundle".into(), |n| n.to_string_lossy().into_owned());
            (b, name)
        }
        (None, Some(ReplayFixture::MemoryFault)) => (replay::memory_fault_bundle(seed), "memory-fault".to_string()),
        (None, Some(ReplayFixture::NanLoss)) => (replay::converging_diagnosis_bundle(seed).0, "nan-loss".to_string()),
        (None, None) => bail!("give a bundle directory or --fixture"),
    };
    if let Some(dir) = save {
        b.save(&dir)?;
    }
    let outcome = replay::replay(&b)?;
    let dir = out.unwrap_or_else(|| artifact_root().join(format!("replay-{name}")));
    replay::write_artifacts(&b, &outcome, &dir)?;
    if let Some(s) = &outcome.diagnosis {
        println!("diagnosis: {:?} after {} iterations", s.status, s.iterations.len());
        for it in &s.iterations {
            println!("  {} {}: {:?}", it.index, it.hypothesis.name, it.verdict);
        }
    }
    if let Some(l) = &outcome.learn {
        println!("contrast: {}", l.contrast.join(", "));
        match l.generated.accepted() {
            Some(c) => println!(
                "accepted after {} iterations (holdout precision {:.3}, recall {:.3}):\n  {}",
                c.trace.len(),
                c.stats.precision,
                c.stats.recall,
                c.rule
            ),
            None => println!("no rule accepted after {} iterations", l.generated.trace().len()),
        }
    }
    println!("artifacts: {}", dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn tune(
    nodes: u32,
    gbs: u64,
    seq: Option<u32>,
    calibration: Option<PathBuf>,
    constraints: Option<PathBuf>,
    unconstrained: bool,
    stage_layers: Option<Vec<u32>>,
    top: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let cal = match calibration {
        Some(p) => Calibration::load(&p)?,
        None => Calibration::from_toml(MOE_64L_CALIBRATION)?,
    };
    let file = match (constraints, unconstrained) {
        (Some(p), _) => ConstraintFile::load(&p)?,
        (None, true) => ConstraintFile { constraint: vec![tuner::Constraint::FitsMemory], ..Default::default() },
        (None, false) => ConstraintFile::from_toml(MOE_64L_CONSTRAINTS)?,
    };
    let mut w = Workload::from_tokens(nodes, gbs, seq.unwrap_or(cal.model.seq_len))?;
    w.stage_layers = stage_layers;
    let ranked = tuner::search(&file.space, &cal, &w, &file.constraint, top)?;
    println!(
        "{:>4} {:<28} {:>5} {:>6} {:>12} {:>8} {:>10}",
        "rank", "config", "dp", "accum", "step_s", "bubble", "memory_gb"
    );
    for (i, r) in ranked.iter().enumerate() {
        println!(
            "{:>4} {:<28} {:>5} {:>6} {:>12.4} {:>8.4} {:>10.2}",
            i + 1,
            r.config.label(),
            r.config.dp,
            r.config.accum,
            r.estimate.step_time_s,
            r.estimate.bubble_fraction,
            r.estimate.memory_gb
        );
    }
    if let Some(p) = out {
        let f = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        tuner::write_csv(&ranked, f)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn validate_traces(
    reference: Option<PathBuf>,
    candidate: Option<PathBuf>,
    steps: usize,
    threshold: f64,
    overrides: Vec<(String, f64)>,
    out: Option<PathBuf>,
    fail_on_abnormal: bool,
    write_fixture: Option<PathBuf>,
) -> Result<ExitCode> {
    if let Some(dir) = write_fixture {
        fs::create_dir_all(&dir)?;
        let (r, c) = fixture::stack_divergence();
        r.save(&dir.join("reference.trace"))?;
        c.save(&dir.join("candidate.trace"))?;
        println!("wrote {}", dir.display());
        return Ok(ExitCode::SUCCESS);
    }
    let (Some(rp), Some(cp)) = (reference, candidate) else { bail!("--reference and --candidate are required") };
    let r = TraceSet::load(&rp).with_context(|| format!("reading {}", rp.display()))?;
    let c = TraceSet::load(&cp).with_context(|| format!("reading {}", cp.display()))?;
    let opts = CompareOptions { steps, threshold, overrides: overrides.into_iter().collect::<BTreeMap<_, _>>() };
    let report = compare_traces(&r, &c, &opts)?;
    print!("{}", report.grid(r.modules()));
    let abnormal = report.abnormal().count();
    println!("{abnormal} abnormal of {} compared over {} steps", report.entries.len(), report.steps);
    if let Some(p) = out {
        report.write_csv(fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?)?;
    }
    Ok(if fail_on_abnormal && abnormal > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn health(check: HealthCheck) -> Result<()> {
    match check {
        HealthCheck::Collapse { norms, threshold, persistence } => {
            let f = fs::File::open(&norms).with_context(|| format!("opening {}", norms.display()))?;
            let profiles = read_norm_csv(f)?;
            let mut flagged = 0;
            for p in &profiles {
                let v = valley_score(p, threshold)?;
                if v.flagged {
                    flagged += 1;
                    let layer = v.layer.map_or("-".to_string(), |l| l.to_string());
                    println!("iteration {:>8}: valley depth {:.3} at layer {layer}", p.iteration, v.depth);
                }
            }
            println!("{flagged} of {} profiles above threshold {threshold}", profiles.len());
            match monitor_collapse(&profiles, persistence, threshold)? {
                Some(at) => println!("collapse alarm at iteration {at}"),
                None => println!("no alarm"),
            }
        }
        HealthCheck::Stragglers { timings, window } => {
            let f = fs::File::open(&timings).with_context(|| format!("opening {}", timings.display()))?;
            let trace = read_timing_csv(f)?;
            let cfg = StragglerConfig { window, ..Default::default() };
            let suspects = straggler_detect(&trace, &cfg)?;
            for s in &suspects {
                let lag = s.evidence.lag.map_or("-".to_string(), |l| l.to_string());
                println!(
                    "rank {:>4} {:?}: median ratio {:.3}, acf lag {lag} ({:.2}), spike {:.1} MADs",
                    s.rank, s.pattern, s.evidence.median_ratio, s.evidence.autocorrelation, s.evidence.spike_mads
                );
            }
            println!("{} suspects among {} ranks over {} steps", suspects.len(), trace.ranks.len(), trace.steps());
        }
    }
    Ok(())
}

fn report(run: &Path) -> Result<()> {
    let kpi = run.join("kpi");
    if !kpi.is_dir() {
        bail!("{} has no kpi/ directory", run.display());
    }
    for table in ["ttf", "recovery", "recycle", "utilization", "automation"] {
        let path = kpi.join(format!("{table}.csv"));
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        println!("== {table}");
        for line in text.lines() {
            println!("{}", line.replace(',', "\t"));
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { scenario, bundled, seed, out } => simulate(scenario, bundled, seed, out)?,
        Command::Replay { bundle, fixture, seed, save_bundle, out } => {
            replay_cmd(bundle, fixture, seed, save_bundle, out)?
        }
        Command::Tune { nodes, gbs, seq, calibration, constraints, unconstrained, stage_layers, top, out } => {
            tune(nodes, gbs, seq, calibration, constraints, unconstrained, stage_layers, top, out)?
        }
        Command::ValidateTraces {
            reference,
            candidate,
            steps,
            threshold,
            module_thresholds,
            out,
            fail_on_abnormal,
            write_fixture,
        } => {
            return validate_traces(
                reference,
                candidate,
                steps,
                threshold,
                module_thresholds,
                out,
                fail_on_abnormal,
                write_fixture,
            )
        }
        Command::Health { check } => health(check)?,
        Command::Report { run } => report(&run)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
