//! Command-line front end: `cmvlab <command> --config <path>`.
//!
//! Exit codes: 0 when every check passes, 1 when a check or an estimate
//! fails (the report is still written), 2 for usage, config or I/O errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use rayon::prelude::*;

use crate::config::{parse_config, Command, RunConfig};
use crate::ensembles;
use crate::error::{CmvError, Result};
use crate::estimators::{
    aizenman_inequality_check, dynamical_localization_table, fractional_moment_table,
    run_decay_experiment,
};
use crate::report::{
    bound_rows, estimate_csv, fits_csv, moment_rows, window_rows, write_artifacts, AizenmanRow,
    AizenmanSummary, CsvRow, Report, Timings,
};
use crate::verify::{run_suite, SuiteParams};

/// An Aizenman margin below this counts as a violation.
pub const AIZENMAN_TOLERANCE: f64 = -1e-8;

const DEFAULT_OUT: &str = "cmvlab-out";

#[derive(Debug, Parser)]
#[command(
    name = "cmvlab",
    version,
    about = "Numerical laboratory for random CMV matrices"
)]
struct Cli {
    /// What to run; overrides the command in the config file.
    command: Command,
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `out` from the config, else ./cmvlab-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return 2;
        }
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return 2;
        }
    };
    config.command = cli.command;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    // Command-specific constraints may change with the override.
    if let Err(e) = config.validate(&text) {
        eprintln!("error: {}: {e}", cli.config.display());
        return 2;
    }
    let out = cli
        .out
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    run(&config, &out)
}

struct Phases {
    start: Instant,
    phases: Vec<(String, f64)>,
}

impl Phases {
    fn new() -> Self {
        Phases {
            start: Instant::now(),
            phases: Vec::new(),
        }
    }

    fn time<R>(&mut self, name: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.phases
            .push((name.to_string(), t.elapsed().as_secs_f64()));
        log::info!("{name}: {:.2}s", t.elapsed().as_secs_f64());
        r
    }
}

/// Runs a validated config and writes its artifacts into `out`.
pub fn run(config: &RunConfig, out: &Path) -> i32 {
    let mut phases = Phases::new();
    let mut report = Report::new(config);
    let mut files = Vec::new();
    let outcome = execute(config, &mut report, &mut files, &mut phases);
    if let Err(e) = outcome {
        log::error!("{e}");
        report.errors.push(e.to_string());
        report.passed = false;
    }
    files.push(("report.json".to_string(), report.to_json()));
    let timings = Timings {
        command: config.command,
        seed: config.seed,
        phases: phases.phases,
        total_seconds: phases.start.elapsed().as_secs_f64(),
    };
    let timings = serde_json::to_string_pretty(&timings).expect("timings serialize") + "\n";
    files.push(("timings.json".to_string(), timings));
    if let Err(e) = write_artifacts(out, &files) {
        eprintln!("error: cannot write to {}: {e}", out.display());
        return 2;
    }
    for e in &report.errors {
        eprintln!("failed: {e}");
    }
    if report.passed {
        0
    } else {
        1
    }
}

fn execute(
    config: &RunConfig,
    report: &mut Report,
    files: &mut Vec<(String, String)>,
    phases: &mut Phases,
) -> Result<()> {
    let spec = config.ensemble_spec();
    let hash = spec.hash();
    let pairs = config.pairs();
    let csv = |rows: &[CsvRow]| estimate_csv(rows, config.seed, &hash);

    if matches!(config.command, Command::Verify | Command::Run) {
        let verify_spec = config.ensemble_spec_with_dim(2);
        let suite = phases.time("verify", || {
            run_suite(&SuiteParams {
                ensemble: &verify_spec,
                dims: &config.verify_dims,
                instances: config.verify_instances,
                p: config.p,
                quad: &config.quadrature,
            })
        })?;
        for c in suite.checks.iter().filter(|c| !c.passed) {
            report.errors.push(format!(
                "identity {}: residual {:e} above {:e}",
                c.name, c.max_residual, c.threshold
            ));
        }
        report.passed &= suite.passed;
        report.verify = Some(suite);
    }

    match config.command {
        Command::Verify => {}
        Command::Moments => {
            let table = phases.time("moments", || {
                fractional_moment_table(
                    &spec,
                    &pairs,
                    config.p,
                    config.n_samples,
                    &config.quadrature,
                )
            })?;
            let mut moments = Vec::new();
            for (r, (k, l)) in table.into_iter().zip(&pairs) {
                match r {
                    Ok(m) => moments.push(m),
                    Err(e) => report.errors.push(format!("moment ({k}, {l}): {e}")),
                }
            }
            files.push(("moments.csv".into(), csv(&moment_rows(&moments))));
            report.moments = Some(moments);
        }
        Command::Dynamics => {
            let table = phases.time("dynamics", || {
                dynamical_localization_table(&spec, &pairs, config.n_window(), config.n_samples)
            })?;
            let mut dynamics = Vec::new();
            for (r, (k, l)) in table.into_iter().zip(&pairs) {
                match r {
                    Ok(d) => dynamics.push(d),
                    Err(e) => report.errors.push(format!("dynamics ({k}, {l}): {e}")),
                }
            }
            files.push(("dynamics_bound.csv".into(), csv(&bound_rows(&dynamics))));
            files.push(("dynamics_window.csv".into(), csv(&window_rows(&dynamics))));
            report.dynamics = Some(dynamics);
        }
        Command::Aizenman => {
            let summary = phases.time("aizenman", || aizenman(config, &pairs))?;
            let rows: Vec<CsvRow> = pairs
                .iter()
                .map(|&(k, m)| {
                    let margins: Vec<f64> = summary
                        .rows
                        .iter()
                        .filter(|r| (r.k, r.m) == (k, m))
                        .map(|r| r.record.margin)
                        .collect();
                    let (mean, se) = mean_and_se(&margins);
                    CsvRow {
                        k,
                        l: m,
                        estimate: mean,
                        std_error: se,
                        n_samples: margins.len(),
                    }
                })
                .collect();
            files.push(("aizenman.csv".into(), csv(&rows)));
            if summary.violations > 0 {
                report.errors.push(format!(
                    "aizenman: {} of {} margins below {:e}, minimum {:e}",
                    summary.violations,
                    summary.rows.len(),
                    summary.tolerance,
                    summary.min_margin
                ));
            }
            report.aizenman = Some(summary);
        }
        Command::Decay | Command::Run => {
            let result = phases.time("decay", || {
                run_decay_experiment(
                    &spec,
                    config.p,
                    &pairs,
                    config.n_samples,
                    config.n_window(),
                    &config.quadrature,
                )
            })?;
            files.push(("moments.csv".into(), csv(&moment_rows(&result.moments))));
            files.push((
                "dynamics_bound.csv".into(),
                csv(&bound_rows(&result.dynamics)),
            ));
            files.push((
                "dynamics_window.csv".into(),
                csv(&window_rows(&result.dynamics)),
            ));
            let fits = [
                ("moment", result.moment_fit.as_ref()),
                ("bound", result.bound_fit.as_ref()),
                ("window", result.window_fit.as_ref()),
            ];
            files.push(("fits.csv".into(), fits_csv(&fits, config.seed, &hash)));
            for f in &result.failures {
                let at = f
                    .pair
                    .map(|(k, l)| format!(" ({k}, {l})"))
                    .unwrap_or_default();
                let line = format!("{}{at}: {}", f.quantity, f.message);
                // The windowed sup is a diagnostic lower curve; only the moment
                // and rigorous-bound fits carry the result.
                if f.quantity == "window_fit" {
                    report.warnings.push(line);
                } else {
                    report.errors.push(line);
                }
            }
            report.experiment = Some(result);
        }
    }
    report.passed &= report.errors.is_empty();
    Ok(())
}

fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn aizenman(config: &RunConfig, pairs: &[(usize, usize)]) -> Result<AizenmanSummary> {
    let spec = config.ensemble_spec();
    let per_sample: Vec<Result<Vec<AizenmanRow>>> = (0..config.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let seq = ensembles::sample(&spec, i)?;
            pairs
                .iter()
                .map(|&(k, m)| {
                    let record = aizenman_inequality_check(
                        &seq,
                        k,
                        m,
                        config.p,
                        config.lambda_grid,
                        config.n_window(),
                        &config.quadrature,
                    )?;
                    Ok(AizenmanRow {
                        sample: i,
                        k,
                        m,
                        record,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| CmvError::Sample {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_sample {
        rows.extend(r?);
    }
    let min_margin = rows
        .iter()
        .map(|r| r.record.margin)
        .fold(f64::INFINITY, f64::min);
    let violations = rows
        .iter()
        .filter(|r| !(r.record.margin >= AIZENMAN_TOLERANCE))
        .count();
    Ok(AizenmanSummary {
        p: config.p,
        lambda_grid: config.lambda_grid,
        n_window: config.n_window(),
        tolerance: AIZENMAN_TOLERANCE,
        min_margin,
        violations,
        rows,
    })
}
