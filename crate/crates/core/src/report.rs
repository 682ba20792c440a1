//! Report artifacts: `report.json`, CSV tables, and the `timings.json`
//! sidecar.
//!
//! `report.json` and the CSV files depend only on the config, so two runs of
//! the same config produce identical bytes. Wall-clock timings would break
//! that and therefore go to a separate file.
//!
//! Estimate tables have the columns
//! `pair_k,pair_l,distance,estimate,std_error,n_samples`, preceded by one
//! `# seed=... ensemble=...` comment line. Reals are written with 17
//! significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig};
use crate::estimators::{
    AizenmanRecord, DecayFit, DynLocEstimate, ExperimentResult, MomentEstimate,
};
use crate::verify::VerifyReport;

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "pair_k,pair_l,distance,estimate,std_error,n_samples";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AizenmanRow {
    pub sample: u64,
    pub k: usize,
    pub m: usize,
    #[serde(flatten)]
    pub record: AizenmanRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AizenmanSummary {
    pub p: f64,
    pub lambda_grid: usize,
    pub n_window: usize,
    pub tolerance: f64,
    pub min_margin: f64,
    pub violations: usize,
    pub rows: Vec<AizenmanRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: Command,
    pub seed: u64,
    pub ensemble_hash: String,
    pub config: RunConfig,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<Vec<MomentEstimate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<Vec<DynLocEstimate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aizenman: Option<AizenmanSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentResult>,
    /// Human-readable descriptions of failed pairs or checks.
    pub errors: Vec<String>,
    /// Problems that do not fail the run, such as a diagnostic fit that
    /// could not be made.
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(config: &RunConfig) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            command: config.command,
            seed: config.seed,
            ensemble_hash: config.ensemble_spec().hash(),
            config: config.clone(),
            passed: true,
            verify: None,
            moments: None,
            dynamics: None,
            aizenman: None,
            experiment: None,
            errors: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub command: Command,
    pub seed: u64,
    pub phases: Vec<(String, f64)>,
    pub total_seconds: f64,
}

/// One row of an estimate table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub k: usize,
    pub l: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_preamble(seed: u64, ensemble_hash: &str) -> String {
    format!("# seed={seed} ensemble={ensemble_hash}\n")
}

pub fn estimate_csv(rows: &[CsvRow], seed: u64, ensemble_hash: &str) -> String {
    let mut out = csv_preamble(seed, ensemble_hash);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let distance = r.l as i64 - r.k as i64;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            r.l,
            distance,
            real(r.estimate),
            real(r.std_error),
            r.n_samples
        )
        .expect("write to string");
    }
    out
}

pub fn moment_rows(moments: &[MomentEstimate]) -> Vec<CsvRow> {
    moments
        .iter()
        .map(|m| CsvRow {
            k: m.k,
            l: m.l,
            estimate: m.value,
            std_error: m.std_error,
            n_samples: m.n_samples,
        })
        .collect()
}

pub fn bound_rows(dynamics: &[DynLocEstimate]) -> Vec<CsvRow> {
    dynamics
        .iter()
        .map(|d| CsvRow {
            k: d.k,
            l: d.l,
            estimate: d.rigorous_bound_mean,
            std_error: d.rigorous_bound_std_error,
            n_samples: d.n_samples,
        })
        .collect()
}

pub fn window_rows(dynamics: &[DynLocEstimate]) -> Vec<CsvRow> {
    dynamics
        .iter()
        .map(|d| CsvRow {
            k: d.k,
            l: d.l,
            estimate: d.windowed_sup_mean,
            std_error: d.windowed_sup_std_error,
            n_samples: d.n_samples,
        })
        .collect()
}

pub const FITS_HEADER: &str =
    "quantity,prefactor,rate,rate_std_error,r_squared,d_min,d_max,n_points,weighting";

pub fn fits_csv(fits: &[(&str, Option<&DecayFit>)], seed: u64, ensemble_hash: &str) -> String {
    let mut out = csv_preamble(seed, ensemble_hash);
    out.push_str(FITS_HEADER);
    out.push('\n');
    for (name, fit) in fits {
        let Some(f) = fit else { continue };
        let weighting = serde_json::to_value(f.weighting).expect("weighting serializes");
        writeln!(
            out,
            "{name},{},{},{},{},{},{},{},{}",
            real(f.prefactor),
            real(f.rate),
            real(f.rate_std_error),
            real(f.r_squared),
            f.d_min,
            f.d_max,
            f.n_points,
            weighting.as_str().unwrap_or_default()
        )
        .expect("write to string");
    }
    out
}

/// Parses an estimate table written by [`estimate_csv`].
pub fn parse_estimate_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing or unexpected header".into());
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(format!("expected 6 fields in {line:?}"));
            }
            let bad = |e: &dyn std::fmt::Display| format!("{line:?}: {e}");
            Ok(CsvRow {
                k: f[0].parse().map_err(|e| bad(&e))?,
                l: f[1].parse().map_err(|e| bad(&e))?,
                estimate: f[3].parse().map_err(|e| bad(&e))?,
                std_error: f[4].parse().map_err(|e| bad(&e))?,
                n_samples: f[5].parse().map_err(|e| bad(&e))?,
            })
        })
        .collect()
}

/// Writes named artifacts into `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, files: &[(String, String)]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|(name, content)| {
            let path = dir.join(name);
            fs::write(&path, content)?;
            Ok(path)
        })
        .collect()
}
