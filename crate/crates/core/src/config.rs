//! Run configuration: a JSON document, validated before anything runs.
//!
//! ```json
//! {
//!   "command": "run",
//!   "seed": 7,
//!   "n_dim": 100,
//!   "p": 0.5,
//!   "n_samples": 200,
//!   "n_window": 400,
//!   "beta": [1.0, 0.0],
//!   "ensemble": {"family": "iid_rotinv", "radial_law": {"law": "uniform_radius", "r_max": 0.9}},
//!   "pairs": [[40, 42], [40, 43]],
//!   "quadrature": {"rel_tol": 1e-6},
//!   "verify_dims": [4, 6, 8],
//!   "verify_instances": 10,
//!   "lambda_grid": 64,
//!   "out": "results"
//! }
//! ```
//!
//! Every key except `command` is optional. `n_window` defaults to `4·n_dim`,
//! `beta` to 1 (`null` draws the closure at random per sample), and `pairs`
//! to `(k₀, k₀ + d)` with `k₀ = ⌊2N/5⌋` and `d = 2..=16` as far as `N` allows.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleSpec, Family, PhaseIncrementLaw, RadialLaw};
use crate::spectral::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Check the exact operator identities on random instances.
    Verify,
    /// Estimate fractional moments of the boundary values of F_kl.
    Moments,
    /// Estimate windowed sups and bounds of |(C^n)_kl|.
    Dynamics,
    /// Check the deterministic moment-to-dynamics inequality per sample.
    Aizenman,
    /// Estimate both sides on the pair list and fit exponential decay.
    Decay,
    /// `verify` followed by `decay`.
    Run,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Verify => "verify",
            Command::Moments => "moments",
            Command::Dynamics => "dynamics",
            Command::Aizenman => "aizenman",
            Command::Decay => "decay",
            Command::Run => "run",
        };
        f.write_str(s)
    }
}

/// The law part of an ensemble; size and seed come from the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleLaw {
    pub family: Family,
    pub radial_law: RadialLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_increment_law: Option<PhaseIncrementLaw>,
}

impl Default for EnsembleLaw {
    fn default() -> Self {
        EnsembleLaw {
            family: Family::IidRotinv,
            radial_law: RadialLaw::UniformRadius { r_max: 0.9 },
            phase_increment_law: None,
        }
    }
}

fn default_n_dim() -> usize {
    100
}
fn default_p() -> f64 {
    0.5
}
fn default_n_samples() -> usize {
    200
}
fn default_beta() -> Option<[f64; 2]> {
    Some([1.0, 0.0])
}
fn default_verify_dims() -> Vec<usize> {
    vec![4, 6, 8]
}
fn default_verify_instances() -> usize {
    10
}
fn default_lambda_grid() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_dim")]
    pub n_dim: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub n_window: Option<usize>,
    #[serde(default = "default_beta")]
    pub beta: Option<[f64; 2]>,
    #[serde(default)]
    pub ensemble: EnsembleLaw,
    #[serde(default)]
    pub pairs: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_verify_dims")]
    pub verify_dims: Vec<usize>,
    #[serde(default = "default_verify_instances")]
    pub verify_instances: usize,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// A configuration error with the offending key path and, when known, the
/// line in the source text.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(
                f,
                "config error at `{}` (line {line}): {}",
                self.path, self.message
            ),
            None => write!(f, "config error at `{}`: {}", self.path, self.message),
        }
    }
}

/// Line of the first occurrence of `"key"` in `text`, for constraint errors.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
}

fn default_pairs(n_dim: usize) -> Vec<(usize, usize)> {
    let k0 = 2 * n_dim / 5;
    (2..=16)
        .filter(|d| k0 + d < n_dim)
        .map(|d| (k0, k0 + d))
        .collect()
}

impl RunConfig {
    /// A config for `command` with every default applied.
    pub fn new(command: Command) -> Self {
        let mut config: RunConfig =
            serde_json::from_value(serde_json::json!({ "command": command })).expect("defaults");
        config.resolve_defaults();
        config
    }

    fn resolve_defaults(&mut self) {
        self.n_window.get_or_insert(4 * self.n_dim);
        if self.pairs.is_none() {
            self.pairs = Some(default_pairs(self.n_dim));
        }
    }

    pub fn n_window(&self) -> usize {
        self.n_window.unwrap_or(4 * self.n_dim)
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.pairs
            .clone()
            .unwrap_or_else(|| default_pairs(self.n_dim))
    }

    pub fn closure(&self) -> Option<Complex64> {
        self.beta.map(|[re, im]| Complex64::new(re, im))
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        self.ensemble_spec_with_dim(self.n_dim)
    }

    pub fn ensemble_spec_with_dim(&self, n_dim: usize) -> EnsembleSpec {
        EnsembleSpec {
            family: self.ensemble.family,
            radial_law: self.ensemble.radial_law,
            phase_increment_law: self.ensemble.phase_increment_law,
            n_dim,
            master_seed: self.seed,
            closure: self.closure(),
        }
    }

    /// Checks every constraint; `text` is only used to locate the key.
    pub fn validate(&self, text: &str) -> Result<(), ConfigError> {
        let fail = |path: &str, message: String| {
            let key = path.rsplit('.').next().unwrap_or(path);
            Err(ConfigError {
                path: path.to_string(),
                line: line_of_key(text, key),
                message,
            })
        };
        if self.n_dim < 2 {
            return fail(
                "n_dim",
                format!("n_dim must be at least 2, got {}", self.n_dim),
            );
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return fail("p", format!("p must lie in (0,1), got {}", self.p));
        }
        if self.n_samples == 0 {
            return fail("n_samples", "n_samples must be positive".into());
        }
        if self.n_window() < self.n_dim {
            return fail(
                "n_window",
                format!(
                    "n_window must be at least n_dim = {}, got {}",
                    self.n_dim,
                    self.n_window()
                ),
            );
        }
        if let Some([re, im]) = self.beta {
            if !((Complex64::new(re, im).norm() - 1.0).abs() <= crate::cmv::BETA_TOLERANCE) {
                return fail("beta", format!("beta must be unimodular, got [{re}, {im}]"));
            }
        }
        if let Err(e) = self.ensemble_spec().validate() {
            return fail("ensemble", e.to_string());
        }
        let pairs = self.pairs();
        if pairs.is_empty() {
            return fail("pairs", format!("no pairs fit into n_dim = {}", self.n_dim));
        }
        if let Some((k, l)) = pairs
            .iter()
            .find(|(k, l)| *k >= self.n_dim || *l >= self.n_dim)
        {
            return fail(
                "pairs",
                format!("pair ({k}, {l}) out of range for n_dim = {}", self.n_dim),
            );
        }
        if matches!(self.command, Command::Decay | Command::Run) {
            let k0 = pairs[0].0;
            let ascending = pairs.windows(2).all(|w| w[1].1 > w[0].1)
                && pairs.iter().all(|&(k, l)| k == k0 && l >= k);
            if !ascending {
                return fail(
                    "pairs",
                    "decay pairs must be (k0, k0 + d) with d strictly ascending".into(),
                );
            }
            if pairs.len() < 3 {
                return fail("pairs", "a decay fit needs at least 3 pairs".into());
            }
        }
        if self.command == Command::Aizenman && pairs.iter().any(|(k, l)| k == l) {
            return fail(
                "pairs",
                "the aizenman check needs k != l in every pair".into(),
            );
        }
        if let Err(e) = self.quadrature.validate() {
            return fail("quadrature", e.to_string());
        }
        if let Some(d) = self.verify_dims.iter().find(|&&d| d < 2) {
            return fail(
                "verify_dims",
                format!("dimensions must be at least 2, got {d}"),
            );
        }
        if self.verify_dims.is_empty() {
            return fail("verify_dims", "at least one dimension is needed".into());
        }
        if self.verify_instances == 0 {
            return fail(
                "verify_instances",
                "verify_instances must be positive".into(),
            );
        }
        if self.lambda_grid == 0 {
            return fail("lambda_grid", "lambda_grid must be positive".into());
        }
        Ok(())
    }

    /// The config as pretty JSON, every default spelled out.
    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses and validates a config, filling defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let mut config: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError {
            path,
            line: Some(inner.line()),
            message: inner.to_string(),
        }
    })?;
    config.resolve_defaults();
    config.validate(text)?;
    Ok(config)
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_config(s)
    }
}
