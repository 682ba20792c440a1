//! Monte Carlo estimates of fractional moments of `F_kl` on the circle and of
//! `sup_n |(𝒞^n)_kl|`, the deterministic inequality linking the two, and
//! exponential decay fits.
//!
//! Samples are evaluated in parallel and reduced in sample-index order, so
//! every estimate is bit-identical for any thread count.

mod fit;

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fit::{fit_decay, fit_estimates, DecayFit, Weighting, Weights, SIGNIFICANCE_FACTOR};

use crate::cmv::{build_cmv, VerblunskySeq};
use crate::ensembles::{self, EnsembleSpec};
use crate::error::{CmvError, Result};
use crate::linalg;
use crate::perturbation::perturb;
use crate::spectral::{self, boundary_p_integral, QuadratureSpec, SpectralDecomposition};

/// Slack allowed between the windowed sup and the rigorous bound.
pub const BRACKET_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub k: usize,
    pub l: usize,
    pub p: f64,
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub ensemble_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynLocEstimate {
    pub k: usize,
    pub l: usize,
    pub n_window: usize,
    /// Mean of `max_{|n| ≤ n_window} |(𝒞^n)_kl|`, a lower bound for the sup over ℤ.
    pub windowed_sup_mean: f64,
    pub windowed_sup_std_error: f64,
    /// Mean of `Σ_j |w_j(k,l)|`, an upper bound for the sup over ℤ.
    pub rigorous_bound_mean: f64,
    pub rigorous_bound_std_error: f64,
    pub n_samples: usize,
    pub ensemble_hash: String,
    pub seed: u64,
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CmvError::Domain(format!("p must lie in (0,1), got {p}")));
    }
    Ok(())
}

fn check_pairs(pairs: &[(usize, usize)], n_dim: usize) -> Result<()> {
    for &(k, l) in pairs {
        linalg::check_index(k, n_dim)?;
        linalg::check_index(l, n_dim)?;
    }
    Ok(())
}

/// Sample mean and standard error of the mean, summed in index order.
fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `(max_{|n| ≤ window} |(U^n)_kl|, Σ_j |w_j(k,l)|)` from a spectral decomposition.
pub fn windowed_sup_and_bound(
    sd: &SpectralDecomposition,
    k: usize,
    l: usize,
    window: usize,
) -> (f64, f64) {
    let weights = sd.weights(k, l);
    let bound: f64 = weights.iter().map(|w| w.norm()).sum();
    let eigen: Vec<Complex64> = (0..sd.n_dim()).map(|j| sd.eigenvalue(j)).collect();
    let mut forward = weights.clone();
    let mut backward = weights;
    let mut sup = forward.iter().sum::<Complex64>().norm();
    for _ in 0..window {
        for ((f, b), z) in forward.iter_mut().zip(backward.iter_mut()).zip(&eigen) {
            *f *= z;
            *b *= z.conj();
        }
        sup = sup
            .max(forward.iter().sum::<Complex64>().norm())
            .max(backward.iter().sum::<Complex64>().norm());
    }
    (sup, bound)
}

/// Per-sample values for a list of pairs.
struct SampleValues {
    moments: Vec<Result<f64>>,
    dynamics: Vec<(f64, f64)>,
}

struct Task<'a> {
    pairs: &'a [(usize, usize)],
    moment: Option<(f64, &'a QuadratureSpec)>,
    n_window: Option<usize>,
}

fn evaluate_sample(spec: &EnsembleSpec, index: u64, task: &Task<'_>) -> Result<SampleValues> {
    let seq = ensembles::sample(spec, index)?;
    let sd = spectral::eigendecompose_unitary(&build_cmv(&seq))?;
    let moments = match task.moment {
        Some((p, quad)) => task
            .pairs
            .iter()
            .map(|&(k, l)| boundary_p_integral(&sd, k, l, p, quad))
            .collect(),
        None => Vec::new(),
    };
    let mut dynamics = Vec::new();
    if let Some(window) = task.n_window {
        for &(k, l) in task.pairs {
            let (sup, bound) = windowed_sup_and_bound(&sd, k, l, window);
            if sup > bound + BRACKET_TOLERANCE {
                return Err(CmvError::Consistency(format!(
                    "windowed sup {sup} exceeds the bound {bound} for pair ({k},{l})"
                )));
            }
            dynamics.push((sup, bound));
        }
    }
    Ok(SampleValues { moments, dynamics })
}

fn wrap(index: usize, source: CmvError) -> CmvError {
    CmvError::Sample {
        index: index as u64,
        source: Box::new(source),
    }
}

fn run_samples(
    spec: &EnsembleSpec,
    n_samples: usize,
    task: &Task<'_>,
) -> Vec<Result<SampleValues>> {
    (0..n_samples)
        .into_par_iter()
        .map(|i| evaluate_sample(spec, i as u64, task))
        .collect()
}

fn aggregate_moments(
    spec: &EnsembleSpec,
    pairs: &[(usize, usize)],
    p: f64,
    samples: &[Result<SampleValues>],
) -> Vec<Result<MomentEstimate>> {
    let hash = spec.hash();
    (0..pairs.len())
        .map(|q| {
            let mut values = Vec::with_capacity(samples.len());
            for (i, s) in samples.iter().enumerate() {
                match s {
                    Ok(s) => match &s.moments[q] {
                        Ok(v) => values.push(*v),
                        Err(e) => return Err(wrap(i, e.clone())),
                    },
                    Err(e) => return Err(wrap(i, e.clone())),
                }
            }
            let (value, std_error) = mean_and_error(&values);
            Ok(MomentEstimate {
                k: pairs[q].0,
                l: pairs[q].1,
                p,
                value,
                std_error,
                n_samples: values.len(),
                ensemble_hash: hash.clone(),
                seed: spec.master_seed,
            })
        })
        .collect()
}

fn aggregate_dynamics(
    spec: &EnsembleSpec,
    pairs: &[(usize, usize)],
    n_window: usize,
    samples: &[Result<SampleValues>],
) -> Vec<Result<DynLocEstimate>> {
    let hash = spec.hash();
    (0..pairs.len())
        .map(|q| {
            let mut sups = Vec::with_capacity(samples.len());
            let mut bounds = Vec::with_capacity(samples.len());
            for (i, s) in samples.iter().enumerate() {
                let s = s.as_ref().map_err(|e| wrap(i, e.clone()))?;
                sups.push(s.dynamics[q].0);
                bounds.push(s.dynamics[q].1);
            }
            let (windowed_sup_mean, windowed_sup_std_error) = mean_and_error(&sups);
            let (rigorous_bound_mean, rigorous_bound_std_error) = mean_and_error(&bounds);
            Ok(DynLocEstimate {
                k: pairs[q].0,
                l: pairs[q].1,
                n_window,
                windowed_sup_mean,
                windowed_sup_std_error,
                rigorous_bound_mean,
                rigorous_bound_std_error,
                n_samples: sups.len(),
                ensemble_hash: hash.clone(),
                seed: spec.master_seed,
            })
        })
        .collect()
}

fn check_common(spec: &EnsembleSpec, pairs: &[(usize, usize)], n_samples: usize) -> Result<()> {
    spec.validate()?;
    check_pairs(pairs, spec.n_dim)?;
    if n_samples == 0 {
        return Err(CmvError::Usage("n_samples must be positive".into()));
    }
    Ok(())
}

fn check_window(n_window: usize, n_dim: usize) -> Result<()> {
    if n_window < n_dim {
        return Err(CmvError::Usage(format!(
            "n_window = {n_window} must be at least N = {n_dim}"
        )));
    }
    Ok(())
}

/// `E ∫|F_kl(e^{iθ})|^p dθ/2π` for every pair, one decomposition per sample.
pub fn fractional_moment_table(
    spec: &EnsembleSpec,
    pairs: &[(usize, usize)],
    p: f64,
    n_samples: usize,
    quad: &QuadratureSpec,
) -> Result<Vec<Result<MomentEstimate>>> {
    check_common(spec, pairs, n_samples)?;
    check_p(p)?;
    quad.validate()?;
    let task = Task {
        pairs,
        moment: Some((p, quad)),
        n_window: None,
    };
    Ok(aggregate_moments(
        spec,
        pairs,
        p,
        &run_samples(spec, n_samples, &task),
    ))
}

pub fn fractional_moment_expectation(
    spec: &EnsembleSpec,
    k: usize,
    l: usize,
    p: f64,
    n_samples: usize,
    quad: &QuadratureSpec,
) -> Result<MomentEstimate> {
    fractional_moment_table(spec, &[(k, l)], p, n_samples, quad)?
        .pop()
        .expect("one pair")
}

pub fn dynamical_localization_table(
    spec: &EnsembleSpec,
    pairs: &[(usize, usize)],
    n_window: usize,
    n_samples: usize,
) -> Result<Vec<Result<DynLocEstimate>>> {
    check_common(spec, pairs, n_samples)?;
    check_window(n_window, spec.n_dim)?;
    let task = Task {
        pairs,
        moment: None,
        n_window: Some(n_window),
    };
    Ok(aggregate_dynamics(
        spec,
        pairs,
        n_window,
        &run_samples(spec, n_samples, &task),
    ))
}

pub fn dynamical_localization_expectation(
    spec: &EnsembleSpec,
    k: usize,
    l: usize,
    n_window: usize,
    n_samples: usize,
) -> Result<DynLocEstimate> {
    dynamical_localization_table(spec, &[(k, l)], n_window, n_samples)?
        .pop()
        .expect("one pair")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AizenmanRecord {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Both sides of the deterministic bound
/// `∫ sup_n |⟨δ_k, U_{e^{iη}}^n δ_m⟩| dη/2π ≤ (∫ |F_km(e^{iθ})|^p dθ/2π)^{1/(2−p)}`,
/// where `U_λ` rescales the action of the CMV matrix on `δ_k`. The left side
/// is evaluated on a uniform `η`-grid with the sup restricted to
/// `|n| ≤ n_window`, which can only lower it.
pub fn aizenman_inequality_check(
    seq: &VerblunskySeq,
    k: usize,
    m: usize,
    p: f64,
    lambda_grid: usize,
    n_window: usize,
    quad: &QuadratureSpec,
) -> Result<AizenmanRecord> {
    check_p(p)?;
    let c = build_cmv(seq);
    linalg::check_index(k, c.n_dim())?;
    linalg::check_index(m, c.n_dim())?;
    if k == m {
        return Err(CmvError::Usage("the inequality needs m != k".into()));
    }
    if lambda_grid == 0 {
        return Err(CmvError::Usage("lambda grid must be non-empty".into()));
    }
    let mut lhs = 0.0;
    for j in 0..lambda_grid {
        let lambda = Complex64::from_polar(1.0, TAU * j as f64 / lambda_grid as f64);
        let sd = spectral::eigendecompose_unitary(&perturb(&c, k, lambda)?)?;
        lhs += windowed_sup_and_bound(&sd, k, m, n_window).0;
    }
    lhs /= lambda_grid as f64;
    let sd = spectral::eigendecompose_unitary(&c)?;
    let rhs = boundary_p_integral(&sd, k, m, p, quad)?.powf(1.0 / (2.0 - p));
    Ok(AizenmanRecord {
        lhs,
        rhs,
        margin: rhs - lhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovRecord {
    pub integral: f64,
    pub candidate_bound: f64,
    pub ratio: f64,
}

/// `2 / cos(pπ/2)`, the candidate uniform bound on `∫|F_kl|^p dθ/2π`.
pub fn kolmogorov_candidate_bound(p: f64) -> f64 {
    2.0 / (p * FRAC_PI_2).cos()
}

pub fn kolmogorov_report(
    seq: &VerblunskySeq,
    k: usize,
    l: usize,
    p: f64,
    quad: &QuadratureSpec,
) -> Result<KolmogorovRecord> {
    check_p(p)?;
    let sd = spectral::eigendecompose_unitary(&build_cmv(seq))?;
    let integral = boundary_p_integral(&sd, k, l, p, quad)?;
    let candidate_bound = kolmogorov_candidate_bound(p);
    let ratio = integral / candidate_bound;
    if ratio > 1.0 {
        log::warn!("fractional moment {integral} exceeds 2/cos(p pi/2) = {candidate_bound} for ({k},{l}), p = {p}");
    }
    Ok(KolmogorovRecord {
        integral,
        candidate_bound,
        ratio,
    })
}

/// `(∫g^p dμ)^{1/(2−p)} (∫g² dμ)^{(1−p)/(2−p)} − ∫g dμ`, nonnegative by Hölder.
pub fn holder_interpolation_gap(mu: &[f64], g: &[f64], p: f64) -> f64 {
    let integral = |f: &dyn Fn(f64) -> f64| mu.iter().zip(g).map(|(m, g)| m * f(*g)).sum::<f64>();
    let first = integral(&|x| x);
    let second = integral(&|x| x * x);
    let fractional = integral(&|x| x.powf(p));
    second.powf((1.0 - p) / (2.0 - p)) * fractional.powf(1.0 / (2.0 - p)) - first
}

/// `(∫h dν)^{1/(2−p)} − ∫h^{1/(2−p)} dν` for a probability measure `ν`,
/// nonnegative by concavity.
pub fn jensen_gap(nu: &[f64], h: &[f64], p: f64) -> f64 {
    let e = 1.0 / (2.0 - p);
    let mean: f64 = nu.iter().zip(h).map(|(n, h)| n * h).sum();
    let concave: f64 = nu.iter().zip(h).map(|(n, h)| n * h.powf(e)).sum();
    mean.powf(e) - concave
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    /// The pair concerned, absent for whole-curve failures such as a fit.
    pub pair: Option<(usize, usize)>,
    pub quantity: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub p: f64,
    pub n_window: usize,
    pub n_samples: usize,
    pub ensemble_hash: String,
    pub seed: u64,
    pub moments: Vec<MomentEstimate>,
    pub dynamics: Vec<DynLocEstimate>,
    /// Fit of the fractional moments (`C₁`, `κ₁`).
    pub moment_fit: Option<DecayFit>,
    /// Fit of the rigorous dynamical bounds (`C₂`, `κ₂`).
    pub bound_fit: Option<DecayFit>,
    /// Fit of the windowed sups.
    pub window_fit: Option<DecayFit>,
    pub failures: Vec<Failure>,
}

fn check_experiment_pairs(pairs: &[(usize, usize)]) -> Result<()> {
    let Some(&(k0, _)) = pairs.first() else {
        return Err(CmvError::Usage("pair list is empty".into()));
    };
    let mut last = None;
    for &(k, l) in pairs {
        if k != k0 || l < k {
            return Err(CmvError::Usage(format!(
                "experiment pairs must have the form ({k0}, {k0} + d), got ({k}, {l})"
            )));
        }
        if last.is_some_and(|d| l - k <= d) {
            return Err(CmvError::Usage(
                "experiment distances must be strictly ascending".into(),
            ));
        }
        last = Some(l - k);
    }
    Ok(())
}

fn fit_or_note(
    name: &str,
    points: Vec<(i64, f64, f64)>,
    failures: &mut Vec<Failure>,
) -> Option<DecayFit> {
    let d: Vec<i64> = points.iter().map(|x| x.0).collect();
    let v: Vec<f64> = points.iter().map(|x| x.1).collect();
    let s: Vec<f64> = points.iter().map(|x| x.2).collect();
    match fit_estimates(&d, &v, &s) {
        Ok(fit) => Some(fit),
        Err(e) => {
            log::warn!("{name} fit failed: {e}");
            failures.push(Failure {
                pair: None,
                quantity: format!("{name}_fit"),
                message: e.to_string(),
            });
            None
        }
    }
}

/// Estimates both sides of the moment-to-localization implication on pairs
/// `(k₀, k₀ + d)` and fits exponential decay in `d` to each. Pairs whose
/// estimate fails are reported in `failures`; the remaining pairs are kept.
pub fn run_decay_experiment(
    spec: &EnsembleSpec,
    p: f64,
    pairs: &[(usize, usize)],
    n_samples: usize,
    n_window: usize,
    quad: &QuadratureSpec,
) -> Result<ExperimentResult> {
    check_common(spec, pairs, n_samples)?;
    check_p(p)?;
    check_window(n_window, spec.n_dim)?;
    check_experiment_pairs(pairs)?;
    quad.validate()?;
    let task = Task {
        pairs,
        moment: Some((p, quad)),
        n_window: Some(n_window),
    };
    let samples = run_samples(spec, n_samples, &task);

    let mut failures = Vec::new();
    let mut moments = Vec::new();
    for (r, &(k, l)) in aggregate_moments(spec, pairs, p, &samples)
        .into_iter()
        .zip(pairs)
    {
        match r {
            Ok(m) => moments.push(m),
            Err(e) => failures.push(Failure {
                pair: Some((k, l)),
                quantity: "moment".into(),
                message: e.to_string(),
            }),
        }
    }
    let mut dynamics = Vec::new();
    for (r, &(k, l)) in aggregate_dynamics(spec, pairs, n_window, &samples)
        .into_iter()
        .zip(pairs)
    {
        match r {
            Ok(d) => dynamics.push(d),
            Err(e) => failures.push(Failure {
                pair: Some((k, l)),
                quantity: "dynamics".into(),
                message: e.to_string(),
            }),
        }
    }

    let distance = |k: usize, l: usize| l as i64 - k as i64;
    let moment_fit = fit_or_note(
        "moment",
        moments
            .iter()
            .map(|m| (distance(m.k, m.l), m.value, m.std_error))
            .collect(),
        &mut failures,
    );
    let bound_fit = fit_or_note(
        "bound",
        dynamics
            .iter()
            .map(|d| {
                (
                    distance(d.k, d.l),
                    d.rigorous_bound_mean,
                    d.rigorous_bound_std_error,
                )
            })
            .collect(),
        &mut failures,
    );
    let window_fit = fit_or_note(
        "window",
        dynamics
            .iter()
            .map(|d| {
                (
                    distance(d.k, d.l),
                    d.windowed_sup_mean,
                    d.windowed_sup_std_error,
                )
            })
            .collect(),
        &mut failures,
    );

    Ok(ExperimentResult {
        p,
        n_window,
        n_samples,
        ensemble_hash: spec.hash(),
        seed: spec.master_seed,
        moments,
        dynamics,
        moment_fit,
        bound_fit,
        window_fit,
        failures,
    })
}
