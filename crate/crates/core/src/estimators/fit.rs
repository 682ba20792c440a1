//! Exponential decay fits `value ≈ C e^{−κ d}` by weighted least squares on
//! `ln(value)`.

use serde::{Deserialize, Serialize};

use crate::error::{CmvError, Result};

/// Points whose estimate does not exceed this multiple of its standard error
/// are left out of [`fit_estimates`].
pub const SIGNIFICANCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    /// `(value / std_error)²`, the inverse variance of `ln(value)` to first order.
    InverseRelativeVariance,
}

#[derive(Debug, Clone, Copy)]
pub enum Weights<'a> {
    Uniform,
    StdErrors(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub prefactor: f64,
    pub rate: f64,
    pub rate_std_error: f64,
    pub r_squared: f64,
    pub d_min: i64,
    pub d_max: i64,
    pub n_points: usize,
    pub weighting: Weighting,
    /// Distances excluded for lack of significance.
    pub dropped: Vec<i64>,
}

pub fn fit_decay(distances: &[i64], values: &[f64], weights: Weights<'_>) -> Result<DecayFit> {
    if distances.len() != values.len() {
        return Err(CmvError::Usage(format!(
            "{} distances but {} values",
            distances.len(),
            values.len()
        )));
    }
    if distances.len() < 3 {
        return Err(CmvError::Usage(format!(
            "a decay fit needs at least 3 points, got {}",
            distances.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(CmvError::Domain(format!(
            "decay fit values must be positive, got {v}"
        )));
    }
    let (w, weighting) = match weights {
        Weights::StdErrors(se) if se.len() != values.len() => {
            return Err(CmvError::Usage(format!(
                "{} standard errors for {} values",
                se.len(),
                values.len()
            )))
        }
        Weights::StdErrors(se) if se.iter().all(|s| *s > 0.0 && s.is_finite()) => (
            values
                .iter()
                .zip(se)
                .map(|(v, s)| (v / s).powi(2))
                .collect::<Vec<_>>(),
            Weighting::InverseRelativeVariance,
        ),
        _ => (vec![1.0; values.len()], Weighting::Uniform),
    };

    let x: Vec<f64> = distances.iter().map(|&d| d as f64).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(CmvError::Usage(
            "decay fit needs at least two distinct distances".into(),
        ));
    }
    let sxy: f64 = w
        .iter()
        .zip(x.iter().zip(&y))
        .map(|(w, (x, y))| w * (x - xm) * (y - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;

    let ss_res: f64 = w
        .iter()
        .zip(x.iter().zip(&y))
        .map(|(w, (x, y))| w * (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = w.iter().zip(&y).map(|(w, y)| w * (y - ym).powi(2)).sum();
    // Constant data up to rounding: the fit is exact.
    let r_squared = if ss_tot > 1e-24 * sw * (1.0 + ym * ym) {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let dof = (x.len() - 2) as f64;
    let rate_std_error = (ss_res / dof / sxx).sqrt();

    Ok(DecayFit {
        prefactor: intercept.exp(),
        rate: -slope,
        rate_std_error,
        r_squared,
        d_min: *distances.iter().min().expect("non-empty"),
        d_max: *distances.iter().max().expect("non-empty"),
        n_points: x.len(),
        weighting,
        dropped: Vec::new(),
    })
}

/// Fits Monte Carlo estimates after dropping points that are not
/// significantly above zero (estimate ≤ 10 standard errors).
pub fn fit_estimates(distances: &[i64], values: &[f64], std_errors: &[f64]) -> Result<DecayFit> {
    let mut kept = (Vec::new(), Vec::new(), Vec::new());
    let mut dropped = Vec::new();
    for ((&d, &v), &s) in distances.iter().zip(values).zip(std_errors) {
        if v > SIGNIFICANCE_FACTOR * s {
            kept.0.push(d);
            kept.1.push(v);
            kept.2.push(s);
        } else {
            dropped.push(d);
        }
    }
    if !dropped.is_empty() {
        log::info!("decay fit: dropped distances {dropped:?} (estimate <= {SIGNIFICANCE_FACTOR} x std error)");
    }
    let mut fit = fit_decay(&kept.0, &kept.1, Weights::StdErrors(&kept.2))?;
    fit.dropped = dropped;
    Ok(fit)
}
