//! The identity suite run by `cmvlab verify`: every exact relation of the
//! operator layer, evaluated on random instances, with its worst residual.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cmv::{
    self, build_cmv, build_lm_factors, theta_block, v_block, v_tilde_block, VerblunskySeq,
};
use crate::ensembles::{self, EnsembleSpec};
use crate::error::{CmvError, Result};
use crate::estimators::{holder_interpolation_gap, jensen_gap, kolmogorov_report};
use crate::linalg::{self, CVec};
use crate::perturbation::{
    clark_eigen_check, conjugation_residual, offdiag_transfer_residual, ratio_invariance_residual,
    spectral_average_moments,
};
use crate::spectral::{self, QuadratureSpec};

/// Stream offset for the auxiliary draws (spectral parameters, test vectors),
/// far above any sample index.
const AUX_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_residual: f64,
    pub threshold: f64,
    pub cases: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovSummary {
    pub p: f64,
    pub max_ratio: f64,
    pub violations: usize,
    pub cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub dims: Vec<usize>,
    pub instances: usize,
    pub checks: Vec<IdentityCheck>,
    /// Reported only; a ratio above 1 does not fail the suite.
    pub kolmogorov: KolmogorovSummary,
    pub passed: bool,
}

struct Tally {
    name: &'static str,
    threshold: f64,
    worst: f64,
    cases: usize,
}

impl Tally {
    fn new(name: &'static str, threshold: f64) -> Self {
        Tally {
            name,
            threshold,
            worst: 0.0,
            cases: 0,
        }
    }

    fn add(&mut self, residual: f64) {
        // NaN must fail the check, so it is kept rather than ignored by max.
        self.worst = if residual.is_nan() || self.worst.is_nan() {
            f64::NAN
        } else {
            self.worst.max(residual)
        };
        self.cases += 1;
    }

    fn finish(self) -> IdentityCheck {
        IdentityCheck {
            name: self.name.to_string(),
            max_residual: self.worst,
            threshold: self.threshold,
            cases: self.cases,
            passed: self.worst <= self.threshold,
        }
    }
}

fn unimodular(rng: &mut impl Rng) -> Complex64 {
    Complex64::from_polar(1.0, TAU * rng.random::<f64>())
}

fn disk_point(rng: &mut impl Rng, r_max: f64) -> Complex64 {
    Complex64::from_polar(
        r_max * rng.random::<f64>().sqrt(),
        TAU * rng.random::<f64>(),
    )
}

fn vector(rng: &mut impl Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

fn block_residual(a: &cmv::Block, b: &cmv::Block) -> f64 {
    (0..2)
        .flat_map(|r| (0..2).map(move |c| (r, c)))
        .map(|(r, c)| (a[r][c] - b[r][c]).norm())
        .fold(0.0, f64::max)
}

/// Worst residual of the 2×2 scaling relations
/// `v(λ) Θ(λ⁻¹α) v(λ) = λ Θ(α)` and `ṽ(λ⁻¹) Θ(λ⁻¹α) ṽ(λ⁻¹) = λ⁻¹ Θ(α)`.
fn block_scaling_residual(alpha: Complex64, lambda: Complex64) -> Result<f64> {
    let inner = theta_block(lambda.conj() * alpha)?;
    let target = theta_block(alpha)?;
    let scaled = |s: Complex64| target.map(|row| row.map(|x| s * x));
    let v = v_block(lambda);
    let vt = v_tilde_block(lambda.conj());
    let first = cmv::block_mul(&cmv::block_mul(&v, &inner), &v);
    let second = cmv::block_mul(&cmv::block_mul(&vt, &inner), &vt);
    Ok(
        block_residual(&first, &scaled(lambda))
            .max(block_residual(&second, &scaled(lambda.conj()))),
    )
}

pub struct SuiteParams<'a> {
    /// Law and seed; the dimension is replaced by each entry of `dims`.
    pub ensemble: &'a EnsembleSpec,
    pub dims: &'a [usize],
    pub instances: usize,
    pub p: f64,
    pub quad: &'a QuadratureSpec,
}

/// Runs every identity on `instances` samples for each dimension.
pub fn run_suite(params: &SuiteParams<'_>) -> Result<VerifyReport> {
    let mut lm = Tally::new("lm_factor_unitarity", 1e-12);
    let mut blocks = Tally::new("block_scaling", 1e-14);
    let mut conjugation = Tally::new("tail_rotation_conjugation", 1e-12);
    let mut ratio = Tally::new("resolvent_ratio_invariance", 1e-10);
    let mut transfer = Tally::new("offdiagonal_transfer", 1e-10);
    let mut averaging = Tally::new("spectral_averaging", 1e-12);
    let mut clark_eigen = Tally::new("clark_eigenvector", 1e-8);
    let mut clark_formula = Tally::new("clark_formula", 1e-7);
    let mut oracle = Tally::new("schur_oracle_agreement", 1e-8);
    let mut holder = Tally::new("holder_interpolation", 1e-12);
    let mut jensen = Tally::new("jensen_concavity", 1e-12);
    let mut kolmogorov = KolmogorovSummary {
        p: params.p,
        max_ratio: 0.0,
        violations: 0,
        cases: 0,
    };

    for &n_dim in params.dims {
        let spec = EnsembleSpec {
            n_dim,
            ..params.ensemble.clone()
        };
        let mut rng = ChaCha20Rng::seed_from_u64(spec.master_seed);
        rng.set_stream(AUX_STREAM + n_dim as u64);
        for i in 0..params.instances {
            let seq = ensembles::sample(&spec, i as u64)?;
            let c = build_cmv(&seq);
            let (l, m) = build_lm_factors(&seq);
            lm.add(
                linalg::unitarity_defect(&l)
                    .max(linalg::unitarity_defect(&m))
                    .max(linalg::unitarity_defect(c.entries())),
            );
            for &alpha in seq.alphas() {
                blocks.add(block_scaling_residual(alpha, unimodular(&mut rng))?);
            }
            for n in 0..=n_dim - 2 {
                conjugation.add(conjugation_residual(&seq, n, unimodular(&mut rng))?);
            }

            let site = rng.random_range(0..n_dim);
            let z = disk_point(&mut rng, 0.95);
            let lambda = unimodular(&mut rng);
            ratio.add(ratio_invariance_residual(
                &c,
                site,
                &vector(&mut rng, n_dim),
                z,
                lambda,
            )?);
            let mut psi = vector(&mut rng, n_dim);
            psi[site] = linalg::ZERO;
            transfer.add(offdiag_transfer_residual(&c, site, &psi, z, lambda)?);

            let a = spectral_average_moments(&c, site, 16, 64)?;
            averaging.add(a.iter().enumerate().fold(0.0, |acc, (m, x)| {
                let expected = if m == 0 { 1.0 } else { 0.0 };
                f64::max(acc, (x - expected).norm())
            }));

            let report = loop {
                match clark_eigen_check(&c, site, TAU * rng.random::<f64>()) {
                    Err(CmvError::Singularity { .. }) => continue,
                    other => break other?,
                }
            };
            clark_eigen.add(report.eigen_residual);
            clark_formula.add(report.formula_residual);

            oracle.add(schur_oracle_residual(&seq, disk_point(&mut rng, 0.5))?);

            let sd = spectral::eigendecompose_unitary(&c)?;
            let mu: Vec<f64> = sd
                .weights(site, site)
                .iter()
                .map(|w| w.re.max(0.0))
                .collect();
            let g: Vec<f64> = (0..n_dim).map(|_| 10.0 * rng.random::<f64>()).collect();
            for p in [0.3, 0.5, 0.7] {
                holder.add((-holder_interpolation_gap(&mu, &g, p)).max(0.0));
                jensen.add((-jensen_gap(&mu, &g, p)).max(0.0));
            }

            let (k, l) = (rng.random_range(0..n_dim), rng.random_range(0..n_dim));
            let r = kolmogorov_report(&seq, k, l, params.p, params.quad)?;
            kolmogorov.max_ratio = kolmogorov.max_ratio.max(r.ratio);
            kolmogorov.violations += usize::from(r.ratio > 1.0);
            kolmogorov.cases += 1;
        }
    }

    let checks: Vec<IdentityCheck> = [
        lm,
        blocks,
        conjugation,
        ratio,
        transfer,
        averaging,
        clark_eigen,
        clark_formula,
        oracle,
        holder,
        jensen,
    ]
    .into_iter()
    .map(Tally::finish)
    .collect();
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        dims: params.dims.to_vec(),
        instances: params.instances,
        checks,
        kolmogorov,
        passed,
    })
}

/// `|F_00(z) − (1 + z f)/(1 − z f)|` with `f` from the Schur recursion.
fn schur_oracle_residual(seq: &VerblunskySeq, z: Complex64) -> Result<f64> {
    let f = spectral::schur_oracle(seq.alphas(), seq.beta(), z)?;
    let direct = spectral::caratheodory_element(&build_cmv(seq), 0, 0, z)?;
    Ok(((1.0 + z * f) / (1.0 - z * f) - direct).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_default_law() {
        let spec = EnsembleSpec::default_disordered(2, 7);
        let report = run_suite(&SuiteParams {
            ensemble: &spec,
            dims: &[4, 6, 8],
            instances: 5,
            p: 0.5,
            quad: &QuadratureSpec::default(),
        })
        .unwrap();
        assert!(report.passed, "{report:#?}");
        assert_eq!(report.checks.len(), 11);
        assert_eq!(report.kolmogorov.cases, 15);
        let conj = report
            .checks
            .iter()
            .find(|c| c.name == "tail_rotation_conjugation")
            .unwrap();
        assert_eq!(conj.cases, 5 * (3 + 5 + 7));
    }

    #[test]
    fn suite_is_deterministic() {
        let spec = EnsembleSpec::free(2, 3);
        let params = SuiteParams {
            ensemble: &spec,
            dims: &[5],
            instances: 3,
            p: 0.3,
            quad: &QuadratureSpec::default(),
        };
        assert_eq!(run_suite(&params).unwrap(), run_suite(&params).unwrap());
    }

    #[test]
    fn nan_residual_fails() {
        let mut t = Tally::new("x", 1.0);
        t.add(0.5);
        t.add(f64::NAN);
        t.add(0.1);
        assert!(!t.finish().passed);
    }

    #[test]
    fn block_scaling_on_the_circle() {
        let alpha = Complex64::from_polar(1.0, 0.4);
        assert!(block_scaling_residual(alpha, Complex64::from_polar(1.0, 2.0)).unwrap() <= 1e-15);
    }
}
