//! Multiplicative rank-one perturbations `U_λ = U[(1 − P) + λP]`, `P = ⟨φ, ·⟩φ`
//! with `φ = δ_n`, and the exact identities relating them to the unperturbed
//! operator.

use num_complex::Complex64;

use crate::cmv::{
    build_cmv, check_unimodular, diag_pattern, scale_tail, CmvMatrix, PatternKind, VerblunskySeq,
};
use crate::error::{CmvError, Result};
use crate::linalg::{self, AsMatrix, CMat, CVec};
use crate::spectral::{self, CLUSTER_TOLERANCE};

/// Largest admissible `|⟨ψ, δ_n⟩| / ‖ψ‖` for vectors required to be orthogonal to `δ_n`.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-12;
/// Eigenvalues of `U_{λ₀}` farther than this from `z₀` do not count as `z₀`.
pub const CLARK_EIGEN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneFamily {
    base: CMat,
    site: usize,
    lambda: Complex64,
}

impl RankOneFamily {
    pub fn new(base: CMat, site: usize, lambda: Complex64) -> Result<Self> {
        let n = linalg::check_square(&base)?;
        linalg::check_index(site, n)?;
        check_unimodular(lambda, "lambda")?;
        let defect = linalg::unitarity_defect(&base);
        if defect > spectral::UNITARY_INPUT_TOLERANCE {
            return Err(CmvError::Domain(format!(
                "base is not unitary (defect {defect:e})"
            )));
        }
        Ok(RankOneFamily { base, site, lambda })
    }

    pub fn base(&self) -> &CMat {
        &self.base
    }

    pub fn site(&self) -> usize {
        self.site
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    /// `U_λ`: the base with column `site` multiplied by `λ`.
    pub fn matrix(&self) -> CMat {
        let mut out = self.base.clone();
        if self.lambda != linalg::ONE {
            let mut col = out.column_mut(self.site);
            col *= self.lambda;
        }
        out
    }
}

/// `U[(1 − P) + λP]` with `P` the projection onto `δ_n`.
pub fn perturb(u: &impl AsMatrix, n: usize, lambda: Complex64) -> Result<CMat> {
    Ok(RankOneFamily::new(u.matrix().clone(), n, lambda)?.matrix())
}

/// `F_λ(z) = (1 + λ⁻¹ z f) / (1 − λ⁻¹ z f)` from the Schur value `f = f(z)` of the base.
pub fn caratheodory_lambda(
    f_value: Complex64,
    lambda: Complex64,
    z: Complex64,
) -> Result<Complex64> {
    check_unimodular(lambda, "lambda")?;
    if !(z.norm() < 1.0) {
        return Err(CmvError::Domain(format!("|z| = {} is not < 1", z.norm())));
    }
    let w = lambda.conj() * z * f_value;
    let denominator = 1.0 - w;
    if denominator.norm() < 1e-300 {
        return Err(CmvError::Numeric(format!(
            "1 - z f / lambda vanishes at z = {z}"
        )));
    }
    Ok((1.0 + w) / denominator)
}

/// `⟨ψ, (U − z)⁻¹ U δ_n⟩ / ⟨δ_n, (U − z)⁻¹ U δ_n⟩`.
fn resolvent_ratio(u: &CMat, n: usize, psi: &CVec, z: Complex64, label: &str) -> Result<Complex64> {
    let x = linalg::solve_shifted(u, z, &u.column(n).into_owned())?;
    let denominator = x[n];
    if denominator.norm() < 1e-300 {
        return Err(CmvError::Numeric(format!(
            "denominator <phi, ({label} - z)^-1 {label} phi> vanishes at z = {z}"
        )));
    }
    Ok(linalg::inner(psi, &x) / denominator)
}

fn check_vector(psi: &CVec, n_dim: usize) -> Result<()> {
    if psi.len() != n_dim {
        return Err(CmvError::Domain(format!(
            "vector has length {}, expected {n_dim}",
            psi.len()
        )));
    }
    Ok(())
}

/// Distance between the resolvent ratio of `U_λ` and that of `U`. The ratio
/// does not depend on `λ`, so the result is rounding error.
pub fn ratio_invariance_residual(
    u: &impl AsMatrix,
    n: usize,
    psi: &CVec,
    z: Complex64,
    lambda: Complex64,
) -> Result<f64> {
    let family = RankOneFamily::new(u.matrix().clone(), n, lambda)?;
    check_vector(psi, family.base.nrows())?;
    check_inside(z)?;
    let perturbed = resolvent_ratio(&family.matrix(), n, psi, z, "U_lambda")?;
    let base = resolvent_ratio(&family.base, n, psi, z, "U")?;
    Ok((perturbed - base).norm())
}

/// Residual of
/// `⟨ψ, (U_λ + z)(U_λ − z)⁻¹ φ⟩ = (1 − zf)/(1 − λ⁻¹zf) · ⟨ψ, (U + z)(U − z)⁻¹ φ⟩`
/// for `ψ ⊥ φ`.
pub fn offdiag_transfer_residual(
    u: &impl AsMatrix,
    n: usize,
    psi: &CVec,
    z: Complex64,
    lambda: Complex64,
) -> Result<f64> {
    let family = RankOneFamily::new(u.matrix().clone(), n, lambda)?;
    check_vector(psi, family.base.nrows())?;
    let scale = psi.norm().max(f64::MIN_POSITIVE);
    if psi[n].norm() > ORTHOGONALITY_TOLERANCE * scale {
        return Err(CmvError::Domain(format!(
            "psi is not orthogonal to delta_{n}: <psi, delta_n> = {}",
            psi[n]
        )));
    }
    let f = spectral::schur_value(&family.base, n, z)?;
    let zf = z * f;
    let denominator = 1.0 - lambda.conj() * zf;
    if denominator.norm() < 1e-300 {
        return Err(CmvError::Numeric(format!(
            "prefactor denominator 1 - z f / lambda vanishes at z = {z}"
        )));
    }
    let prefactor = (1.0 - zf) / denominator;
    let lhs = linalg::inner(psi, &spectral::caratheodory_column(&family.matrix(), n, z)?);
    let rhs = linalg::inner(psi, &spectral::caratheodory_column(&family.base, n, z)?);
    Ok((lhs - prefactor * rhs).norm())
}

/// `‖U_n 𝒞(T_{n,λ⁻¹} α) U_n⁻¹ − 𝒞(α) Δ_n(λ)‖_max`.
pub fn conjugation_residual(seq: &VerblunskySeq, n: usize, lambda: Complex64) -> Result<f64> {
    let dim = seq.n_dim();
    if dim < 2 || n > dim - 2 {
        return Err(CmvError::Index {
            index: n,
            limit: dim.saturating_sub(1),
        });
    }
    let rotated = build_cmv(&scale_tail(seq, n, lambda.conj())?);
    let pattern = diag_pattern(PatternKind::Rotation, n, lambda, dim)?;
    let site = diag_pattern(PatternKind::Site, n, lambda, dim)?;
    let lhs = linalg::scale_cols(
        &linalg::scale_rows(&pattern.entries(), rotated.entries()),
        &pattern.inverse_entries(),
    );
    let rhs = linalg::scale_cols(build_cmv(seq).entries(), &site.entries());
    Ok(linalg::max_abs_diff(&lhs, &rhs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClarkCheckReport {
    pub theta0: f64,
    pub lambda0: Complex64,
    pub eigen_residual: f64,
    pub formula_residual: f64,
    pub overlap: Complex64,
}

/// Checks the eigenvector formula for the member of the rank-one family that
/// has `z₀ = e^{iθ₀}` as an eigenvalue.
///
/// `λ₀ = z₀ f(z₀)` is taken from the exact boundary value of `F_nn`; the
/// eigenvector `η` of `U_{λ₀}` at `z₀` must satisfy
/// `⟨η, ψ⟩ / ⟨η, φ⟩ = conj((1 − λ₀) z₀) · conj(⟨ψ, (C − z₀)⁻¹ φ⟩)` for `ψ ⊥ φ`.
pub fn clark_eigen_check(c: &CmvMatrix, n: usize, theta0: f64) -> Result<ClarkCheckReport> {
    let dim = c.n_dim();
    linalg::check_index(n, dim)?;
    let sd = spectral::eigendecompose_unitary(c)?;
    let f_boundary = spectral::caratheodory_boundary(&sd, n, n, theta0)?;
    let lambda0 = (f_boundary - 1.0) / (f_boundary + 1.0);
    let z0 = Complex64::from_polar(1.0, theta0);

    let perturbed = perturb(c, n, lambda0)?;
    let psd = spectral::eigendecompose_unitary(&perturbed)?;
    let (best, distance) = (0..dim)
        .map(|j| (j, (psd.eigenvalue(j) - z0).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty spectrum");
    if distance > CLARK_EIGEN_TOLERANCE {
        return Err(CmvError::Consistency(format!(
            "no eigenvalue of U_lambda0 within {CLARK_EIGEN_TOLERANCE:e} of z0 = {z0} (closest at {distance:e})"
        )));
    }
    // Project φ onto the eigenspace of the cluster containing the best match.
    let best_phase = psd.phases()[best];
    let mut eta = CVec::zeros(dim);
    for j in 0..dim {
        if spectral::circular_distance(psd.phases()[j], best_phase) <= CLUSTER_TOLERANCE {
            let v = psd.vectors().column(j);
            eta += v * v[n].conj();
        }
    }
    let eta_norm = eta.norm();
    if eta_norm < 1e-14 {
        return Err(CmvError::Consistency(format!(
            "delta_{n} is orthogonal to the eigenspace of U_lambda0 at z0 = {z0}"
        )));
    }
    eta /= Complex64::new(eta_norm, 0.0);

    let eigen_residual = (&perturbed * &eta - &eta * z0).norm();
    let overlap = eta[n];
    let resolvent = linalg::solve_shifted(c.entries(), z0, &linalg::basis(dim, n))?;
    let prefactor = ((1.0 - lambda0) * z0).conj();
    let formula_residual = (0..dim)
        .filter(|&k| k != n)
        .map(|k| (eta[k].conj() / overlap.conj() - prefactor * resolvent[k].conj()).norm())
        .fold(0.0, f64::max);

    Ok(ClarkCheckReport {
        theta0,
        lambda0,
        eigen_residual,
        formula_residual,
        overlap,
    })
}

/// `a_m = (1/M) Σ_j ⟨δ_n, U_{λ_j}^m δ_n⟩` over `λ_j = e^{2πij/M}`, `m = 0..=m_max`.
///
/// The summand is a polynomial of degree `≤ m` in `λ`, so for `M > m_max` the
/// grid average is the exact average over the circle.
pub fn spectral_average_moments(
    u: &impl AsMatrix,
    n: usize,
    m_max: usize,
    grid: usize,
) -> Result<Vec<Complex64>> {
    if grid <= m_max {
        return Err(CmvError::Usage(format!(
            "grid size {grid} must exceed the highest moment {m_max}"
        )));
    }
    let base = u.matrix();
    let dim = linalg::check_square(base)?;
    linalg::check_index(n, dim)?;
    let mut sums = vec![Complex64::new(0.0, 0.0); m_max + 1];
    for j in 0..grid {
        let lambda = Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / grid as f64);
        let family = RankOneFamily::new(base.clone(), n, lambda)?;
        let matrix = family.matrix();
        let mut v = linalg::basis(dim, n);
        for sum in sums.iter_mut() {
            *sum += v[n];
            v = &matrix * v;
        }
    }
    Ok(sums.into_iter().map(|s| s / grid as f64).collect())
}

fn check_inside(z: Complex64) -> Result<()> {
    if !(z.norm() < 1.0) {
        return Err(CmvError::Domain(format!("|z| = {} is not < 1", z.norm())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{PI, TAU};

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::linalg::{max_abs_diff, ONE, ZERO};
    use crate::testutil;

    fn random_cmv(rng: &mut ChaCha8Rng, n: usize) -> CmvMatrix {
        build_cmv(&testutil::seq(rng, n, 0.95))
    }

    #[test]
    fn perturb_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_cmv(&mut rng, 8);
        assert_eq!(perturb(&c, 3, ONE).unwrap(), *c.entries());

        let lambda = Complex64::from_polar(1.0, 0.4);
        let d = perturb(&CMat::identity(4, 4), 0, lambda).unwrap();
        assert_eq!(d, linalg::diag_matrix(&[lambda, ONE, ONE, ONE]));

        assert!(matches!(
            perturb(&c, 0, Complex64::new(1.1, 0.0)),
            Err(CmvError::Domain(_))
        ));
        assert!(matches!(perturb(&c, 8, ONE), Err(CmvError::Index { .. })));
    }

    #[test]
    fn perturbation_is_rank_one_and_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let dim = rng.random_range(2..12);
            let c = random_cmv(&mut rng, dim);
            let n = rng.random_range(0..dim);
            let lambda = testutil::unimodular(&mut rng);
            let u_lambda = perturb(&c, n, lambda).unwrap();
            assert!(linalg::unitarity_defect(&u_lambda) <= 1e-12);

            // U_λ − U = (λ − 1) U P
            let mut up = CMat::zeros(dim, dim);
            up.set_column(n, &c.entries().column(n));
            let expected = up * (lambda - 1.0);
            assert!(max_abs_diff(&(&u_lambda - c.entries()), &expected) <= 1e-14);

            // U_λ φ = λ U φ, U_λ ψ = U ψ for ψ ⊥ φ
            let phi = linalg::basis(dim, n);
            let diff = &u_lambda * &phi - (c.entries() * &phi) * lambda;
            assert!(diff.norm() <= 1e-14);
            let mut psi = testutil::vector(&mut rng, dim);
            psi[n] = ZERO;
            assert!((&u_lambda * &psi - c.entries() * &psi).norm() <= 1e-14);
        }
    }

    #[test]
    fn caratheodory_lambda_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = Complex64::new(0.3, 0.2);
        let lambda = testutil::unimodular(&mut rng);
        assert_eq!(caratheodory_lambda(ZERO, lambda, z).unwrap(), ONE);
        let f = Complex64::new(0.1, -0.5);
        let direct = (1.0 + z * f) / (1.0 - z * f);
        assert!((caratheodory_lambda(f, ONE, z).unwrap() - direct).norm() < 1e-15);
        assert!(caratheodory_lambda(f, lambda, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn caratheodory_lambda_matches_perturbed_resolvent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let dim = rng.random_range(2..10);
            let c = random_cmv(&mut rng, dim);
            let n = rng.random_range(0..dim);
            let lambda = testutil::unimodular(&mut rng);
            let z = testutil::disk_point(&mut rng, 0.9);
            let f = spectral::schur_value(&c, n, z).unwrap();
            let via_schur = caratheodory_lambda(f, lambda, z).unwrap();
            let direct =
                spectral::caratheodory_element(&perturb(&c, n, lambda).unwrap(), n, n, z).unwrap();
            assert!((via_schur - direct).norm() <= 1e-10 * (1.0 + direct.norm()));
        }
    }

    #[test]
    fn ratio_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_cmv(&mut rng, 8);
        let psi = testutil::vector(&mut rng, 8);
        let z = Complex64::new(0.2, 0.1);
        assert_eq!(ratio_invariance_residual(&c, 2, &psi, z, ONE).unwrap(), 0.0);
        let lambda = testutil::unimodular(&mut rng);
        let phi = linalg::basis(8, 2);
        assert!(ratio_invariance_residual(&c, 2, &phi, z, lambda).unwrap() <= 1e-15);
        for _ in 0..100 {
            let c = random_cmv(&mut rng, 8);
            let psi = testutil::vector(&mut rng, 8);
            let z = testutil::disk_point(&mut rng, 0.95);
            let lambda = testutil::unimodular(&mut rng);
            let n = rng.random_range(0..8);
            assert!(ratio_invariance_residual(&c, n, &psi, z, lambda).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn offdiagonal_transfer() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = random_cmv(&mut rng, 8);
        let mut psi = testutil::vector(&mut rng, 8);
        psi[1] = ZERO;
        let z = Complex64::new(-0.3, 0.4);
        assert_eq!(offdiag_transfer_residual(&c, 1, &psi, z, ONE).unwrap(), 0.0);
        assert!(matches!(
            offdiag_transfer_residual(&c, 0, &psi, z, ONE),
            Err(CmvError::Domain(_))
        ));

        let free = build_cmv(&VerblunskySeq::free(64, ONE).unwrap());
        let mut psi = testutil::vector(&mut rng, 64);
        psi[0] = ZERO;
        let r = offdiag_transfer_residual(
            &free,
            0,
            &psi,
            Complex64::new(0.1, 0.1),
            testutil::unimodular(&mut rng),
        );
        assert!(r.unwrap() <= 1e-8);

        for _ in 0..100 {
            let c = random_cmv(&mut rng, 8);
            let n = rng.random_range(0..8);
            let mut psi = testutil::vector(&mut rng, 8);
            psi[n] = ZERO;
            let z = testutil::disk_point(&mut rng, 0.95);
            let lambda = testutil::unimodular(&mut rng);
            assert!(offdiag_transfer_residual(&c, n, &psi, z, lambda).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn conjugation_identity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let seq = testutil::seq(&mut rng, 8, 0.95);
        for n in 0..7 {
            assert_eq!(conjugation_residual(&seq, n, ONE).unwrap(), 0.0);
        }
        let lambda = Complex64::from_polar(1.0, PI / 5.0);
        for n in [0, 3, 4] {
            assert!(conjugation_residual(&seq, n, lambda).unwrap() <= 1e-12);
        }
        assert!(matches!(
            conjugation_residual(&seq, 7, lambda),
            Err(CmvError::Index { .. })
        ));
    }

    #[test]
    fn conjugation_identity_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for dim in [3usize, 4, 5, 6, 8, 9, 16] {
            for n in 0..=dim - 2 {
                for _ in 0..10 {
                    let seq = testutil::seq(&mut rng, dim, 1.0);
                    let lambda = testutil::unimodular(&mut rng);
                    let r = conjugation_residual(&seq, n, lambda).unwrap();
                    assert!(r <= 1e-12, "N={dim} n={n}: {r:e}");
                }
            }
        }
    }

    #[test]
    fn conjugation_preserves_power_moduli() {
        // U_n is diagonal and unitary, so |(CΔ_k)^m_{kj}| = |C(T α)^m_{kj}|.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let seq = testutil::seq(&mut rng, 10, 0.95);
            let k = rng.random_range(0..9);
            let lambda = testutil::unimodular(&mut rng);
            let site = diag_pattern(PatternKind::Site, k, lambda, 10).unwrap();
            let a = linalg::scale_cols(build_cmv(&seq).entries(), &site.entries());
            let b = build_cmv(&scale_tail(&seq, k, lambda.conj()).unwrap()).into_entries();
            let (mut pa, mut pb) = (a.clone(), b.clone());
            for _ in 1..6 {
                for j in 0..10 {
                    assert!((pa[(k, j)].norm() - pb[(k, j)].norm()).abs() <= 1e-12);
                }
                pa = &pa * &a;
                pb = &pb * &b;
            }
        }
    }

    #[test]
    fn clark_two_by_two() {
        let seq = VerblunskySeq::new(vec![ZERO], ONE).unwrap();
        let c = build_cmv(&seq);
        let report = clark_eigen_check(&c, 0, PI / 2.0).unwrap();
        assert!((report.lambda0.norm() - 1.0).abs() <= 1e-8);
        assert!(report.eigen_residual <= 1e-10);
        assert!(report.formula_residual <= 1e-10);
        // Closed form: U_λ = [[0, 1], [λ, 0]] has eigenvalues ±√λ, so λ₀ = z₀² = −1.
        assert!((report.lambda0 + 1.0).norm() <= 1e-12);
    }

    #[test]
    fn clark_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let c = random_cmv(&mut rng, 8);
        let sd = spectral::eigendecompose_unitary(&c).unwrap();
        let mut checked = 0;
        while checked < 20 {
            let theta0 = TAU * rng.random::<f64>();
            if sd
                .phases()
                .iter()
                .any(|&t| spectral::circular_distance(t, theta0) < 1e-3)
            {
                continue;
            }
            checked += 1;
            let n = rng.random_range(0..8);
            let report = clark_eigen_check(&c, n, theta0).unwrap();
            assert!((report.lambda0.norm() - 1.0).abs() <= 1e-8);
            assert!(report.eigen_residual <= 1e-8, "{report:?}");
            assert!(report.formula_residual <= 1e-7, "{report:?}");
            assert!(report.overlap.norm() >= 1e-12);
        }
        let atom = sd.phases()[0];
        assert!(matches!(
            clark_eigen_check(&c, 0, atom),
            Err(CmvError::Singularity { .. })
        ));
    }

    #[test]
    fn spectral_averaging_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_cmv(&mut rng, 8);
        let moments = spectral_average_moments(&c, 3, 5, 64).unwrap();
        assert_eq!(moments[0], ONE);
        for a in &moments[1..] {
            assert!(a.norm() <= 1e-12, "{a}");
        }
        assert!(matches!(
            spectral_average_moments(&c, 3, 5, 5),
            Err(CmvError::Usage(_))
        ));
        // The smallest admissible grid is already exact.
        let tight = spectral_average_moments(&c, 3, 4, 5).unwrap();
        assert!(tight.iter().skip(1).all(|a| a.norm() <= 1e-12));
    }

    #[test]
    fn negative_moments_are_conjugates() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = random_cmv(&mut rng, 6);
        let lambda = testutil::unimodular(&mut rng);
        let u = perturb(&c, 2, lambda).unwrap();
        let inv = u.adjoint();
        let (mut p, mut q) = (u.clone(), inv.clone());
        for _ in 0..5 {
            assert!((q[(2, 2)] - p[(2, 2)].conj()).norm() <= 1e-14);
            p = &p * &u;
            q = &q * &inv;
        }
    }
}
