//! Exact spectral data of finite unitaries.
//!
//! In finite dimensions every spectral measure is a finite sum of atoms at
//! the eigenphases, so the boundary values of the Carathéodory matrix
//! elements
//!
//! ```text
//! F_kl(z) = [(U + z)(U − z)⁻¹]_kl = Σ_j w_j(k,l) (e^{iθ_j} + z)/(e^{iθ_j} − z)
//! ```
//!
//! are available in closed form off the atoms. On the circle each kernel
//! reduces to `i·cot((θ − θ_j)/2)`, which is what the boundary routines use.

mod quadrature;

use std::f64::consts::TAU;

use nalgebra::linalg::Schur;
use num_complex::Complex64;

use crate::error::{CmvError, Result};
use crate::linalg::{self, AsMatrix, CMat, CVec};

pub use quadrature::{boundary_p_integral, gauss_legendre, QuadratureSpec};

/// Eigenphases closer than this are treated as one atom.
pub const CLUSTER_TOLERANCE: f64 = 1e-9;
/// Default exclusion radius around atoms for boundary evaluations.
pub const DELTA_MIN: f64 = 1e-9;
/// Inputs to the eigensolver must be unitary to this accuracy.
pub const UNITARY_INPUT_TOLERANCE: f64 = 1e-10;
/// Accepted `‖U v − e^{iθ} v‖` for every computed eigenpair.
pub const EIGEN_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// One atom of a (possibly complex) spectral measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub phase: f64,
    pub weight: Complex64,
}

/// Eigenphases in `[0, 2π)` (ascending) and an orthonormal eigenbasis.
///
/// The weight `w_j(k, l) = ⟨δ_k, P_j δ_l⟩ = v_j[k]·conj(v_j[l])` is the
/// mass the `(k, l)` spectral measure puts on the `j`-th eigenphase.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    phases: Vec<f64>,
    vectors: CMat,
}

impl SpectralDecomposition {
    /// Builds a decomposition from eigenphases and matching eigenvector
    /// columns, sorting by phase.
    pub fn from_parts(phases: Vec<f64>, vectors: CMat) -> Result<Self> {
        let n = phases.len();
        if vectors.nrows() != n || vectors.ncols() != n || n == 0 {
            return Err(CmvError::Domain(format!(
                "{} phases for a {}x{} eigenvector matrix",
                n,
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let normalized: Vec<f64> = phases.iter().map(|&t| normalize_phase(t)).collect();
        order.sort_by(|&a, &b| normalized[a].total_cmp(&normalized[b]));
        let phases = order.iter().map(|&j| normalized[j]).collect();
        let vectors = CMat::from_fn(n, n, |r, c| vectors[(r, order[c])]);
        Ok(Self { phases, vectors })
    }

    pub fn n_dim(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn vectors(&self) -> &CMat {
        &self.vectors
    }

    pub fn eigenvalue(&self, j: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.phases[j])
    }

    pub fn weight(&self, j: usize, k: usize, l: usize) -> Complex64 {
        self.vectors[(k, j)] * self.vectors[(l, j)].conj()
    }

    pub fn weights(&self, k: usize, l: usize) -> Vec<Complex64> {
        (0..self.n_dim()).map(|j| self.weight(j, k, l)).collect()
    }

    /// Atoms of the `(k, l)` measure with eigenphases closer than
    /// [`CLUSTER_TOLERANCE`] merged (weights summed, phases averaged).
    pub fn atoms(&self, k: usize, l: usize) -> Vec<Atom> {
        let n = self.n_dim();
        // Groups of consecutive indices, (start, len).
        let mut groups: Vec<(usize, usize)> = Vec::new();
        for j in 0..n {
            match groups.last_mut() {
                Some((start, len))
                    if self.phases[j] - self.phases[*start + *len - 1] < CLUSTER_TOLERANCE =>
                {
                    *len += 1
                }
                _ => groups.push((j, 1)),
            }
        }
        // Cluster straddling the 0 / 2π seam.
        if groups.len() > 1 {
            let first = self.phases[0];
            let last = self.phases[n - 1];
            if first + TAU - last < CLUSTER_TOLERANCE {
                let (start, len) = groups.pop().unwrap();
                // The head cluster continues the tail one past 2π.
                groups[0] = (start, len + groups[0].1);
            }
        }
        let mut atoms: Vec<Atom> = groups
            .into_iter()
            .map(|(start, len)| {
                let mut weight = Complex64::new(0.0, 0.0);
                let mut phase_sum = 0.0;
                let base = self.phases[start];
                for offset in 0..len {
                    let j = (start + offset) % n;
                    weight += self.weight(j, k, l);
                    let mut t = self.phases[j];
                    if t < base {
                        t += TAU;
                    }
                    phase_sum += t;
                }
                Atom {
                    phase: normalize_phase(phase_sum / len as f64),
                    weight,
                }
            })
            .collect();
        atoms.sort_by(|a, b| a.phase.total_cmp(&b.phase));
        atoms
    }

    /// `(U^n)_{kl} = Σ_j e^{inθ_j} w_j(k, l)`, for any integer `n`.
    pub fn power_element(&self, n: i64, k: usize, l: usize) -> Complex64 {
        (0..self.n_dim())
            .map(|j| Complex64::from_polar(1.0, n as f64 * self.phases[j]) * self.weight(j, k, l))
            .sum()
    }

    /// `Σ_j |w_j(k, l)|`, which bounds `|(U^n)_{kl}|` for every `n ∈ ℤ`.
    pub fn total_variation(&self, k: usize, l: usize) -> f64 {
        self.atoms(k, l).iter().map(|a| a.weight.norm()).sum()
    }

    /// `max_j ‖U v_j − e^{iθ_j} v_j‖₂`.
    pub fn max_eigen_residual(&self, u: &CMat) -> f64 {
        let uv = u * &self.vectors;
        (0..self.n_dim())
            .map(|j| {
                let lambda = self.eigenvalue(j);
                (0..self.n_dim())
                    .map(|r| (uv[(r, j)] - lambda * self.vectors[(r, j)]).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Errors when `theta` lies within `delta_min` of an atom of the
    /// `(k, l)` measure.
    pub(crate) fn check_off_atoms(&self, atoms: &[Atom], theta: f64, delta_min: f64) -> Result<()> {
        for atom in atoms {
            let distance = circular_distance(theta, atom.phase);
            if distance < delta_min {
                return Err(CmvError::Singularity {
                    theta,
                    phase: atom.phase,
                    distance,
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn normalize_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Distance on the circle between two angles, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// `cot(x/2)` written so that it stays accurate for small `x`.
#[inline]
pub(crate) fn half_cot(x: f64) -> f64 {
    (0.5 * x).tan().recip()
}

/// Diagonalizes a unitary matrix via its complex Schur form.
///
/// For a normal matrix the triangular Schur factor is diagonal, so the
/// unitary Schur vectors are an orthonormal eigenbasis; degenerate
/// eigenspaces come out orthonormalized automatically.
pub fn eigendecompose_unitary(u: &impl AsMatrix) -> Result<SpectralDecomposition> {
    let u = u.matrix();
    let n = linalg::check_square(u)?;
    let defect = linalg::unitarity_defect(u);
    if !(defect <= UNITARY_INPUT_TOLERANCE) {
        return Err(CmvError::Domain(format!(
            "matrix is not unitary: |U*U - I|_max = {defect:e}"
        )));
    }
    let schur = Schur::try_new(u.clone(), f64::EPSILON, 100 * n.max(10)).ok_or_else(|| {
        CmvError::Numeric(format!(
            "Schur iteration did not converge for a {n}x{n} matrix (unitarity defect {defect:e})"
        ))
    })?;
    let (q, t) = schur.unpack();
    let phases: Vec<f64> = (0..n).map(|j| t[(j, j)].arg()).collect();
    let sd = SpectralDecomposition::from_parts(phases, q)?;
    let residual = sd.max_eigen_residual(u);
    if !(residual <= EIGEN_RESIDUAL_TOLERANCE) {
        let off_diagonal = (0..n)
            .flat_map(|r| (r + 1..n).map(move |c| (r, c)))
            .fold(0.0f64, |acc, (r, c)| acc.max(t[(r, c)].norm()));
        return Err(CmvError::Numeric(format!(
            "eigenpair residual {residual:e} exceeds {EIGEN_RESIDUAL_TOLERANCE:e} \
             (largest off-diagonal Schur entry {off_diagonal:e}, unitarity defect {defect:e})"
        )));
    }
    Ok(sd)
}

fn check_inside_disk(z: Complex64) -> Result<()> {
    if !(z.norm() < 1.0) {
        return Err(CmvError::Domain(format!("|z| = {} is not < 1", z.norm())));
    }
    Ok(())
}

/// `(U + z)(U − z)⁻¹ δ_l`.
pub fn caratheodory_column(u: &impl AsMatrix, l: usize, z: Complex64) -> Result<CVec> {
    let u = u.matrix();
    let n = linalg::check_square(u)?;
    linalg::check_index(l, n)?;
    check_inside_disk(z)?;
    let x = linalg::solve_shifted(u, z, &linalg::basis(n, l))?;
    Ok(u * &x + x * z)
}

/// `F_kl(z) = [(U + z)(U − z)⁻¹]_kl` for `|z| < 1`, by one linear solve.
pub fn caratheodory_element(
    u: &impl AsMatrix,
    k: usize,
    l: usize,
    z: Complex64,
) -> Result<Complex64> {
    linalg::check_index(k, u.matrix().nrows())?;
    Ok(caratheodory_column(u, l, z)?[k])
}

/// The same matrix element from the spectral sum.
pub fn caratheodory_spectral(
    sd: &SpectralDecomposition,
    k: usize,
    l: usize,
    z: Complex64,
) -> Complex64 {
    (0..sd.n_dim())
        .map(|j| {
            let zeta = sd.eigenvalue(j);
            sd.weight(j, k, l) * (zeta + z) / (zeta - z)
        })
        .sum()
}

/// Boundary value `F_kl(e^{iθ}) = i Σ_j w_j(k,l) cot((θ − θ_j)/2)`.
pub fn caratheodory_boundary(
    sd: &SpectralDecomposition,
    k: usize,
    l: usize,
    theta: f64,
) -> Result<Complex64> {
    caratheodory_boundary_with(sd, k, l, theta, DELTA_MIN)
}

pub fn caratheodory_boundary_with(
    sd: &SpectralDecomposition,
    k: usize,
    l: usize,
    theta: f64,
    delta_min: f64,
) -> Result<Complex64> {
    linalg::check_index(k, sd.n_dim())?;
    linalg::check_index(l, sd.n_dim())?;
    let atoms = sd.atoms(k, l);
    sd.check_off_atoms(&atoms, theta, delta_min)?;
    let sum: Complex64 = atoms
        .iter()
        .map(|a| a.weight * half_cot(theta - a.phase))
        .sum();
    Ok(Complex64::i() * sum)
}

/// Schur function `f` of the spectral measure of `δ_n`, defined by
/// `F_nn(z) = (1 + z f(z)) / (1 − z f(z))`.
///
/// Evaluated as `⟨δ_n, (U − z)⁻¹ δ_n⟩ / ⟨δ_n, U (U − z)⁻¹ δ_n⟩`, which is the
/// same quotient without the cancellation in `F − 1` and which gives
/// `f(0) = F′(0)/2 = conj(U_nn)` directly.
pub fn schur_value(u: &impl AsMatrix, n: usize, z: Complex64) -> Result<Complex64> {
    let u = u.matrix();
    let dim = linalg::check_square(u)?;
    linalg::check_index(n, dim)?;
    check_inside_disk(z)?;
    let x = linalg::solve_shifted(u, z, &linalg::basis(dim, n))?;
    let numerator = x[n];
    let denominator: Complex64 = (0..dim).map(|c| u[(n, c)] * x[c]).sum();
    if denominator.norm() < 1e-300 {
        return Err(CmvError::Numeric(format!(
            "F_nn(z) = -1 at z = {z}; Schur function has a pole"
        )));
    }
    Ok(numerator / denominator)
}

/// Evaluates a Schur function from its Schur parameters by the backward
/// recursion `f_j = (α_j + z f_{j+1}) / (1 + conj(α_j) z f_{j+1})`, started
/// from the constant `f_last = closure`.
pub fn schur_oracle(alphas: &[Complex64], closure: Complex64, z: Complex64) -> Result<Complex64> {
    check_inside_disk(z)?;
    if !(closure.norm() <= 1.0 + 1e-12) {
        return Err(CmvError::Domain(format!(
            "closure {closure} outside the closed disk"
        )));
    }
    Ok(alphas.iter().rev().fold(closure, |f, &alpha| {
        let zf = z * f;
        (alpha + zf) / (Complex64::new(1.0, 0.0) + alpha.conj() * zf)
    }))
}

/// `G(e^{iθ₀}) = Σ_j w_j(n,n) / |e^{iθ₀} − e^{iθ_j}|²`.
pub fn g_function(sd: &SpectralDecomposition, n: usize, theta0: f64) -> Result<f64> {
    linalg::check_index(n, sd.n_dim())?;
    let atoms = sd.atoms(n, n);
    sd.check_off_atoms(&atoms, theta0, DELTA_MIN)?;
    Ok(atoms
        .iter()
        .map(|a| {
            let chord = 2.0 * (0.5 * (theta0 - a.phase)).sin();
            a.weight.re / (chord * chord)
        })
        .sum())
}
