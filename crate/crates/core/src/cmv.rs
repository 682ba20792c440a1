//! Finite CMV matrices.
//!
//! A CMV matrix is assembled from Verblunsky coefficients as the product
//! `C = L·M` of two block-diagonal unitaries built from the 2×2 blocks
//!
//! ```text
//! Θ(α) = [ conj(α)   ρ ]      ρ = (1 − |α|²)^{1/2}
//!        [   ρ      −α ]
//! ```
//!
//! `L = Θ(α₀) ⊕ Θ(α₂) ⊕ …` and `M = 1 ⊕ Θ(α₁) ⊕ Θ(α₃) ⊕ …`. The semi-infinite
//! matrix is closed at dimension `N` by a unimodular coefficient `β` in slot
//! `N − 1`; its block has `ρ = 0`, so only the 1×1 entry `conj(β)` survives
//! and the top-left `N × N` corner decouples as an exactly unitary matrix.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CmvError, Result};
use crate::linalg::{self, AsMatrix, CMat, ONE};

/// Tolerance on `|β| = 1`.
pub const BETA_TOLERANCE: f64 = 1e-12;
/// Tolerance on `|λ| = 1` for the rotation parameters.
pub const UNIMODULAR_TOLERANCE: f64 = 1e-10;

pub type Block = [[Complex64; 2]; 2];

/// Verblunsky coefficients `α₀, …, α_{N−2}` in the open disk plus the
/// unimodular closure `β` standing in slot `N − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerblunskySeq {
    alphas: Vec<Complex64>,
    beta: Complex64,
}

impl VerblunskySeq {
    pub fn new(alphas: Vec<Complex64>, beta: Complex64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(CmvError::Domain(
                "need at least one coefficient (dimension N >= 2)".into(),
            ));
        }
        if let Some((j, a)) = alphas
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.norm() < 1.0) || !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(CmvError::Domain(format!(
                "alpha_{j} = {a} must lie strictly inside the unit disk"
            )));
        }
        if (beta.norm() - 1.0).abs() > BETA_TOLERANCE {
            return Err(CmvError::Domain(format!(
                "closure beta = {beta} must be unimodular"
            )));
        }
        Ok(Self { alphas, beta })
    }

    /// The free sequence `α ≡ 0` with closure `β`.
    pub fn free(n_dim: usize, beta: Complex64) -> Result<Self> {
        if n_dim < 2 {
            return Err(CmvError::Domain(format!("dimension {n_dim} < 2")));
        }
        Self::new(vec![Complex64::new(0.0, 0.0); n_dim - 1], beta)
    }

    pub fn alphas(&self) -> &[Complex64] {
        &self.alphas
    }

    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    pub fn n_dim(&self) -> usize {
        self.alphas.len() + 1
    }

    /// Odd dimensions put the closure in `L` instead of `M`.
    pub fn is_odd(&self) -> bool {
        self.n_dim() % 2 == 1
    }

    /// Coefficient in slot `j`, with `β` in slot `N − 1`.
    pub fn coefficient(&self, j: usize) -> Complex64 {
        if j < self.alphas.len() {
            self.alphas[j]
        } else {
            self.beta
        }
    }
}

/// A dense finite CMV matrix together with the coefficients it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CmvMatrix {
    entries: CMat,
    source: VerblunskySeq,
}

impl CmvMatrix {
    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn source(&self) -> &VerblunskySeq {
        &self.source
    }

    pub fn n_dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }
}

impl AsMatrix for CmvMatrix {
    fn matrix(&self) -> &CMat {
        &self.entries
    }
}

/// The 2×2 block `Θ(α)`; `|α| = 1` (up to the closure tolerance) is allowed
/// and gives a diagonal block.
pub fn theta_block(alpha: Complex64) -> Result<Block> {
    let modulus = alpha.norm();
    if !(modulus <= 1.0 + BETA_TOLERANCE) {
        return Err(CmvError::Domain(format!("|alpha| = {modulus} > 1")));
    }
    // Within rounding of the circle ρ is pure noise of size √ε; snap it.
    let defect = (1.0 - modulus) * (1.0 + modulus);
    let rho = if defect <= 4.0 * f64::EPSILON {
        0.0
    } else {
        defect.sqrt()
    };
    let rho = Complex64::new(rho, 0.0);
    Ok([[alpha.conj(), rho], [rho, -alpha]])
}

fn place_blocks(coefficients: &[Complex64], first: usize, out: &mut CMat) -> Result<()> {
    let n = coefficients.len();
    let mut j = first;
    while j < n {
        let block = theta_block(coefficients[j])?;
        if j + 1 < n {
            for r in 0..2 {
                for c in 0..2 {
                    out[(j + r, j + c)] = block[r][c];
                }
            }
        } else {
            // Truncated block: ρ = 0 for the unimodular closure.
            out[(j, j)] = block[0][0];
        }
        j += 2;
    }
    Ok(())
}

/// The factors `(L, M)` with `C = L·M`.
pub fn build_lm_factors(seq: &VerblunskySeq) -> (CMat, CMat) {
    let n = seq.n_dim();
    let coefficients: Vec<Complex64> = (0..n).map(|j| seq.coefficient(j)).collect();
    let mut l = CMat::zeros(n, n);
    let mut m = CMat::zeros(n, n);
    m[(0, 0)] = ONE;
    // Coefficients are validated on construction, so the blocks cannot fail.
    place_blocks(&coefficients, 0, &mut l).expect("validated coefficients");
    place_blocks(&coefficients, 1, &mut m).expect("validated coefficients");
    (l, m)
}

pub fn build_cmv(seq: &VerblunskySeq) -> CmvMatrix {
    let (l, m) = build_lm_factors(seq);
    // Outside the band every product term has an exact zero factor.
    let entries = l * m;
    CmvMatrix {
        entries,
        source: seq.clone(),
    }
}

pub(crate) fn check_unimodular(lambda: Complex64, what: &str) -> Result<()> {
    if (lambda.norm() - 1.0).abs() > UNIMODULAR_TOLERANCE || !lambda.re.is_finite() {
        return Err(CmvError::Domain(format!(
            "{what} = {lambda} is not unimodular"
        )));
    }
    Ok(())
}

/// Rotates every coefficient with index `≥ n` (the closure included) by `λ`.
pub fn scale_tail(seq: &VerblunskySeq, n: usize, lambda: Complex64) -> Result<VerblunskySeq> {
    linalg::check_index(n, seq.n_dim())?;
    check_unimodular(lambda, "lambda")?;
    let alphas = seq
        .alphas
        .iter()
        .enumerate()
        .map(|(j, &a)| if j >= n { lambda * a } else { a })
        .collect();
    Ok(VerblunskySeq {
        alphas,
        beta: lambda * seq.beta,
    })
}

/// `v(λ) = diag(1, λ)`.
pub fn v_block(lambda: Complex64) -> Block {
    let zero = Complex64::new(0.0, 0.0);
    [[ONE, zero], [zero, lambda]]
}

/// `ṽ(λ) = diag(λ, 1)`.
pub fn v_tilde_block(lambda: Complex64) -> Block {
    let zero = Complex64::new(0.0, 0.0);
    [[lambda, zero], [zero, ONE]]
}

pub fn block_mul(a: &Block, b: &Block) -> Block {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            *entry = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternToken {
    One,
    Lambda,
    LambdaInv,
}

impl PatternToken {
    fn value(self, lambda: Complex64) -> Complex64 {
        match self {
            PatternToken::One => ONE,
            PatternToken::Lambda => lambda,
            PatternToken::LambdaInv => lambda.conj(),
        }
    }
}

/// A diagonal matrix written as a finite head of tokens followed by a
/// repeating two-token tail, truncated to `n_dim` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagPattern {
    pub head: Vec<PatternToken>,
    pub tail: [PatternToken; 2],
    pub lambda: Complex64,
    pub n_dim: usize,
}

impl DiagPattern {
    pub fn entries(&self) -> Vec<Complex64> {
        (0..self.n_dim)
            .map(|i| {
                let token = if i < self.head.len() {
                    self.head[i]
                } else {
                    self.tail[(i - self.head.len()) % 2]
                };
                token.value(self.lambda)
            })
            .collect()
    }

    /// Entries of the inverse (the conjugates, since `|λ| = 1`).
    pub fn inverse_entries(&self) -> Vec<Complex64> {
        self.entries().into_iter().map(|x| x.conj()).collect()
    }

    pub fn matrix(&self) -> CMat {
        linalg::diag_matrix(&self.entries())
    }
}

/// The diagonal matrices entering the tail-rotation conjugation identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternKind {
    /// `U_{2k−1} = D(1^{2k} (1λ)^∞)`, `U_{2k} = D(λ^{2k} (1λ)^∞)`.
    Rotation,
    /// `Δ_n(λ) = D(1^n λ 1^∞)`.
    Site,
    /// `W = D((λ⁻¹)^{2k} 1^∞)` for odd `n = 2k − 1`.
    W,
    /// `W̃ = D(λ^{2k} 1^∞)` for even `n = 2k`.
    WTilde,
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PatternKind::Rotation => "rotation",
            PatternKind::Site => "site",
            PatternKind::W => "w",
            PatternKind::WTilde => "w_tilde",
        };
        f.write_str(s)
    }
}

impl FromStr for PatternKind {
    type Err = CmvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rotation" | "U" => Ok(PatternKind::Rotation),
            "site" | "Delta" => Ok(PatternKind::Site),
            "w" | "W" => Ok(PatternKind::W),
            "w_tilde" | "W_tilde" => Ok(PatternKind::WTilde),
            other => Err(CmvError::Usage(format!("unknown pattern kind {other:?}"))),
        }
    }
}

pub fn diag_pattern(
    kind: PatternKind,
    n: usize,
    lambda: Complex64,
    n_dim: usize,
) -> Result<DiagPattern> {
    use PatternToken::*;
    check_unimodular(lambda, "lambda")?;
    let (head, tail) = match kind {
        PatternKind::Rotation => {
            let head = if n % 2 == 1 {
                vec![One; n + 1]
            } else {
                vec![Lambda; n]
            };
            (head, [One, Lambda])
        }
        PatternKind::Site => {
            let mut head = vec![One; n];
            head.push(Lambda);
            (head, [One, One])
        }
        PatternKind::W => {
            if n.is_multiple_of(2) {
                return Err(CmvError::Usage(format!("W is defined for odd n, got {n}")));
            }
            (vec![LambdaInv; n + 1], [One, One])
        }
        PatternKind::WTilde => {
            if n % 2 == 1 {
                return Err(CmvError::Usage(format!(
                    "W-tilde is defined for even n, got {n}"
                )));
            }
            (vec![Lambda; n], [One, One])
        }
    };
    Ok(DiagPattern {
        head,
        tail,
        lambda,
        n_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, unitarity_defect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_seq(rng: &mut ChaCha8Rng, n: usize) -> VerblunskySeq {
        let alphas = (0..n - 1)
            .map(|_| {
                Complex64::from_polar(
                    0.95 * rng.random::<f64>().sqrt(),
                    rng.random::<f64>() * std::f64::consts::TAU,
                )
            })
            .collect();
        VerblunskySeq::new(
            alphas,
            Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU),
        )
        .unwrap()
    }

    fn block_close(a: &Block, b: &Block, tol: f64) -> bool {
        (0..2).all(|r| (0..2).all(|c| (a[r][c] - b[r][c]).norm() <= tol))
    }

    #[test]
    fn theta_examples() {
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        assert_eq!(theta_block(z).unwrap(), [[z, o], [o, z]]);
        let t = theta_block(c(0.6, 0.0)).unwrap();
        assert!(block_close(
            &t,
            &[[c(0.6, 0.0), c(0.8, 0.0)], [c(0.8, 0.0), c(-0.6, 0.0)]],
            1e-15
        ));
        let t = theta_block(c(0.0, 1.0)).unwrap();
        assert!(block_close(
            &t,
            &[[c(0.0, -1.0), z], [z, c(0.0, -1.0)]],
            0.0
        ));
        assert!(matches!(theta_block(c(0.8, 0.8)), Err(CmvError::Domain(_))));
    }

    #[test]
    fn seq_validation() {
        assert!(VerblunskySeq::new(vec![c(1.0, 0.0)], c(1.0, 0.0)).is_err());
        assert!(VerblunskySeq::new(vec![c(0.5, 0.0)], c(0.9, 0.0)).is_err());
        assert!(VerblunskySeq::new(vec![], c(1.0, 0.0)).is_err());
        let s = VerblunskySeq::new(vec![c(0.5, 0.0); 2], c(1.0, 0.0)).unwrap();
        assert_eq!(s.n_dim(), 3);
        assert!(s.is_odd());
    }

    #[test]
    fn two_by_two_factors_and_product() {
        let a = c(0.3, -0.4);
        let beta = Complex64::from_polar(1.0, 0.7);
        let seq = VerblunskySeq::new(vec![a], beta).unwrap();
        let (l, m) = build_lm_factors(&seq);
        let t = theta_block(a).unwrap();
        let expected_l = CMat::from_row_slice(2, 2, &[t[0][0], t[0][1], t[1][0], t[1][1]]);
        assert_eq!(l, expected_l);
        assert_eq!(m, linalg::diag_matrix(&[ONE, beta.conj()]));

        let cm = build_cmv(&seq);
        let rho = (1.0 - a.norm_sqr()).sqrt();
        let expected = CMat::from_row_slice(
            2,
            2,
            &[a.conj(), beta.conj() * rho, c(rho, 0.0), -a * beta.conj()],
        );
        assert!(max_abs_diff(cm.entries(), &expected) < 1e-15);

        let free = build_cmv(&VerblunskySeq::free(2, ONE).unwrap());
        assert_eq!(
            free.entries(),
            &CMat::from_row_slice(2, 2, &[c(0.0, 0.0), ONE, ONE, c(0.0, 0.0)])
        );
    }

    #[test]
    fn free_four_dimensional_factors() {
        let seq = VerblunskySeq::free(4, ONE).unwrap();
        let (l, m) = build_lm_factors(&seq);
        let swap = |i: usize, mat: &CMat| mat[(i, i + 1)] == ONE && mat[(i + 1, i)] == ONE;
        assert!(swap(0, &l) && swap(2, &l));
        assert!(m[(0, 0)] == ONE && swap(1, &m) && m[(3, 3)] == ONE);
    }

    #[test]
    fn odd_dimension_closes_in_l() {
        let beta = Complex64::from_polar(1.0, 1.1);
        let seq = VerblunskySeq::new(vec![c(0.2, 0.1), c(-0.3, 0.2)], beta).unwrap();
        let (l, m) = build_lm_factors(&seq);
        assert_eq!(l[(2, 2)], beta.conj());
        assert!(unitarity_defect(&l) < 1e-14 && unitarity_defect(&m) < 1e-14);
    }

    #[test]
    fn random_factors_unitary_and_band_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 3, 5, 8, 13, 32] {
            for _ in 0..5 {
                let seq = random_seq(&mut rng, n);
                let (l, m) = build_lm_factors(&seq);
                assert!(unitarity_defect(&l) <= 1e-14);
                assert!(unitarity_defect(&m) <= 1e-14);
                let cm = build_cmv(&seq);
                assert!(unitarity_defect(cm.entries()) <= 1e-12);
                for r in 0..n {
                    for cc in 0..n {
                        if r.abs_diff(cc) > 2 {
                            assert_eq!(cm.entries()[(r, cc)], c(0.0, 0.0));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn top_left_corner_independent_of_closure() {
        // Entries away from the closure agree with a longer truncation.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let long = random_seq(&mut rng, 12);
        let short = VerblunskySeq::new(long.alphas()[..7].to_vec(), ONE).unwrap();
        let a = build_cmv(&long);
        let b = build_cmv(&short);
        for r in 0..6 {
            for cc in 0..6 {
                assert!((a.entries()[(r, cc)] - b.entries()[(r, cc)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn block_scaling_lemmas() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..100 {
            let radius = if i % 10 == 0 {
                1.0
            } else {
                rng.random::<f64>()
            };
            let alpha = Complex64::from_polar(radius, rng.random::<f64>() * std::f64::consts::TAU);
            let lambda = Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
            let inner = theta_block(lambda.conj() * alpha).unwrap();
            let target = theta_block(alpha).unwrap();

            let lhs = block_mul(&block_mul(&v_block(lambda), &inner), &v_block(lambda));
            let rhs = target.map(|row| row.map(|x| lambda * x));
            assert!(
                block_close(&lhs, &rhs, 1e-14),
                "v-lemma failed: {lhs:?} vs {rhs:?}"
            );

            let vt_inv = v_tilde_block(lambda.conj());
            let lhs = block_mul(&block_mul(&vt_inv, &inner), &vt_inv);
            let rhs = target.map(|row| row.map(|x| lambda.conj() * x));
            assert!(block_close(&lhs, &rhs, 1e-14), "v-tilde lemma failed");
        }
    }

    #[test]
    fn scale_tail_examples() {
        let a = [c(0.1, 0.2), c(-0.3, 0.1), c(0.4, -0.4)];
        let beta = Complex64::from_polar(1.0, 0.3);
        let seq = VerblunskySeq::new(a.to_vec(), beta).unwrap();
        let i = c(0.0, 1.0);
        let s = scale_tail(&seq, 2, i).unwrap();
        assert_eq!(s.alphas(), &[a[0], a[1], i * a[2]]);
        assert_eq!(s.beta(), i * beta);
        assert_eq!(scale_tail(&seq, 0, ONE).unwrap(), seq);
        assert!(matches!(
            scale_tail(&seq, 4, i),
            Err(CmvError::Index { .. })
        ));
        assert!(scale_tail(&seq, 3, i).is_ok());
        assert!(matches!(
            scale_tail(&seq, 1, c(2.0, 0.0)),
            Err(CmvError::Domain(_))
        ));
    }

    #[test]
    fn scale_tail_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let seq = random_seq(&mut rng, 7);
        let l = Complex64::from_polar(1.0, 0.4);
        let m = Complex64::from_polar(1.0, -1.3);
        let twice = scale_tail(&scale_tail(&seq, 3, l).unwrap(), 3, m).unwrap();
        let once = scale_tail(&seq, 3, l * m).unwrap();
        for (x, y) in twice.alphas().iter().zip(once.alphas()) {
            assert!((x - y).norm() < 1e-15);
        }
        assert!((twice.beta() - once.beta()).norm() < 1e-15);
    }

    #[test]
    fn pattern_examples() {
        let lam = Complex64::from_polar(1.0, 0.9);
        let d = diag_pattern(PatternKind::Site, 3, lam, 6)
            .unwrap()
            .entries();
        assert_eq!(d, vec![ONE, ONE, ONE, lam, ONE, ONE]);
        let u = diag_pattern(PatternKind::Rotation, 3, lam, 6)
            .unwrap()
            .entries();
        assert_eq!(u, vec![ONE, ONE, ONE, ONE, ONE, lam]);
        let u = diag_pattern(PatternKind::Rotation, 2, lam, 6)
            .unwrap()
            .entries();
        assert_eq!(u, vec![lam, lam, ONE, lam, ONE, lam]);
        let u = diag_pattern(PatternKind::Rotation, 0, lam, 4)
            .unwrap()
            .entries();
        assert_eq!(u, vec![ONE, lam, ONE, lam]);
        let w = diag_pattern(PatternKind::W, 1, lam, 4).unwrap().entries();
        assert_eq!(w, vec![lam.conj(), lam.conj(), ONE, ONE]);
        let wt = diag_pattern(PatternKind::WTilde, 2, lam, 4)
            .unwrap()
            .entries();
        assert_eq!(wt, vec![lam, lam, ONE, ONE]);
        assert!(matches!(
            diag_pattern(PatternKind::W, 2, lam, 4),
            Err(CmvError::Usage(_))
        ));
        assert!(matches!(
            "bogus".parse::<PatternKind>(),
            Err(CmvError::Usage(_))
        ));
        for kind in [
            PatternKind::Rotation,
            PatternKind::Site,
            PatternKind::W,
            PatternKind::WTilde,
        ] {
            let n = if kind == PatternKind::W { 3 } else { 2 };
            let p = diag_pattern(kind, n, ONE, 7).unwrap();
            assert_eq!(p.matrix(), CMat::identity(7, 7));
            assert!(unitarity_defect(&diag_pattern(kind, n, lam, 7).unwrap().matrix()) < 1e-15);
        }
    }
}
