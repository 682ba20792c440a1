//! Seeded samplers for random Verblunsky sequences.
//!
//! Sample `i` of an ensemble is a pure function of `(spec, i)`. Its random
//! numbers come from ChaCha20 (`rand_chacha::ChaCha20Rng`) keyed by
//! `seed_from_u64(master_seed)` and positioned on stream `i`, so distinct
//! samples read disjoint keystreams and can be drawn in any order or in
//! parallel.
//!
//! Two families are provided:
//!
//! * `iid_rotinv`: `α_j = R_j e^{iΦ_j}` with all `R_j`, `Φ_j` independent and
//!   `Φ_j` uniform. The law is invariant under every rotation of the tail,
//!   so the quasi-invariance constant is exactly 1.
//! * `phase_walk`: `R_j` i.i.d., phases `φ_{j+1} = φ_j + η_j` with i.i.d.
//!   increments and `φ_0` uniform. Rotating the tail from index `n` on shifts
//!   a single increment, so the law is quasi-invariant whenever the increment
//!   law has a density bounded above and below (uniform, wrapped normal) and
//!   not otherwise (point mass).

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cmv::{VerblunskySeq, BETA_TOLERANCE};
use crate::error::{CmvError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    IidRotinv,
    PhaseWalk,
}

/// Law of the moduli `|α_j|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialLaw {
    /// `R = r_max · U`.
    UniformRadius { r_max: f64 },
    /// `R = r`; `r = 0` gives the free sequence.
    FixedRadius { r: f64 },
    /// `R = r_max · √U`, uniform on the disk of radius `r_max`.
    UniformDisk { r_max: f64 },
}

/// Law of the phase increments of the `phase_walk` family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseIncrementLaw {
    Uniform,
    WrappedNormal { sigma: f64 },
    PointMass { angle: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub family: Family,
    pub radial_law: RadialLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_increment_law: Option<PhaseIncrementLaw>,
    pub n_dim: usize,
    pub master_seed: u64,
    /// Fixed closure `β`; absent means `β` is drawn uniformly on the circle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closure: Option<Complex64>,
}

impl EnsembleSpec {
    /// The default experimental ensemble: i.i.d. rotation invariant with
    /// `|α_j|` uniform on `[0, 0.9]`.
    pub fn default_disordered(n_dim: usize, master_seed: u64) -> Self {
        EnsembleSpec {
            family: Family::IidRotinv,
            radial_law: RadialLaw::UniformRadius { r_max: 0.9 },
            phase_increment_law: None,
            n_dim,
            master_seed,
            closure: None,
        }
    }

    /// The point mass at `α ≡ 0` (closure phase still random).
    pub fn free(n_dim: usize, master_seed: u64) -> Self {
        EnsembleSpec {
            family: Family::IidRotinv,
            radial_law: RadialLaw::FixedRadius { r: 0.0 },
            phase_increment_law: None,
            n_dim,
            master_seed,
            closure: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dim < 2 {
            return Err(CmvError::Domain(format!(
                "n_dim must be >= 2, got {}",
                self.n_dim
            )));
        }
        if let Some(beta) = self.closure {
            if !((beta.norm() - 1.0).abs() <= BETA_TOLERANCE) {
                return Err(CmvError::Domain(format!(
                    "closure {beta} is not unimodular"
                )));
            }
        }
        match self.radial_law {
            RadialLaw::UniformRadius { r_max } | RadialLaw::UniformDisk { r_max } => {
                if !(r_max > 0.0 && r_max < 1.0) {
                    return Err(CmvError::Domain(format!(
                        "r_max must lie in (0,1), got {r_max}"
                    )));
                }
            }
            RadialLaw::FixedRadius { r } => {
                if !(0.0..1.0).contains(&r) {
                    return Err(CmvError::Domain(format!("r must lie in [0,1), got {r}")));
                }
            }
        }
        match (self.family, self.phase_increment_law) {
            (Family::IidRotinv, Some(_)) => Err(CmvError::Domain(
                "phase_increment_law applies to the phase_walk family only".into(),
            )),
            (Family::PhaseWalk, None) => Err(CmvError::Domain(
                "phase_walk requires a phase_increment_law".into(),
            )),
            (_, Some(PhaseIncrementLaw::WrappedNormal { sigma }))
                if !(sigma > 0.0 && sigma.is_finite()) =>
            {
                Err(CmvError::Domain(format!("sigma must be > 0, got {sigma}")))
            }
            (_, Some(PhaseIncrementLaw::PointMass { angle })) if !angle.is_finite() => Err(
                CmvError::Domain(format!("angle must be finite, got {angle}")),
            ),
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 of the canonical JSON form, identifying the law and seed.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("ensemble spec serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// The random source of one sample.
#[derive(Debug, Clone)]
pub struct SampleStream {
    index: u64,
    rng: ChaCha20Rng,
}

impl SampleStream {
    pub fn new(master_seed: u64, index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
        rng.set_stream(index);
        SampleStream { index, rng }
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn phase(&mut self) -> f64 {
        TAU * self.uniform()
    }

    fn radius(&mut self, law: RadialLaw) -> f64 {
        match law {
            RadialLaw::UniformRadius { r_max } => r_max * self.uniform(),
            RadialLaw::FixedRadius { r } => r,
            RadialLaw::UniformDisk { r_max } => r_max * self.uniform().sqrt(),
        }
    }

    fn increment(&mut self, law: PhaseIncrementLaw) -> f64 {
        match law {
            PhaseIncrementLaw::Uniform => self.phase(),
            PhaseIncrementLaw::WrappedNormal { sigma } => Normal::new(0.0, sigma)
                .expect("sigma validated")
                .sample(&mut self.rng),
            PhaseIncrementLaw::PointMass { angle } => angle,
        }
    }
}

fn check_family(spec: &EnsembleSpec, family: Family) -> Result<()> {
    spec.validate()?;
    if spec.family != family {
        return Err(CmvError::Usage(format!(
            "sampler for {family:?} called on a {:?} ensemble",
            spec.family
        )));
    }
    Ok(())
}

/// Sample `i` of an `iid_rotinv` ensemble. Draw order per coefficient:
/// radius, then phase; the closure phase comes last and is drawn even when
/// a fixed closure replaces it.
pub fn sample_iid_rotinv(spec: &EnsembleSpec, i: u64) -> Result<VerblunskySeq> {
    check_family(spec, Family::IidRotinv)?;
    let mut stream = SampleStream::new(spec.master_seed, i);
    let alphas = (0..spec.n_dim - 1)
        .map(|_| {
            let r = stream.radius(spec.radial_law);
            Complex64::from_polar(r, stream.phase())
        })
        .collect();
    let beta = Complex64::from_polar(1.0, stream.phase());
    VerblunskySeq::new(alphas, spec.closure.unwrap_or(beta))
}

/// Sample `i` of a `phase_walk` ensemble. Draw order: the initial phase, then
/// per coefficient the radius and the next increment. The closure carries
/// the phase reached after the last coefficient.
pub fn sample_phase_walk(spec: &EnsembleSpec, i: u64) -> Result<VerblunskySeq> {
    check_family(spec, Family::PhaseWalk)?;
    let law = spec.phase_increment_law.expect("validated");
    let mut stream = SampleStream::new(spec.master_seed, i);
    let mut phi = stream.phase();
    let mut alphas = Vec::with_capacity(spec.n_dim - 1);
    for _ in 0..spec.n_dim - 1 {
        let r = stream.radius(spec.radial_law);
        alphas.push(Complex64::from_polar(r, phi));
        phi = (phi + stream.increment(law)).rem_euclid(TAU);
    }
    VerblunskySeq::new(
        alphas,
        spec.closure.unwrap_or(Complex64::from_polar(1.0, phi)),
    )
}

pub fn sample(spec: &EnsembleSpec, i: u64) -> Result<VerblunskySeq> {
    match spec.family {
        Family::IidRotinv => sample_iid_rotinv(spec, i),
        Family::PhaseWalk => sample_phase_walk(spec, i),
    }
}
