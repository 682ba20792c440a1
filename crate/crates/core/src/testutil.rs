//! Random inputs shared by the unit tests.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;

use crate::cmv::VerblunskySeq;
use crate::linalg::CVec;

pub fn disk_point(rng: &mut impl Rng, r_max: f64) -> Complex64 {
    Complex64::from_polar(
        r_max * rng.random::<f64>().sqrt(),
        TAU * rng.random::<f64>(),
    )
}

pub fn unimodular(rng: &mut impl Rng) -> Complex64 {
    Complex64::from_polar(1.0, TAU * rng.random::<f64>())
}

pub fn seq(rng: &mut impl Rng, n_dim: usize, r_max: f64) -> VerblunskySeq {
    let alphas = (0..n_dim - 1).map(|_| disk_point(rng, r_max)).collect();
    VerblunskySeq::new(alphas, unimodular(rng)).unwrap()
}

pub fn vector(rng: &mut impl Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}
