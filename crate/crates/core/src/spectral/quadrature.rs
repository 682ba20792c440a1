//! Boundary integrals `∫ |F_kl(e^{iθ})|^p dθ/2π` for pure-point measures.
//!
//! Between consecutive atoms the integrand behaves like `|θ − θ_j|^{−p}`
//! times a smooth factor at both ends. Each gap is split at its midpoint and
//! each half is meshed with panels graded toward the atom. On the panel
//! touching the atom the offset is written as `t = t₁ s^{1/(1−p)}`, which
//! turns `t^{−p} dt` into a bounded density in `s`. Panels are then refined
//! adaptively (Gauss on the panel versus Gauss on its two halves) and the
//! whole computation is repeated with the initial panel count doubled until
//! two successive results agree to the requested relative tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{half_cot, Atom, SpectralDecomposition};
use crate::error::{CmvError, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Initial panels per gap between consecutive eigenphases (split evenly
    /// between the two halves).
    pub panels_per_gap: usize,
    pub nodes_per_panel: usize,
    /// Exponent of the polynomial grading toward each atom.
    pub grading: f64,
    pub rel_tol: f64,
    /// Number of times the initial panel count may be doubled.
    pub max_doublings: usize,
    /// Cap on adaptive bisections per pass.
    pub max_bisections: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            panels_per_gap: 4,
            nodes_per_panel: 16,
            grading: 3.0,
            rel_tol: 1e-6,
            max_doublings: 5,
            max_bisections: 20_000,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.panels_per_gap == 0 || self.nodes_per_panel == 0 || self.max_bisections == 0 {
            return Err(CmvError::Domain(
                "panel count, node count and bisection cap must be positive".into(),
            ));
        }
        if !(self.grading >= 1.0 && self.grading.is_finite()) {
            return Err(CmvError::Domain(format!(
                "grading exponent {} must be >= 1",
                self.grading
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(CmvError::Domain(format!(
                "relative tolerance {} must lie in (0, 1)",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, by Newton iteration on
/// the Legendre three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `∫₀^{2π} |F_kl(e^{iθ})|^p dθ/2π` for `0 < p < 1`.
pub fn boundary_p_integral(
    sd: &SpectralDecomposition,
    k: usize,
    l: usize,
    p: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    linalg::check_index(k, sd.n_dim())?;
    linalg::check_index(l, sd.n_dim())?;
    if !(p > 0.0 && p < 1.0) {
        return Err(CmvError::Domain(format!("p = {p} must lie in (0,1)")));
    }
    quad.validate()?;
    let integrand = Integrand::new(sd.atoms(k, l), p);
    let rule = gauss_legendre(quad.nodes_per_panel);

    let mut per_half = (quad.panels_per_gap / 2).max(1);
    let mut previous = integrand.integrate(per_half, quad, &rule);
    for _ in 0..quad.max_doublings {
        per_half *= 2;
        let current = integrand.integrate(per_half, quad, &rule);
        if (current - previous).abs() <= quad.rel_tol * current.abs() {
            return Ok(current);
        }
        previous = current;
        log::debug!("boundary integral not yet converged at {per_half} panels per half-gap");
    }
    let last = integrand.integrate(per_half * 2, quad, &rule);
    if (last - previous).abs() <= quad.rel_tol * last.abs() {
        return Ok(last);
    }
    Err(CmvError::Convergence { last, previous })
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Linear,
    /// `t = scale · s^exponent`, `s ∈ [0, 1]`.
    Power {
        scale: f64,
        exponent: f64,
    },
}

/// One half of a gap: offsets `t` measured from `anchor` in direction `dir`.
#[derive(Debug, Clone, Copy)]
struct Segment {
    anchor: usize,
    neighbor: usize,
    dir: f64,
    gap: f64,
    map: Map,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    segment: usize,
    s0: f64,
    s1: f64,
    left: f64,
    right: f64,
    error: f64,
}

impl Panel {
    fn value(&self) -> f64 {
        self.left + self.right
    }
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then(other.segment.cmp(&self.segment))
            .then(other.s0.total_cmp(&self.s0))
    }
}

struct Integrand {
    atoms: Vec<Atom>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    p: f64,
}

impl Integrand {
    fn new(atoms: Vec<Atom>, p: f64) -> Self {
        let cos = atoms.iter().map(|a| a.phase.cos()).collect();
        let sin = atoms.iter().map(|a| a.phase.sin()).collect();
        Self { atoms, cos, sin, p }
    }

    /// `|F|^p` at `θ = θ_anchor + delta`; the two atoms bounding the gap
    /// use the exact offset, the rest the angle-difference formula.
    fn eval(&self, seg: &Segment, delta: f64) -> f64 {
        let theta = self.atoms[seg.anchor].phase + delta;
        let (st, ct) = theta.sin_cos();
        let mut sum = Complex64::new(0.0, 0.0);
        for (j, atom) in self.atoms.iter().enumerate() {
            let cot = if j == seg.anchor {
                half_cot(delta)
            } else if j == seg.neighbor {
                half_cot(delta - seg.dir * seg.gap)
            } else {
                let c = ct * self.cos[j] + st * self.sin[j];
                let s = st * self.cos[j] - ct * self.sin[j];
                (1.0 + c) / s
            };
            sum += atom.weight * cot;
        }
        sum.norm_sqr().powf(0.5 * self.p)
    }

    fn gauss(&self, seg: &Segment, s0: f64, s1: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        let half = 0.5 * (s1 - s0);
        let mid = 0.5 * (s1 + s0);
        rule.0
            .iter()
            .zip(&rule.1)
            .map(|(&x, &w)| {
                let s = mid + half * x;
                let (t, jac) = match seg.map {
                    Map::Linear => (s, 1.0),
                    Map::Power { scale, exponent } => {
                        let sp = s.powf(exponent - 1.0);
                        (scale * sp * s, scale * exponent * sp)
                    }
                };
                w * jac * self.eval(seg, seg.dir * t)
            })
            .sum::<f64>()
            * half
    }

    fn panel(
        &self,
        segments: &[Segment],
        segment: usize,
        s0: f64,
        s1: f64,
        coarse: f64,
        rule: &(Vec<f64>, Vec<f64>),
    ) -> Panel {
        let seg = &segments[segment];
        let mid = 0.5 * (s0 + s1);
        let left = self.gauss(seg, s0, mid, rule);
        let right = self.gauss(seg, mid, s1, rule);
        Panel {
            segment,
            s0,
            s1,
            left,
            right,
            error: (left + right - coarse).abs(),
        }
    }

    fn segments(&self, per_half: usize, grading: f64) -> (Vec<Segment>, Vec<(usize, f64, f64)>) {
        let n = self.atoms.len();
        let exponent = 1.0 / (1.0 - self.p);
        let mut segments = Vec::new();
        let mut spans = Vec::new();
        for a in 0..n {
            let b = (a + 1) % n;
            let gap = if n == 1 {
                TAU
            } else {
                (self.atoms[b].phase - self.atoms[a].phase).rem_euclid(TAU)
            };
            let half = 0.5 * gap;
            for (anchor, neighbor, dir) in [(a, b, 1.0), (b, a, -1.0)] {
                let breaks: Vec<f64> = (0..=per_half)
                    .map(|i| half * (i as f64 / per_half as f64).powf(grading))
                    .collect();
                segments.push(Segment {
                    anchor,
                    neighbor,
                    dir,
                    gap,
                    map: Map::Power {
                        scale: breaks[1],
                        exponent,
                    },
                });
                spans.push((segments.len() - 1, 0.0, 1.0));
                if per_half > 1 {
                    segments.push(Segment {
                        anchor,
                        neighbor,
                        dir,
                        gap,
                        map: Map::Linear,
                    });
                    let id = segments.len() - 1;
                    for w in breaks[1..].windows(2) {
                        spans.push((id, w[0], w[1]));
                    }
                }
            }
        }
        (segments, spans)
    }

    fn integrate(
        &self,
        per_half: usize,
        quad: &QuadratureSpec,
        rule: &(Vec<f64>, Vec<f64>),
    ) -> f64 {
        let (segments, spans) = self.segments(per_half, quad.grading);
        let mut heap: BinaryHeap<Panel> = spans
            .iter()
            .map(|&(id, s0, s1)| {
                let coarse = self.gauss(&segments[id], s0, s1, rule);
                self.panel(&segments, id, s0, s1, coarse, rule)
            })
            .collect();
        let mut total: f64 = heap.iter().map(Panel::value).sum();
        let mut error: f64 = heap.iter().map(|p| p.error).sum();
        let target = 0.1 * quad.rel_tol;
        let mut bisections = 0;
        while error > target * total.abs() && bisections < quad.max_bisections {
            let Some(worst) = heap.pop() else { break };
            let mid = 0.5 * (worst.s0 + worst.s1);
            let a = self.panel(&segments, worst.segment, worst.s0, mid, worst.left, rule);
            let b = self.panel(&segments, worst.segment, mid, worst.s1, worst.right, rule);
            total += a.value() + b.value() - worst.value();
            error += a.error + b.error - worst.error;
            heap.push(a);
            heap.push(b);
            bisections += 1;
            if bisections % 512 == 0 {
                // Resynchronize the running sums.
                total = heap.iter().map(Panel::value).sum();
                error = heap.iter().map(|p| p.error).sum();
            }
        }
        let mut panels = heap.into_vec();
        panels.sort_by(|x, y| x.segment.cmp(&y.segment).then(x.s0.total_cmp(&y.s0)));
        panels.iter().map(Panel::value).sum::<f64>() / TAU
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_low_degree() {
        for n in [1usize, 2, 5, 16, 21] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for degree in 0..2 * n {
                let q: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(x, w)| w * x.powi(degree as i32))
                    .sum();
                let exact = if degree % 2 == 1 {
                    0.0
                } else {
                    2.0 / (degree + 1) as f64
                };
                assert!(
                    (q - exact).abs() < 1e-13,
                    "n={n} degree={degree}: {q} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::default().validate().is_ok());
        let bad = QuadratureSpec {
            rel_tol: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = QuadratureSpec {
            nodes_per_panel: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
