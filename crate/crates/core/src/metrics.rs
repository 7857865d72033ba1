//! Distances between vector-valued functions: the `L^p(Ω, R^d)` norm
//! `(∫_Ω ||f(x)||_inf^p dx)^(1/p)` (sup over coordinates inside, `L^p`
//! outside), quadrature schemes to approximate it, and sampled Lipschitz
//! estimation.
//!
//! Sup norms of black boxes are not computable, so `p = ∞` results from
//! grids are always lower-bound estimates; for fooling pairs the known
//! maximizer gives the exact value.

use rand::Rng;

use crate::adversary::FoolingPair;
use crate::error::{Error, Result};
use crate::geometry::AxisBox;
use crate::num::{derive_rng, sup_dist, CompensatedSum};

/// Integrability order with `∞` as a distinguished value (never a
/// sentinel float).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lp {
    Finite(f64),
    Infinity,
}

impl Lp {
    pub fn validate(self) -> Result<Self> {
        match self {
            Lp::Finite(p) if p >= 1.0 && p.is_finite() => Ok(self),
            Lp::Finite(p) => Err(Error::InvalidOrder(p)),
            Lp::Infinity => Ok(self),
        }
    }

    /// Parse `"1"`, `"2.5"`, or `"inf"`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "oo" => Ok(Lp::Infinity),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("cannot parse p from '{s}'")))?;
                Lp::Finite(p).validate()
            }
        }
    }

    /// `d/p` with the convention `d/∞ = 0`.
    pub fn d_over_p(self, d: usize) -> f64 {
        match self {
            Lp::Finite(p) => d as f64 / p,
            Lp::Infinity => 0.0,
        }
    }

    /// `1/p` with `1/∞ = 0`.
    pub fn reciprocal(self) -> f64 {
        match self {
            Lp::Finite(p) => 1.0 / p,
            Lp::Infinity => 0.0,
        }
    }
}

impl std::fmt::Display for Lp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lp::Finite(p) => {
                if p.fract() == 0.0 && p.abs() < 1e15 {
                    write!(f, "{}", *p as i64)
                } else {
                    write!(f, "{p}")
                }
            }
            Lp::Infinity => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    TensorMidpoint,
    MonteCarlo,
}

/// Quadrature scheme over an axis-aligned box. `resolution` is points per
/// axis for the tensor-midpoint rule and the total draw count for Monte
/// Carlo; `extra_nodes` are appended as zero-weight evaluation points so
/// sup estimates can include known maximizers.
#[derive(Debug, Clone)]
pub struct QuadratureSpec {
    pub kind: QuadratureKind,
    pub resolution: usize,
    pub domain: AxisBox,
    pub seed: u64,
    pub extra_nodes: Vec<Vec<f64>>,
}

impl QuadratureSpec {
    pub fn tensor_midpoint(resolution: usize, domain: AxisBox) -> Self {
        assert!(resolution >= 1, "resolution must be >= 1");
        Self {
            kind: QuadratureKind::TensorMidpoint,
            resolution,
            domain,
            seed: 0,
            extra_nodes: Vec::new(),
        }
    }

    pub fn monte_carlo(samples: usize, domain: AxisBox, seed: u64) -> Self {
        assert!(samples >= 1, "sample count must be >= 1");
        Self {
            kind: QuadratureKind::MonteCarlo,
            resolution: samples,
            domain,
            seed,
            extra_nodes: Vec::new(),
        }
    }

    /// Desk-scale defaults: midpoint with 256/128/48 points per axis for
    /// d = 1/2/3, Monte Carlo with 1e6 draws beyond that.
    pub fn default_for_dim(d: usize, domain: AxisBox) -> Self {
        match d {
            1 => Self::tensor_midpoint(256, domain),
            2 => Self::tensor_midpoint(128, domain),
            3 => Self::tensor_midpoint(48, domain),
            _ => Self::monte_carlo(1_000_000, domain, 0),
        }
    }

    pub fn with_extra_nodes(mut self, nodes: Vec<Vec<f64>>) -> Self {
        self.extra_nodes = nodes;
        self
    }

    pub fn node_count(&self) -> usize {
        match self.kind {
            QuadratureKind::TensorMidpoint => self.resolution.pow(self.domain.dim() as u32),
            QuadratureKind::MonteCarlo => self.resolution,
        }
    }

    /// Visit every weighted node in a fixed deterministic order.
    fn for_each_node<F: FnMut(&[f64], f64)>(&self, mut visit: F) {
        let d = self.domain.dim();
        match self.kind {
            QuadratureKind::TensorMidpoint => {
                let n = self.resolution;
                let weight = self.domain.volume() / self.node_count() as f64;
                let lo = self.domain.lo();
                let hi = self.domain.hi();
                let mut idx = vec![0usize; d];
                let mut point = vec![0.0; d];
                loop {
                    for k in 0..d {
                        point[k] = lo[k] + (hi[k] - lo[k]) * ((idx[k] as f64 + 0.5) / n as f64);
                    }
                    visit(&point, weight);
                    let mut k = 0;
                    loop {
                        if k == d {
                            return;
                        }
                        idx[k] += 1;
                        if idx[k] < n {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                    }
                }
            }
            QuadratureKind::MonteCarlo => {
                let mut rng = derive_rng(self.seed, 0x514A);
                let weight = self.domain.volume() / self.resolution as f64;
                for _ in 0..self.resolution {
                    visit(&self.domain.sample(&mut rng), weight);
                }
            }
        }
    }
}

/// Quadrature approximation of `||f - g||_{L^p(Ω, R^d)}`.
///
/// For finite `p` the integral is accumulated with compensated summation,
/// so the result is reproducible to ~1e-12 independent of evaluation
/// scheduling. For `p = ∞` the maximum over all nodes (including
/// `extra_nodes`) is returned; it is a lower bound on the true sup and is
/// reported as such.
pub fn lp_distance<F, G>(f: F, g: G, p: Lp, quad: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let p = p.validate()?;
    match p {
        Lp::Finite(p) => {
            let mut acc = CompensatedSum::new();
            quad.for_each_node(|x, w| {
                let diff = sup_dist(&f(x), &g(x));
                acc.add(w * diff.powf(p));
            });
            Ok(acc.value().max(0.0).powf(1.0 / p))
        }
        Lp::Infinity => {
            let mut max = 0.0f64;
            quad.for_each_node(|x, _| {
                max = max.max(sup_dist(&f(x), &g(x)));
            });
            for x in &quad.extra_nodes {
                max = max.max(sup_dist(&f(x), &g(x)));
            }
            Ok(max)
        }
    }
}

/// Exact sup distance between the two members of a fooling pair,
/// evaluated at the known maximizer `base.inverse(z)`. Equals `2c` up to
/// the accuracy of the base map's inverse. Errors when the maximizer
/// falls outside the sampling domain `[0,1]^d`.
pub fn sup_distance_fooling(pair: &FoolingPair) -> Result<f64> {
    let x_hat = pair.maximizer();
    if !AxisBox::unit(x_hat.len()).contains_with_tol(&x_hat, 1e-9) {
        return Err(Error::MaximizerOutsideDomain { point: x_hat });
    }
    Ok(sup_dist(&pair.plus().eval(&x_hat), &pair.minus().eval(&x_hat)))
}

/// Max sampled difference quotient `||f(x)-f(y)||_inf / ||x-y||_inf` over
/// `n_pairs` pairs: alternating independent draws and short-range
/// perturbation pairs at scale 1e-6 (which expose local slopes). The
/// perturbation magnitude is kept in `[5e-7, 1e-6]` per axis so rounding
/// noise cannot blow up the quotient. A lower bound on `Lip(f)` —
/// falsification only, never certification.
pub fn lipschitz_sample_estimate<F>(f: F, domain: &AxisBox, n_pairs: usize, seed: u64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    assert!(n_pairs >= 1, "need at least one pair");
    let mut rng = derive_rng(seed, 0x4C49);
    let mut max_quotient = 0.0f64;
    for k in 0..n_pairs {
        let x = domain.sample(&mut rng);
        let y = if k % 2 == 0 {
            domain.sample(&mut rng)
        } else {
            x.iter()
                .map(|xi| {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    xi + sign * rng.random_range(5e-7..1e-6)
                })
                .collect::<Vec<f64>>()
        };
        let dist = sup_dist(&x, &y);
        if dist == 0.0 {
            continue;
        }
        let quotient = sup_dist(&f(&x), &f(&y)) / dist;
        max_quotient = max_quotient.max(quotient);
    }
    max_quotient
}
