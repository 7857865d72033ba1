//! Axis-aligned boxes. All domain logic in the crate is per-axis, so this
//! is the only geometric primitive needed; closed boxes throughout.

use rand::Rng;

use crate::error::{Error, Result};

/// Closed axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                context: "AxisBox::new",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidInput(
                "box lower corner exceeds upper corner".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    /// `center + [-half_width, half_width]^d`.
    pub fn cube(center: &[f64], half_width: f64) -> Self {
        assert!(half_width >= 0.0, "negative half width");
        Self {
            lo: center.iter().map(|c| c - half_width).collect(),
            hi: center.iter().map(|c| c + half_width).collect(),
        }
    }

    /// The unit cube `[0,1]^d`.
    pub fn unit(d: usize) -> Self {
        Self {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// Membership with an absolute slack on every face.
    pub fn contains_with_tol(&self, x: &[f64], tol: f64) -> bool {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a - tol <= *v && *v <= *b + tol)
    }

    /// Is `self` contained in `other`, allowing `tol` slack per face?
    pub fn contained_in(&self, other: &AxisBox, tol: f64) -> bool {
        assert_eq!(self.dim(), other.dim());
        self.lo
            .iter()
            .zip(&other.lo)
            .all(|(a, b)| *a >= *b - tol)
            && self.hi.iter().zip(&other.hi).all(|(a, b)| *a <= *b + tol)
    }

    /// Do two closed boxes intersect?
    pub fn intersects(&self, other: &AxisBox) -> bool {
        assert_eq!(self.dim(), other.dim());
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(other.lo.iter().zip(&other.hi))
            .all(|((alo, ahi), (blo, bhi))| alo <= bhi && blo <= ahi)
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| {
                if a == b {
                    *a
                } else {
                    rng.random_range(*a..*b)
                }
            })
            .collect()
    }
}
