//! Hat functions and their network realizations.
//!
//! The scalar building block is the kinked ramp
//! `Λ_{t*,M,c}(t) = 0` for `t < t* - 1/M` and `c - cM|t - t*|` otherwise.
//! Summing over coordinates and shifting gives
//! `Δ_{z,M,c}(x) = Σ_i Λ_{z_i,M,c}(x_i) - (d-1)c`, and the hat function is
//! `ϑ_{z,M,c} = relu(Δ_{z,M,c})`: a bump of height `c` peaking at `z`,
//! supported inside `z + [-1/M, 1/M]^d`.
//!
//! Three realizations are provided, all evaluated exactly:
//! * a two-hidden-layer ReLU network for `ϑ` with explicit weights,
//! * the residual-block variant `Θ^v(x) = (v·ϑ(x), 0, …, 0)` whose
//!   Lipschitz constant is certified by `3dcM < 1` whenever
//!   `c < 1/(3dM)`,
//! * the translation-equivariant variant
//!   `Φ^v(x) = v·(ϑ(x), ϑ(xR), …, ϑ(xR^{d-1}))` with `R` the cyclic
//!   coordinate shift, realized as a 1-in/1-out-channel convolutional
//!   network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AxisBox;
use crate::nets::{
    Activation, ConvLayer, ConvNet, DenseLayer, FeedForwardNet, ResidualBlock,
};

// ── Parameters ──────────────────────────────────────────────────────────

/// Sign of a hat disturbance, serialized as `+1`/`-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl Serialize for Sign {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        })
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match i8::deserialize(d)? {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(serde::de::Error::custom(format!(
                "sign must be 1 or -1, got {other}"
            ))),
        }
    }
}

/// The tuple `(z, M, c, v)` parameterizing every hat construction:
/// peak location, inverse half-width, amplitude, and sign.
///
/// Raw evaluation accepts any `c > 0`; only the residual-block
/// constructors enforce the contraction cap `c < 1/(3dM)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HatParams {
    pub z: Vec<f64>,
    #[serde(rename = "M")]
    pub m: f64,
    pub c: f64,
    pub v: Sign,
}

impl HatParams {
    pub fn new(z: Vec<f64>, m: f64, c: f64, v: Sign) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidInput("peak location must be nonempty".into()));
        }
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::InvalidInput(format!("inverse half-width M = {m} must be positive")));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("amplitude c = {c} must be positive")));
        }
        Ok(Self { z, m, c, v })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// The invertibility cap `1/(3dM)`.
    pub fn amplitude_cap(&self) -> f64 {
        1.0 / (3.0 * self.dim() as f64 * self.m)
    }

    /// Certified Lipschitz bound `3dcM` of the block realizations.
    pub fn lip_bound(&self) -> f64 {
        3.0 * self.dim() as f64 * self.c * self.m
    }

    fn check_block_amplitude(&self) -> Result<()> {
        let cap = self.amplitude_cap();
        if self.c >= cap {
            return Err(Error::AmplitudeTooLarge { c: self.c, cap });
        }
        Ok(())
    }

    /// Support cube `z + [-1/M, 1/M]^d` (closed).
    pub fn support_cube(&self) -> AxisBox {
        AxisBox::cube(&self.z, 1.0 / self.m)
    }

    /// Inner cube `z + [-1/(2dM), 1/(2dM)]^d` where the hat is `>= c/2`.
    pub fn inner_cube(&self) -> AxisBox {
        AxisBox::cube(&self.z, 1.0 / (2.0 * self.dim() as f64 * self.m))
    }

    /// Support of the shift-orbit variant: the union of the cubes around
    /// `zR^i` for `i = 0, …, d-1`.
    pub fn orbit_support_cubes(&self) -> Vec<AxisBox> {
        (0..self.dim())
            .map(|i| AxisBox::cube(&apply_shift(&self.z, i as i64), 1.0 / self.m))
            .collect()
    }

    pub fn orbit_inner_cubes(&self) -> Vec<AxisBox> {
        let half = 1.0 / (2.0 * self.dim() as f64 * self.m);
        (0..self.dim())
            .map(|i| AxisBox::cube(&apply_shift(&self.z, i as i64), half))
            .collect()
    }
}

// ── Direct evaluation ───────────────────────────────────────────────────

/// `Λ_{t*,M,c}(t)`: zero left of `t* - 1/M`, then the descending tent
/// `c - cM|t - t*|` (which goes negative right of `t* + 1/M`).
pub fn lambda_1d(t: f64, t_star: f64, m: f64, c: f64) -> f64 {
    if t < t_star - 1.0 / m {
        0.0
    } else {
        c - c * m * (t - t_star).abs()
    }
}

/// `Δ_{z,M,c}(x) = Σ_i Λ_{z_i,M,c}(x_i) - (d-1)c`.
pub fn delta(x: &[f64], p: &HatParams) -> f64 {
    assert_eq!(x.len(), p.dim(), "delta: point dimension mismatch");
    let sum: f64 = x
        .iter()
        .zip(&p.z)
        .map(|(xi, zi)| lambda_1d(*xi, *zi, p.m, p.c))
        .sum();
    sum - (p.dim() as f64 - 1.0) * p.c
}

/// The hat function `ϑ_{z,M,c}(x) = relu(Δ_{z,M,c}(x))`.
pub fn hat_value(x: &[f64], p: &HatParams) -> f64 {
    delta(x, p).max(0.0)
}

// ── Cyclic shift ────────────────────────────────────────────────────────

/// The cyclic left shift `xR = (x_2, …, x_d, x_1)`, applied as an index
/// permutation (`R` is never materialized as a dense matrix).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftMatrix {
    pub d: usize,
}

impl ShiftMatrix {
    pub fn new(d: usize) -> Self {
        Self { d }
    }

    /// `x R^k`, with `k` taken mod `d` (negative `k` shifts right).
    pub fn apply(&self, x: &[f64], k: i64) -> Vec<f64> {
        assert_eq!(x.len(), self.d, "shift: dimension mismatch");
        let d = self.d as i64;
        let k = k.rem_euclid(d) as usize;
        (0..self.d).map(|i| x[(i + k) % self.d]).collect()
    }
}

/// Free-function form of [`ShiftMatrix::apply`].
pub fn apply_shift(x: &[f64], k: i64) -> Vec<f64> {
    ShiftMatrix::new(x.len()).apply(x, k)
}

// ── Explicit network weights ────────────────────────────────────────────

/// The explicit weights of the two-hidden-layer ReLU realization of the
/// hat function: `W1` stacks `cM·I` over `2cM·I`, `W2 = (1⃗, -1⃗)`,
/// `b1 = (c1⃗ - cMz, -2cMz)`, `b2 = -(d-1)c`, `W3 = 1`, `b3 = 0`. Every
/// weight entry has absolute value `<= 1` whenever `c < 1/(3dM)`.
#[derive(Debug, Clone)]
pub struct HatFnnWeights {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: f64,
    pub w3: f64,
    pub b3: f64,
}

impl HatFnnWeights {
    pub fn for_params(p: &HatParams) -> Self {
        let d = p.dim();
        let cm = p.c * p.m;
        let mut w1 = vec![vec![0.0; d]; 2 * d];
        let mut b1 = vec![0.0; 2 * d];
        for i in 0..d {
            w1[i][i] = cm;
            w1[d + i][i] = 2.0 * cm;
            b1[i] = p.c - cm * p.z[i];
            b1[d + i] = -2.0 * cm * p.z[i];
        }
        let mut w2 = vec![vec![0.0; 2 * d]; 1];
        for i in 0..d {
            w2[0][i] = 1.0;
            w2[0][d + i] = -1.0;
        }
        let b2 = -(d as f64 - 1.0) * p.c;
        Self {
            w1,
            b1,
            w2,
            b2,
            w3: 1.0,
            b3: 0.0,
        }
    }
}

/// Two-hidden-layer ReLU network computing the hat function exactly;
/// architecture `(d, 2d, 1, 1; relu)`.
pub fn hat_as_fnn(p: &HatParams) -> FeedForwardNet {
    let w = HatFnnWeights::for_params(p);
    let l1 = DenseLayer::new(w.w1, w.b1, Activation::Relu).expect("consistent by construction");
    let l2 = DenseLayer::new(w.w2, vec![w.b2], Activation::Relu).expect("consistent");
    let l3 = DenseLayer::new(vec![vec![w.w3]], vec![w.b3], Activation::Identity).expect("consistent");
    FeedForwardNet::new(vec![l1, l2, l3]).expect("valid layer chain")
}

/// Residual-block variant `Θ^v(x) = (v·ϑ(x), 0, …, 0)` as a feedforward
/// network with architecture `(d, 2d, 1, d; relu)`, carrying the
/// certified Lipschitz bound `3dcM`. Requires `c < 1/(3dM)`.
pub fn theta_fnn(p: &HatParams) -> Result<FeedForwardNet> {
    p.check_block_amplitude()?;
    let d = p.dim();
    let w = HatFnnWeights::for_params(p);
    let l1 = DenseLayer::new(w.w1, w.b1, Activation::Relu).expect("consistent");
    let l2 = DenseLayer::new(w.w2, vec![w.b2], Activation::Relu).expect("consistent");
    // output layer: scalar -> (v*scalar, 0, ..., 0)
    let mut w3 = vec![vec![0.0]; d];
    w3[0][0] = p.v.value();
    let l3 = DenseLayer::new(w3, vec![0.0; d], Activation::Identity).expect("consistent");
    Ok(FeedForwardNet::new(vec![l1, l2, l3]).expect("valid layer chain"))
}

/// [`theta_fnn`] wrapped as a certified residual block.
pub fn theta_block(p: &HatParams) -> Result<ResidualBlock> {
    let net = theta_fnn(p)?;
    ResidualBlock::from_fnn(net, p.lip_bound())
}

/// Direct evaluation of `Θ^v`.
pub fn theta_value(x: &[f64], p: &HatParams) -> Vec<f64> {
    let mut out = vec![0.0; p.dim()];
    out[0] = p.v.value() * hat_value(x, p);
    out
}

// ── Shift-orbit variant ─────────────────────────────────────────────────

/// Direct evaluation of `Φ^v(x) = v·(ϑ(x), ϑ(xR), …, ϑ(xR^{d-1}))`.
pub fn phi_value(x: &[f64], p: &HatParams) -> Vec<f64> {
    assert_eq!(x.len(), p.dim(), "phi_value: dimension mismatch");
    let shift = ShiftMatrix::new(p.dim());
    (0..p.dim())
        .map(|i| p.v.value() * hat_value(&shift.apply(x, i as i64), p))
        .collect()
}

/// Convolutional realization of `Φ^v` with architecture
/// `(d; 1, 2d, 1, 1; relu)`: output position `s` equals `v·ϑ(xR^s)`, so
/// the network agrees with [`phi_value`] everywhere and is translation
/// equivariant by construction. Requires `c < 1/(3dM)`.
///
/// Kernel layout: hidden channel `i` (resp. `d + i`) selects coordinate
/// `i + s` at output position `s` via a one-hot kernel of magnitude `cM`
/// (resp. `2cM`) placed at offset `d - 1 - i`, with the per-channel bias
/// from `b1`; the second layer sums the channels at offset zero with
/// `±1` kernels and bias `-(d-1)c`; the output layer multiplies by `v`.
pub fn phi_as_cnn(p: &HatParams) -> Result<ConvNet> {
    p.check_block_amplitude()?;
    let d = p.dim();
    let cm = p.c * p.m;

    let one_hot = |pos: usize, value: f64| {
        let mut k = vec![0.0; d];
        k[pos] = value;
        k
    };
    let identity_pos = d - 1; // offset-zero (identity) kernel position

    // layer 1: 1 channel -> 2d channels
    let mut kernels1 = vec![Vec::with_capacity(2 * d)];
    let mut bias1 = Vec::with_capacity(2 * d);
    for i in 0..d {
        kernels1[0].push(one_hot(d - 1 - i, cm));
        bias1.push(p.c - cm * p.z[i]);
    }
    for i in 0..d {
        kernels1[0].push(one_hot(d - 1 - i, 2.0 * cm));
        bias1.push(-2.0 * cm * p.z[i]);
    }
    let l1 = ConvLayer::new(d, kernels1, bias1, Activation::Relu)?;

    // layer 2: 2d channels -> 1 channel, summing with signs
    let mut kernels2 = Vec::with_capacity(2 * d);
    for i in 0..2 * d {
        let sign = if i < d { 1.0 } else { -1.0 };
        kernels2.push(vec![one_hot(identity_pos, sign)]);
    }
    let bias2 = vec![-(d as f64 - 1.0) * p.c];
    let l2 = ConvLayer::new(d, kernels2, bias2, Activation::Relu)?;

    // output layer: multiply by v
    let l3 = ConvLayer::new(
        d,
        vec![vec![one_hot(identity_pos, p.v.value())]],
        vec![0.0],
        Activation::Identity,
    )?;

    ConvNet::new(vec![l1, l2, l3])
}

/// [`phi_as_cnn`] wrapped as a certified residual block.
pub fn phi_block(p: &HatParams) -> Result<ResidualBlock> {
    let net = phi_as_cnn(p)?;
    ResidualBlock::from_cnn(net, p.lip_bound())
}
