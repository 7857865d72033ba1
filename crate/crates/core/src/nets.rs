//! From-scratch evaluation of feedforward layers, circular-convolution
//! layers, multilayer networks, and residual networks, plus exact inversion
//! of certified-invertible residual networks by fixed-point iteration.
//!
//! Conventions: all vectors are rows, a dense layer computes
//! `activation(x W^T + b)`, and cyclic convolution is
//! `(u*v)_i = sum_j u_{i-j} v_j` with 1-based cyclic indices mapped onto
//! 0-based modular arithmetic (pinned by unit tests against hand-expanded
//! sums).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::num::sup_dist;

// ── Activations ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply_scalar(self, t: f64) -> f64 {
        match self {
            Activation::Relu => t.max(0.0),
            Activation::Identity => t,
        }
    }

    pub fn apply(self, x: &mut [f64]) {
        if self == Activation::Relu {
            for v in x {
                *v = v.max(0.0);
            }
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::Relu => write!(f, "relu"),
            Activation::Identity => write!(f, "id"),
        }
    }
}

/// Coordinate-wise `max(0, x_i)`.
pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

// ── Circular convolution ────────────────────────────────────────────────

/// Cyclic convolution `(u*v)_i = sum_j u_{i-j} v_j` of two length-`d`
/// vectors. In 0-based terms: `out[i] = sum_j u[(i-j-1) mod d] * v[j]`.
pub fn circ_conv(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let d = u.len();
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            context: "circ_conv",
            expected: d,
            got: v.len(),
        });
    }
    let mut out = vec![0.0; d];
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..d {
            // 1-based u_{i-j} with cyclic wrap -> 0-based (i - j - 1) mod d
            let k = (i + 2 * d - j - 1) % d;
            acc += u[k] * v[j];
        }
        out[i] = acc;
    }
    Ok(out)
}

// ── Layers ──────────────────────────────────────────────────────────────

/// Feedforward layer `x -> activation(x W^T + b)`, `W` stored row-major as
/// `out x in`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weight.len() != bias.len() {
            return Err(Error::DimensionMismatch {
                context: "DenseLayer::new (rows vs bias)",
                expected: weight.len(),
                got: bias.len(),
            });
        }
        let in_dim = weight.first().map_or(0, Vec::len);
        if weight.iter().any(|row| row.len() != in_dim) {
            return Err(Error::InvalidInput("ragged weight matrix".into()));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.first().map_or(0, Vec::len)
    }

    pub fn out_dim(&self) -> usize {
        self.weight.len()
    }

    /// Largest absolute weight entry (biases excluded).
    pub fn weight_sup(&self) -> f64 {
        self.weight
            .iter()
            .flatten()
            .fold(0.0f64, |acc, w| acc.max(w.abs()))
    }

    pub fn bias_sup(&self) -> f64 {
        self.bias.iter().fold(0.0f64, |acc, b| acc.max(b.abs()))
    }
}

/// Exact affine-then-activation evaluation of a feedforward layer.
pub fn apply_dense(layer: &DenseLayer, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != layer.in_dim() {
        return Err(Error::DimensionMismatch {
            context: "apply_dense",
            expected: layer.in_dim(),
            got: x.len(),
        });
    }
    let mut out: Vec<f64> = layer
        .weight
        .iter()
        .zip(&layer.bias)
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect();
    layer.activation.apply(&mut out);
    Ok(out)
}

/// Convolutional layer over channels of fixed data size `d`, kernel size
/// equal to the data size, stride 1, periodic padding, no pooling.
/// Output channel `j` is `activation(sum_i kernels[i][j] * x_i + bias_j)`.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub data_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `kernels[i][j]` is the length-`d` kernel from input channel `i`
    /// to output channel `j`.
    pub kernels: Vec<Vec<Vec<f64>>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl ConvLayer {
    pub fn new(
        data_size: usize,
        kernels: Vec<Vec<Vec<f64>>>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let in_channels = kernels.len();
        let out_channels = kernels.first().map_or(0, Vec::len);
        if out_channels != bias.len() {
            return Err(Error::DimensionMismatch {
                context: "ConvLayer::new (out channels vs bias)",
                expected: out_channels,
                got: bias.len(),
            });
        }
        for per_in in &kernels {
            if per_in.len() != out_channels {
                return Err(Error::InvalidInput("ragged kernel table".into()));
            }
            if per_in.iter().any(|k| k.len() != data_size) {
                return Err(Error::InvalidInput("kernel length != data size".into()));
            }
        }
        Ok(Self {
            data_size,
            in_channels,
            out_channels,
            kernels,
            bias,
            activation,
        })
    }

    /// Largest absolute kernel entry (biases excluded).
    pub fn kernel_sup(&self) -> f64 {
        self.kernels
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |acc, w| acc.max(w.abs()))
    }

    pub fn bias_sup(&self) -> f64 {
        self.bias.iter().fold(0.0f64, |acc, b| acc.max(b.abs()))
    }
}

/// Per-channel cyclic convolution, bias broadcast over positions, then
/// activation.
pub fn apply_conv(layer: &ConvLayer, channels: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if channels.len() != layer.in_channels {
        return Err(Error::DimensionMismatch {
            context: "apply_conv (channel count)",
            expected: layer.in_channels,
            got: channels.len(),
        });
    }
    for ch in channels {
        if ch.len() != layer.data_size {
            return Err(Error::DimensionMismatch {
                context: "apply_conv (data size)",
                expected: layer.data_size,
                got: ch.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(layer.out_channels);
    for j in 0..layer.out_channels {
        let mut acc = vec![layer.bias[j]; layer.data_size];
        for (i, x) in channels.iter().enumerate() {
            let conv = circ_conv(&layer.kernels[i][j], x)?;
            for (a, c) in acc.iter_mut().zip(&conv) {
                *a += c;
            }
        }
        layer.activation.apply(&mut acc);
        out.push(acc);
    }
    Ok(out)
}

// ── Multilayer networks ─────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchitectureKind {
    Fnn,
    Cnn,
}

/// Architecture descriptor: `(n_0, ..., n_{L+1}; sigma)` for feedforward
/// networks, `(d; n_0, ..., n_{L+1}; sigma)` for convolutional ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkArchitecture {
    pub kind: ArchitectureKind,
    pub dims: Vec<usize>,
    pub data_size: Option<usize>,
    pub activation: Activation,
}

impl std::fmt::Display for NetworkArchitecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let dims = self
            .dims
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        match self.data_size {
            Some(d) => write!(f, "({d};{dims};{})", self.activation),
            None => write!(f, "({dims};{})", self.activation),
        }
    }
}

/// Feedforward network: hidden layers share one activation, the output
/// layer is affine (identity activation).
#[derive(Debug, Clone)]
pub struct FeedForwardNet {
    layers: Vec<DenseLayer>,
}

impl FeedForwardNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    context: "FeedForwardNet::new (layer chaining)",
                    expected: w[0].out_dim(),
                    got: w[1].in_dim(),
                });
            }
        }
        let last = layers.len() - 1;
        if layers[last].activation != Activation::Identity {
            return Err(Error::InvalidInput(
                "output layer must have identity activation".into(),
            ));
        }
        if layers[..last]
            .iter()
            .any(|l| l.activation != layers[0].activation)
        {
            return Err(Error::InvalidInput(
                "hidden layers must share one activation".into(),
            ));
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn architecture(&self) -> NetworkArchitecture {
        let mut dims = vec![self.in_dim()];
        dims.extend(self.layers.iter().map(DenseLayer::out_dim));
        let activation = if self.layers.len() > 1 {
            self.layers[0].activation
        } else {
            Activation::Identity
        };
        NetworkArchitecture {
            kind: ArchitectureKind::Fnn,
            dims,
            data_size: None,
            activation,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = apply_dense(layer, &cur)?;
        }
        Ok(cur)
    }

    /// Largest absolute entry over all weight matrices.
    pub fn weight_sup(&self) -> f64 {
        self.layers
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.weight_sup()))
    }

    pub fn bias_sup(&self) -> f64 {
        self.layers
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.bias_sup()))
    }
}

/// Convolutional network; same layering convention as [`FeedForwardNet`].
#[derive(Debug, Clone)]
pub struct ConvNet {
    layers: Vec<ConvLayer>,
}

impl ConvNet {
    pub fn new(layers: Vec<ConvLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        let d = layers[0].data_size;
        if layers.iter().any(|l| l.data_size != d) {
            return Err(Error::InvalidInput("mixed data sizes across layers".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_channels != w[1].in_channels {
                return Err(Error::DimensionMismatch {
                    context: "ConvNet::new (channel chaining)",
                    expected: w[0].out_channels,
                    got: w[1].in_channels,
                });
            }
        }
        let last = layers.len() - 1;
        if layers[last].activation != Activation::Identity {
            return Err(Error::InvalidInput(
                "output layer must have identity activation".into(),
            ));
        }
        if layers[..last]
            .iter()
            .any(|l| l.activation != layers[0].activation)
        {
            return Err(Error::InvalidInput(
                "hidden layers must share one activation".into(),
            ));
        }
        Ok(Self { layers })
    }

    pub fn data_size(&self) -> usize {
        self.layers[0].data_size
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().unwrap().out_channels
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn architecture(&self) -> NetworkArchitecture {
        let mut dims = vec![self.in_channels()];
        dims.extend(self.layers.iter().map(|l| l.out_channels));
        let activation = if self.layers.len() > 1 {
            self.layers[0].activation
        } else {
            Activation::Identity
        };
        NetworkArchitecture {
            kind: ArchitectureKind::Cnn,
            dims,
            data_size: Some(self.data_size()),
            activation,
        }
    }

    pub fn eval(&self, channels: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut cur = channels.to_vec();
        for layer in &self.layers {
            cur = apply_conv(layer, &cur)?;
        }
        Ok(cur)
    }

    /// Evaluate a 1-in/1-out-channel network as a map on `R^d`.
    pub fn eval_single(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.in_channels() != 1 || self.out_channels() != 1 {
            return Err(Error::InvalidInput(
                "eval_single needs a 1-in/1-out-channel network".into(),
            ));
        }
        let out = self.eval(std::slice::from_ref(&x.to_vec()))?;
        Ok(out.into_iter().next().unwrap())
    }

    pub fn kernel_sup(&self) -> f64 {
        self.layers
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.kernel_sup()))
    }

    pub fn bias_sup(&self) -> f64 {
        self.layers
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.bias_sup()))
    }
}

// ── Residual networks ───────────────────────────────────────────────────

/// One residual function together with its Lipschitz certificate. Hat
/// blocks get the analytic `3dcM` bound at construction; arbitrary
/// user-supplied blocks must carry a caller-provided bound — no general
/// Lipschitz certification is attempted.
#[derive(Clone)]
pub struct ResidualBlock {
    body: BlockBody,
    dim: usize,
    lip_bound: f64,
}

#[derive(Clone)]
enum BlockBody {
    Fnn(FeedForwardNet),
    Cnn(ConvNet),
    Custom(Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>),
}

impl std::fmt::Debug for ResidualBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.body {
            BlockBody::Fnn(_) => "fnn",
            BlockBody::Cnn(_) => "cnn",
            BlockBody::Custom(_) => "custom",
        };
        write!(
            f,
            "ResidualBlock {{ kind: {kind}, dim: {}, lip_bound: {} }}",
            self.dim, self.lip_bound
        )
    }
}

impl ResidualBlock {
    pub fn from_fnn(net: FeedForwardNet, lip_bound: f64) -> Result<Self> {
        if net.in_dim() != net.out_dim() {
            return Err(Error::DimensionMismatch {
                context: "ResidualBlock::from_fnn",
                expected: net.in_dim(),
                got: net.out_dim(),
            });
        }
        let dim = net.in_dim();
        Ok(Self {
            body: BlockBody::Fnn(net),
            dim,
            lip_bound,
        })
    }

    pub fn from_cnn(net: ConvNet, lip_bound: f64) -> Result<Self> {
        if net.in_channels() != 1 || net.out_channels() != 1 {
            return Err(Error::InvalidInput(
                "residual conv block needs 1 input and 1 output channel".into(),
            ));
        }
        let dim = net.data_size();
        Ok(Self {
            body: BlockBody::Cnn(net),
            dim,
            lip_bound,
        })
    }

    /// Wrap an arbitrary pure map with a caller-certified Lipschitz bound.
    pub fn from_fn<F>(f: F, dim: usize, lip_bound: f64) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            body: BlockBody::Custom(Arc::new(f)),
            dim,
            lip_bound,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lip_bound(&self) -> f64 {
        self.lip_bound
    }

    /// Override the certificate (used by tests to exercise the guards).
    pub fn with_lip_bound(mut self, lip_bound: f64) -> Self {
        self.lip_bound = lip_bound;
        self
    }

    pub fn as_fnn(&self) -> Option<&FeedForwardNet> {
        match &self.body {
            BlockBody::Fnn(net) => Some(net),
            _ => None,
        }
    }

    pub fn as_cnn(&self) -> Option<&ConvNet> {
        match &self.body {
            BlockBody::Cnn(net) => Some(net),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "block input dimension mismatch");
        match &self.body {
            BlockBody::Fnn(net) => net.eval(x).expect("validated at construction"),
            BlockBody::Cnn(net) => net.eval_single(x).expect("validated at construction"),
            BlockBody::Custom(f) => {
                let out = f(x);
                assert_eq!(out.len(), self.dim, "block output dimension mismatch");
                out
            }
        }
    }
}

/// Per-block record of one fixed-point inversion.
#[derive(Debug, Clone)]
pub struct BlockInversionStats {
    pub iterations: usize,
    /// `||x_k + G(x_k) - y||_inf` after each iteration, in order.
    pub residuals: Vec<f64>,
}

/// Ordered residual blocks; forward is `x -> x + G(x)` applied block by
/// block.
#[derive(Debug, Clone)]
pub struct ResidualNetwork {
    dim: usize,
    blocks: Vec<ResidualBlock>,
}

impl ResidualNetwork {
    pub fn new(dim: usize, blocks: Vec<ResidualBlock>) -> Result<Self> {
        for (i, b) in blocks.iter().enumerate() {
            if b.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "ResidualNetwork::new",
                    expected: dim,
                    got: blocks[i].dim(),
                });
            }
        }
        Ok(Self { dim, blocks })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            blocks: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[ResidualBlock] {
        &self.blocks
    }

    /// Every block certified with `Lip(G) < 1`?
    pub fn is_certified_invertible(&self) -> bool {
        self.blocks.iter().all(|b| b.lip_bound() < 1.0)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "ResidualNetwork::forward",
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut cur = x.to_vec();
        for block in &self.blocks {
            let g = block.eval(&cur);
            for (c, gi) in cur.iter_mut().zip(&g) {
                *c += gi;
            }
        }
        Ok(cur)
    }

    /// Invert the network at `y`: blocks are solved last to first, each by
    /// iterating `x <- y - G(x)` from `x_0 = y` until
    /// `||x + G(x) - y||_inf <= tol`.
    pub fn inverse(&self, y: &[f64], tol: f64) -> Result<Vec<f64>> {
        Ok(self.inverse_with_stats(y, tol)?.0)
    }

    /// As [`inverse`](Self::inverse), also returning the per-block
    /// iteration log (last block first, matching solve order).
    pub fn inverse_with_stats(&self, y: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<BlockInversionStats>)> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "ResidualNetwork::inverse",
                expected: self.dim,
                got: y.len(),
            });
        }
        if tol <= 0.0 {
            return Err(Error::InvalidInput("inversion tolerance must be > 0".into()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if !(b.lip_bound() < 1.0) {
                return Err(Error::NotCertifiedInvertible {
                    block: i,
                    bound: b.lip_bound(),
                });
            }
        }
        let mut cur = y.to_vec();
        let mut stats = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let (x, s) = invert_block(block, &cur, tol, i)?;
            stats.push(s);
            cur = x;
        }
        Ok((cur, stats))
    }
}

/// Solve `x + G(x) = y` for one certified block. The iteration count cap
/// comes from the contraction ratio `q`: `ceil(log(tol/scale)/log(q)) + 64`
/// with `scale = max(||y||_inf, 1)`; hitting it means the certificate lied.
fn invert_block(
    block: &ResidualBlock,
    y: &[f64],
    tol: f64,
    block_index: usize,
) -> Result<(Vec<f64>, BlockInversionStats)> {
    let q = block.lip_bound();
    let scale = crate::num::sup_norm(y).max(1.0);
    let cap = if q <= f64::EPSILON {
        64
    } else {
        let geometric = ((tol / scale).ln() / q.ln()).ceil().max(0.0) as usize;
        geometric + 64
    };

    let mut x = y.to_vec();
    let mut residuals = Vec::new();
    for iteration in 1..=cap {
        let g = block.eval(&x);
        // residual of the current iterate
        let forward: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + b).collect();
        let residual = sup_dist(&forward, y);
        residuals.push(residual);
        if residual <= tol {
            return Ok((
                x,
                BlockInversionStats {
                    iterations: iteration,
                    residuals,
                },
            ));
        }
        for (xi, (yi, gi)) in x.iter_mut().zip(y.iter().zip(&g)) {
            *xi = yi - gi;
        }
    }
    Err(Error::NoConvergence {
        block: block_index,
        iterations: cap,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hat::{theta_block, HatParams, Sign};
    use crate::num::derive_rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu(&[-3.0, -0.5]), vec![0.0, 0.0]);
        let x = vec![0.25, 1.5, 0.0];
        assert_eq!(relu(&x), x);
    }

    #[test]
    fn circ_conv_identity_kernel() {
        // u_d = 1 is the identity kernel
        let out = circ_conv(&[0.0, 0.0, 1.0], &[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(out, vec![5.0, 6.0, 7.0]);
    }

    #[test]
    fn circ_conv_shift_kernel_matches_x_r() {
        // e = [0 ... 0 1 0] gives e*x = xR
        let out = circ_conv(&[0.0, 1.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out, vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn circ_conv_pins_one_based_definition() {
        // hand expansion of (u*v)_i = sum_j u_{i-j} v_j for d=3,
        // u=(1,2,3), v=(4,5,6):
        //   (u*v)_1 = u_0 v_1 + u_{-1} v_2 + u_{-2} v_3
        //           = u_3*4 + u_2*5 + u_1*6 = 12 + 10 + 6 = 28
        //   (u*v)_2 = u_1*4 + u_3*5 + u_2*6 = 4 + 15 + 12 = 31
        //   (u*v)_3 = u_2*4 + u_1*5 + u_3*6 = 8 + 5 + 18 = 31
        let out = circ_conv(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(out, vec![28.0, 31.0, 31.0]);
    }

    #[test]
    fn circ_conv_rejects_length_mismatch() {
        assert!(matches!(
            circ_conv(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn circ_conv_commutes(
            d in 1usize..16,
            seed in 0u64..1000,
        ) {
            let mut rng = derive_rng(seed, 17);
            let u: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let uv = circ_conv(&u, &v).unwrap();
            let vu = circ_conv(&v, &u).unwrap();
            for (a, b) in uv.iter().zip(&vu) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn circ_conv_is_translation_equivariant(
            d in 1usize..16,
            seed in 0u64..1000,
        ) {
            // (u*(vR))_i = ((u*v)R)_i
            let mut rng = derive_rng(seed, 18);
            let u: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let shifted_v = crate::hat::apply_shift(&v, 1);
            let lhs = circ_conv(&u, &shifted_v).unwrap();
            let rhs = crate::hat::apply_shift(&circ_conv(&u, &v).unwrap(), 1);
            for (a, b) in lhs.iter().zip(&rhs) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn apply_dense_examples() {
        let id = DenseLayer::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            Activation::Identity,
        )
        .unwrap();
        assert_eq!(apply_dense(&id, &[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);

        let relu_id = DenseLayer::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(apply_dense(&relu_id, &[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);

        // 0.3 + 0.3 - 1 < 0, clipped by relu
        let gate = DenseLayer::new(vec![vec![1.0, 1.0]], vec![-1.0], Activation::Relu).unwrap();
        assert_eq!(apply_dense(&gate, &[0.3, 0.3]).unwrap(), vec![0.0]);

        assert!(apply_dense(&gate, &[0.3]).is_err());
    }

    fn single_channel_layer(kernel: Vec<f64>, bias: f64, act: Activation) -> ConvLayer {
        let d = kernel.len();
        ConvLayer::new(d, vec![vec![kernel]], vec![bias], act).unwrap()
    }

    #[test]
    fn apply_conv_identity_kernel_is_identity() {
        let layer = single_channel_layer(vec![0.0, 0.0, 0.0, 1.0], 0.0, Activation::Identity);
        let x = vec![vec![1.0, -2.0, 3.5, 0.25]];
        assert_eq!(apply_conv(&layer, &x).unwrap(), x);
    }

    #[test]
    fn apply_conv_shift_kernel_shifts_channel() {
        let layer = single_channel_layer(vec![0.0, 1.0, 0.0], 0.0, Activation::Identity);
        let out = apply_conv(&layer, &[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(out, vec![vec![2.0, 3.0, 1.0]]);
    }

    #[test]
    fn apply_conv_rejects_channel_mismatch() {
        let layer = single_channel_layer(vec![1.0, 0.0], 0.0, Activation::Identity);
        assert!(apply_conv(&layer, &[vec![1.0, 2.0], vec![3.0, 4.0]]).is_err());
        assert!(apply_conv(&layer, &[vec![1.0, 2.0, 3.0]]).is_err());
    }

    #[test]
    fn single_channel_conv_stack_is_translation_equivariant() {
        let mut rng = derive_rng(3, 0);
        for _ in 0..100 {
            let d = rng.random_range(2usize..8);
            let layers = (0..3)
                .map(|i| {
                    let kernel: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let act = if i == 2 { Activation::Identity } else { Activation::Relu };
                    single_channel_layer(kernel, rng.random_range(-0.5..0.5), act)
                })
                .collect();
            let net = ConvNet::new(layers).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let shifted = crate::hat::apply_shift(&x, 1);
            let lhs = net.eval_single(&shifted).unwrap();
            let rhs = crate::hat::apply_shift(&net.eval_single(&x).unwrap(), 1);
            assert!(sup_dist(&lhs, &rhs) <= 1e-12, "F(xR) != F(x)R");
        }
    }

    fn sample_hat_params(rng: &mut impl Rng, d: usize) -> HatParams {
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let m = rng.random_range(1.0..8.0);
        // keep the contraction ratio in [0.1, 0.8]
        let c = rng.random_range(0.1..0.8) / (3.0 * d as f64 * m);
        let v = if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus };
        HatParams::new(z, m, c, v).unwrap()
    }

    #[test]
    fn resnet_forward_with_no_blocks_is_identity() {
        let net = ResidualNetwork::identity(3);
        let x = [0.1, -0.2, 0.7];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn resnet_forward_outside_hat_support_is_identity() {
        let p = HatParams::new(vec![0.5, 0.5], 2.0, 0.05, Sign::Plus).unwrap();
        let block = theta_block(&p).unwrap();
        let net = ResidualNetwork::new(2, vec![block]).unwrap();
        let x = [3.0, -1.0]; // far from z + [-1/M, 1/M]^2
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn resnet_forward_hat_block_hand_value() {
        // peak disturbance on the first coordinate only
        let p = HatParams::new(vec![0.5, 0.5], 1.0, 0.1, Sign::Plus).unwrap();
        let block = theta_block(&p).unwrap();
        let net = ResidualNetwork::new(2, vec![block]).unwrap();
        let y = net.forward(&[0.5, 0.5]).unwrap();
        assert!((y[0] - 0.6).abs() <= 1e-12, "got {}", y[0]);
        assert!((y[1] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn inverse_of_identity_net_is_identity() {
        let net = ResidualNetwork::identity(2);
        let y = [0.4, -0.9];
        assert_eq!(net.inverse(&y, 1e-10).unwrap(), y.to_vec());
    }

    #[test]
    fn inverse_rejects_uncertified_blocks() {
        let p = HatParams::new(vec![0.5], 2.0, 0.05, Sign::Plus).unwrap();
        let block = theta_block(&p).unwrap().with_lip_bound(1.2);
        let net = ResidualNetwork::new(1, vec![block]).unwrap();
        assert!(matches!(
            net.inverse(&[0.5], 1e-10),
            Err(Error::NotCertifiedInvertible { bound, .. }) if bound == 1.2
        ));
    }

    #[test]
    fn roundtrip_through_random_hat_resnets() {
        let mut rng = derive_rng(11, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let d = rng.random_range(1usize..=4);
            let l = rng.random_range(0usize..=8);
            let blocks: Vec<ResidualBlock> = (0..l)
                .map(|_| theta_block(&sample_hat_params(&mut rng, d)).unwrap())
                .collect();
            let net = ResidualNetwork::new(d, blocks).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let y = net.forward(&x).unwrap();
            let back = net.inverse(&y, 1e-10).unwrap();
            worst = worst.max(sup_dist(&back, &x));
        }
        assert!(worst <= 1e-8, "worst roundtrip error {worst:.3e}");
    }

    #[test]
    fn forward_with_invertible_blocks_is_injective_on_samples() {
        let mut rng = derive_rng(12, 0);
        let d = 3;
        let blocks: Vec<ResidualBlock> = (0..4)
            .map(|_| theta_block(&sample_hat_params(&mut rng, d)).unwrap())
            .collect();
        let net = ResidualNetwork::new(d, blocks).unwrap();
        let inputs: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let outputs: Vec<Vec<f64>> = inputs.iter().map(|x| net.forward(x).unwrap()).collect();
        let mut min_gap = f64::INFINITY;
        for i in 0..outputs.len() {
            for j in (i + 1)..outputs.len() {
                min_gap = min_gap.min(sup_dist(&outputs[i], &outputs[j]));
            }
        }
        assert!(min_gap > 0.0, "distinct inputs collided");
    }

    #[test]
    fn inversion_residuals_decay_geometrically() {
        // contraction ratio q bounds the residual decay rate
        let d = 2;
        let m = 2.0;
        let q = 0.6;
        let c = q / (3.0 * d as f64 * m);
        let p = HatParams::new(vec![0.5, 0.5], m, c, Sign::Plus).unwrap();
        let net = ResidualNetwork::new(d, vec![theta_block(&p).unwrap()]).unwrap();
        let y = net.forward(&[0.52, 0.49]).unwrap();
        let (_, stats) = net.inverse_with_stats(&y, 1e-12).unwrap();
        let residuals = &stats[0].residuals;
        assert!(residuals.len() >= 2, "expected a few iterations");
        for w in residuals.windows(2) {
            if w[0] > 1e-14 {
                assert!(
                    w[1] <= q * w[0] + 1e-15,
                    "residual did not contract: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn architecture_display() {
        let p = HatParams::new(vec![0.5, 0.5], 2.0, 0.05, Sign::Plus).unwrap();
        let block = theta_block(&p).unwrap();
        let arch = block.as_fnn().unwrap().architecture();
        assert_eq!(arch.dims, vec![2, 4, 1, 2]);
        assert_eq!(arch.to_string(), "(2,4,1,2;relu)");
    }
}
