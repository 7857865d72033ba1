//! Invertible residual networks built from explicit hat-function blocks,
//! exact inversion by fixed-point iteration, and an adversarial sampling
//! harness.
//!
//! The library has two halves. The constructive half evaluates ReLU
//! feedforward and circular-convolution layers from scratch, realizes a
//! compactly supported hat function as a two-hidden-layer network with
//! explicit weights, and wraps it into residual blocks whose Lipschitz
//! certificate `3dcM < 1` makes the block-plus-identity map invertible —
//! including a translation-equivariant variant realized as a
//! 1-in/1-out-channel convolutional network.
//!
//! The adversarial half turns those blocks into fooling families: a grid
//! of hat peaks placed inside a bi-Lipschitz base map's image, scaled so
//! that after any `n <= 2m` point samples most peaks remain unseen. Every
//! surviving peak carries two functions that agree with the base map on
//! all sampled points yet differ by `2c` in sup norm, which pins the
//! worst-case reconstruction error of *any* sampling algorithm at
//! `c = 1/(6dM) ~ m^(-1/d)` — the classic curse-of-dimensionality floor,
//! here made executable against concrete learners.
//!
//! Everything is pure and immutable after construction; evaluation is
//! safe to share across workers, and all randomness flows through
//! explicitly seeded generators.

pub mod adversary;
pub mod base_maps;
pub mod error;
pub mod geometry;
pub mod hat;
pub mod learners;
pub mod metrics;
pub mod nets;
pub mod num;
pub mod verify;

pub use error::{Error, Result};
