use thiserror::Error;

/// Crate-wide error type. Every fallible operation reports one of these;
/// the variants mirror the guard conditions of the constructions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A residual block carries a Lipschitz certificate >= 1, so the
    /// block-plus-identity map is not certified invertible.
    #[error("block {block} is not certified invertible (lip bound {bound})")]
    NotCertifiedInvertible { block: usize, bound: f64 },

    /// Fixed-point inversion hit its iteration cap. With a valid
    /// certificate this cannot happen, so it signals a wrong certificate.
    #[error(
        "fixed-point inversion of block {block} did not reach tolerance \
         after {iterations} iterations (residual {residual:.3e})"
    )]
    NoConvergence {
        block: usize,
        iterations: usize,
        residual: f64,
    },

    /// Hat amplitude `c` violates the contraction cap `c < 1/(3dM)`.
    #[error("hat amplitude {c} is not below the invertibility cap {cap}")]
    AmplitudeTooLarge { c: f64, cap: f64 },

    #[error("scale {value} at index {index} is not positive")]
    NonPositiveScale { index: usize, value: f64 },

    #[error("invalid integrability order p = {0}; need p >= 1")]
    InvalidOrder(f64),

    /// The base map's image box cannot contain the fooling grid plus its
    /// support cubes.
    #[error("base-map image too small for the fooling grid: {0}")]
    ImageTooSmall(String),

    #[error("trace used {n} samples, exceeding the 2m budget cap {cap}")]
    BudgetExceeded { n: usize, cap: usize },

    #[error("all grid points were removed by the trace; no fooling pair survives")]
    EmptyFilteredGrid,

    #[error("sup-norm maximizer {point:?} lies outside the sampling domain")]
    MaximizerOutsideDomain { point: Vec<f64> },

    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
