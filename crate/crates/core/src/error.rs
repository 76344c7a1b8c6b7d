//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pilot layout: {0}")]
    InvalidLayout(String),

    #[error("cannot place {paths} delays with separation {separation:.3e} in a window of width {window:.3e}")]
    DelayPlacement {
        paths: usize,
        separation: f64,
        window: f64,
    },

    #[error("delay {0:.6} lies outside the admissible window for this layout")]
    DelayOutOfWindow(f64),

    #[error("all-zero measurements: signal power undefined for a finite SNR")]
    ZeroSignal,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense materialization cap exceeded: M = {m} > {cap}")]
    DenseCapExceeded { m: usize, cap: usize },

    #[error("matrix is not Hermitian: relative symmetry residual {0:.3e}")]
    NotHermitian(f64),

    #[error("eigenvalue iteration failed to converge")]
    EigNoConvergence,

    #[error("singular support: triangular factor diagonal ratio {0:.3e} exceeds 1e12")]
    SingularSupport(f64),

    #[error("ill-posed support: delay dictionary diagonal ratio {0:.3e} exceeds 1e12")]
    IllPosedSupport(f64),

    #[error("operator dimension {dim} too small: need k_max + window <= {dim}")]
    OperatorTooSmall { dim: usize },

    #[error("PER trace too short: have {have}, need at least {need}")]
    TraceTooShort { have: usize, need: usize },

    #[error("empty candidate delay grid")]
    EmptyGrid,

    #[error("delay window {window:.4} exceeds the admissible extent {max:.4}")]
    WindowTooWide { window: f64, max: f64 },

    #[error("duplicate delays in support set")]
    DuplicateDelays,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
