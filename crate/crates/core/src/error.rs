use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A transform was evaluated at a pole or outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Stability condition violated; `slack` is the (non-positive) margin,
    /// e.g. p0 for the M/G/1 chain.
    #[error("unstable parameters (stability slack {slack:.6})")]
    Unstable { slack: f64 },

    #[error("unstable derivative: extrapolation did not settle (residual {residual:.3e})")]
    UnstableDerivative { residual: f64 },

    #[error("divergent limit: approach sequence did not settle (residual {residual:.3e})")]
    DivergentLimit { residual: f64 },

    #[error("inversion failed / unstable PGF: coefficient {index} = {value:.3e}")]
    InversionFailed { index: usize, value: f64 },

    #[error("near-instability, oracle unavailable (cap {cap}, boundary mass {boundary_mass:.3e})")]
    OracleUnavailable { cap: usize, boundary_mass: f64 },

    #[error("stationary solve failed: {0}")]
    Solve(String),

    #[error("model/params mismatch: {0}")]
    ModelMismatch(String),

    #[error("insufficient horizon: no deliveries after warm-up")]
    InsufficientHorizon,

    #[error("no interior minimum on [{lo}, {hi}]")]
    NoInteriorMinimum { lo: f64, hi: f64 },

    #[error("invalid spec field `{field}`: {reason}")]
    Spec { field: String, reason: String },

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn spec(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Spec {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
