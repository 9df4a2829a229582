use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("|f| = {f} is below the threshold 12: no real turning angle")]
    BelowThreshold { f: f64 },

    #[error("|f| = 12 is degenerate: cos(Psi) = 0 breaks the particular solutions")]
    DegenerateThreshold,

    #[error("invalid truncation order {order}: {reason}")]
    InvalidOrder { order: usize, reason: &'static str },

    #[error("stage {stage}: solvability residual {residual:e} exceeds tolerance (|rhs| = {rhs_norm:e})")]
    StageInconsistency {
        stage: i32,
        residual: f64,
        rhs_norm: f64,
    },

    #[error("adjoint null vector check failed: |M^T Z| = {0:e}")]
    AdjointCheck(f64),

    #[error("invalid integrator input: {0}")]
    InvalidIntegration(String),

    #[error("angles are undefined for a zero-energy envelope state")]
    UndefinedAngles,

    #[error("coordinate singularity: sin(Psi) = 0")]
    CoordinateSingularity,

    #[error("no real orbit for G = {g}, u0 = {u0}")]
    NoRealOrbit { g: f64, u0: f64 },

    #[error("capture classification needs a span of at least 1.5x in t (got {t0}..{t1})")]
    ShortTrajectory { t0: f64, t1: f64 },

    #[error("threshold scan: {0}")]
    Scan(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl Error {
    /// True for failures of the file system rather than of the mathematics.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Parse { .. })
    }
}
