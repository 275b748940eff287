use std::path::PathBuf;

use thiserror::Error;

/// Library-wide error type.
///
/// Variants split into two exit classes used by the CLI: configuration or
/// input problems (exit code 2) and numeric failures at run time (exit
/// code 3). See [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A parameter outside its stated domain (e.g. Gamma shape <= 0).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Incompatible matrix or subspace dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// NaN or infinity where a finite value is required.
    #[error("non-finite values in {0}")]
    NonFinite(String),

    /// A computed quantity left its mathematically guaranteed range.
    #[error("numerical fault: {0}")]
    Numerical(String),

    /// Smallest eigenvalue at or below the requested floor.
    #[error("near-singular matrix in {context}: eigenvalue {eigenvalue:.3e} at or below floor {floor:.3e}")]
    NearSingular {
        context: String,
        eigenvalue: f64,
        floor: f64,
    },

    /// A view's sample covariance fell below the whitening floor.
    #[error("covariance collapse for view {view}: eigenvalue {eigenvalue:.3e} at or below whitening floor {floor:.3e}")]
    CovarianceCollapse {
        view: usize,
        eigenvalue: f64,
        floor: f64,
    },

    /// Target spectra admit no per-view gain solution.
    #[error("infeasible target spectra: {0}")]
    Infeasible(String),

    /// Too few samples for the requested moment computation.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// Requested rank outside [1, dim].
    #[error("rank {rank} out of range for dimension {dim}")]
    RankOutOfRange { rank: usize, dim: usize },

    /// Coordinatewise map inversion did not converge.
    #[error("inversion failed at coordinate {coord}: no convergence after {iters} iterations")]
    InversionFailure { coord: usize, iters: usize },

    /// Encoded observations disagree with source-level moments.
    #[error("moment preservation failed for view {view}: max deviation {deviation:.3e} exceeds {tolerance:.3e}")]
    WiringFailure {
        view: usize,
        deviation: f64,
        tolerance: f64,
    },

    /// Quadrature rule has too few nodes for the requested degree.
    #[error("quadrature rule too small: degree {degree} needs at least {needed} nodes, got {got}")]
    QuadratureTooSmall {
        degree: u32,
        needed: usize,
        got: usize,
    },

    /// Mode enumeration would exceed the combinatorial cap.
    #[error("mode spectrum too large: {modes} modes exceed the cap of {cap}")]
    SpectrumTooLarge { modes: u128, cap: u64 },

    /// I/O failure, annotated with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Parse failure in a config, CSV, or binary artifact.
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// An inner error annotated with where it happened.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attach location context (for example the failing `(n, trial)` pair).
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Process exit class: 2 for configuration or input problems, 3 for
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidParameter(_)
            | Error::Dimension(_)
            | Error::Infeasible(_)
            | Error::InsufficientSamples(_)
            | Error::RankOutOfRange { .. }
            | Error::QuadratureTooSmall { .. }
            | Error::SpectrumTooLarge { .. }
            | Error::Io { .. }
            | Error::Parse { .. } => 2,
            Error::NonFinite(_)
            | Error::Numerical(_)
            | Error::NearSingular { .. }
            | Error::CovarianceCollapse { .. }
            | Error::InversionFailure { .. }
            | Error::WiringFailure { .. } => 3,
            Error::Context { source, .. } => source.exit_code(),
        }
    }
}
