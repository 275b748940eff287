//! Named numerical tolerances and defaults used across the crate.
//!
//! Centralizing them keeps library code, tests, and the acceptance suite in
//! agreement about what "equal" means at each stage of the pipeline.

/// Orthonormality defect allowed in a [`crate::linalg::SubspaceBasis`]:
/// max-abs of `B^T B - I`.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Frobenius defect allowed when reconstructing `A_i = U_i diag(sigma) P^T`
/// from stored ensemble factors.
pub const RECONSTRUCTION_TOL: f64 = 1e-12;

/// Max-abs defect allowed in `W (A A^T + I) W^T = I` for population
/// whiteners.
pub const WHITENER_IDENTITY_TOL: f64 = 1e-10;

/// Population singular values of a constructed ensemble must match their
/// targets this tightly.
pub const SPECTRUM_FIDELITY_TOL: f64 = 1e-10;

/// Eigenvalue floor used when inverting population covariances
/// `A A^T + I`; their spectrum is >= 1, so the floor only guards misuse.
pub const POPULATION_EIG_FLOOR: f64 = 1e-12;

/// Eigenvalue floor for empirical covariance whitening. At or below it the
/// estimator fails loudly instead of regularizing.
pub const WHITENING_FLOOR: f64 = 1e-10;

/// Relative threshold for reporting numerical rank: singular values below
/// `RANK_TOL_REL * max(largest singular value, 1)` count as zero.
pub const RANK_TOL_REL: f64 = 1e-9;

/// Hermite orthonormality and Mehler cross-moment certification tolerance.
pub const MEHLER_TOL: f64 = 1e-8;

/// Correlations above this trigger a quadrature precision warning.
pub const HIGH_CORRELATION_WARNING: f64 = 0.999;

/// Cap on the number of enumerated Hermite modes.
pub const MODE_CAP: u64 = 1_000_000;

/// Residual tolerance for Newton inversion of coordinatewise maps.
pub const NEWTON_TOL: f64 = 1e-12;

/// Iteration cap for Newton inversion.
pub const NEWTON_MAX_ITER: usize = 100;

/// Max-abs round-trip error allowed for apply-then-invert on samples in
/// `[-10, 10]^d`.
pub const ROUND_TRIP_TOL: f64 = 1e-8;

/// Max-abs deviation allowed between source-level and encoded second
/// moments in the invariance check.
pub const MOMENT_PRESERVATION_TOL: f64 = 1e-10;

/// Below this averaged-projector eigengap an intersection result is flagged
/// low-confidence.
pub const LOW_CONFIDENCE_GAMMA: f64 = 0.05;

/// Default eigenvalue threshold for automatic rank selection.
pub const DEFAULT_TAU: f64 = 0.9;

/// Default Gauss-Hermite node count.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// Acceptance window for fitted n^(-1/2) rate slopes.
pub const SLOPE_WINDOW: (f64, f64) = (-0.65, -0.35);

/// Default fraction of Monte Carlo trials that must satisfy the
/// perturbation-bound chain.
pub const DEFAULT_MIN_PASS_FRACTION: f64 = 0.95;
