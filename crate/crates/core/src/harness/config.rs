//! Experiment configuration: one JSON document drives every subcommand.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::intersection::PairRanks;
use crate::io;
use crate::nonlinear::MapSpecConfig;
use crate::prior::PriorSpec;
use crate::rng::SeededStream;
use crate::spectrum::{self, MixingEnsemble, TargetSpectra};
use crate::tol;

use super::record::canonical_json;

/// Experiment selector; names match the CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Rate,
    Dominance,
    Intersection,
    HermiteCert,
    Invariance,
    Estimate,
    ConstructSpectrum,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Rate => "rate",
            ExperimentKind::Dominance => "dominance",
            ExperimentKind::Intersection => "intersection",
            ExperimentKind::HermiteCert => "hermite-cert",
            ExperimentKind::Invariance => "invariance",
            ExperimentKind::Estimate => "estimate",
            ExperimentKind::ConstructSpectrum => "construct-spectrum",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One mixing matrix given inline, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingConfig {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MixingConfig {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Dimension(format!(
                "mixing data has {} entries for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        MixingConfig {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

/// Optional tolerance overrides; unset fields fall back to the library
/// defaults in [`crate::tol`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceOverrides {
    pub slope_min: Option<f64>,
    pub slope_max: Option<f64>,
    /// Fraction of trials that must satisfy the perturbation-bound checks.
    pub min_pass_fraction: Option<f64>,
    /// Hermite orthonormality / cross-moment certification tolerance.
    pub certification: Option<f64>,
    /// Constructed-spectrum fidelity tolerance.
    pub fidelity: Option<f64>,
    /// Generator round-trip inversion tolerance.
    pub round_trip: Option<f64>,
}

impl ToleranceOverrides {
    pub fn slope_window(&self) -> (f64, f64) {
        (
            self.slope_min.unwrap_or(tol::SLOPE_WINDOW.0),
            self.slope_max.unwrap_or(tol::SLOPE_WINDOW.1),
        )
    }

    pub fn min_pass_fraction(&self) -> f64 {
        self.min_pass_fraction
            .unwrap_or(tol::DEFAULT_MIN_PASS_FRACTION)
    }

    pub fn certification(&self) -> f64 {
        self.certification.unwrap_or(tol::MEHLER_TOL)
    }

    pub fn fidelity(&self) -> f64 {
        self.fidelity.unwrap_or(tol::SPECTRUM_FIDELITY_TOL)
    }

    pub fn round_trip(&self) -> f64 {
        self.round_trip.unwrap_or(tol::ROUND_TRIP_TOL)
    }
}

/// Complete experiment description. The config (which includes the seed)
/// determines every emitted byte of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Prescribed three-view canonical spectra; exclusive with `mixings`.
    #[serde(default)]
    pub targets: Option<TargetSpectra>,
    /// Explicit mixing matrices, one per view; exclusive with `targets`.
    #[serde(default)]
    pub mixings: Option<Vec<MixingConfig>>,
    #[serde(default = "default_prior")]
    pub prior: PriorSpec,
    /// Sample sizes for rate sweeps, strictly increasing.
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub trials: Option<usize>,
    /// Sample size for single-size experiments.
    #[serde(default)]
    pub n: Option<usize>,
    /// Uniform pairwise subspace rank.
    #[serde(default)]
    pub rank: Option<usize>,
    /// Per-pair subspace ranks as a full symmetric matrix with zero
    /// diagonal; takes precedence over `rank`.
    #[serde(default)]
    pub pair_ranks: Option<PairRanks>,
    /// Intersection dimension, applied to every view.
    #[serde(default)]
    pub view_rank: Option<usize>,
    /// Per-view source dimension for experiments that construct their own
    /// spectra (dominance ablation).
    #[serde(default)]
    pub dim: Option<usize>,
    /// Eigenvalue threshold for automatic rank selection, in (0.5, 1).
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub max_degree: Option<u32>,
    #[serde(default)]
    pub quadrature_nodes: Option<usize>,
    /// Correlation grid for Hermite certification sweeps.
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    /// `t_r / t_1^2` grid for the dominance ablation; must cross 1.
    #[serde(default)]
    pub ratio_grid: Option<Vec<f64>>,
    /// Leading correlation for the dominance ablation.
    #[serde(default)]
    pub t1: Option<f64>,
    /// Per-view generator descriptions (a single entry is broadcast to all
    /// views).
    #[serde(default)]
    pub map_specs: Option<Vec<MapSpecConfig>>,
    /// Output file stem; the CLI appends `.csv` / `.json`.
    #[serde(default = "default_stem")]
    pub output_stem: String,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
}

fn default_prior() -> PriorSpec {
    PriorSpec::Gaussian
}

fn default_stem() -> String {
    "run".to_string()
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad experiment config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        Self::from_json_str(&text)
            .map_err(|e| e.with_context(format!("config {}", path.display())))
    }

    /// Structural checks shared by every experiment; kind-specific
    /// requirements live with the runners.
    pub fn validate(&self) -> Result<()> {
        if let Some(grid) = &self.n_grid {
            if grid.is_empty() {
                return Err(Error::Config("n_grid must not be empty".into()));
            }
            if grid[0] == 0 {
                return Err(Error::Config("n_grid entries must be >= 1".into()));
            }
            for w in grid.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::Config(format!(
                        "n_grid must be strictly increasing, got {} after {}",
                        w[1], w[0]
                    )));
                }
            }
        }
        if self.trials == Some(0) {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.n == Some(0) {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if self.targets.is_some() && self.mixings.is_some() {
            return Err(Error::Config("give targets or mixings, not both".into()));
        }
        if let Some(targets) = &self.targets {
            targets.validate()?;
        }
        if let Some(mixings) = &self.mixings {
            if mixings.len() < 2 {
                return Err(Error::Config(format!(
                    "mixings describe {} views, need at least 2",
                    mixings.len()
                )));
            }
            for m in mixings {
                m.to_matrix()?;
            }
        }
        self.prior.validate()?;
        if let Some(tau) = self.tau {
            if !(tau > 0.5 && tau < 1.0) {
                return Err(Error::Config(format!("tau = {tau} outside (0.5, 1)")));
            }
        }
        if self.output_stem.is_empty() {
            return Err(Error::Config("output_stem must not be empty".into()));
        }
        Ok(())
    }

    /// The mixing model this config describes, built from targets or from
    /// explicit matrices. Spectra-built ensembles draw their orthogonal
    /// factors from the dedicated stream (seed, 0).
    pub fn build_ensemble(&self) -> Result<MixingEnsemble> {
        match (&self.targets, &self.mixings) {
            (Some(targets), None) => {
                spectrum::build_from_targets(targets, SeededStream::new(self.seed, 0))
            }
            (None, Some(mixings)) => {
                let matrices = mixings
                    .iter()
                    .map(MixingConfig::to_matrix)
                    .collect::<Result<Vec<_>>>()?;
                MixingEnsemble::from_mixings(matrices)
            }
            (Some(_), Some(_)) => Err(Error::Config("give targets or mixings, not both".into())),
            (None, None) => Err(Error::Config(format!(
                "the {} experiment needs targets or mixings",
                self.experiment
            ))),
        }
    }

    /// SHA-256 of the canonical (key-sorted, float-normalized) JSON form.
    /// Key order in the source file cannot affect the hash; the seed and
    /// every default-filled field do.
    pub fn config_hash(&self) -> Result<String> {
        let value = serde_json::to_value(self)
            .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
        let mut hasher = Sha256::new();
        hasher.update(canonical_json(&value).as_bytes());
        Ok(hex::encode(hasher.finalize()))
    }

    pub fn effective_tau(&self) -> f64 {
        self.tau.unwrap_or(tol::DEFAULT_TAU)
    }
}
