//! Invertible coordinatewise observation maps and the wiring check that
//! encoding observations back to sources preserves every sample moment.
//!
//! A generator is `x = post · psi(pre · s)` with orthogonal rotations and
//! a per-coordinate map from a fixed menu of strictly increasing functions
//! with derivative >= 1 everywhere. The oracle encoder inverts the chain
//! exactly (safeguarded Newton per coordinate), so moments computed from
//! encoded observations must reproduce source-level moments to rounding
//! accuracy; any larger deviation indicates a wiring bug, not statistics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::{self, ViewDataset};
use crate::error::{Error, Result};
use crate::linalg;
use crate::prior::{self, PriorSpec};
use crate::rng::SeededStream;
use crate::spectrum::MixingEnsemble;
use crate::tol;

/// Orthogonality defect allowed in a rotation block.
const ROTATION_TOL: f64 = 1e-10;

/// One strictly increasing scalar map from the fixed menu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordinateMap {
    Identity,
    /// `x + alpha * tanh(beta * x)` with alpha, beta > 0.
    TanhPlusLinear { alpha: f64, beta: f64 },
    /// `x + gamma * x^3` with gamma > 0.
    CubicPlusLinear { gamma: f64 },
}

impl CoordinateMap {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CoordinateMap::Identity => Ok(()),
            CoordinateMap::TanhPlusLinear { alpha, beta } => {
                if alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "tanh map needs alpha, beta > 0, got alpha = {alpha}, beta = {beta}"
                    )))
                }
            }
            CoordinateMap::CubicPlusLinear { gamma } => {
                if gamma.is_finite() && gamma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "cubic map needs gamma > 0, got {gamma}"
                    )))
                }
            }
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            CoordinateMap::Identity => x,
            CoordinateMap::TanhPlusLinear { alpha, beta } => x + alpha * (beta * x).tanh(),
            CoordinateMap::CubicPlusLinear { gamma } => x + gamma * x * x * x,
        }
    }

    /// Always >= 1 for valid parameters, which is what makes Newton
    /// inversion safe.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            CoordinateMap::Identity => 1.0,
            CoordinateMap::TanhPlusLinear { alpha, beta } => {
                let th = (beta * x).tanh();
                1.0 + alpha * beta * (1.0 - th * th)
            }
            CoordinateMap::CubicPlusLinear { gamma } => 1.0 + 3.0 * gamma * x * x,
        }
    }

    /// Invert by Newton iteration with a bisection safeguard. Since the
    /// map fixes 0 and grows at least as fast as the identity, the root
    /// lies between 0 and y; the bracket shrinks monotonically.
    pub fn invert(&self, y: f64, coord: usize) -> Result<f64> {
        if let CoordinateMap::Identity = self {
            return Ok(y);
        }
        let (mut lo, mut hi) = if y >= 0.0 { (0.0, y) } else { (y, 0.0) };
        let mut x = y;
        for _ in 0..tol::NEWTON_MAX_ITER {
            let residual = self.apply(x) - y;
            if residual.abs() <= tol::NEWTON_TOL {
                return Ok(x);
            }
            if residual > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = residual / self.derivative(x);
            let candidate = x - step;
            x = if candidate > lo && candidate < hi {
                candidate
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(Error::InversionFailure {
            coord,
            iters: tol::NEWTON_MAX_ITER,
        })
    }
}

/// Menu selector as it appears in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MenuEntry {
    Identity,
    Tanh,
    Cubic,
}

/// Rotation selector as it appears in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationKind {
    #[default]
    Identity,
    Random,
}

/// Serializable description of a generator: rotations by kind, one menu
/// entry per coordinate (or a single entry broadcast to all), and shared
/// map parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpecConfig {
    #[serde(default)]
    pub pre: RotationKind,
    pub menu: Vec<MenuEntry>,
    #[serde(default)]
    pub post: RotationKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

impl MapSpecConfig {
    /// Build the concrete generator for a view of dimension `dim`,
    /// drawing any random rotations from `stream`.
    pub fn materialize(&self, dim: usize, stream: SeededStream) -> Result<InvertibleMapSpec> {
        let alpha = self.alpha.unwrap_or(1.0);
        let beta = self.beta.unwrap_or(1.0);
        let gamma = self.gamma.unwrap_or(1.0);
        let entries: Vec<MenuEntry> = if self.menu.len() == dim {
            self.menu.clone()
        } else if self.menu.len() == 1 {
            vec![self.menu[0]; dim]
        } else {
            return Err(Error::Config(format!(
                "map menu has {} entries for dimension {dim} (need 1 or {dim})",
                self.menu.len()
            )));
        };
        let maps = entries
            .into_iter()
            .map(|e| match e {
                MenuEntry::Identity => CoordinateMap::Identity,
                MenuEntry::Tanh => CoordinateMap::TanhPlusLinear { alpha, beta },
                MenuEntry::Cubic => CoordinateMap::CubicPlusLinear { gamma },
            })
            .collect();
        let rotation = |kind: RotationKind, tag: u64| match kind {
            RotationKind::Identity => DMatrix::identity(dim, dim),
            RotationKind::Random => linalg::random_orthogonal(dim, &mut stream.derive(tag).rng()),
        };
        InvertibleMapSpec::new(rotation(self.pre, 1), maps, rotation(self.post, 2))
    }
}

/// A concrete invertible generator: rotate, map each coordinate, rotate.
#[derive(Debug, Clone)]
pub struct InvertibleMapSpec {
    pre_rotation: DMatrix<f64>,
    coordinatewise: Vec<CoordinateMap>,
    post_rotation: DMatrix<f64>,
}

fn check_rotation(m: &DMatrix<f64>, dim: usize, which: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Dimension(format!(
            "{which} rotation is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    let defect = (m.transpose() * m - DMatrix::identity(dim, dim)).amax();
    if !defect.is_finite() || defect > ROTATION_TOL {
        return Err(Error::InvalidParameter(format!(
            "{which} rotation is not orthogonal (defect {defect:.3e})"
        )));
    }
    Ok(())
}

impl InvertibleMapSpec {
    pub fn new(
        pre_rotation: DMatrix<f64>,
        coordinatewise: Vec<CoordinateMap>,
        post_rotation: DMatrix<f64>,
    ) -> Result<Self> {
        let dim = coordinatewise.len();
        if dim == 0 {
            return Err(Error::Dimension("generator needs at least one coordinate".into()));
        }
        check_rotation(&pre_rotation, dim, "pre")?;
        check_rotation(&post_rotation, dim, "post")?;
        for map in &coordinatewise {
            map.validate()?;
        }
        Ok(InvertibleMapSpec {
            pre_rotation,
            coordinatewise,
            post_rotation,
        })
    }

    pub fn identity(dim: usize) -> Self {
        InvertibleMapSpec {
            pre_rotation: DMatrix::identity(dim, dim),
            coordinatewise: vec![CoordinateMap::Identity; dim],
            post_rotation: DMatrix::identity(dim, dim),
        }
    }

    /// Random generator: Haar rotations and uniform menu draws with
    /// parameters in [0.3, 1.5].
    pub fn random(dim: usize, stream: SeededStream) -> Result<Self> {
        use rand::Rng;
        let mut rng = stream.derive(3).rng();
        let maps = (0..dim)
            .map(|_| match rng.gen_range(0..3u8) {
                0 => CoordinateMap::Identity,
                1 => CoordinateMap::TanhPlusLinear {
                    alpha: rng.gen_range(0.3..1.5),
                    beta: rng.gen_range(0.3..1.5),
                },
                _ => CoordinateMap::CubicPlusLinear {
                    gamma: rng.gen_range(0.3..1.5),
                },
            })
            .collect();
        InvertibleMapSpec::new(
            linalg::random_orthogonal(dim, &mut stream.derive(1).rng()),
            maps,
            linalg::random_orthogonal(dim, &mut stream.derive(2).rng()),
        )
    }

    pub fn dim(&self) -> usize {
        self.coordinatewise.len()
    }

    pub fn maps(&self) -> &[CoordinateMap] {
        &self.coordinatewise
    }

    /// Replace the post rotation (negative-control hook for wiring tests).
    pub fn with_post_rotation(&self, post_rotation: DMatrix<f64>) -> Result<Self> {
        InvertibleMapSpec::new(self.pre_rotation.clone(), self.coordinatewise.clone(), post_rotation)
    }

    fn rotate(data: &DMatrix<f64>, rotation: &DMatrix<f64>, transpose: bool) -> DMatrix<f64> {
        // Skipping the multiply for exact identity rotations keeps
        // identity generators bitwise transparent.
        let d = rotation.nrows();
        if *rotation == DMatrix::identity(d, d) {
            return data.clone();
        }
        if transpose {
            data * rotation.transpose()
        } else {
            data * rotation
        }
    }

    /// `X = psi(S * pre^T) * post^T` (rows are samples).
    pub fn apply(&self, sources: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if sources.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "generator of dimension {} applied to {}-column data",
                self.dim(),
                sources.ncols()
            )));
        }
        let mut mid = Self::rotate(sources, &self.pre_rotation, true);
        let nrows = mid.nrows();
        mid.as_mut_slice()
            .par_chunks_mut(nrows)
            .zip(self.coordinatewise.par_iter())
            .for_each(|(col, map)| {
                for v in col {
                    *v = map.apply(*v);
                }
            });
        Ok(Self::rotate(&mid, &self.post_rotation, true))
    }

    /// Oracle inverse of [`InvertibleMapSpec::apply`].
    pub fn encode(&self, observations: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if observations.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "encoder of dimension {} applied to {}-column data",
                self.dim(),
                observations.ncols()
            )));
        }
        let mut mid = Self::rotate(observations, &self.post_rotation, false);
        let nrows = mid.nrows();
        let statuses: Vec<Result<()>> = mid
            .as_mut_slice()
            .par_chunks_mut(nrows)
            .enumerate()
            .map(|(coord, col)| {
                let map = &self.coordinatewise[coord];
                for v in col.iter_mut() {
                    *v = map.invert(*v, coord)?;
                }
                Ok(())
            })
            .collect();
        for status in statuses {
            status?;
        }
        Ok(Self::rotate(&mid, &self.pre_rotation, false))
    }

    pub fn apply_dataset(&self, sources: &ViewDataset) -> Result<ViewDataset> {
        ViewDataset::new(self.apply(sources.data())?, sources.view_index())
    }

    pub fn encode_dataset(&self, observations: &ViewDataset) -> Result<ViewDataset> {
        ViewDataset::new(self.encode(observations.data())?, observations.view_index())
    }
}

/// Moment deviations between source-level and encoded-observation-level
/// sample statistics, all of which must sit at rounding accuracy.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub per_view_mean_dev: Vec<f64>,
    pub per_view_cov_dev: Vec<f64>,
    pub per_pair_cross_dev: Vec<(usize, usize, f64)>,
    pub per_pair_normalized_dev: Vec<(usize, usize, f64)>,
    pub round_trip_max_err: Vec<f64>,
    pub max_deviation: f64,
}

/// Sample sources, push them through per-view generators, encode them
/// back with the matching encoders, and verify every sample moment agrees
/// with the source-level value. Generators and encoders are passed
/// separately so a deliberately corrupted encoder can serve as a negative
/// control.
pub fn wiring_check(
    ensemble: &MixingEnsemble,
    generators: &[InvertibleMapSpec],
    encoders: &[InvertibleMapSpec],
    prior_spec: &PriorSpec,
    n: usize,
    stream: SeededStream,
) -> Result<InvarianceReport> {
    let n_views = ensemble.num_views();
    if generators.len() != n_views || encoders.len() != n_views {
        return Err(Error::Config(format!(
            "{} generators / {} encoders for {n_views} views",
            generators.len(),
            encoders.len()
        )));
    }
    let sources = prior::sample_sources(ensemble, prior_spec, n, stream)?;
    let mut encoded = Vec::with_capacity(n_views);
    let mut round_trip_max_err = Vec::with_capacity(n_views);
    for (i, source) in sources.iter().enumerate() {
        let observed = generators[i].apply_dataset(source)?;
        let back = encoders[i].encode_dataset(&observed)?;
        round_trip_max_err.push((back.data() - source.data()).amax());
        encoded.push(back);
    }

    let mut max_deviation: f64 = 0.0;
    let mut per_view_mean_dev = Vec::with_capacity(n_views);
    let mut per_view_cov_dev = Vec::with_capacity(n_views);
    for i in 0..n_views {
        let mean_dev = sources[i]
            .means()
            .iter()
            .zip(encoded[i].means())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let cov_dev = (sources[i].covariance()? - encoded[i].covariance()?).amax();
        let view_dev = mean_dev.max(cov_dev);
        if view_dev.is_nan() || view_dev > tol::MOMENT_PRESERVATION_TOL {
            return Err(Error::WiringFailure {
                view: i,
                deviation: view_dev,
                tolerance: tol::MOMENT_PRESERVATION_TOL,
            });
        }
        max_deviation = max_deviation.max(view_dev);
        per_view_mean_dev.push(mean_dev);
        per_view_cov_dev.push(cov_dev);
    }

    let mut per_pair_cross_dev = Vec::new();
    let mut per_pair_normalized_dev = Vec::new();
    for i in 0..n_views {
        for j in (i + 1)..n_views {
            let cross_dev = (cca::empirical_cross_cov(&sources[i], &sources[j])?
                - cca::empirical_cross_cov(&encoded[i], &encoded[j])?)
            .amax();
            let norm_dev = (cca::empirical_normalized_crosscov(&sources[i], &sources[j])?.matrix()
                - cca::empirical_normalized_crosscov(&encoded[i], &encoded[j])?.matrix())
            .amax();
            let pair_dev = cross_dev.max(norm_dev);
            if pair_dev.is_nan() || pair_dev > tol::MOMENT_PRESERVATION_TOL {
                return Err(Error::WiringFailure {
                    view: i,
                    deviation: pair_dev,
                    tolerance: tol::MOMENT_PRESERVATION_TOL,
                });
            }
            max_deviation = max_deviation.max(pair_dev);
            per_pair_cross_dev.push((i, j, cross_dev));
            per_pair_normalized_dev.push((i, j, norm_dev));
        }
    }

    Ok(InvarianceReport {
        per_view_mean_dev,
        per_view_cov_dev,
        per_pair_cross_dev,
        per_pair_normalized_dev,
        round_trip_max_err,
        max_deviation,
    })
}

/// [`wiring_check`] with the oracle encoders matching the generators.
pub fn invariance_check(
    ensemble: &MixingEnsemble,
    specs: &[InvertibleMapSpec],
    prior_spec: &PriorSpec,
    n: usize,
    stream: SeededStream,
) -> Result<InvarianceReport> {
    wiring_check(ensemble, specs, specs, prior_spec, n, stream)
}
