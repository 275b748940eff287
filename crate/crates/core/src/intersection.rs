//! Shared-subspace intersection filter.
//!
//! For a reference view i, average the projectors onto its pairwise shared
//! subspaces with every other view. The average has eigenvalue 1 exactly on
//! the intersection of those subspaces and at most (N-2)/(N-1) elsewhere
//! for generic configurations, so thresholding the eigenvalues recovers the
//! intersection. Projectors live in the whitened coordinates of view i.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::{self, ViewDataset};
use crate::error::{Error, Result};
use crate::linalg::{self, SubspaceBasis};
use crate::spectrum::MixingEnsemble;
use crate::tol;

/// Eigenvalues of an averaged projector may leave [0, 1] by at most this
/// much before the matrix is treated as numerically faulty.
const EIGENVALUE_SLACK: f64 = 1e-10;

/// Mean of the projectors onto the given subspaces.
pub fn averaged_projector(bases: &[SubspaceBasis]) -> Result<DMatrix<f64>> {
    if bases.is_empty() {
        return Err(Error::InvalidParameter(
            "averaged projector needs at least one subspace".into(),
        ));
    }
    let d = bases[0].ambient_dim();
    let mut sum = DMatrix::zeros(d, d);
    for (k, basis) in bases.iter().enumerate() {
        if basis.ambient_dim() != d {
            return Err(Error::Dimension(format!(
                "subspace {k} has ambient dimension {}, expected {d}",
                basis.ambient_dim()
            )));
        }
        sum += basis.projector();
    }
    Ok(sum / bases.len() as f64)
}

/// An averaged-projector matrix with its eigendecomposition (descending,
/// deterministic signs).
#[derive(Debug, Clone)]
pub struct IntersectionFilter {
    pub view: usize,
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Top eigenspace of an intersection filter at a chosen rank.
#[derive(Debug, Clone)]
pub struct IntersectionResult {
    pub view: usize,
    pub eigenvalues: Vec<f64>,
    pub basis: SubspaceBasis,
    pub rank: usize,
    /// Conservative eigengap `1 - lambda_(rank+1)` with eigenvalues past
    /// the end read as zero.
    pub gap: f64,
    /// Set when the eigengap falls below the reporting floor; the result
    /// is returned anyway, with the bound alongside.
    pub low_confidence: bool,
}

impl IntersectionFilter {
    /// Validate and factor an averaged projector matrix.
    pub fn new(view: usize, matrix: DMatrix<f64>) -> Result<Self> {
        linalg::check_symmetric(&matrix, &format!("intersection filter of view {view}"))?;
        let (eigenvalues, eigenvectors) = linalg::sym_eigen_sorted(&matrix)?;
        let eigenvalues = eigenvalues.as_slice().to_vec();
        for &l in &eigenvalues {
            if !(-EIGENVALUE_SLACK..=1.0 + EIGENVALUE_SLACK).contains(&l) {
                return Err(Error::Numerical(format!(
                    "intersection filter of view {view} has eigenvalue {l} outside [0, 1]"
                )));
            }
        }
        Ok(IntersectionFilter {
            view,
            matrix,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Average the projectors of the given subspaces and factor the result.
    pub fn from_bases(view: usize, bases: &[SubspaceBasis]) -> Result<Self> {
        IntersectionFilter::new(view, averaged_projector(bases)?)
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of eigenvalues at or above the threshold. Requires tau in
    /// (0.5, 1): at or below 0.5 a subspace shared by a single pair
    /// already passes, at 1 rounding noise empties the selection.
    pub fn select_rank(&self, tau: f64) -> Result<usize> {
        if !(tau > 0.5 && tau < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "selection threshold tau = {tau} outside (0.5, 1)"
            )));
        }
        Ok(self.eigenvalues.iter().take_while(|&&l| l >= tau).count())
    }

    /// Eigenvectors of the `rank` largest eigenvalues, with the eigengap
    /// below them. Rank 0 is allowed and yields an empty basis.
    pub fn eigenspace(&self, rank: usize) -> Result<IntersectionResult> {
        if rank > self.ambient_dim() {
            return Err(Error::RankOutOfRange {
                rank,
                dim: self.ambient_dim(),
            });
        }
        let basis = if rank == 0 {
            SubspaceBasis::standard(self.ambient_dim(), &[])?
        } else {
            SubspaceBasis::new(self.eigenvectors.columns(0, rank).into_owned())?
        };
        let next = if rank < self.eigenvalues.len() {
            self.eigenvalues[rank]
        } else {
            0.0
        };
        let gap = 1.0 - next;
        Ok(IntersectionResult {
            view: self.view,
            eigenvalues: self.eigenvalues.clone(),
            basis,
            rank,
            gap,
            low_confidence: gap < tol::LOW_CONFIDENCE_GAMMA,
        })
    }

    /// Top eigenspace at an explicit rank in [1, d].
    pub fn top_eigenspace(&self, rank: usize) -> Result<IntersectionResult> {
        if rank == 0 {
            return Err(Error::RankOutOfRange {
                rank,
                dim: self.ambient_dim(),
            });
        }
        self.eigenspace(rank)
    }

    /// Threshold-selected eigenspace: `top_eigenspace(select_rank(tau))`,
    /// allowing an empty selection.
    pub fn select(&self, tau: f64) -> Result<IntersectionResult> {
        let rank = self.select_rank(tau)?;
        self.eigenspace(rank)
    }
}

/// Shared-subspace ranks for every unordered view pair.
///
/// Serialized as the bare N-by-N matrix, so deserialization runs the same
/// validation as [`PairRanks::from_matrix`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct PairRanks {
    matrix: Vec<Vec<usize>>,
}

impl TryFrom<Vec<Vec<usize>>> for PairRanks {
    type Error = Error;

    fn try_from(matrix: Vec<Vec<usize>>) -> Result<Self> {
        PairRanks::from_matrix(matrix)
    }
}

impl From<PairRanks> for Vec<Vec<usize>> {
    fn from(ranks: PairRanks) -> Self {
        ranks.matrix
    }
}

impl PairRanks {
    /// Same rank for every pair.
    pub fn uniform(num_views: usize, rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidParameter("pair rank must be >= 1".into()));
        }
        let mut matrix = vec![vec![rank; num_views]; num_views];
        for (i, row) in matrix.iter_mut().enumerate() {
            row[i] = 0;
        }
        PairRanks::from_matrix(matrix)
    }

    /// Full N-by-N symmetric matrix; the diagonal is ignored (write 0).
    pub fn from_matrix(matrix: Vec<Vec<usize>>) -> Result<Self> {
        let n = matrix.len();
        if n < 2 {
            return Err(Error::InvalidParameter(
                "pair ranks need at least 2 views".into(),
            ));
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "pair rank row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            for (j, &r) in row.iter().enumerate() {
                if i != j && r == 0 {
                    return Err(Error::InvalidParameter(format!(
                        "pair rank for views ({i}, {j}) must be >= 1"
                    )));
                }
                if matrix[j].len() == n && matrix[j][i] != r && i != j {
                    return Err(Error::InvalidParameter(format!(
                        "pair ranks asymmetric at ({i}, {j}): {r} vs {}",
                        matrix[j][i]
                    )));
                }
            }
        }
        Ok(PairRanks { matrix })
    }

    pub fn num_views(&self) -> usize {
        self.matrix.len()
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.matrix[i][j]
    }
}

/// For every view, estimate the pairwise shared subspaces with all other
/// views, average their projectors, and return the top `view_ranks[i]`
/// eigenspace. Pairwise factorizations run in parallel; results are
/// deterministic regardless of thread count.
pub fn multiview_recover(
    datasets: &[ViewDataset],
    pair_ranks: &PairRanks,
    view_ranks: &[usize],
) -> Result<Vec<IntersectionResult>> {
    let n_views = datasets.len();
    if n_views < 2 {
        return Err(Error::InvalidParameter(format!(
            "multi-view recovery needs at least 2 views, got {n_views}"
        )));
    }
    if pair_ranks.num_views() != n_views || view_ranks.len() != n_views {
        return Err(Error::Config(format!(
            "rank tables sized for {} / {} views, data has {n_views}",
            pair_ranks.num_views(),
            view_ranks.len()
        )));
    }
    let mut pairs = Vec::new();
    for i in 0..n_views {
        for j in (i + 1)..n_views {
            pairs.push((i, j));
        }
    }
    let factored: Vec<Result<(usize, usize, SubspaceBasis, SubspaceBasis)>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let rank = pair_ranks.get(i, j);
            let cca = cca::empirical_normalized_crosscov(&datasets[i], &datasets[j])?;
            Ok((i, j, cca.left_basis(rank)?, cca.right_basis(rank)?))
        })
        .collect();
    let mut per_view: Vec<Vec<SubspaceBasis>> = vec![Vec::new(); n_views];
    for item in factored {
        let (i, j, left, right) = item?;
        per_view[i].push(left);
        per_view[j].push(right);
    }
    let mut results = Vec::with_capacity(n_views);
    for (i, bases) in per_view.iter().enumerate() {
        let filter = IntersectionFilter::from_bases(i, bases)?;
        results.push(filter.top_eigenspace(view_ranks[i])?);
    }
    Ok(results)
}

/// Population intersection filter for one view, over all other views.
/// Pairwise subspace ranks come from the population singular values.
pub fn population_filter(ensemble: &MixingEnsemble, view: usize) -> Result<IntersectionFilter> {
    let mut bases = Vec::new();
    for j in 0..ensemble.num_views() {
        if j == view {
            continue;
        }
        let cross = ensemble.population_normalized_crosscov(view, j)?;
        let rank = cross.rank;
        bases.push(if rank == 0 {
            SubspaceBasis::standard(ensemble.view_dim(view), &[])?
        } else {
            cross.left_basis(rank)?
        });
    }
    IntersectionFilter::from_bases(view, &bases)
}

/// True intersection of the population pairwise shared subspaces: the
/// eigenspace of the population filter with eigenvalue 1 up to rounding.
pub fn population_intersection(
    ensemble: &MixingEnsemble,
    view: usize,
) -> Result<IntersectionResult> {
    let filter = population_filter(ensemble, view)?;
    let rank = filter
        .eigenvalues
        .iter()
        .take_while(|&&l| l >= 1.0 - 1e-9)
        .count();
    filter.eigenspace(rank)
}

/// Empirical-vs-population filter comparison at a known intersection
/// dimension, with the eigenspace perturbation bound.
#[derive(Debug, Clone)]
pub struct FilterComparison {
    /// Operator norm of the filter matrix difference.
    pub matrix_deviation: f64,
    /// Population eigengap `1 - lambda_(dim+1)`.
    pub gamma: f64,
    /// `matrix_deviation / gamma`.
    pub davis_kahan_bound: f64,
    /// Largest principal angle sine between estimated and true
    /// intersection.
    pub sin_theta: f64,
    pub bound_holds: bool,
}

pub fn compare_filters(
    population: &IntersectionFilter,
    empirical: &IntersectionFilter,
    dimension: usize,
) -> Result<FilterComparison> {
    if dimension == 0 || dimension > population.eigenvalues.len() {
        return Err(Error::RankOutOfRange {
            rank: dimension,
            dim: population.eigenvalues.len(),
        });
    }
    let matrix_deviation = linalg::operator_norm(&(&empirical.matrix - &population.matrix));
    let pop = population.top_eigenspace(dimension)?;
    let emp = empirical.top_eigenspace(dimension)?;
    let gamma = pop.gap;
    let davis_kahan_bound = cca::davis_kahan_bound(matrix_deviation, gamma);
    let sin_theta = linalg::sin_theta_norm(&pop.basis, &emp.basis)?;
    Ok(FilterComparison {
        matrix_deviation,
        gamma,
        davis_kahan_bound,
        sin_theta,
        bound_holds: sin_theta <= davis_kahan_bound,
    })
}

/// Three-view block model with a planted one-dimensional intersection.
///
/// View 0 observes all three shared coordinates, view 1 the first two,
/// view 2 the first and third, each scaled by `kappa`. In view 0 the
/// filter eigenvalues are exactly (1, 1/2, 1/2) and the intersection is
/// the first whitened coordinate.
pub fn planted_block_ensemble(kappa: f64) -> Result<MixingEnsemble> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "block scale kappa = {kappa} must be positive"
        )));
    }
    let a0 = DMatrix::identity(3, 3) * kappa;
    let mut a1 = DMatrix::zeros(2, 3);
    a1[(0, 0)] = kappa;
    a1[(1, 1)] = kappa;
    let mut a2 = DMatrix::zeros(2, 3);
    a2[(0, 0)] = kappa;
    a2[(1, 2)] = kappa;
    MixingEnsemble::from_mixings(vec![a0, a1, a2])
}

/// Pairwise shared-subspace ranks of the planted block model.
pub fn planted_block_pair_ranks() -> PairRanks {
    PairRanks::from_matrix(vec![vec![0, 2, 2], vec![2, 0, 1], vec![2, 1, 0]])
        .expect("static rank table")
}
