//! Empirical canonical correlation analysis between two views.
//!
//! Sample moments use the 1/n convention throughout. Each view is centered
//! and whitened with the inverse square root of its own sample covariance;
//! the whitened cross-covariance's singular values are the empirical
//! canonical correlations and its singular subspaces are the estimated
//! signal subspaces. Whitening fails loudly when a sample covariance
//! eigenvalue reaches the floor; there is no regularization fallback.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, OrderedSvd, SubspaceBasis};
use crate::tol;

/// Empirical canonical correlations may exceed 1 by at most this much
/// before the run is treated as numerically faulty.
const CORRELATION_SLACK: f64 = 1e-8;

/// An n-by-d sample matrix for one view (rows are observations).
#[derive(Debug, Clone)]
pub struct ViewDataset {
    data: DMatrix<f64>,
    view_index: usize,
}

impl ViewDataset {
    pub fn new(data: DMatrix<f64>, view_index: usize) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "view {view_index}: empty sample matrix ({}x{})",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("samples of view {view_index}")));
        }
        Ok(ViewDataset { data, view_index })
    }

    pub fn num_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view_index(&self) -> usize {
        self.view_index
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Column means.
    pub fn means(&self) -> Vec<f64> {
        let n = self.num_samples() as f64;
        (0..self.dim()).map(|j| self.data.column(j).sum() / n).collect()
    }

    /// Copy with column means removed.
    pub fn centered(&self) -> DMatrix<f64> {
        let means = self.means();
        let mut out = self.data.clone();
        for j in 0..out.ncols() {
            let m = means[j];
            for i in 0..out.nrows() {
                out[(i, j)] -= m;
            }
        }
        out
    }

    /// Sample covariance with the 1/n convention. Centered moments of a
    /// single sample are vacuous, hence the n >= 2 requirement.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.num_samples() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "view {}: covariance needs at least 2 samples, got {}",
                self.view_index,
                self.num_samples()
            )));
        }
        let centered = self.centered();
        let n = self.num_samples() as f64;
        Ok(centered.transpose() * &centered / n)
    }

    /// Apply the same map to every entry (used to push samples through a
    /// coordinatewise observation map).
    pub fn map_entries(&self, f: impl Fn(f64) -> f64) -> Result<ViewDataset> {
        ViewDataset::new(self.data.map(f), self.view_index)
    }
}

/// Cross-covariance of two centered views, 1/n convention.
pub fn empirical_cross_cov(x: &ViewDataset, y: &ViewDataset) -> Result<DMatrix<f64>> {
    if x.num_samples() != y.num_samples() {
        return Err(Error::Dimension(format!(
            "views {} and {} have {} and {} samples",
            x.view_index(),
            y.view_index(),
            x.num_samples(),
            y.num_samples()
        )));
    }
    if x.num_samples() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "cross-covariance of views {} and {} needs at least 2 samples, got {}",
            x.view_index(),
            y.view_index(),
            x.num_samples()
        )));
    }
    let n = x.num_samples() as f64;
    Ok(x.centered().transpose() * y.centered() / n)
}

/// Inverse square root of the view's sample covariance.
///
/// Requires at least d + 1 samples so the centered covariance can have
/// full rank at all; an eigenvalue at or below the floor aborts with the
/// offending view named.
pub fn empirical_whitener(view: &ViewDataset) -> Result<DMatrix<f64>> {
    if view.num_samples() < view.dim() + 1 {
        return Err(Error::InsufficientSamples(format!(
            "view {}: whitening d = {} coordinates needs at least {} samples, got {}",
            view.view_index(),
            view.dim(),
            view.dim() + 1,
            view.num_samples()
        )));
    }
    let cov = view.covariance()?;
    match linalg::sym_inv_sqrt(&cov, tol::WHITENING_FLOOR, "sample covariance") {
        Ok(w) => Ok(w),
        Err(Error::NearSingular { eigenvalue, floor, .. }) => Err(Error::CovarianceCollapse {
            view: view.view_index(),
            eigenvalue,
            floor,
        }),
        Err(e) => Err(e),
    }
}

/// Whitened empirical cross-covariance of a view pair together with its
/// singular structure.
#[derive(Debug, Clone)]
pub struct PairwiseCcaResult {
    matrix: DMatrix<f64>,
    svd: OrderedSvd,
    correlations: Vec<f64>,
    whitener_x: DMatrix<f64>,
    whitener_y: DMatrix<f64>,
}

impl PairwiseCcaResult {
    /// The whitened cross-covariance matrix itself.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Canonical correlations, descending, clamped into [0, 1] after the
    /// out-of-range check.
    pub fn correlations(&self) -> &[f64] {
        &self.correlations
    }

    pub fn svd(&self) -> &OrderedSvd {
        &self.svd
    }

    pub fn whitener_x(&self) -> &DMatrix<f64> {
        &self.whitener_x
    }

    pub fn whitener_y(&self) -> &DMatrix<f64> {
        &self.whitener_y
    }

    /// Sum of all canonical correlations (the per-pair objective value).
    pub fn nuclear_norm(&self) -> f64 {
        self.correlations.iter().sum()
    }

    /// Top-rank left singular subspace (whitened x coordinates).
    pub fn left_basis(&self, rank: usize) -> Result<SubspaceBasis> {
        self.svd.left_basis(rank)
    }

    /// Top-rank right singular subspace (whitened y coordinates).
    pub fn right_basis(&self, rank: usize) -> Result<SubspaceBasis> {
        self.svd.right_basis(rank)
    }

    /// sigma_rank - sigma_(rank+1), with singular values past the end
    /// taken as zero.
    pub fn singular_gap(&self, rank: usize) -> Result<f64> {
        singular_gap(&self.correlations, rank)
    }

    /// Leading singular subspaces at a requested rank plus the spectral
    /// gap below them.
    pub fn pairwise_subspaces(&self, rank: usize) -> Result<(SubspaceBasis, SubspaceBasis, f64)> {
        Ok((
            self.left_basis(rank)?,
            self.right_basis(rank)?,
            self.singular_gap(rank)?,
        ))
    }
}

/// Center, whiten, and factor a pair of views.
pub fn empirical_normalized_crosscov(
    x: &ViewDataset,
    y: &ViewDataset,
) -> Result<PairwiseCcaResult> {
    let whitener_x = empirical_whitener(x)?;
    let whitener_y = empirical_whitener(y)?;
    let cross = empirical_cross_cov(x, y)?;
    let matrix = &whitener_x * cross * whitener_y.transpose();
    let svd = linalg::svd_ordered(&matrix)?;
    let mut correlations = Vec::with_capacity(svd.singular_values.len());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if !s.is_finite() || s > 1.0 + CORRELATION_SLACK {
            return Err(Error::Numerical(format!(
                "canonical correlation {k} of views ({}, {}) is {s}, outside [0, 1 + {CORRELATION_SLACK:.0e}]",
                x.view_index(),
                y.view_index()
            )));
        }
        correlations.push(s.min(1.0));
    }
    Ok(PairwiseCcaResult {
        matrix,
        svd,
        correlations,
        whitener_x,
        whitener_y,
    })
}

/// Sum over all view pairs of the nuclear norm of the whitened empirical
/// cross-covariance.
pub fn gcca_objective(datasets: &[ViewDataset]) -> Result<f64> {
    if datasets.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "objective needs at least 2 views, got {}",
            datasets.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..datasets.len() {
        for j in (i + 1)..datasets.len() {
            total += empirical_normalized_crosscov(&datasets[i], &datasets[j])?.nuclear_norm();
        }
    }
    Ok(total)
}

/// sigma_rank - sigma_(rank+1) for a descending value list, reading values
/// past the end as zero. `rank` must be in [1, len].
pub fn singular_gap(values: &[f64], rank: usize) -> Result<f64> {
    if rank == 0 || rank > values.len() {
        return Err(Error::RankOutOfRange {
            rank,
            dim: values.len(),
        });
    }
    let next = if rank < values.len() { values[rank] } else { 0.0 };
    Ok(values[rank - 1] - next)
}

/// Singular subspace perturbation bound: `2 ||E|| / gap`, infinite when
/// the gap closes.
pub fn wedin_sin_theta_bound(residual_norm: f64, gap: f64) -> f64 {
    if gap <= 0.0 {
        f64::INFINITY
    } else {
        2.0 * residual_norm / gap
    }
}

/// Symmetric eigenspace perturbation bound: `||E|| / gap`, infinite when
/// the gap closes.
pub fn davis_kahan_bound(perturbation_norm: f64, gap: f64) -> f64 {
    if gap <= 0.0 {
        f64::INFINITY
    } else {
        perturbation_norm / gap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{self, PriorSpec};
    use crate::rng::SeededStream;
    use crate::spectrum::MixingEnsemble;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn walsh8() -> [Vec<f64>; 4] {
        let h1 = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let h2 = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let h3 = vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        let h4: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| a * b).collect();
        [h1, h2, h3, h4]
    }

    fn columns_to_dataset(cols: &[Vec<f64>], view: usize) -> ViewDataset {
        let n = cols[0].len();
        let mut m = DMatrix::zeros(n, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        ViewDataset::new(m, view).unwrap()
    }

    /// Two paired views with exact sample canonical correlations
    /// (0.9, 0.5), built from mutually orthogonal centered columns.
    fn walsh_pair() -> (ViewDataset, ViewDataset) {
        let [h1, h2, h3, h4] = walsh8();
        let x = columns_to_dataset(&[h1.clone(), h2.clone()], 0);
        let mix = |s: &[f64], noise: &[f64], t: f64| -> Vec<f64> {
            let w = (1.0 - t * t).sqrt();
            s.iter().zip(noise).map(|(a, b)| t * a + w * b).collect()
        };
        let y = columns_to_dataset(&[mix(&h1, &h3, 0.9), mix(&h2, &h4, 0.5)], 1);
        (x, y)
    }

    #[test]
    fn covariance_uses_one_over_n() {
        let d = ViewDataset::new(dmatrix![0.0; 2.0], 0).unwrap();
        assert_eq!(d.covariance().unwrap()[(0, 0)], 1.0);
        let other = ViewDataset::new(dmatrix![0.0; 2.0], 1).unwrap();
        assert_eq!(empirical_cross_cov(&d, &other).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn single_sample_moments_rejected() {
        let d = ViewDataset::new(dmatrix![1.0, 2.0], 0).unwrap();
        assert!(matches!(
            d.covariance(),
            Err(Error::InsufficientSamples(_))
        ));
        assert!(matches!(
            empirical_cross_cov(&d, &d),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn centering_removes_means() {
        let d = ViewDataset::new(dmatrix![1.0, 10.0; 3.0, 14.0], 0).unwrap();
        assert_eq!(d.means(), vec![2.0, 12.0]);
        let c = d.centered();
        assert_eq!(c.column(0).sum(), 0.0);
        assert_eq!(c.column(1).sum(), 0.0);
    }

    #[test]
    fn isotropic_covariance_concentrates() {
        let ensemble = MixingEnsemble::from_mixings(vec![
            DMatrix::zeros(5, 1),
            DMatrix::zeros(5, 1),
        ])
        .unwrap();
        let data = prior::sample_sources(
            &ensemble,
            &PriorSpec::Gaussian,
            100_000,
            SeededStream::new(21, 0),
        )
        .unwrap();
        let dev = &data[0].covariance().unwrap() - DMatrix::identity(5, 5);
        assert!(linalg::operator_norm(&dev) < 0.05);
    }

    #[test]
    fn orthogonal_design_recovers_planted_correlations() {
        let (x, y) = walsh_pair();
        let cca = empirical_normalized_crosscov(&x, &y).unwrap();
        assert_abs_diff_eq!(cca.correlations()[0], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(cca.correlations()[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cca.singular_gap(1).unwrap(), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(cca.singular_gap(2).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cca.nuclear_norm(), 1.4, epsilon = 1e-12);
        let (left, right, gap) = cca.pairwise_subspaces(2).unwrap();
        assert_eq!(left.rank(), 2);
        assert_eq!(right.rank(), 2);
        assert_abs_diff_eq!(gap, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn identical_views_have_unit_correlations() {
        let m =
            prior::sample_standardized(&PriorSpec::Gaussian, 60, 5, SeededStream::new(9, 0))
                .unwrap();
        let x = ViewDataset::new(m.clone(), 0).unwrap();
        let y = ViewDataset::new(m, 1).unwrap();
        let cca = empirical_normalized_crosscov(&x, &y).unwrap();
        for &c in cca.correlations() {
            assert_abs_diff_eq!(c, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn objective_counts_pairs_of_identical_views() {
        let m =
            prior::sample_standardized(&PriorSpec::Gaussian, 200, 5, SeededStream::new(10, 0))
                .unwrap();
        let datasets: Vec<ViewDataset> = (0..3)
            .map(|v| ViewDataset::new(m.clone(), v).unwrap())
            .collect();
        let j = gcca_objective(&datasets).unwrap();
        assert_abs_diff_eq!(j, 15.0, epsilon = 1e-6);
    }

    #[test]
    fn objective_vanishes_for_independent_views() {
        let rng_stream = SeededStream::new(33, 0);
        let a = prior::sample_standardized(&PriorSpec::Gaussian, 10_000, 5, rng_stream.derive(1))
            .unwrap();
        let b = prior::sample_standardized(&PriorSpec::Gaussian, 10_000, 5, rng_stream.derive(2))
            .unwrap();
        let x = ViewDataset::new(a, 0).unwrap();
        let y = ViewDataset::new(b, 1).unwrap();
        let j = gcca_objective(&[x, y]).unwrap();
        assert!(j < 0.5, "objective for independent views was {j}");
        assert!(gcca_objective(&[]).is_err());
    }

    #[test]
    fn objective_is_orthogonally_invariant() {
        let (x, y) = walsh_pair();
        let before = gcca_objective(&[x.clone(), y.clone()]).unwrap();
        let q = linalg::random_orthogonal(2, &mut SeededStream::new(5, 0).rng());
        let rotated = ViewDataset::new(x.data() * &q, 0).unwrap();
        let after = gcca_objective(&[rotated, y]).unwrap();
        assert_abs_diff_eq!(before, after, epsilon = 1e-10);
    }

    #[test]
    fn correlations_are_affine_invariant() {
        let stream = SeededStream::new(7, 0);
        let ensemble =
            MixingEnsemble::from_mixings(vec![DMatrix::identity(3, 2) * 1.5; 3]).unwrap();
        let data = prior::sample_sources(&ensemble, &PriorSpec::Gaussian, 400, stream).unwrap();
        let base = empirical_normalized_crosscov(&data[0], &data[1]).unwrap();

        let transform = dmatrix![1.0, 2.0, 0.0; 0.0, 3.0, 1.0; 0.5, 0.0, 2.0];
        let shifted = data[0].data() * transform.transpose()
            + DMatrix::from_fn(400, 3, |_, j| [5.0, -2.0, 11.0][j]);
        let moved = ViewDataset::new(shifted, 0).unwrap();
        let after = empirical_normalized_crosscov(&moved, &data[1]).unwrap();
        for (a, b) in base.correlations().iter().zip(after.correlations()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn sampled_pair_approaches_population_correlation() {
        let ensemble = MixingEnsemble::from_mixings(vec![
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 2.0),
        ])
        .unwrap();
        let data =
            prior::sample_sources(&ensemble, &PriorSpec::Gaussian, 50_000, SeededStream::new(11, 0))
                .unwrap();
        let cca = empirical_normalized_crosscov(&data[0], &data[1]).unwrap();
        assert_abs_diff_eq!(cca.correlations()[0], 0.8, epsilon = 0.02);
    }

    #[test]
    fn too_few_samples_rejected() {
        let d = ViewDataset::new(DMatrix::identity(3, 3), 2).unwrap();
        match empirical_whitener(&d) {
            Err(Error::InsufficientSamples(msg)) => assert!(msg.contains("view 2")),
            other => panic!("expected InsufficientSamples, got {other:?}"),
        }
    }

    #[test]
    fn constant_coordinate_collapses_loudly() {
        let mut m = DMatrix::from_fn(40, 2, |i, _| (i as f64 * 0.37).sin());
        for i in 0..40 {
            m[(i, 1)] = 4.0;
        }
        let d = ViewDataset::new(m, 1).unwrap();
        match empirical_whitener(&d) {
            Err(Error::CovarianceCollapse { view, floor, .. }) => {
                assert_eq!(view, 1);
                assert_eq!(floor, tol::WHITENING_FLOOR);
            }
            other => panic!("expected CovarianceCollapse, got {other:?}"),
        }
    }

    #[test]
    fn gap_conventions_pad_with_zero() {
        let values = [0.9, 0.5, 0.1];
        assert_abs_diff_eq!(singular_gap(&values, 1).unwrap(), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(singular_gap(&values, 3).unwrap(), 0.1, epsilon = 1e-15);
        assert!(matches!(
            singular_gap(&values, 4),
            Err(Error::RankOutOfRange { .. })
        ));
        assert!(matches!(
            singular_gap(&values, 0),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn perturbation_bounds_handle_closed_gaps() {
        assert_abs_diff_eq!(wedin_sin_theta_bound(0.05, 0.4), 0.25, epsilon = 1e-15);
        assert!(wedin_sin_theta_bound(0.05, 0.0).is_infinite());
        assert_abs_diff_eq!(davis_kahan_bound(0.1, 0.5), 0.2, epsilon = 1e-15);
        assert!(davis_kahan_bound(0.1, -0.2).is_infinite());
    }

    #[test]
    fn map_entries_applies_pointwise() {
        let d = ViewDataset::new(dmatrix![1.0, 2.0; 3.0, 4.0], 0).unwrap();
        let doubled = d.map_entries(|v| 2.0 * v).unwrap();
        assert_eq!(doubled.data()[(1, 1)], 8.0);
        assert!(d.map_entries(|_| f64::NAN).is_err());
    }
}
