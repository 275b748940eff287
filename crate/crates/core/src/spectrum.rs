//! Construction of 3-view mixing ensembles whose population normalized
//! cross-covariances have exactly prescribed canonical spectra.
//!
//! For targets t_ij per pair, the per-view gains solve
//! `g_i g_j = t_ij` mode by mode, giving
//! `g_1 = sqrt(t12 t13 / t23)` (and cyclically). Per-view singular values
//! are `sigma = g / sqrt(1 - g^2)`, and `A_i = U_i diag(sigma_i) P^T` with
//! Haar-orthogonal `U_i` and a shared right factor `P`. The population
//! normalized cross-covariance then equals `U_i diag(t_ij) U_j^T`, so its
//! spectrum matches the targets exactly up to round-off.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, OrderedSvd, SubspaceBasis};
use crate::rng::SeededStream;
use crate::tol;

/// Prescribed canonical spectra for the three view pairs.
///
/// Serialized form: `{"r": int, "t12": [..], "t13": [..], "t23": [..],
/// "dS": [d1, d2, d3]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpectra {
    pub r: usize,
    pub t12: Vec<f64>,
    pub t13: Vec<f64>,
    pub t23: Vec<f64>,
    #[serde(rename = "dS")]
    pub d_s: [usize; 3],
}

impl TargetSpectra {
    /// Equal spectra `t` for all three pairs with per-view source dimension
    /// `d_s` (a common experiment shape).
    pub fn equal_pairs(t: &[f64], d_s: usize) -> Self {
        TargetSpectra {
            r: t.len(),
            t12: t.to_vec(),
            t13: t.to_vec(),
            t23: t.to_vec(),
            d_s: [d_s, d_s, d_s],
        }
    }

    /// Validate shapes and entry ranges. Entries must lie strictly in
    /// (0, 1) and be nonincreasing; zeros are rejected because the gain
    /// formula divides by them (embed a lower-r spectrum in a larger d_S to
    /// study rank deficiency instead).
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidParameter("target rank r must be >= 1".into()));
        }
        for (name, t) in [("t12", &self.t12), ("t13", &self.t13), ("t23", &self.t23)] {
            if t.len() != self.r {
                return Err(Error::Dimension(format!(
                    "{name} has length {}, expected r = {}",
                    t.len(),
                    self.r
                )));
            }
            for (k, &v) in t.iter().enumerate() {
                if !(v.is_finite() && 0.0 < v && v < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "{name}[{k}] = {v} outside the open interval (0,1)"
                    )));
                }
                if k > 0 && v > t[k - 1] {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must be nonincreasing, violated at mode {k}"
                    )));
                }
            }
        }
        if self.d_s.contains(&0) {
            return Err(Error::InvalidParameter("view dimensions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-view, per-mode gains solving `g_i g_j = t_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub per_view: [Vec<f64>; 3],
}

/// Solve the pairwise-product system for per-view gains.
///
/// Infeasible targets (any gain outside (0, 1)) produce an error naming the
/// offending view and mode; targets are never projected onto the feasible
/// set.
pub fn solve_per_view_gains(targets: &TargetSpectra) -> Result<Gains> {
    targets.validate()?;
    let mut per_view = [Vec::new(), Vec::new(), Vec::new()];
    for k in 0..targets.r {
        let (t12, t13, t23) = (targets.t12[k], targets.t13[k], targets.t23[k]);
        let squares = [t12 * t13 / t23, t12 * t23 / t13, t13 * t23 / t12];
        for (i, &g_sq) in squares.iter().enumerate() {
            if !(g_sq.is_finite() && g_sq > 0.0) {
                return Err(Error::Infeasible(format!(
                    "gain for view {} at mode {k} has radicand {g_sq}",
                    i + 1
                )));
            }
            let g = g_sq.sqrt();
            if g >= 1.0 {
                return Err(Error::Infeasible(format!(
                    "gain for view {} at mode {k} is {g} >= 1",
                    i + 1
                )));
            }
            per_view[i].push(g);
        }
    }
    Ok(Gains { per_view })
}

/// Stored factors of a spectra-constructed ensemble.
#[derive(Debug, Clone)]
pub struct SpectralFactors {
    /// Shared right orthogonal factor P (r x r).
    pub shared_right: DMatrix<f64>,
    /// Per-view orthogonal factors U_i (d_Si x d_Si).
    pub view_orthogonal: Vec<DMatrix<f64>>,
    /// Per-view singular values sigma_i (length r).
    pub singular_values: Vec<DVector<f64>>,
}

/// A fixed multi-view linear mixing model `s_i = A_i c + eps_i` together
/// with its population whiteners `W_i = (A_i A_i^T + I)^(-1/2)`.
#[derive(Debug, Clone)]
pub struct MixingEnsemble {
    mixings: Vec<DMatrix<f64>>,
    whiteners: Vec<DMatrix<f64>>,
    factors: Option<SpectralFactors>,
}

/// Population normalized cross-covariance of one view pair with its SVD.
#[derive(Debug, Clone)]
pub struct PopulationCrossCov {
    pub matrix: DMatrix<f64>,
    pub svd: OrderedSvd,
    /// Count of singular values above the rank tolerance.
    pub rank: usize,
}

impl PopulationCrossCov {
    pub fn singular_values(&self) -> &DVector<f64> {
        &self.svd.singular_values
    }

    /// Leading left singular subspace at the given rank.
    pub fn left_basis(&self, rank: usize) -> Result<SubspaceBasis> {
        self.svd.left_basis(rank)
    }

    /// Leading right singular subspace at the given rank.
    pub fn right_basis(&self, rank: usize) -> Result<SubspaceBasis> {
        self.svd.right_basis(rank)
    }
}

impl MixingEnsemble {
    /// Build an ensemble directly from mixing matrices (general N; used for
    /// planted block models and degenerate cases).
    pub fn from_mixings(mixings: Vec<DMatrix<f64>>) -> Result<Self> {
        if mixings.len() < 2 {
            return Err(Error::InvalidParameter(
                "an ensemble needs at least 2 views".into(),
            ));
        }
        let d_c = mixings[0].ncols();
        for (i, a) in mixings.iter().enumerate() {
            if a.ncols() != d_c {
                return Err(Error::Dimension(format!(
                    "mixing {i} has {} latent columns, expected {d_c}",
                    a.ncols()
                )));
            }
            if a.nrows() == 0 || d_c == 0 {
                return Err(Error::Dimension(format!("mixing {i} is empty")));
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("mixing matrix {i}")));
            }
        }
        let whiteners = mixings
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let cov = a * a.transpose() + DMatrix::identity(a.nrows(), a.nrows());
                linalg::sym_inv_sqrt(
                    &cov,
                    tol::POPULATION_EIG_FLOOR,
                    &format!("population covariance of view {i}"),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MixingEnsemble {
            mixings,
            whiteners,
            factors: None,
        })
    }

    pub fn num_views(&self) -> usize {
        self.mixings.len()
    }

    /// Shared latent dimension d_C.
    pub fn latent_dim(&self) -> usize {
        self.mixings[0].ncols()
    }

    pub fn view_dim(&self, i: usize) -> usize {
        self.mixings[i].nrows()
    }

    pub fn mixing(&self, i: usize) -> &DMatrix<f64> {
        &self.mixings[i]
    }

    pub fn whitener(&self, i: usize) -> &DMatrix<f64> {
        &self.whiteners[i]
    }

    pub fn factors(&self) -> Option<&SpectralFactors> {
        self.factors.as_ref()
    }

    /// Population normalized cross-covariance
    /// `R_ij = W_i A_i A_j^T W_j^T` with its ordered SVD and numerical
    /// rank.
    pub fn population_normalized_crosscov(&self, i: usize, j: usize) -> Result<PopulationCrossCov> {
        if i >= self.num_views() || j >= self.num_views() || i == j {
            return Err(Error::Dimension(format!(
                "invalid view pair ({i}, {j}) for {} views",
                self.num_views()
            )));
        }
        let cross = self.mixing(i) * self.mixing(j).transpose();
        let matrix = self.whitener(i) * cross * self.whitener(j).transpose();
        let svd = linalg::svd_ordered(&matrix)?;
        let largest = svd.singular_values.get(0).copied().unwrap_or(0.0);
        let threshold = tol::RANK_TOL_REL * largest.max(1.0);
        let rank = svd.singular_values.iter().filter(|&&s| s >= threshold).count();
        Ok(PopulationCrossCov { matrix, svd, rank })
    }

    /// Orthonormal basis of the column space of `A_i` (the view's signal
    /// directions at the source level).
    pub fn signal_basis(&self, i: usize) -> Result<SubspaceBasis> {
        let svd = linalg::svd_ordered(self.mixing(i))?;
        let largest = svd.singular_values.get(0).copied().unwrap_or(0.0);
        let threshold = tol::RANK_TOL_REL * largest.max(1.0);
        let rank = svd.singular_values.iter().filter(|&&s| s >= threshold).count();
        svd.left_basis(rank)
    }

    /// Verify stored invariants; used by tests and the construct-spectrum
    /// command.
    pub fn validate(&self) -> Result<()> {
        for (i, (a, w)) in self.mixings.iter().zip(&self.whiteners).enumerate() {
            let cov = a * a.transpose() + DMatrix::identity(a.nrows(), a.nrows());
            let defect = (w * cov * w.transpose() - DMatrix::identity(a.nrows(), a.nrows())).amax();
            if defect > tol::WHITENER_IDENTITY_TOL {
                return Err(Error::InvalidParameter(format!(
                    "whitener {i} defect {defect:.3e}"
                )));
            }
        }
        if let Some(f) = &self.factors {
            let r = f.shared_right.nrows();
            let p_defect =
                (f.shared_right.transpose() * &f.shared_right - DMatrix::identity(r, r)).amax();
            if p_defect > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "shared factor not orthogonal: {p_defect:.3e}"
                )));
            }
            for (i, u) in f.view_orthogonal.iter().enumerate() {
                let d = u.nrows();
                let defect = (u.transpose() * u - DMatrix::identity(d, d)).amax();
                if defect > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "view factor {i} not orthogonal: {defect:.3e}"
                    )));
                }
                let sigma = &f.singular_values[i];
                let mut diag = DMatrix::zeros(d, r);
                for k in 0..r {
                    diag[(k, k)] = sigma[k];
                }
                let rebuilt = u * diag * f.shared_right.transpose();
                let err = (&rebuilt - &self.mixings[i]).norm();
                if err > tol::RECONSTRUCTION_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "mixing {i} reconstruction defect {err:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Build the 3-view ensemble realizing the given gains.
///
/// The latent dimension is the shared rank r; rank-deficient studies embed
/// a lower-r spectrum in larger per-view dimensions `d_s`.
pub fn build_mixing(gains: &Gains, d_s: [usize; 3], stream: SeededStream) -> Result<MixingEnsemble> {
    let r = gains.per_view[0].len();
    if gains.per_view.iter().any(|g| g.len() != r) || r == 0 {
        return Err(Error::Dimension("gain vectors must share a positive length".into()));
    }
    for (i, &d) in d_s.iter().enumerate() {
        if d < r {
            return Err(Error::Dimension(format!(
                "view {} has d_S = {d} < r = {r}",
                i + 1
            )));
        }
    }
    let p = linalg::random_orthogonal(r, &mut stream.derive(0).rng());
    let mut mixings = Vec::with_capacity(3);
    let mut view_orthogonal = Vec::with_capacity(3);
    let mut singular_values = Vec::with_capacity(3);
    for (i, &d) in d_s.iter().enumerate() {
        let u = linalg::random_orthogonal(d, &mut stream.derive(i as u64 + 1).rng());
        let mut sigma = DVector::zeros(r);
        for k in 0..r {
            let g = gains.per_view[i][k];
            if !(0.0 < g && g < 1.0) {
                return Err(Error::Infeasible(format!(
                    "gain for view {} at mode {k} is {g}, outside (0,1)",
                    i + 1
                )));
            }
            sigma[k] = g / (1.0 - g * g).sqrt();
        }
        let mut diag = DMatrix::zeros(d, r);
        for k in 0..r {
            diag[(k, k)] = sigma[k];
        }
        mixings.push(&u * diag * p.transpose());
        view_orthogonal.push(u);
        singular_values.push(sigma);
    }
    let mut ensemble = MixingEnsemble::from_mixings(mixings)?;
    ensemble.factors = Some(SpectralFactors {
        shared_right: p,
        view_orthogonal,
        singular_values,
    });
    Ok(ensemble)
}

/// Convenience: solve gains and build the ensemble in one step.
pub fn build_from_targets(targets: &TargetSpectra, stream: SeededStream) -> Result<MixingEnsemble> {
    let gains = solve_per_view_gains(targets)?;
    build_mixing(&gains, targets.d_s, stream)
}

/// The unordered view pairs of a 3-view ensemble, in emission order.
pub const VIEW_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
