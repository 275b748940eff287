//! Deterministic linear-algebra kernels shared by the whole crate:
//! symmetric inverse square roots, ordered SVD with a fixed sign
//! convention, orthonormal bases, projectors, principal angles and
//! sin-Theta norms.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tol;

/// A subspace of R^d stored as a d x r matrix with orthonormal columns.
///
/// `r = 0` (the trivial subspace) is allowed; the matrix then has zero
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    matrix: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Wrap an orthonormal matrix, verifying `B^T B = I` within
    /// [`tol::ORTHONORMALITY_TOL`].
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("subspace basis".into()));
        }
        let r = matrix.ncols();
        if r > matrix.nrows() {
            return Err(Error::Dimension(format!(
                "basis has {} columns in ambient dimension {}",
                r,
                matrix.nrows()
            )));
        }
        let gram = matrix.transpose() * &matrix;
        let defect = (&gram - DMatrix::identity(r, r)).amax();
        if r > 0 && defect > tol::ORTHONORMALITY_TOL {
            return Err(Error::InvalidParameter(format!(
                "basis columns not orthonormal: defect {defect:.3e}"
            )));
        }
        Ok(SubspaceBasis { matrix })
    }

    /// Orthonormalize the columns of `span` (assumed linearly independent)
    /// with a thin QR factorization.
    pub fn from_span(span: &DMatrix<f64>) -> Result<Self> {
        if span.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("span matrix".into()));
        }
        if span.ncols() == 0 {
            return Ok(SubspaceBasis {
                matrix: DMatrix::zeros(span.nrows(), 0),
            });
        }
        let (q, r) = span.clone().qr().unpack();
        for k in 0..r.nrows().min(r.ncols()) {
            if r[(k, k)].abs() < 1e-12 {
                return Err(Error::InvalidParameter(
                    "span columns are linearly dependent".into(),
                ));
            }
        }
        // Fix the sign of each column so the QR phase ambiguity cannot leak
        // into downstream golden files.
        let mut q = q.columns(0, span.ncols()).into_owned();
        for j in 0..q.ncols() {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        SubspaceBasis::new(q)
    }

    /// Span of the standard coordinates `coords` in ambient dimension `d`.
    pub fn standard(d: usize, coords: &[usize]) -> Result<Self> {
        let mut m = DMatrix::zeros(d, coords.len());
        for (j, &c) in coords.iter().enumerate() {
            if c >= d {
                return Err(Error::Dimension(format!(
                    "coordinate {c} outside ambient dimension {d}"
                )));
            }
            m[(c, j)] = 1.0;
        }
        SubspaceBasis::new(m)
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Orthogonal projector `B B^T` onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(self.ambient_dim(), self.ambient_dim());
        }
        &self.matrix * self.matrix.transpose()
    }
}

/// SVD with nonincreasing singular values and deterministic signs.
#[derive(Debug, Clone)]
pub struct OrderedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl OrderedSvd {
    /// Basis of the leading `rank` left singular vectors.
    pub fn left_basis(&self, rank: usize) -> Result<SubspaceBasis> {
        if rank > self.u.ncols() {
            return Err(Error::RankOutOfRange {
                rank,
                dim: self.u.ncols(),
            });
        }
        SubspaceBasis::new(self.u.columns(0, rank).into_owned())
    }

    /// Basis of the leading `rank` right singular vectors.
    pub fn right_basis(&self, rank: usize) -> Result<SubspaceBasis> {
        if rank > self.v.ncols() {
            return Err(Error::RankOutOfRange {
                rank,
                dim: self.v.ncols(),
            });
        }
        SubspaceBasis::new(self.v.columns(0, rank).into_owned())
    }

    /// Sum of singular values.
    pub fn nuclear_norm(&self) -> f64 {
        self.singular_values.iter().sum()
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;
/// Relative threshold below which a column pair or off-diagonal entry
/// counts as already orthogonal.
const JACOBI_REL_TOL: f64 = 1e-15;

/// One-sided Jacobi SVD of a matrix with `nrows >= ncols`: Givens column
/// rotations orthogonalize the Gram matrix, the converged column norms are
/// the singular values (sorted nonincreasing, stable), and zero columns of
/// U are completed to an orthonormal set from standard basis vectors.
///
/// General-purpose bidiagonalization SVDs can misconverge on rank-deficient
/// inputs, returning wrong values without an error, so every decomposition
/// in this module runs Jacobi iterations instead.
fn one_sided_jacobi(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let d = m.nrows();
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = DMatrix::identity(n, n);
    if n > 1 {
        let mut converged = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let mut app = 0.0;
                    let mut aqq = 0.0;
                    let mut apq = 0.0;
                    for i in 0..d {
                        app += a[(i, p)] * a[(i, p)];
                        aqq += a[(i, q)] * a[(i, q)];
                        apq += a[(i, p)] * a[(i, q)];
                    }
                    if apq.abs() <= JACOBI_REL_TOL * (app * aqq).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let tau = (aqq - app) / (2.0 * apq);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..d {
                        let xp = a[(i, p)];
                        let xq = a[(i, q)];
                        a[(i, p)] = c * xp - s * xq;
                        a[(i, q)] = s * xp + c * xq;
                    }
                    for i in 0..n {
                        let xp = v[(i, p)];
                        let xq = v[(i, q)];
                        v[(i, p)] = c * xp - s * xq;
                        v[(i, q)] = s * xp + c * xq;
                    }
                }
            }
            if !rotated {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(
                "one-sided Jacobi SVD did not converge".into(),
            ));
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).expect("finite column norms"));
    let mut u = DMatrix::zeros(d, n);
    let mut s = DVector::zeros(n);
    let mut v_sorted = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        v_sorted.set_column(dst, &v.column(src));
        if norms[src] > 0.0 {
            u.set_column(dst, &(a.column(src) / norms[src]));
        }
    }
    for j in 0..n {
        if s[j] > 0.0 {
            continue;
        }
        // Zero singular values sort last, so columns 0..j are filled; take
        // the standard basis vector with the largest residual against them.
        let mut best = DVector::zeros(d);
        let mut best_norm = -1.0;
        for k in 0..d {
            let mut w = DVector::zeros(d);
            w[k] = 1.0;
            for f in 0..j {
                let proj = u.column(f).dot(&w);
                w -= u.column(f) * proj;
            }
            let wn = w.norm();
            if wn > best_norm {
                best_norm = wn;
                best = w;
            }
        }
        u.set_column(j, &(best / best_norm));
    }
    Ok((u, s, v_sorted))
}

/// Full SVD `M = U diag(s) V^T` with singular values sorted nonincreasing,
/// computed by one-sided Jacobi rotations.
///
/// Sign convention: the largest-magnitude entry of every left singular
/// vector is nonnegative (first occurrence wins on magnitude ties), and the
/// matching right vector is flipped along with it. Equal singular values
/// keep the pre-sort column order (the sort is stable).
pub fn svd_ordered(m: &DMatrix<f64>) -> Result<OrderedSvd> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    let (mut u, s, mut v) = if m.nrows() >= m.ncols() {
        one_sided_jacobi(m)?
    } else {
        let (ut, st, vt) = one_sided_jacobi(&m.transpose())?;
        (vt, st, ut)
    };
    for j in 0..u.ncols() {
        let col = u.column(j);
        let mut arg = 0;
        let mut best = -1.0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                arg = i;
            }
        }
        if u[(arg, j)] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(OrderedSvd {
        u,
        singular_values: s,
        v,
    })
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.iter().any(|x| !x.is_finite()) {
        return f64::NAN;
    }
    let tall = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    match one_sided_jacobi(&tall) {
        Ok((_, s, _)) => s.iter().cloned().fold(0.0, f64::max),
        Err(_) => f64::NAN,
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; eigenvalues come
/// out unsorted with matching eigenvector columns.
fn jacobi_symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::identity(n, n);
    let scale = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= 1 || scale == 0.0 {
        return Ok((DVector::from_fn(n, |i, _| a[(i, i)]), v));
    }
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += 2.0 * a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= JACOBI_REL_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(p, k)] = a[(k, p)];
                    a[(k, q)] = s * akp + c * akq;
                    a[(q, k)] = a[(k, q)];
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numerical(
            "Jacobi eigendecomposition did not converge".into(),
        ));
    }
    Ok((DVector::from_fn(n, |i, _| a[(i, i)]), v))
}

/// Symmetric eigendecomposition with nonincreasing eigenvalues and the
/// same deterministic sign convention as [`svd_ordered`].
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_symmetric(m, "symmetric eigendecomposition")?;
    let (raw_values, raw_vectors) = jacobi_symmetric_eigen(m)?;
    let d = raw_values.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        raw_values[b]
            .partial_cmp(&raw_values[a])
            .expect("finite eigenvalues")
    });
    let mut values = DVector::zeros(d);
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = raw_values[src];
        vectors.set_column(dst, &raw_vectors.column(src));
    }
    for j in 0..d {
        let col = vectors.column(j);
        let mut arg = 0;
        let mut best = -1.0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                arg = i;
            }
        }
        if vectors[(arg, j)] < 0.0 {
            vectors.column_mut(j).neg_mut();
        }
    }
    Ok((values, vectors))
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, context: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{context}: matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(context.into()));
    }
    let defect = (m - m.transpose()).amax();
    if defect > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "{context}: matrix not symmetric, defect {defect:.3e}"
        )));
    }
    Ok(())
}

/// Symmetric inverse square root `M^(-1/2)` via eigendecomposition.
///
/// Fails with a near-singular error when any eigenvalue is at or below
/// `floor`; callers choose the floor appropriate to their stage (population
/// constructions use [`tol::POPULATION_EIG_FLOOR`], empirical whitening
/// uses [`tol::WHITENING_FLOOR`]).
pub fn sym_inv_sqrt(m: &DMatrix<f64>, floor: f64, context: &str) -> Result<DMatrix<f64>> {
    check_symmetric(m, context)?;
    let (values, vectors) = sym_eigen_sorted(m)?;
    let min_eig = values[values.len() - 1];
    if min_eig <= floor {
        return Err(Error::NearSingular {
            context: context.into(),
            eigenvalue: min_eig,
            floor,
        });
    }
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        vectors[(i, j)] / values[j].sqrt()
    });
    let s = scaled * vectors.transpose();
    // Round-off can leave a tiny asymmetry; return an exactly symmetric S.
    Ok((&s + s.transpose()) * 0.5)
}

/// Principal angles between two subspaces, ascending, in degrees.
#[derive(Debug, Clone)]
pub struct PrincipalAngles {
    pub radians: Vec<f64>,
    pub degrees: Vec<f64>,
    pub mean_degrees: f64,
    pub max_degrees: f64,
}

/// Principal angles from the singular values of `B1^T B2`, clamped into
/// [0, 1] before `acos` so round-off cannot produce complex angles.
///
/// Returns min(r1, r2) angles; for a pair involving a rank-0 subspace the
/// angle vector is empty and both summaries are 0.
pub fn principal_angles(b1: &SubspaceBasis, b2: &SubspaceBasis) -> Result<PrincipalAngles> {
    if b1.ambient_dim() != b2.ambient_dim() {
        return Err(Error::Dimension(format!(
            "principal angles: ambient dims {} vs {}",
            b1.ambient_dim(),
            b2.ambient_dim()
        )));
    }
    let k = b1.rank().min(b2.rank());
    let mut radians = Vec::with_capacity(k);
    if k > 0 {
        let product = b1.matrix().transpose() * b2.matrix();
        let svd = svd_ordered(&product)?;
        // Cosines arrive nonincreasing, so the angles come out ascending.
        for i in 0..k {
            let c = svd.singular_values[i].clamp(0.0, 1.0);
            radians.push(c.acos());
        }
    }
    let degrees: Vec<f64> = radians.iter().map(|r| r.to_degrees()).collect();
    let mean_degrees = if degrees.is_empty() {
        0.0
    } else {
        degrees.iter().sum::<f64>() / degrees.len() as f64
    };
    let max_degrees = degrees.iter().cloned().fold(0.0, f64::max);
    Ok(PrincipalAngles {
        radians,
        degrees,
        mean_degrees,
        max_degrees,
    })
}

/// Sine of the largest principal angle, computed as
/// `||(I - B1 B1^T) B2||_2` (accurate for small angles, unlike
/// `sqrt(1 - cos^2)`).
pub fn sin_theta_norm(b1: &SubspaceBasis, b2: &SubspaceBasis) -> Result<f64> {
    if b1.ambient_dim() != b2.ambient_dim() {
        return Err(Error::Dimension(format!(
            "sin-theta: ambient dims {} vs {}",
            b1.ambient_dim(),
            b2.ambient_dim()
        )));
    }
    if b1.rank() != b2.rank() {
        return Err(Error::Dimension(format!(
            "sin-theta: ranks {} vs {}",
            b1.rank(),
            b2.rank()
        )));
    }
    if b1.rank() == 0 {
        return Ok(0.0);
    }
    let projected = b2.matrix() - b1.matrix() * (b1.matrix().transpose() * b2.matrix());
    Ok(operator_norm(&projected).clamp(0.0, 1.0))
}

/// Haar-distributed random orthogonal matrix: QR of a standard Gaussian
/// matrix with the R-diagonal sign fix.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(d, d);
    // Column-major fill order is part of the reproducibility contract.
    for j in 0..d {
        for i in 0..d {
            g[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let (mut q, r) = g.qr().unpack();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
