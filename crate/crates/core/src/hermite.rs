//! Normalized Hermite polynomials, Gauss-Hermite quadrature, Mehler mode
//! spectra, and the first-order dominance oracle.
//!
//! The working basis is `psi_n(x) = H_n(x / sqrt(2)) / sqrt(2^n n!)` with
//! physicists' `H_n`; it is orthonormal under the standard normal weight,
//! with `psi_0 = 1` and `psi_1(x) = x`. Under a correlation-t bivariate
//! standard normal the cross-moments are diagonal,
//! `E[psi_n(u) psi_m(v)] = t^n delta_nm`, and products over coordinates
//! give the multivariate mode weights `t_n = prod_k t_k^(n_k)`. This module
//! certifies both facts numerically and decides when the degree-1 modes
//! dominate every higher-order mode (`t_r > t_1^2`).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::tol;

/// Normalized Hermite polynomial `psi_n(x)`.
///
/// Three-term recurrence with on-the-fly normalization,
/// `psi_(k+1) = (x psi_k - sqrt(k) psi_(k-1)) / sqrt(k+1)`, which avoids
/// the overflow of `2^n n!` past n of roughly 150.
pub fn psi(n: u32, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = x;
    for k in 1..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// `psi_0(x) .. psi_max(x)` in one pass.
fn psi_row(max_degree: u32, x: f64) -> Vec<f64> {
    let mut row = Vec::with_capacity(max_degree as usize + 1);
    row.push(1.0);
    if max_degree >= 1 {
        row.push(x);
    }
    for k in 1..max_degree {
        let next =
            (x * row[k as usize] - (k as f64).sqrt() * row[k as usize - 1]) / ((k + 1) as f64).sqrt();
        row.push(next);
    }
    row
}

/// Gauss-Hermite nodes and weights for the weight `exp(-x^2)`, by
/// Golub-Welsch on the symmetric tridiagonal Jacobi matrix (zero diagonal,
/// off-diagonal `sqrt(k/2)`).
fn gauss_hermite(q: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut jacobi = DMatrix::zeros(q, q);
    for k in 1..q {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let (values, vectors) = linalg::sym_eigen_sorted(&jacobi)?;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut nodes = Vec::with_capacity(q);
    let mut weights = Vec::with_capacity(q);
    // Eigenvalues arrive nonincreasing; emit the nodes ascending.
    for k in (0..q).rev() {
        nodes.push(values[k]);
        let first = vectors[(0, k)];
        weights.push(sqrt_pi * first * first);
    }
    Ok((nodes, weights))
}

/// Nodes and weights integrating against the standard normal density:
/// `integral phi(x) f(x) dx ~= sum w_k f(x_k)` via the change of variables
/// `x = sqrt(2) u` from the `exp(-u^2)` rule.
pub fn standard_normal_quadrature(q: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if q == 0 {
        return Err(Error::QuadratureTooSmall {
            degree: 0,
            needed: 1,
            got: 0,
        });
    }
    let (gh_nodes, gh_weights) = gauss_hermite(q)?;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let nodes = gh_nodes.iter().map(|&x| std::f64::consts::SQRT_2 * x).collect();
    let weights = gh_weights.iter().map(|&w| w / sqrt_pi).collect();
    Ok((nodes, weights))
}

/// Max over n, m <= max_degree of `|integral phi psi_n psi_m - delta_nm|`.
///
/// Needs `q >= max_degree + 1` nodes: the rule is exact for polynomial
/// degree `2q - 1 >= 2 max_degree`.
pub fn orthonormality_check(max_degree: u32, q: usize) -> Result<f64> {
    let needed = max_degree as usize + 1;
    if q < needed {
        return Err(Error::QuadratureTooSmall {
            degree: max_degree,
            needed,
            got: q,
        });
    }
    let (nodes, weights) = standard_normal_quadrature(q)?;
    let table: Vec<Vec<f64>> = nodes.iter().map(|&x| psi_row(max_degree, x)).collect();
    let mut max_dev: f64 = 0.0;
    for n in 0..=max_degree as usize {
        for m in n..=max_degree as usize {
            let mut acc = 0.0;
            for (row, &w) in table.iter().zip(&weights) {
                acc += w * row[n] * row[m];
            }
            let expected = if n == m { 1.0 } else { 0.0 };
            max_dev = max_dev.max((acc - expected).abs());
        }
    }
    Ok(max_dev)
}

/// Result of one quadrature cross-moment evaluation.
#[derive(Debug, Clone, Copy)]
pub struct CrossMoment {
    pub value: f64,
    /// Set when |t| exceeds the documented precision limit (0.999); the
    /// value is still returned but correlations that extreme sit outside
    /// the certified range.
    pub precision_warning: bool,
}

/// `E[psi_n(u) psi_m(v)]` under the correlation-t bivariate standard
/// normal, by 2-d tensor quadrature against the bivariate density.
///
/// The density is parametrized through its conditional factorization
/// `v = t u + sqrt(1 - t^2) w` with independent standard normal `u, w`, so
/// the integrand is a polynomial of per-axis degree at most `n + m` and
/// the rule is exact once `q >= max(n, m) + 1`.
pub fn mehler_cross_moment(n: u32, m: u32, t: f64, q: usize) -> Result<CrossMoment> {
    if !(t.is_finite() && t.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "correlation must satisfy |t| < 1, got {t}"
        )));
    }
    let max_degree = n.max(m);
    let needed = max_degree as usize + 1;
    if q < needed {
        return Err(Error::QuadratureTooSmall {
            degree: max_degree,
            needed,
            got: q,
        });
    }
    let (nodes, weights) = standard_normal_quadrature(q)?;
    let psi_n: Vec<f64> = nodes.iter().map(|&x| psi(n, x)).collect();
    let residual = (1.0 - t * t).sqrt();
    let mut acc = 0.0;
    for (a, &u) in nodes.iter().enumerate() {
        let mut inner = 0.0;
        for (b, &w) in nodes.iter().enumerate() {
            inner += weights[b] * psi(m, t * u + residual * w);
        }
        acc += weights[a] * psi_n[a] * inner;
    }
    Ok(CrossMoment {
        value: acc,
        precision_warning: t.abs() > tol::HIGH_CORRELATION_WARNING,
    })
}

/// A multivariate Hermite mode: multi-index, total degree, and weight
/// `t_n = prod_k t_k^(n_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub index: Vec<u32>,
    pub degree: u32,
    pub t_n: f64,
}

/// All modes with total degree in [1, max_degree], sorted by weight.
#[derive(Debug, Clone)]
pub struct MehlerSpectrum {
    pub t: Vec<f64>,
    pub max_degree: u32,
    /// Nonincreasing in `t_n`; ties broken by ascending lexicographic
    /// index (the zero index is excluded by the mean-zero constraint).
    pub modes: Vec<Mode>,
}

impl MehlerSpectrum {
    /// CSV export: `index` (semicolon-joined), `degree`, `t_n`.
    pub fn csv_string(&self) -> String {
        let mut out = String::from("index,degree,t_n\n");
        for mode in &self.modes {
            let idx = mode
                .index
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!(
                "{},{},{}\n",
                idx,
                mode.degree,
                crate::io::format_float(mode.t_n)
            ));
        }
        out
    }
}

fn validate_correlations(t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(Error::InvalidParameter("empty correlation vector".into()));
    }
    for (k, &v) in t.iter().enumerate() {
        if !(v.is_finite() && 0.0 < v && v < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "correlation t[{k}] = {v} outside (0,1)"
            )));
        }
        if k > 0 && v > t[k - 1] {
            return Err(Error::InvalidParameter(format!(
                "correlations must be nonincreasing, violated at {k}"
            )));
        }
    }
    Ok(())
}

/// Number of multi-indices of length r with total degree in [1, d]:
/// `C(d + r, r) - 1`.
fn mode_count(r: usize, d: u32) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=r as u128 {
        c = c.saturating_mul(d as u128 + i) / i;
    }
    c.saturating_sub(1)
}

/// Enumerate the multivariate Mehler mode spectrum for correlation vector
/// `t` up to total degree `max_degree`.
pub fn mode_spectrum(t: &[f64], max_degree: u32) -> Result<MehlerSpectrum> {
    validate_correlations(t)?;
    if max_degree == 0 {
        return Err(Error::InvalidParameter("max_degree must be >= 1".into()));
    }
    let count = mode_count(t.len(), max_degree);
    if count > tol::MODE_CAP as u128 {
        return Err(Error::SpectrumTooLarge {
            modes: count,
            cap: tol::MODE_CAP,
        });
    }
    let mut modes = Vec::with_capacity(count as usize);
    let mut index = vec![0u32; t.len()];
    // Depth-first enumeration emits indices in ascending lexicographic
    // order; the stable sort below therefore breaks weight ties
    // lexicographically.
    enumerate_modes(t, max_degree, 0, 0, 1.0, &mut index, &mut modes);
    modes.sort_by(|a, b| b.t_n.partial_cmp(&a.t_n).expect("finite mode weights"));
    Ok(MehlerSpectrum {
        t: t.to_vec(),
        max_degree,
        modes,
    })
}

fn enumerate_modes(
    t: &[f64],
    max_degree: u32,
    pos: usize,
    degree: u32,
    weight: f64,
    index: &mut Vec<u32>,
    out: &mut Vec<Mode>,
) {
    if pos == t.len() {
        if degree >= 1 {
            out.push(Mode {
                index: index.clone(),
                degree,
                t_n: weight,
            });
        }
        return;
    }
    let mut w = weight;
    for nk in 0..=(max_degree - degree) {
        index[pos] = nk;
        enumerate_modes(t, max_degree, pos + 1, degree + nk, w, index, out);
        w *= t[pos];
    }
    index[pos] = 0;
}

/// First-order dominance report: `gap = t_r - t_1^2`, `holds = gap > 0`.
#[derive(Debug, Clone, Copy)]
pub struct DominanceReport {
    pub gap: f64,
    pub holds: bool,
}

/// Check that the weakest degree-1 mode outranks the strongest possible
/// higher-order mode. For r = 1 this always holds since t > t^2 on (0,1).
pub fn dominance_check(t: &[f64]) -> Result<DominanceReport> {
    validate_correlations(t)?;
    let gap = t[t.len() - 1] - t[0] * t[0];
    Ok(DominanceReport { gap, holds: gap > 0.0 })
}

/// Whether the r leading modes of the enumerated spectrum are exactly the
/// degree-1 indices e_1 .. e_r. Agrees with [`dominance_check`] whenever
/// `t_r != t_1^2`; on an exact tie the documented lexicographic tie-break
/// still places e_r first.
pub fn leading_modes_are_linear(t: &[f64], max_degree: u32) -> Result<bool> {
    if max_degree < 2 {
        return Err(Error::InvalidParameter(
            "dominance enumeration needs max_degree >= 2".into(),
        ));
    }
    let spectrum = mode_spectrum(t, max_degree)?;
    Ok(spectrum.modes[..t.len()].iter().all(|m| m.degree == 1))
}

/// Standard normal density.
pub fn normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Bivariate standard normal density with correlation t.
pub fn bivariate_normal_density(u: f64, v: f64, t: f64) -> f64 {
    let one_minus = 1.0 - t * t;
    (-(u * u - 2.0 * t * u * v + v * v) / (2.0 * one_minus)).exp()
        / (2.0 * std::f64::consts::PI * one_minus.sqrt())
}

/// Partial sum of the bivariate Mehler expansion up to degree `max_degree`:
/// `phi(u) phi(v) sum_(n=0..D) t^n psi_n(u) psi_n(v)`.
pub fn mehler_density_truncated(u: f64, v: f64, t: f64, max_degree: u32) -> f64 {
    let pu = psi_row(max_degree, u);
    let pv = psi_row(max_degree, v);
    let mut acc = 0.0;
    let mut tn = 1.0;
    for k in 0..=max_degree as usize {
        acc += tn * pu[k] * pv[k];
        tn *= t;
    }
    normal_density(u) * normal_density(v) * acc
}

/// Deterministic pseudo-random correlation vectors for agreement sweeps:
/// `count` vectors with rank in [1, max_rank] and entries in `range`,
/// sorted nonincreasing.
pub fn random_correlation_vectors(
    count: usize,
    max_rank: usize,
    range: (f64, f64),
    stream: crate::rng::SeededStream,
) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = stream.rng();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let r = rng.gen_range(1..=max_rank);
        let mut t: Vec<f64> = (0..r).map(|_| rng.gen_range(range.0..range.1)).collect();
        t.sort_by(|a, b| b.partial_cmp(a).expect("finite correlations"));
        out.push(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededStream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn psi_low_degrees_match_closed_forms() {
        assert_abs_diff_eq!(psi(1, 1.3), 1.3, epsilon = 1e-15);
        assert_abs_diff_eq!(psi(2, 1.0), 0.0, epsilon = 1e-15);
        for &x in &[-2.0, -0.3, 0.0, 0.7, 3.1] {
            assert_abs_diff_eq!(psi(0, x), 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(
                psi(2, x),
                (x * x - 1.0) / 2f64.sqrt(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn psi_high_degree_stays_finite() {
        assert!(psi(200, 0.5).is_finite());
        assert!(psi(200, 8.0).is_finite());
    }

    #[test]
    fn orthonormality_sweep_is_tight() {
        let dev = orthonormality_check(6, 40).unwrap();
        assert!(dev < 1e-10, "D=6 deviation {dev:.3e}");
        let dev = orthonormality_check(10, 40).unwrap();
        assert!(dev < 1e-10, "D=10 deviation {dev:.3e}");
    }

    #[test]
    fn orthonormality_rejects_small_rules() {
        assert!(matches!(
            orthonormality_check(6, 6),
            Err(Error::QuadratureTooSmall { .. })
        ));
    }

    #[test]
    fn quadrature_normalizes_constants() {
        let (_, weights) = standard_normal_quadrature(16).unwrap();
        assert_abs_diff_eq!(weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cross_moment_diagonal_examples() {
        let m = mehler_cross_moment(1, 1, 0.5, 64).unwrap();
        assert_abs_diff_eq!(m.value, 0.5, epsilon = 1e-8);
        assert!(!m.precision_warning);
        let m = mehler_cross_moment(2, 2, 0.5, 64).unwrap();
        assert_abs_diff_eq!(m.value, 0.25, epsilon = 1e-8);
    }

    #[test]
    fn cross_moment_off_diagonal_vanishes() {
        for &t in &[0.1, 0.5, 0.9] {
            let m = mehler_cross_moment(1, 2, t, 64).unwrap();
            assert!(m.value.abs() < 1e-8, "t={t}: {:.3e}", m.value);
        }
    }

    #[test]
    fn cross_moment_warning_and_domain() {
        assert!(mehler_cross_moment(1, 1, 0.9995, 64).unwrap().precision_warning);
        assert!(mehler_cross_moment(1, 1, 1.0, 64).is_err());
        assert!(mehler_cross_moment(1, 1, f64::NAN, 64).is_err());
    }

    #[test]
    fn mode_spectrum_product_formula() {
        let spectrum = mode_spectrum(&[0.9, 0.6], 3).unwrap();
        let mode = spectrum
            .modes
            .iter()
            .find(|m| m.index == vec![2, 1])
            .unwrap();
        assert_abs_diff_eq!(mode.t_n, 0.81 * 0.6, epsilon = 1e-15);
    }

    #[test]
    fn mode_spectrum_single_coordinate_is_geometric() {
        let spectrum = mode_spectrum(&[0.7], 3).unwrap();
        let weights: Vec<f64> = spectrum.modes.iter().map(|m| m.t_n).collect();
        assert_eq!(weights.len(), 3);
        assert_abs_diff_eq!(weights[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(weights[1], 0.49, epsilon = 1e-15);
        assert_abs_diff_eq!(weights[2], 0.343, epsilon = 1e-15);
    }

    #[test]
    fn mode_spectrum_orders_mixed_degrees() {
        let spectrum = mode_spectrum(&[0.9, 0.85], 2).unwrap();
        assert_abs_diff_eq!(spectrum.modes[0].t_n, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(spectrum.modes[1].t_n, 0.85, epsilon = 1e-15);
        assert_abs_diff_eq!(spectrum.modes[2].t_n, 0.81, epsilon = 1e-15);
        assert_eq!(spectrum.modes[2].index, vec![2, 0]);
    }

    #[test]
    fn mode_spectrum_cap_enforced() {
        let t = vec![0.5; 30];
        assert!(matches!(
            mode_spectrum(&t, 6),
            Err(Error::SpectrumTooLarge { .. })
        ));
    }

    #[test]
    fn mode_spectrum_csv_shape() {
        let spectrum = mode_spectrum(&[0.9, 0.6], 2).unwrap();
        let csv = spectrum.csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "index,degree,t_n");
        assert!(lines.next().unwrap().starts_with("1;0,1,"));
    }

    #[test]
    fn dominance_examples() {
        let rep = dominance_check(&[0.9, 0.85]).unwrap();
        assert_abs_diff_eq!(rep.gap, 0.85 - 0.81, epsilon = 1e-12);
        assert!(rep.holds);
        let rep = dominance_check(&[0.9, 0.5]).unwrap();
        assert_abs_diff_eq!(rep.gap, 0.5 - 0.81, epsilon = 1e-12);
        assert!(!rep.holds);
        assert!(dominance_check(&[0.7]).unwrap().holds);
    }

    #[test]
    fn leading_mode_examples() {
        assert!(leading_modes_are_linear(&[0.9, 0.85], 4).unwrap());
        assert!(!leading_modes_are_linear(&[0.9, 0.5], 2).unwrap());
        assert!(leading_modes_are_linear(&[0.3, 0.2], 6).unwrap());
        assert!(leading_modes_are_linear(&[0.7], 2).unwrap());
    }

    #[test]
    fn exact_tie_keeps_linear_modes_first() {
        // t_r == t_1^2 exactly: dominance is strict and fails, while the
        // lexicographic tie-break still lists e_2 before (2, 0).
        let t = [0.5, 0.25];
        assert!(!dominance_check(&t).unwrap().holds);
        assert_eq!(dominance_check(&t).unwrap().gap, 0.0);
        assert!(leading_modes_are_linear(&t, 4).unwrap());
    }

    #[test]
    fn higher_order_modes_never_exceed_t1_squared() {
        for t in random_correlation_vectors(50, 4, (0.05, 0.95), SeededStream::new(60, 0)) {
            let spectrum = mode_spectrum(&t, 4).unwrap();
            let ceiling = t[0] * t[0];
            for mode in spectrum.modes.iter().filter(|m| m.degree >= 2) {
                assert!(mode.t_n <= ceiling + 1e-15);
            }
        }
    }

    #[test]
    fn truncated_density_error_decreases_with_degree() {
        let t = 0.5;
        let grid: Vec<f64> = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
        let mut errors = Vec::new();
        for &d in &[2u32, 4, 8, 16] {
            let mut max_err: f64 = 0.0;
            for &u in &grid {
                for &v in &grid {
                    let approx_val = mehler_density_truncated(u, v, t, d);
                    let exact = bivariate_normal_density(u, v, t);
                    max_err = max_err.max((approx_val - exact).abs());
                }
            }
            errors.push(max_err);
        }
        for w in errors.windows(2) {
            assert!(w[1] < w[0], "errors not decreasing: {errors:?}");
        }
        assert!(errors[3] < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dominance_equivalence_on_random_vectors(
            raw in proptest::collection::vec(0.05f64..0.95, 1..=4),
            degree in 2u32..=5,
        ) {
            let mut t = raw;
            t.sort_by(|a, b| b.partial_cmp(a).unwrap());
            // Skip exact ties of t_r with t_1^2 (measure zero, documented
            // as indeterminate).
            prop_assume!(t[t.len() - 1] != t[0] * t[0]);
            let holds = dominance_check(&t).unwrap().holds;
            let linear = leading_modes_are_linear(&t, degree).unwrap();
            prop_assert_eq!(holds, linear);
        }
    }
}
