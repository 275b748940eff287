//! Seeded sampling of standardized shared and private latents.
//!
//! All families are standardized to mean 0, variance 1 using their
//! closed-form moments (never empirical ones), so isotropy of the latent
//! vector holds in population, not just on average in the sample.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Hypergeometric, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cca::ViewDataset;
use crate::error::{Error, Result};
use crate::rng::SeededStream;
use crate::spectrum::MixingEnsemble;

/// A standardized latent prior family.
///
/// `NegativeBinomial { successes: r, prob: p }` counts failures before the
/// r-th success with success probability p (mean `r(1-p)/p`, variance
/// `r(1-p)/p^2`). `Hypergeometric { population: N, successes: K, draws: n }`
/// counts marked draws (mean `nK/N`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian,
    Gamma { shape: f64 },
    Poisson { rate: f64 },
    NegativeBinomial { successes: u64, prob: f64 },
    Hypergeometric { population: u64, successes: u64, draws: u64 },
}

impl PriorSpec {
    /// Check the family's parameter domain; degenerate (zero-variance)
    /// hypergeometric settings are rejected here rather than silently
    /// producing constant latents.
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorSpec::Gaussian => Ok(()),
            PriorSpec::Gamma { shape } => {
                if shape.is_finite() && shape > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "Gamma shape must be positive, got {shape}"
                    )))
                }
            }
            PriorSpec::Poisson { rate } => {
                if rate.is_finite() && rate > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "Poisson rate must be positive, got {rate}"
                    )))
                }
            }
            PriorSpec::NegativeBinomial { successes, prob } => {
                if successes == 0 {
                    return Err(Error::InvalidParameter(
                        "NegativeBinomial successes must be a positive integer".into(),
                    ));
                }
                if !(prob.is_finite() && 0.0 < prob && prob < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "NegativeBinomial prob must lie in (0,1), got {prob}"
                    )));
                }
                Ok(())
            }
            PriorSpec::Hypergeometric {
                population,
                successes,
                draws,
            } => {
                if successes > population || draws > population {
                    return Err(Error::InvalidParameter(format!(
                        "Hypergeometric needs successes <= population and draws <= population, got K={successes}, n={draws}, N={population}"
                    )));
                }
                let (_, var) = hypergeometric_moments(population, successes, draws);
                if var.is_nan() || var <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "Hypergeometric(N={population}, K={successes}, n={draws}) has zero variance"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Closed-form (mean, variance) of the raw (pre-standardization) draw.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            PriorSpec::Gaussian => (0.0, 1.0),
            PriorSpec::Gamma { shape } => (shape, shape),
            PriorSpec::Poisson { rate } => (rate, rate),
            PriorSpec::NegativeBinomial { successes, prob } => {
                let r = successes as f64;
                let mean = r * (1.0 - prob) / prob;
                (mean, mean / prob)
            }
            PriorSpec::Hypergeometric {
                population,
                successes,
                draws,
            } => hypergeometric_moments(population, successes, draws),
        }
    }

    /// Map a raw draw to its standardized value `(x - mean) / sd`.
    pub fn standardize(&self, raw: f64) -> f64 {
        let (mean, var) = self.moments();
        (raw - mean) / var.sqrt()
    }
}

fn hypergeometric_moments(population: u64, successes: u64, draws: u64) -> (f64, f64) {
    let (n_pop, k, n) = (population as f64, successes as f64, draws as f64);
    let frac = k / n_pop;
    let mean = n * frac;
    let var = if population <= 1 {
        0.0
    } else {
        n * frac * (1.0 - frac) * (n_pop - n) / (n_pop - 1.0)
    };
    (mean, var)
}

/// Sample an n x d matrix of i.i.d. standardized draws.
///
/// Entries are drawn in column-major order; this order is part of the
/// reproducibility contract.
pub fn sample_standardized(
    prior: &PriorSpec,
    rows: usize,
    cols: usize,
    stream: SeededStream,
) -> Result<DMatrix<f64>> {
    prior.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!(
            "sample shape must be positive, got {rows}x{cols}"
        )));
    }
    let mut rng = stream.rng();
    let mut m = DMatrix::zeros(rows, cols);
    match prior {
        PriorSpec::Gaussian => {
            for j in 0..cols {
                for i in 0..rows {
                    m[(i, j)] = rng.sample(StandardNormal);
                }
            }
        }
        PriorSpec::Gamma { shape } => {
            let dist = Gamma::new(*shape, 1.0)
                .map_err(|e| Error::InvalidParameter(format!("Gamma: {e}")))?;
            for j in 0..cols {
                for i in 0..rows {
                    m[(i, j)] = prior.standardize(dist.sample(&mut rng));
                }
            }
        }
        PriorSpec::Poisson { rate } => {
            let dist = Poisson::new(*rate)
                .map_err(|e| Error::InvalidParameter(format!("Poisson: {e}")))?;
            for j in 0..cols {
                for i in 0..rows {
                    m[(i, j)] = prior.standardize(dist.sample(&mut rng));
                }
            }
        }
        PriorSpec::NegativeBinomial { successes, prob } => {
            // Gamma-Poisson mixture: X | L ~ Poisson(L) with
            // L ~ Gamma(r, (1-p)/p) is NegativeBinomial(r, p) exactly.
            let scale = (1.0 - prob) / prob;
            let mixing = Gamma::new(*successes as f64, scale)
                .map_err(|e| Error::InvalidParameter(format!("NegativeBinomial: {e}")))?;
            for j in 0..cols {
                for i in 0..rows {
                    let lambda: f64 = mixing.sample(&mut rng);
                    let raw = if lambda > 1e-300 {
                        Poisson::new(lambda)
                            .map_err(|e| Error::InvalidParameter(format!("Poisson: {e}")))?
                            .sample(&mut rng)
                    } else {
                        0.0
                    };
                    m[(i, j)] = prior.standardize(raw);
                }
            }
        }
        PriorSpec::Hypergeometric {
            population,
            successes,
            draws,
        } => {
            let dist = Hypergeometric::new(*population, *successes, *draws)
                .map_err(|e| Error::InvalidParameter(format!("Hypergeometric: {e}")))?;
            for j in 0..cols {
                for i in 0..rows {
                    m[(i, j)] = prior.standardize(dist.sample(&mut rng) as f64);
                }
            }
        }
    }
    Ok(m)
}

/// Sample n source vectors per view from the additive-noise model
/// `s_i = A_i c + eps_i` with `c`, `eps_i` mutually independent and
/// standardized.
///
/// Substreams: the shared draw uses `stream.derive(0)`, view i's noise uses
/// `stream.derive(i + 1)`.
pub fn sample_sources(
    ensemble: &MixingEnsemble,
    prior: &PriorSpec,
    n: usize,
    stream: SeededStream,
) -> Result<Vec<ViewDataset>> {
    prior.validate()?;
    let c = sample_standardized(prior, n, ensemble.latent_dim(), stream.derive(0))?;
    let mut out = Vec::with_capacity(ensemble.num_views());
    for i in 0..ensemble.num_views() {
        let a = ensemble.mixing(i);
        let eps = sample_standardized(prior, n, a.nrows(), stream.derive(i as u64 + 1))?;
        let z = &c * a.transpose() + eps;
        out.push(ViewDataset::new(z, i)?);
    }
    Ok(out)
}
