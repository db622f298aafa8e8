use nalgebra::DMatrix;
use rand::Rng;

use super::MvnSampler;
use crate::error::{GeeError, Result};
use crate::stats::{bivariate_normal_cdf, bivariate_normal_pdf, normal_quantile};

/// Range of correlations attainable by two binary variables with success
/// probabilities `p1` and `p2`.
pub fn binary_correlation_bounds(p1: f64, p2: f64) -> (f64, f64) {
    let (q1, q2) = (1.0 - p1, 1.0 - p2);
    let lower = f64::max(-((p1 * p2) / (q1 * q2)).sqrt(), -((q1 * q2) / (p1 * p2)).sqrt());
    let upper = f64::min(((p1 * q2) / (p2 * q1)).sqrt(), ((p2 * q1) / (p1 * q2)).sqrt());
    (lower, upper)
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GeeError::Domain { what: "probability", value: p });
    }
    Ok(())
}

/// Correlation of the latent normal pair whose dichotomization at the
/// `p1`, `p2` quantiles has correlation `rho`.
pub fn latent_correlation(p1: f64, p2: f64, rho: f64) -> Result<f64> {
    check_probability(p1)?;
    check_probability(p2)?;
    let (lower, upper) = binary_correlation_bounds(p1, p2);
    if !(rho >= lower && rho <= upper) {
        return Err(GeeError::InfeasibleCorrelation { p1, p2, rho, lower, upper });
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let h = normal_quantile(p1)?;
    let k = normal_quantile(p2)?;
    let target = p1 * p2 + rho * (p1 * (1.0 - p1) * p2 * (1.0 - p2)).sqrt();
    // the orthant probability is increasing in r with derivative equal to
    // the bivariate density, so Newton steps are safeguarded by bisection
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut r = rho.clamp(-0.99, 0.99);
    for _ in 0..200 {
        let f = bivariate_normal_cdf(h, k, r)? - target;
        if f.abs() < 1e-13 {
            return Ok(r);
        }
        if f > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let d = bivariate_normal_pdf(h, k, r);
        let newton = r - f / d;
        r = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-14 {
            return Ok(r);
        }
    }
    Ok(r)
}

/// Sampler of binary vectors with given marginals and a common pairwise
/// correlation, via thresholded latent normals.
#[derive(Debug, Clone)]
pub struct BinarySampler {
    thresholds: Vec<f64>,
    latent: MvnSampler,
}

impl BinarySampler {
    pub fn new(probabilities: &[f64], rho: f64) -> Result<Self> {
        let m = probabilities.len();
        let mut corr = DMatrix::identity(m, m);
        for j in 0..m {
            for k in j + 1..m {
                let r = latent_correlation(probabilities[j], probabilities[k], rho)?;
                corr[(j, k)] = r;
                corr[(k, j)] = r;
            }
        }
        if m == 1 {
            check_probability(probabilities[0])?;
        }
        let thresholds = probabilities.iter().map(|&p| normal_quantile(p)).collect::<Result<_>>()?;
        let latent = MvnSampler::new(&vec![0.0; m], &corr).map_err(|_| {
            GeeError::NotPositiveDefinite(format!(
                "latent correlation matrix for rho = {rho} is not positive definite"
            ))
        })?;
        Ok(Self { thresholds, latent })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.latent
            .sample(rng)
            .iter()
            .zip(&self.thresholds)
            .map(|(u, t)| if u <= t { 1.0 } else { 0.0 })
            .collect()
    }
}

pub fn gen_correlated_binary<R: Rng + ?Sized>(probabilities: &[f64], rho: f64, rng: &mut R) -> Result<Vec<f64>> {
    Ok(BinarySampler::new(probabilities, rho)?.sample(rng))
}
