//! Normal distribution helpers and the Anderson-Darling normality test.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{GeeError, Result};

fn standard() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).expect("standard normal"))
}

pub fn normal_cdf(x: f64) -> f64 {
    standard().cdf(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GeeError::Domain { what: "probability", value: p });
    }
    Ok(standard().inverse_cdf(p))
}

/// Upper `alpha / 2` standard normal quantile.
pub fn two_sided_critical(alpha: f64) -> Result<f64> {
    if !(alpha >= 1e-12 && alpha < 1.0) {
        return Err(GeeError::Domain { what: "alpha", value: alpha });
    }
    normal_quantile(1.0 - alpha / 2.0)
}

const GL_POINTS: usize = 24;

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| {
        let n = GL_POINTS;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
            w[n - 1 - i] = w[i];
        }
        (x, w)
    })
}

/// Standard bivariate normal density with correlation `r`.
pub fn bivariate_normal_pdf(h: f64, k: f64, r: f64) -> f64 {
    let s = 1.0 - r * r;
    (-(h * h - 2.0 * r * h * k + k * k) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s.sqrt())
}

/// `P(X <= h, Y <= k)` for standard normals with correlation `r`, by
/// integrating the density derivative in the correlation from 0 to `r`
/// after the substitution `t = sin(s)`, which keeps the integrand smooth
/// as `|r|` approaches one.
pub fn bivariate_normal_cdf(h: f64, k: f64, r: f64) -> Result<f64> {
    if !(r.abs() <= 1.0) {
        return Err(GeeError::Domain { what: "correlation", value: r });
    }
    let (x, w) = gauss_legendre();
    let end = r.asin();
    let half = 0.5 * end;
    let hk = h * k;
    let hs = 0.5 * (h * h + k * k);
    let integral: f64 = x
        .iter()
        .zip(w)
        .map(|(xi, wi)| {
            let (sn, cs) = (half * (xi + 1.0)).sin_cos();
            wi * (-(hs - hk * sn) / (cs * cs)).exp()
        })
        .sum::<f64>()
        * half
        / (2.0 * std::f64::consts::PI);
    Ok(normal_cdf(h) * normal_cdf(k) + integral)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AndersonDarling {
    pub n: usize,
    pub a2: f64,
    /// Statistic with the small-sample correction for estimated mean and
    /// variance.
    pub a2_adjusted: f64,
    pub critical_1pct: f64,
    pub reject_at_1pct: bool,
}

/// Composite normality test with mean and variance estimated from `x`.
pub fn anderson_darling_normal(x: &[f64]) -> Result<AndersonDarling> {
    let n = x.len();
    if n < 8 {
        return Err(GeeError::ParameterDomain(format!(
            "Anderson-Darling test needs at least 8 values, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(GeeError::NumericDomain("sample has zero variance".into()));
    }
    let sd = var.sqrt();
    let mut u: Vec<f64> = x.iter().map(|v| normal_cdf((v - mean) / sd)).collect();
    u.sort_by(|a, b| a.total_cmp(b));
    let clamp = |p: f64| p.clamp(1e-300, 1.0 - 1e-16);
    let s: f64 = (0..n)
        .map(|i| {
            let lo = clamp(u[i]).ln();
            let hi = (1.0 - clamp(u[n - 1 - i])).ln();
            (2 * i + 1) as f64 * (lo + hi)
        })
        .sum();
    let a2 = -nf - s / nf;
    let a2_adjusted = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let critical_1pct = 1.035;
    Ok(AndersonDarling {
        n,
        a2,
        a2_adjusted,
        critical_1pct,
        reject_at_1pct: a2_adjusted > critical_1pct,
    })
}
