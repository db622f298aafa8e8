//! Moment estimators for the working correlation, robust sandwich
//! covariances, pointwise confidence intervals and simultaneous bands.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ClusteredDataset;
use crate::error::{GeeError, Result};
use crate::gee::{inverse_spd, symmetrize, GeeProblem};
use crate::marginal::{CorrelationStructure, WorkingCorrelation};
use crate::stats::two_sided_critical;
use crate::two_step::{ComponentFit, PilotFit};

/// Weighting of the projection that removes the spline part from the
/// linear covariates before the sandwich for `beta` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionWeight {
    /// Weights `Delta V^{-1} Delta`; reproduces the joint sandwich exactly.
    Weighted,
    /// Ordinary least squares projection.
    Unweighted,
}

/// Pearson residuals `(Y - mu) / sqrt(v(mu))` per cluster, without the
/// dispersion.
pub fn pearson_residuals(_data: &ClusteredDataset, problem: &GeeProblem, coef: &[f64]) -> Result<Vec<Vec<f64>>> {
    let states = problem.states(coef)?;
    problem
        .clusters
        .iter()
        .zip(&states)
        .map(|(c, st)| {
            c.response
                .iter()
                .zip(&st.mu)
                .zip(&st.eta)
                .map(|((y, mu), eta)| Ok((y - mu) / problem.link.unit_variance(*eta)?.sqrt()))
                .collect()
        })
        .collect()
}

/// `sum e^2 / (n_T - p)`.
pub fn estimate_dispersion(residuals: &[Vec<f64>], n_params: usize) -> Result<f64> {
    let n_t: usize = residuals.iter().map(|r| r.len()).sum();
    if n_t <= n_params {
        return Err(GeeError::NotIdentifiable(format!(
            "{n_t} observations for {n_params} parameters"
        )));
    }
    let ss: f64 = residuals.iter().flatten().map(|e| e * e).sum();
    let phi = ss / (n_t - n_params) as f64;
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(GeeError::NumericDomain(format!("dispersion estimate {phi}")));
    }
    Ok(phi)
}

/// Moment estimate of the working-correlation parameter from Pearson
/// residuals, clipped to stay inside the admissible open interval.
pub fn estimate_alpha(residuals: &[Vec<f64>], structure: CorrelationStructure, n_params: usize) -> Result<f64> {
    let phi = estimate_dispersion(residuals, n_params)?;
    let (num, pairs) = match structure {
        CorrelationStructure::Ind => return Ok(0.0),
        CorrelationStructure::Ex => residuals.iter().fold((0.0, 0usize), |(s, c), e| {
            let total: f64 = e.iter().sum();
            let sq: f64 = e.iter().map(|v| v * v).sum();
            let m = e.len();
            (s + 0.5 * (total * total - sq), c + m * m.saturating_sub(1) / 2)
        }),
        CorrelationStructure::Ar1 => residuals.iter().fold((0.0, 0usize), |(s, c), e| {
            let lag: f64 = e.windows(2).map(|w| w[0] * w[1]).sum();
            (s + lag, c + e.len().saturating_sub(1))
        }),
    };
    if pairs == 0 {
        return Ok(0.0);
    }
    let raw = num / (phi * pairs as f64);
    let m_max = residuals.iter().map(|r| r.len()).max().unwrap_or(1);
    let (lo, hi) = WorkingCorrelation::admissible_range(structure, m_max);
    let margin = 1e-6 * (hi - lo);
    Ok(raw.clamp(lo + margin, hi - margin))
}

/// Estimated true covariance of the responses within a cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaEstimate {
    /// Common correlation matrix, rescaled by each cluster's modelled
    /// marginal standard deviations.
    SharedCorrelation { r_hat: DMatrix<f64> },
    /// Outer product of each cluster's own residual vector; used when
    /// cluster sizes differ.
    PerCluster(Vec<DMatrix<f64>>),
}

impl SigmaEstimate {
    /// `Sigma_i` for cluster `i` with marginal standard deviations `a_sqrt`.
    pub fn cluster_sigma(&self, i: usize, a_sqrt: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            SigmaEstimate::SharedCorrelation { r_hat } => {
                if r_hat.nrows() != a_sqrt.len() {
                    return Err(GeeError::DimensionMismatch(format!(
                        "cluster {i} has size {} but the shared correlation is {}x{}",
                        a_sqrt.len(),
                        r_hat.nrows(),
                        r_hat.ncols()
                    )));
                }
                Ok(DMatrix::from_fn(r_hat.nrows(), r_hat.ncols(), |j, k| {
                    a_sqrt[j] * r_hat[(j, k)] * a_sqrt[k]
                }))
            }
            SigmaEstimate::PerCluster(s) => s
                .get(i)
                .cloned()
                .ok_or_else(|| GeeError::DimensionMismatch(format!("no covariance for cluster {i}"))),
        }
    }
}

/// Residual-based estimate of the within-cluster covariance at `coef`.
pub fn estimate_sigma(problem: &GeeProblem, coef: &[f64]) -> Result<SigmaEstimate> {
    let states = problem.states(coef)?;
    let m0 = problem.clusters[0].len();
    let equal = problem.clusters.iter().all(|c| c.len() == m0);
    if !equal {
        let per = problem
            .clusters
            .iter()
            .zip(&states)
            .map(|(c, st)| {
                let r = DVector::from_vec(st.residual(&c.response));
                &r * r.transpose()
            })
            .collect();
        return Ok(SigmaEstimate::PerCluster(per));
    }
    let mut r_hat = DMatrix::zeros(m0, m0);
    for (c, st) in problem.clusters.iter().zip(&states) {
        let e = DVector::from_iterator(
            m0,
            st.residual(&c.response).iter().zip(st.cov.a_sqrt()).map(|(r, a)| r / a),
        );
        r_hat += &e * e.transpose();
    }
    r_hat /= problem.clusters.len() as f64;
    symmetrize(&mut r_hat);
    let d: Vec<f64> = (0..m0).map(|j| r_hat[(j, j)]).collect();
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(GeeError::DegenerateVariance(
            "a residual variance is zero; correlation cannot be normalised".into(),
        ));
    }
    for j in 0..m0 {
        for k in 0..m0 {
            r_hat[(j, k)] /= (d[j] * d[k]).sqrt();
        }
    }
    Ok(SigmaEstimate::SharedCorrelation { r_hat })
}

/// Sandwich `Psi^{-1} Phi Psi^{-1}` for a design given cluster by cluster.
fn sandwich(problem: &GeeProblem, coef: &[f64], designs: &[DMatrix<f64>], sigma: &SigmaEstimate) -> Result<Sandwich> {
    let states = problem.states(coef)?;
    let p = designs[0].ncols();
    let mut psi = DMatrix::zeros(p, p);
    let mut phi = DMatrix::zeros(p, p);
    for (i, (d, st)) in designs.iter().zip(&states).enumerate() {
        // S = V^{-1} Delta D
        let mut m = d.clone();
        for (j, dl) in st.delta.iter().enumerate() {
            m.row_mut(j).scale_mut(*dl);
        }
        let mut s = m.clone();
        st.cov.solve_columns(&mut s);
        psi += m.tr_mul(&s);
        let sig = sigma.cluster_sigma(i, st.cov.a_sqrt())?;
        phi += s.tr_mul(&(&sig * &s));
    }
    symmetrize(&mut psi);
    symmetrize(&mut phi);
    let psi_inv = inverse_spd(&psi)?;
    let mut cov = &psi_inv * &phi * &psi_inv;
    symmetrize(&mut cov);
    Ok(Sandwich { psi, phi, cov })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sandwich {
    pub psi: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

impl Sandwich {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.cov.nrows()).map(|k| self.cov[(k, k)].max(0.0).sqrt()).collect()
    }
}

/// Robust covariance of the joint coefficient vector of a pilot fit.
pub fn sandwich_joint(data: &ClusteredDataset, pilot: &PilotFit, sigma: &SigmaEstimate) -> Result<Sandwich> {
    let problem = pilot.problem(data)?;
    let designs: Vec<_> = problem.clusters.iter().map(|c| c.design.clone()).collect();
    sandwich(&problem, &pilot.coefficients(), &designs, sigma)
}

/// Robust covariance of the linear coefficients, with the spline part
/// projected out of the linear covariates.
pub fn sandwich_beta(
    data: &ClusteredDataset,
    pilot: &PilotFit,
    sigma: &SigmaEstimate,
    projection: ProjectionWeight,
) -> Result<Sandwich> {
    let problem = pilot.problem(data)?;
    let coef = pilot.coefficients();
    let d1 = data.d1();
    let p = problem.n_coef();
    let nb = p - d1;
    let designs: Vec<DMatrix<f64>> = problem.clusters.iter().map(|c| c.design.clone()).collect();
    if nb == 0 {
        return sandwich(&problem, &coef, &designs, sigma);
    }
    let states = problem.states(&coef)?;
    let mut bwb = DMatrix::zeros(nb, nb);
    let mut bwx = DMatrix::zeros(nb, d1);
    for (d, st) in designs.iter().zip(&states) {
        let x = d.columns(0, d1).into_owned();
        let b = d.columns(d1, nb).into_owned();
        match projection {
            ProjectionWeight::Weighted => {
                let mut wb = b.clone();
                for (j, dl) in st.delta.iter().enumerate() {
                    wb.row_mut(j).scale_mut(*dl);
                }
                st.cov.solve_columns(&mut wb);
                for (j, dl) in st.delta.iter().enumerate() {
                    wb.row_mut(j).scale_mut(*dl);
                }
                bwb += wb.tr_mul(&b);
                bwx += wb.tr_mul(&x);
            }
            ProjectionWeight::Unweighted => {
                bwb += b.tr_mul(&b);
                bwx += b.tr_mul(&x);
            }
        }
    }
    symmetrize(&mut bwb);
    let proj = inverse_spd(&bwb)? * bwx;
    let x_hat: Vec<DMatrix<f64>> = designs
        .iter()
        .map(|d| d.columns(0, d1).into_owned() - d.columns(d1, nb) * &proj)
        .collect();
    sandwich(&problem, &coef, &x_hat, sigma)
}

/// Robust covariance of a Step II (or oracle) spline coefficient vector.
pub fn sandwich_theta(data: &ClusteredDataset, fit: &ComponentFit, sigma: &SigmaEstimate) -> Result<SandwichTheta> {
    let problem = fit.problem(data)?;
    let designs: Vec<_> = problem.clusters.iter().map(|c| c.design.clone()).collect();
    let s = sandwich(&problem, &fit.gamma, &designs, sigma)?;
    Ok(SandwichTheta { cov: s.cov })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichTheta {
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub z: f64,
    pub estimate: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

fn component_sd(fit: &ComponentFit, z: f64) -> Result<(f64, f64)> {
    let cov = fit
        .covariance
        .as_ref()
        .ok_or_else(|| GeeError::Config("component fit has no covariance attached".into()))?;
    let b = DVector::from_vec(fit.basis.eval(z)?);
    let var = (b.transpose() * &cov.cov * &b)[(0, 0)];
    let est = b.dot(&DVector::from_column_slice(&fit.gamma));
    Ok((est, var.max(0.0).sqrt()))
}

/// `theta_hat(z) -/+ z_{alpha/2} sd(z)`.
pub fn pointwise_ci(fit: &ComponentFit, z: f64, alpha: f64) -> Result<Interval> {
    let crit = two_sided_critical(alpha)?;
    let (estimate, sd) = component_sd(fit, z)?;
    Ok(Interval {
        z,
        estimate,
        sd,
        lower: estimate - crit * sd,
        upper: estimate + crit * sd,
    })
}

/// Multiplier `sqrt(2 ln(N + 1) - 2 ln alpha)` of the simultaneous band.
pub fn band_multiplier(interior_knots: usize, alpha: f64) -> Result<f64> {
    if !(alpha >= 1e-12 && alpha < 1.0) {
        return Err(GeeError::Domain { what: "alpha", value: alpha });
    }
    Ok((2.0 * ((interior_knots + 1) as f64).ln() - 2.0 * alpha.ln()).sqrt())
}

/// Simultaneous confidence band over `grid`; requires linear splines.
pub fn simultaneous_band(fit: &ComponentFit, grid: &[f64], alpha: f64) -> Result<Vec<Interval>> {
    if fit.basis.degree() != 1 {
        return Err(GeeError::BandRequiresLinearSplines(fit.basis.degree()));
    }
    let mult = band_multiplier(fit.basis.interior_count(), alpha)?;
    grid.iter()
        .map(|&z| {
            let (estimate, sd) = component_sd(fit, z)?;
            Ok(Interval {
                z,
                estimate,
                sd,
                lower: estimate - mult * sd,
                upper: estimate + mult * sd,
            })
        })
        .collect()
}
