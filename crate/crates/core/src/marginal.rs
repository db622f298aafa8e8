//! Mean/variance families and working correlation structures.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GeeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkFamily {
    /// Identity link with constant variance `dispersion`.
    IdentityGaussian { dispersion: f64 },
    /// Logit link with Bernoulli variance `mu (1 - mu)`.
    LogitBernoulli,
}

impl LinkFamily {
    pub fn gaussian() -> Self {
        LinkFamily::IdentityGaussian { dispersion: 1.0 }
    }

    pub fn with_dispersion(self, phi: f64) -> Self {
        match self {
            LinkFamily::IdentityGaussian { .. } => LinkFamily::IdentityGaussian { dispersion: phi },
            other => other,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, LinkFamily::IdentityGaussian { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if let LinkFamily::IdentityGaussian { dispersion } = self {
            if !(dispersion.is_finite() && *dispersion > 0.0) {
                return Err(GeeError::ParameterDomain(format!(
                    "dispersion must be positive, got {dispersion}"
                )));
            }
        }
        Ok(())
    }

    /// Mean and its derivative with respect to the linear predictor.
    pub fn mu_and_delta(&self, eta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut mu = Vec::with_capacity(eta.len());
        let mut delta = Vec::with_capacity(eta.len());
        for &e in eta {
            let (m, d) = self.mu_delta_scalar(e)?;
            mu.push(m);
            delta.push(d);
        }
        Ok((mu, delta))
    }

    #[inline]
    pub(crate) fn mu_delta_scalar(&self, eta: f64) -> Result<(f64, f64)> {
        if !eta.is_finite() {
            return Err(GeeError::NumericDomain(format!("linear predictor {eta}")));
        }
        Ok(match self {
            LinkFamily::IdentityGaussian { .. } => (eta, 1.0),
            LinkFamily::LogitBernoulli => {
                // e^{-|eta|} never overflows; delta keeps full relative precision
                let e = (-eta.abs()).exp();
                let mu = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                let delta = e / ((1.0 + e) * (1.0 + e));
                (mu, delta)
            }
        })
    }

    /// Diagonal of `A_i`.
    pub fn marginal_variance(&self, mu: &[f64]) -> Result<Vec<f64>> {
        mu.iter()
            .map(|&m| match self {
                LinkFamily::IdentityGaussian { dispersion } => Ok(*dispersion),
                LinkFamily::LogitBernoulli => {
                    if m > 0.0 && m < 1.0 {
                        Ok(m * (1.0 - m))
                    } else {
                        Err(GeeError::DegenerateVariance(format!(
                            "Bernoulli mean {m} has zero variance"
                        )))
                    }
                }
            })
            .collect()
    }

    /// Variance function without dispersion; used for Pearson residuals.
    pub(crate) fn unit_variance(&self, eta: f64) -> Result<f64> {
        match self {
            LinkFamily::IdentityGaussian { .. } => Ok(1.0),
            LinkFamily::LogitBernoulli => Ok(self.mu_delta_scalar(eta)?.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationStructure {
    Ind,
    Ex,
    Ar1,
}

impl CorrelationStructure {
    pub fn label(&self) -> &'static str {
        match self {
            CorrelationStructure::Ind => "IND",
            CorrelationStructure::Ex => "EX",
            CorrelationStructure::Ar1 => "AR(1)",
        }
    }
}

impl std::str::FromStr for CorrelationStructure {
    type Err = GeeError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ind" | "independence" => Ok(CorrelationStructure::Ind),
            "ex" | "exchangeable" => Ok(CorrelationStructure::Ex),
            "ar1" | "ar(1)" => Ok(CorrelationStructure::Ar1),
            other => Err(GeeError::Config(format!("unknown correlation structure '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingCorrelation {
    pub structure: CorrelationStructure,
    pub alpha: f64,
}

impl WorkingCorrelation {
    pub fn independence() -> Self {
        Self {
            structure: CorrelationStructure::Ind,
            alpha: 0.0,
        }
    }

    pub fn exchangeable(alpha: f64) -> Self {
        Self {
            structure: CorrelationStructure::Ex,
            alpha,
        }
    }

    pub fn ar1(alpha: f64) -> Self {
        Self {
            structure: CorrelationStructure::Ar1,
            alpha,
        }
    }

    /// Open interval of admissible `alpha` for clusters up to size `m_max`.
    pub fn admissible_range(structure: CorrelationStructure, m_max: usize) -> (f64, f64) {
        match structure {
            CorrelationStructure::Ind => (f64::NEG_INFINITY, f64::INFINITY),
            CorrelationStructure::Ex if m_max <= 1 => (f64::NEG_INFINITY, 1.0),
            CorrelationStructure::Ex => (-1.0 / (m_max as f64 - 1.0), 1.0),
            CorrelationStructure::Ar1 => (-1.0, 1.0),
        }
    }

    pub fn validate(&self, m_max: usize) -> Result<()> {
        if self.structure == CorrelationStructure::Ind {
            return Ok(());
        }
        let (lo, hi) = Self::admissible_range(self.structure, m_max);
        if !(self.alpha.is_finite() && self.alpha > lo && self.alpha < hi) {
            return Err(GeeError::ParameterDomain(format!(
                "{} alpha = {} outside ({lo}, {hi}) for cluster size {m_max}",
                self.structure.label(),
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn build_correlation(&self, m: usize) -> Result<DMatrix<f64>> {
        if m < 1 {
            return Err(GeeError::ParameterDomain("cluster size must be >= 1".into()));
        }
        self.validate(m)?;
        let a = self.alpha;
        Ok(match self.structure {
            CorrelationStructure::Ind => DMatrix::identity(m, m),
            CorrelationStructure::Ex => {
                DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { a })
            }
            CorrelationStructure::Ar1 => {
                DMatrix::from_fn(m, m, |i, j| a.powi((i as i32 - j as i32).abs()))
            }
        })
    }

    /// `R^{-1} x` in place, using the closed forms for each structure.
    pub(crate) fn apply_inverse(&self, x: &mut [f64]) {
        let m = x.len();
        let a = self.alpha;
        match self.structure {
            CorrelationStructure::Ind => {}
            CorrelationStructure::Ex => {
                let c = a / (1.0 + (m as f64 - 1.0) * a);
                let s: f64 = x.iter().sum();
                let inv = 1.0 / (1.0 - a);
                for v in x.iter_mut() {
                    *v = (*v - c * s) * inv;
                }
            }
            CorrelationStructure::Ar1 => {
                if m == 1 {
                    return;
                }
                let inv = 1.0 / (1.0 - a * a);
                let d = 1.0 + a * a;
                let mut prev = x[0];
                x[0] = (x[0] - a * x[1]) * inv;
                for j in 1..m - 1 {
                    let cur = x[j];
                    x[j] = (d * cur - a * (prev + x[j + 1])) * inv;
                    prev = cur;
                }
                let cur = x[m - 1];
                x[m - 1] = (cur - a * prev) * inv;
            }
        }
    }
}

/// Working covariance `V = A^{1/2} R A^{1/2}` of one cluster.
#[derive(Debug, Clone)]
pub struct ClusterCovariance {
    a_sqrt: Vec<f64>,
    corr: WorkingCorrelation,
    cluster: usize,
}

impl ClusterCovariance {
    pub fn new(a_diag: &[f64], corr: WorkingCorrelation, cluster: usize) -> Result<Self> {
        for (row, &a) in a_diag.iter().enumerate() {
            if !(a > 0.0 && a.is_finite()) {
                return Err(GeeError::DegenerateVariance(format!(
                    "marginal variance {a} in cluster {cluster}, row {row}"
                )));
            }
        }
        Ok(Self {
            a_sqrt: a_diag.iter().map(|a| a.sqrt()).collect(),
            corr,
            cluster,
        })
    }

    pub fn dim(&self) -> usize {
        self.a_sqrt.len()
    }

    pub fn a_sqrt(&self) -> &[f64] {
        &self.a_sqrt
    }

    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let r = self.corr.build_correlation(self.dim())?;
        Ok(DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            self.a_sqrt[i] * r[(i, j)] * self.a_sqrt[j]
        }))
    }

    /// `V^{-1} rhs` through the closed-form correlation inverse.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(GeeError::DimensionMismatch(format!(
                "rhs of length {} for cluster of size {}",
                rhs.len(),
                self.dim()
            )));
        }
        let mut x: Vec<f64> = rhs.iter().zip(&self.a_sqrt).map(|(r, s)| r / s).collect();
        self.corr.apply_inverse(&mut x);
        for (v, s) in x.iter_mut().zip(&self.a_sqrt) {
            *v /= s;
        }
        Ok(x)
    }

    /// `V^{-1} rhs` through a dense Cholesky factorization.
    pub fn solve_dense(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let v = self.dense()?;
        let chol = v
            .cholesky()
            .ok_or(GeeError::IllConditionedCovariance { cluster: self.cluster })?;
        Ok(chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec())
    }

    /// Applies `V^{-1}` to every column of `m` in place.
    pub(crate) fn solve_columns(&self, m: &mut DMatrix<f64>) {
        let rows = self.dim();
        let mut buf = vec![0.0; rows];
        for mut col in m.column_iter_mut() {
            for i in 0..rows {
                buf[i] = col[i] / self.a_sqrt[i];
            }
            self.corr.apply_inverse(&mut buf);
            for i in 0..rows {
                col[i] = buf[i] / self.a_sqrt[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logit_at_zero() {
        let (mu, d) = LinkFamily::LogitBernoulli.mu_and_delta(&[0.0]).unwrap();
        assert_eq!(mu[0], 0.5);
        assert_eq!(d[0], 0.25);
    }

    #[test]
    fn identity_family() {
        let (mu, d) = LinkFamily::gaussian().mu_and_delta(&[1.0, -1.0]).unwrap();
        assert_eq!(mu, vec![1.0, -1.0]);
        assert_eq!(d, vec![1.0, 1.0]);
    }

    #[test]
    fn logit_far_tail() {
        // 1/(1+e^40) = e^-40 / (1 + e^-40)
        let (mu, d) = LinkFamily::LogitBernoulli.mu_and_delta(&[-40.0, 700.0, -700.0]).unwrap();
        assert!((mu[0] - (-40f64).exp()).abs() < 1e-15);
        assert!(d[0] > 0.0);
        assert_eq!(mu[1], 1.0);
        assert!(d[1] > 0.0 && d[2] > 0.0);
        assert!(LinkFamily::LogitBernoulli.mu_and_delta(&[f64::NAN]).is_err());
        assert!(LinkFamily::LogitBernoulli.mu_and_delta(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn variance_functions() {
        assert_eq!(
            LinkFamily::LogitBernoulli.marginal_variance(&[0.5]).unwrap(),
            vec![0.25]
        );
        assert_eq!(LinkFamily::gaussian().marginal_variance(&[3.0]).unwrap(), vec![1.0]);
        assert!(matches!(
            LinkFamily::LogitBernoulli.marginal_variance(&[1.0]),
            Err(GeeError::DegenerateVariance(_))
        ));
    }

    #[test]
    fn correlation_matrices() {
        let r = WorkingCorrelation::ar1(0.5).build_correlation(3).unwrap();
        let expected = [[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(r[(i, j)], expected[i][j], epsilon = 1e-15);
            }
        }
        let e = WorkingCorrelation::exchangeable(0.5).build_correlation(3).unwrap();
        assert_eq!(e[(0, 1)], 0.5);
        assert_eq!(e[(2, 0)], 0.5);
        assert_eq!(e[(1, 1)], 1.0);
        assert_eq!(
            WorkingCorrelation::independence().build_correlation(4).unwrap(),
            DMatrix::identity(4, 4)
        );
    }

    #[test]
    fn alpha_outside_region_is_rejected() {
        assert!(WorkingCorrelation::exchangeable(-0.6).build_correlation(3).is_err());
        assert!(WorkingCorrelation::exchangeable(-0.4).build_correlation(3).is_ok());
        assert!(WorkingCorrelation::ar1(1.0).build_correlation(3).is_err());
        assert!(WorkingCorrelation::exchangeable(1.0).build_correlation(2).is_err());
    }

    #[test]
    fn exchangeable_solve_closed_form() {
        let cov =
            ClusterCovariance::new(&[1.0; 3], WorkingCorrelation::exchangeable(0.5), 0).unwrap();
        let x = cov.solve(&[1.0, 1.0, 1.0]).unwrap();
        for v in x {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn independence_identity_solve() {
        let cov = ClusterCovariance::new(&[1.0; 4], WorkingCorrelation::independence(), 0).unwrap();
        assert_eq!(cov.solve(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_variance_rejected() {
        assert!(ClusterCovariance::new(&[1.0, 0.0], WorkingCorrelation::independence(), 3).is_err());
    }

    #[test]
    fn singleton_clusters() {
        for wc in [
            WorkingCorrelation::ar1(0.3),
            WorkingCorrelation::exchangeable(0.3),
        ] {
            let cov = ClusterCovariance::new(&[4.0], wc, 0).unwrap();
            assert_abs_diff_eq!(cov.solve(&[2.0]).unwrap()[0], 0.5, epsilon = 1e-15);
        }
    }
}
