//! Fisher-scoring solver for estimating equations of the form
//! `sum_i D_i' Delta_i V_i^{-1} (Y_i - mu(o_i + D_i b)) = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GeeError, Result};
use crate::marginal::{ClusterCovariance, LinkFamily, WorkingCorrelation};

/// One cluster's contribution: design rows, fixed offset and response.
#[derive(Debug, Clone)]
pub struct GeeCluster {
    pub design: DMatrix<f64>,
    pub offset: Vec<f64>,
    pub response: Vec<f64>,
}

impl GeeCluster {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct GeeProblem {
    pub clusters: Vec<GeeCluster>,
    pub link: LinkFamily,
    pub working: WorkingCorrelation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverControl {
    pub max_iter: usize,
    /// Score tolerance per observation: convergence requires
    /// `max|g| <= tol_score * n_T`.
    pub tol_score: f64,
    pub tol_step: f64,
    pub step_halvings: usize,
}

impl Default for SolverControl {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_score: 1e-8,
            tol_step: 1e-10,
            step_halvings: 10,
        }
    }
}

impl SolverControl {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 || !(self.tol_score > 0.0) || !(self.tol_step > 0.0) {
            return Err(GeeError::Config(
                "solver needs max_iter >= 1 and positive tolerances".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeeSolution {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    /// The absolute score tolerance the solve was held to.
    pub score_tolerance: f64,
    #[serde(skip)]
    pub model_hessian: DMatrix<f64>,
}

/// Per-cluster quantities at a given coefficient vector.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub delta: Vec<f64>,
    pub cov: ClusterCovariance,
}

impl ClusterState {
    pub fn residual(&self, response: &[f64]) -> Vec<f64> {
        response.iter().zip(&self.mu).map(|(y, m)| y - m).collect()
    }
}

impl GeeProblem {
    pub fn new(clusters: Vec<GeeCluster>, link: LinkFamily, working: WorkingCorrelation) -> Result<Self> {
        let p = clusters.first().map(|c| c.design.ncols()).unwrap_or(0);
        for (i, c) in clusters.iter().enumerate() {
            let m = c.response.len();
            if c.design.nrows() != m || c.offset.len() != m {
                return Err(GeeError::DimensionMismatch(format!(
                    "cluster {i}: {} design rows, {} offsets, {m} responses",
                    c.design.nrows(),
                    c.offset.len()
                )));
            }
            if c.design.ncols() != p {
                return Err(GeeError::DimensionMismatch(format!(
                    "cluster {i} has {} coefficients, expected {p}",
                    c.design.ncols()
                )));
            }
            if m == 0 {
                return Err(GeeError::EmptyCluster(i.to_string()));
            }
        }
        link.validate()?;
        let m_max = clusters.iter().map(|c| c.len()).max().unwrap_or(1);
        working.validate(m_max)?;
        Ok(Self {
            clusters,
            link,
            working,
        })
    }

    pub fn n_coef(&self) -> usize {
        self.clusters.first().map(|c| c.design.ncols()).unwrap_or(0)
    }

    pub fn n_obs(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).sum()
    }

    fn check_coef(&self, coef: &[f64]) -> Result<()> {
        if coef.len() != self.n_coef() {
            return Err(GeeError::DimensionMismatch(format!(
                "{} coefficients for a design with {} columns",
                coef.len(),
                self.n_coef()
            )));
        }
        Ok(())
    }

    pub fn cluster_state(&self, i: usize, coef: &[f64]) -> Result<ClusterState> {
        let c = &self.clusters[i];
        let b = DVector::from_column_slice(coef);
        let lin = &c.design * &b;
        let m = c.len();
        let mut eta = Vec::with_capacity(m);
        let mut mu = Vec::with_capacity(m);
        let mut delta = Vec::with_capacity(m);
        let mut a = Vec::with_capacity(m);
        for j in 0..m {
            let e = c.offset[j] + lin[j];
            let (mj, dj) = self.link.mu_delta_scalar(e)?;
            let aj = match self.link {
                LinkFamily::IdentityGaussian { dispersion } => dispersion,
                LinkFamily::LogitBernoulli => {
                    if dj < 0.5 * f64::EPSILON {
                        return Err(GeeError::Saturation { cluster: i, row: j });
                    }
                    dj
                }
            };
            eta.push(e);
            mu.push(mj);
            delta.push(dj);
            a.push(aj);
        }
        let cov = ClusterCovariance::new(&a, self.working, i)?;
        Ok(ClusterState { eta, mu, delta, cov })
    }

    pub fn states(&self, coef: &[f64]) -> Result<Vec<ClusterState>> {
        self.check_coef(coef)?;
        (0..self.clusters.len()).map(|i| self.cluster_state(i, coef)).collect()
    }

    /// `sum_i D_i' Delta_i V_i^{-1} (Y_i - mu_i)`.
    pub fn score(&self, coef: &[f64]) -> Result<DVector<f64>> {
        Ok(self.score_and_info(coef)?.0)
    }

    /// `sum_i D_i' Delta_i V_i^{-1} Delta_i D_i`.
    pub fn fisher_info(&self, coef: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.score_and_info(coef)?.1)
    }

    pub fn score_and_info(&self, coef: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_coef(coef)?;
        let p = self.n_coef();
        let mut g = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for (i, c) in self.clusters.iter().enumerate() {
            let st = self.cluster_state(i, coef)?;
            let (gi, hi) = cluster_contribution(c, &st);
            g += gi;
            info += hi;
        }
        symmetrize(&mut info);
        Ok((g, info))
    }

    pub fn solve(&self, init: &[f64], ctrl: &SolverControl) -> Result<GeeSolution> {
        ctrl.validate()?;
        self.check_coef(init)?;
        if init.iter().any(|v| !v.is_finite()) {
            return Err(GeeError::NumericDomain("non-finite initial coefficients".into()));
        }
        let tol = ctrl.tol_score * self.n_obs() as f64;
        let mut coef = DVector::from_column_slice(init);
        let (mut g, mut info) = self.score_and_info(coef.as_slice())?;
        let mut norm = g.amax();
        let mut iterations = 0;
        let mut converged = norm <= tol;
        while !converged && iterations < ctrl.max_iter {
            iterations += 1;
            let step = solve_spd(&info, &g)?;
            let mut t = 1.0;
            let mut accepted = None;
            for h in 0..=ctrl.step_halvings {
                let trial = &coef + &step * t;
                if let Ok((gt, it)) = self.score_and_info(trial.as_slice()) {
                    let nt = gt.amax();
                    if nt.is_finite() && (nt < norm || h == ctrl.step_halvings) {
                        accepted = Some((trial, gt, it, nt));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((trial, gt, it, nt)) = accepted else {
                break;
            };
            let moved = (&trial - &coef).amax();
            coef = trial;
            g = gt;
            info = it;
            norm = nt;
            converged = norm <= tol;
            if moved <= ctrl.tol_step {
                break;
            }
        }
        Ok(GeeSolution {
            coefficients: coef.as_slice().to_vec(),
            converged,
            iterations,
            score_norm: norm,
            score_tolerance: tol,
            model_hessian: info,
        })
    }
}

/// Score and information contributions of one cluster.
pub(crate) fn cluster_contribution(c: &GeeCluster, st: &ClusterState) -> (DVector<f64>, DMatrix<f64>) {
    // M = Delta D, S = V^{-1} M
    let mut m = c.design.clone();
    for (j, d) in st.delta.iter().enumerate() {
        m.row_mut(j).scale_mut(*d);
    }
    let mut s = m.clone();
    st.cov.solve_columns(&mut s);
    let r = DVector::from_vec(st.residual(&c.response));
    let g = s.tr_mul(&r);
    let h = m.tr_mul(&s);
    (g, h)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factorization with a relative pivot floor, so that numerically
/// rank-deficient matrices are reported instead of silently inverted.
pub(crate) fn cholesky_checked(a: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| GeeError::SingularInformation("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..a.nrows()).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-13 * max) {
        return Err(GeeError::SingularInformation(format!(
            "pivot ratio {:.3e} below 1e-13",
            min / max
        )));
    }
    Ok(chol)
}

pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(cholesky_checked(a)?.solve(b))
}

pub(crate) fn inverse_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(cholesky_checked(a)?.inverse())
}
