//! Step I joint spline fit, Step II per-component refits and the oracle
//! benchmark fit.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ClusteredDataset;
use crate::error::{GeeError, Result};
use crate::gee::{cholesky_checked, GeeCluster, GeeProblem, GeeSolution, SolverControl};
use crate::inference::{self, ProjectionWeight, SandwichTheta, SigmaEstimate};
use crate::marginal::{CorrelationStructure, LinkFamily, WorkingCorrelation};
use crate::spline_basis::{CenteredSplineBasis, KnotVector};

/// How the working-correlation parameter is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum AlphaSpec {
    Fixed(f64),
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeeModelSpec {
    pub link: LinkFamily,
    pub structure: CorrelationStructure,
    pub alpha: AlphaSpec,
    pub degree: usize,
    pub projection: ProjectionWeight,
    pub solver: SolverControl,
}

impl GeeModelSpec {
    pub fn new(link: LinkFamily, structure: CorrelationStructure) -> Self {
        Self {
            link,
            structure,
            alpha: AlphaSpec::Estimate,
            degree: 3,
            projection: ProjectionWeight::Weighted,
            solver: SolverControl::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub score_tolerance: f64,
}

impl From<&GeeSolution> for SolveSummary {
    fn from(s: &GeeSolution) -> Self {
        Self {
            converged: s.converged,
            iterations: s.iterations,
            score_norm: s.score_norm,
            score_tolerance: s.score_tolerance,
        }
    }
}

/// Step I joint estimate of the linear coefficients and all additive
/// components on an undersmoothed basis.
#[derive(Debug, Clone)]
pub struct PilotFit {
    pub beta: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub bases: Vec<CenteredSplineBasis>,
    pub link: LinkFamily,
    pub working: WorkingCorrelation,
    pub interior_knots: usize,
    pub solution: SolveSummary,
    /// Diagnostics of the preliminary independence fit used to estimate
    /// `alpha`, when one was run.
    pub independence_stage: Option<SolveSummary>,
    pub model_hessian: DMatrix<f64>,
}

impl PilotFit {
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = self.beta.clone();
        for g in &self.gamma {
            c.extend_from_slice(g);
        }
        c
    }

    pub fn component_value(&self, l: usize, z: f64) -> Result<f64> {
        self.bases[l].evaluate_function(&self.gamma[l], z)
    }

    pub(crate) fn component_on_cluster(&self, data: &ClusteredDataset, i: usize, l: usize) -> Result<Vec<f64>> {
        let zs: Vec<f64> = data.clusters[i].z.column(l).iter().copied().collect();
        let b = self.bases[l].design(&zs)?;
        Ok((b * DVector::from_column_slice(&self.gamma[l])).as_slice().to_vec())
    }

    /// `X_i beta + sum_l B_il gamma_l` design for cluster `i`.
    pub fn design(&self, data: &ClusteredDataset, i: usize) -> Result<DMatrix<f64>> {
        joint_design(data, i, &self.bases)
    }

    pub fn problem(&self, data: &ClusteredDataset) -> Result<GeeProblem> {
        joint_problem(data, &self.bases, self.link, self.working)
    }
}

fn joint_design(data: &ClusteredDataset, i: usize, bases: &[CenteredSplineBasis]) -> Result<DMatrix<f64>> {
    let c = &data.clusters[i];
    let d1 = data.d1();
    let width = d1 + bases.iter().map(|b| b.dim()).sum::<usize>();
    let mut d = DMatrix::zeros(c.len(), width);
    d.columns_mut(0, d1).copy_from(&c.x);
    let mut col = d1;
    for (l, basis) in bases.iter().enumerate() {
        let zs: Vec<f64> = c.z.column(l).iter().copied().collect();
        let b = basis.design(&zs)?;
        d.columns_mut(col, basis.dim()).copy_from(&b);
        col += basis.dim();
    }
    Ok(d)
}

fn joint_problem(
    data: &ClusteredDataset,
    bases: &[CenteredSplineBasis],
    link: LinkFamily,
    working: WorkingCorrelation,
) -> Result<GeeProblem> {
    let clusters = (0..data.n_clusters())
        .map(|i| {
            Ok(GeeCluster {
                design: joint_design(data, i, bases)?,
                offset: vec![0.0; data.clusters[i].len()],
                response: data.clusters[i].y.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GeeProblem::new(clusters, link, working)
}

fn rank_advice(e: GeeError) -> GeeError {
    match e {
        GeeError::SingularInformation(msg) => GeeError::RankDeficientDesign(msg),
        other => other,
    }
}

/// Single Step I solve with a fixed working correlation.
pub fn fit_pilot_fixed(
    data: &ClusteredDataset,
    link: LinkFamily,
    working: WorkingCorrelation,
    n_knots: usize,
    degree: usize,
    init: Option<&[f64]>,
    ctrl: &SolverControl,
) -> Result<PilotFit> {
    data.validate()?;
    let knots = KnotVector::new(n_knots, degree)?;
    let bases = (0..data.d2())
        .map(|l| CenteredSplineBasis::fit(knots.clone(), &data.z_column(l)))
        .collect::<Result<Vec<_>>>()?;
    let problem = joint_problem(data, &bases, link, working)?;
    let p = problem.n_coef();
    let zeros = vec![0.0; p];
    let start = init.unwrap_or(&zeros);
    let sol = problem.solve(start, ctrl).map_err(rank_advice)?;
    let d1 = data.d1();
    let beta = sol.coefficients[..d1].to_vec();
    let mut gamma = Vec::with_capacity(bases.len());
    let mut col = d1;
    for b in &bases {
        gamma.push(sol.coefficients[col..col + b.dim()].to_vec());
        col += b.dim();
    }
    Ok(PilotFit {
        beta,
        gamma,
        bases,
        link,
        working,
        interior_knots: n_knots,
        solution: SolveSummary::from(&sol),
        independence_stage: None,
        model_hessian: sol.model_hessian,
    })
}

/// Step I with the working-correlation policy of `spec`: an independence
/// fit from zero, then (for EX/AR(1)) a refit at the moment estimate of
/// `alpha` or at the fixed value. Gaussian dispersion is re-estimated from
/// the final residuals.
pub fn fit_pilot(data: &ClusteredDataset, spec: &GeeModelSpec, n_knots: usize) -> Result<PilotFit> {
    let ind = fit_pilot_fixed(
        data,
        spec.link,
        WorkingCorrelation::independence(),
        n_knots,
        spec.degree,
        None,
        &spec.solver,
    )?;
    let n_params = ind.beta.len() + ind.gamma.iter().map(|g| g.len()).sum::<usize>();
    let mut link = spec.link;
    if link.is_gaussian() {
        let res = inference::pearson_residuals(data, &ind.problem(data)?, &ind.coefficients())?;
        link = link.with_dispersion(inference::estimate_dispersion(&res, n_params)?);
    }
    let mut fit = match spec.structure {
        CorrelationStructure::Ind => {
            let mut f = ind;
            f.link = link;
            f
        }
        structure => {
            let alpha = match spec.alpha {
                AlphaSpec::Fixed(a) => a,
                AlphaSpec::Estimate => {
                    let res = inference::pearson_residuals(data, &ind.problem(data)?, &ind.coefficients())?;
                    inference::estimate_alpha(&res, structure, n_params)?
                }
            };
            let working = WorkingCorrelation { structure, alpha };
            working.validate(data.max_cluster_size())?;
            let init = ind.coefficients();
            let mut f = fit_pilot_fixed(data, link, working, n_knots, spec.degree, Some(&init), &spec.solver)?;
            f.independence_stage = Some(ind.solution);
            f
        }
    };
    if fit.link.is_gaussian() {
        let res = inference::pearson_residuals(data, &fit.problem(data)?, &fit.coefficients())?;
        fit.link = fit.link.with_dispersion(inference::estimate_dispersion(&res, n_params)?);
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSource {
    TwoStep,
    Oracle,
}

/// Step II estimate of a single additive component.
#[derive(Debug, Clone)]
pub struct ComponentFit {
    pub component: usize,
    pub gamma: Vec<f64>,
    pub basis: CenteredSplineBasis,
    pub source: FitSource,
    pub link: LinkFamily,
    pub working: WorkingCorrelation,
    pub solution: SolveSummary,
    pub covariance: Option<SandwichTheta>,
    /// Per-cluster offsets the component was fitted against.
    pub offsets: Vec<Vec<f64>>,
}

impl ComponentFit {
    pub fn value(&self, z: f64) -> Result<f64> {
        self.basis.evaluate_function(&self.gamma, z)
    }

    pub fn problem(&self, data: &ClusteredDataset) -> Result<GeeProblem> {
        univariate_problem(data, self.component, &self.offsets, &self.basis, self.link, self.working)
    }
}

fn univariate_problem(
    data: &ClusteredDataset,
    l: usize,
    offsets: &[Vec<f64>],
    basis: &CenteredSplineBasis,
    link: LinkFamily,
    working: WorkingCorrelation,
) -> Result<GeeProblem> {
    let clusters = data
        .clusters
        .iter()
        .zip(offsets)
        .map(|(c, o)| {
            let zs: Vec<f64> = c.z.column(l).iter().copied().collect();
            Ok(GeeCluster {
                design: basis.design(&zs)?,
                offset: o.clone(),
                response: c.y.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GeeProblem::new(clusters, link, working)
}

/// Least-squares coefficients of `f` in `basis` over an equally spaced grid.
fn project_on_grid(basis: &CenteredSplineBasis, f: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    let grid: Vec<f64> = (0..201).map(|k| k as f64 / 200.0).collect();
    let b = basis.design(&grid)?;
    let v = DVector::from_vec(grid.iter().map(|&z| f(z)).collect::<Result<Vec<_>>>()?);
    let btb = b.tr_mul(&b);
    match cholesky_checked(&btb) {
        Ok(ch) => Ok(ch.solve(&b.tr_mul(&v)).as_slice().to_vec()),
        Err(_) => Ok(vec![0.0; basis.dim()]),
    }
}

/// Offsets `X_ij' beta_hat + sum_{l' != l} theta_hat_l'(Z_ijl')`.
pub fn pilot_offsets(data: &ClusteredDataset, pilot: &PilotFit, l: usize) -> Result<Vec<Vec<f64>>> {
    let beta = DVector::from_column_slice(&pilot.beta);
    (0..data.n_clusters())
        .map(|i| {
            let mut o = (&data.clusters[i].x * &beta).as_slice().to_vec();
            for lp in (0..data.d2()).filter(|&lp| lp != l) {
                for (v, t) in o.iter_mut().zip(pilot.component_on_cluster(data, i, lp)?) {
                    *v += t;
                }
            }
            Ok(o)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn fit_with_offsets(
    data: &ClusteredDataset,
    l: usize,
    offsets: Vec<Vec<f64>>,
    basis: CenteredSplineBasis,
    link: LinkFamily,
    working: WorkingCorrelation,
    init: Vec<f64>,
    source: FitSource,
    ctrl: &SolverControl,
) -> Result<ComponentFit> {
    let problem = univariate_problem(data, l, &offsets, &basis, link, working)?;
    let sol = problem.solve(&init, ctrl).map_err(rank_advice)?;
    Ok(ComponentFit {
        component: l,
        gamma: sol.coefficients.clone(),
        basis,
        source,
        link,
        working,
        solution: SolveSummary::from(&sol),
        covariance: None,
        offsets,
    })
}

fn check_component(data: &ClusteredDataset, l: usize) -> Result<()> {
    if l >= data.d2() {
        return Err(GeeError::ParameterDomain(format!(
            "component index {l} out of range for {} additive covariates",
            data.d2()
        )));
    }
    Ok(())
}

/// Step II refit of component `l` on a basis with `ns` interior knots,
/// holding the other components and the linear part at their pilot values.
/// The sandwich covariance is attached when `sigma` is given.
pub fn fit_component(
    data: &ClusteredDataset,
    pilot: &PilotFit,
    l: usize,
    ns: usize,
    sigma: Option<&SigmaEstimate>,
    ctrl: &SolverControl,
) -> Result<ComponentFit> {
    check_component(data, l)?;
    if !pilot.solution.converged {
        return Err(GeeError::NotConverged {
            what: "pilot fit".into(),
            iterations: pilot.solution.iterations,
        });
    }
    let degree = pilot.bases[l].degree();
    let basis = CenteredSplineBasis::fit(KnotVector::new(ns, degree)?, &data.z_column(l))?;
    let init = project_on_grid(&basis, |z| pilot.component_value(l, z))?;
    let offsets = pilot_offsets(data, pilot, l)?;
    let mut fit = fit_with_offsets(data, l, offsets, basis, pilot.link, pilot.working, init, FitSource::TwoStep, ctrl)?;
    if let Some(s) = sigma {
        fit.covariance = Some(inference::sandwich_theta(data, &fit, s)?);
    }
    Ok(fit)
}

/// A true additive function.
pub type ComponentFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Generating parameters of a simulated dataset. Each function is centered
/// by its empirical mean over the generated covariates.
#[derive(Clone)]
pub struct TruthSpec {
    pub beta: Vec<f64>,
    functions: Vec<ComponentFn>,
    centers: Vec<f64>,
}

impl std::fmt::Debug for TruthSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TruthSpec")
            .field("beta", &self.beta)
            .field("centers", &self.centers)
            .finish()
    }
}

impl TruthSpec {
    pub fn new(beta: Vec<f64>, functions: Vec<ComponentFn>, data: &ClusteredDataset) -> Result<Self> {
        if functions.len() != data.d2() || beta.len() != data.d1() {
            return Err(GeeError::DimensionMismatch(
                "truth does not match the dataset layout".into(),
            ));
        }
        let centers = functions
            .iter()
            .enumerate()
            .map(|(l, f)| {
                let z = data.z_column(l);
                z.iter().map(|&v| f(v)).sum::<f64>() / z.len() as f64
            })
            .collect();
        Ok(Self {
            beta,
            functions,
            centers,
        })
    }

    pub fn n_components(&self) -> usize {
        self.functions.len()
    }

    pub fn center(&self, l: usize) -> f64 {
        self.centers[l]
    }

    pub fn raw(&self, l: usize, z: f64) -> f64 {
        (self.functions[l])(z)
    }

    pub fn centered(&self, l: usize, z: f64) -> f64 {
        (self.functions[l])(z) - self.centers[l]
    }
}

/// Offsets built from the truth so that `offset + theta_l,centered`
/// reproduces the generating linear predictor exactly.
pub fn oracle_offsets(data: &ClusteredDataset, truth: &TruthSpec, l: usize) -> Result<Vec<Vec<f64>>> {
    let beta = DVector::from_column_slice(&truth.beta);
    Ok(data
        .clusters
        .iter()
        .map(|c| {
            let mut o = (&c.x * &beta).as_slice().to_vec();
            for (j, v) in o.iter_mut().enumerate() {
                for lp in (0..data.d2()).filter(|&lp| lp != l) {
                    *v += truth.raw(lp, c.z[(j, lp)]);
                }
                *v += truth.center(l);
            }
            o
        })
        .collect())
}

/// Oracle refit of component `l` with the linear part and the other
/// components fixed at their true values.
#[allow(clippy::too_many_arguments)]
pub fn fit_oracle(
    data: &ClusteredDataset,
    truth: &TruthSpec,
    link: LinkFamily,
    working: WorkingCorrelation,
    l: usize,
    ns: usize,
    degree: usize,
    sigma: Option<&SigmaEstimate>,
    ctrl: &SolverControl,
) -> Result<ComponentFit> {
    check_component(data, l)?;
    let basis = CenteredSplineBasis::fit(KnotVector::new(ns, degree)?, &data.z_column(l))?;
    let init = project_on_grid(&basis, |z| Ok(truth.centered(l, z)))?;
    let offsets = oracle_offsets(data, truth, l)?;
    let mut fit = fit_with_offsets(data, l, offsets, basis, link, working, init, FitSource::Oracle, ctrl)?;
    if let Some(s) = sigma {
        fit.covariance = Some(inference::sandwich_theta(data, &fit, s)?);
    }
    Ok(fit)
}

#[derive(Debug, Clone)]
pub struct ComponentCurve {
    pub z: Vec<f64>,
    pub values: Vec<f64>,
    pub basis_rows: DMatrix<f64>,
}

pub fn evaluate_component(fit: &ComponentFit, z_grid: &[f64]) -> Result<ComponentCurve> {
    let basis_rows = fit.basis.design(z_grid)?;
    let values = (&basis_rows * DVector::from_column_slice(&fit.gamma)).as_slice().to_vec();
    Ok(ComponentCurve {
        z: z_grid.to_vec(),
        values,
        basis_rows,
    })
}

/// Straight-line fit `slope * (z - mean z)` of component `l` against the
/// pilot offsets; the parametric alternative tested with confidence bands.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearComponentFit {
    pub slope: f64,
    pub z_mean: f64,
}

impl LinearComponentFit {
    pub fn value(&self, z: f64) -> f64 {
        self.slope * (z - self.z_mean)
    }
}

pub fn fit_linear_component(
    data: &ClusteredDataset,
    pilot: &PilotFit,
    l: usize,
    ctrl: &SolverControl,
) -> Result<LinearComponentFit> {
    check_component(data, l)?;
    let zs = data.z_column(l);
    let z_mean = zs.iter().sum::<f64>() / zs.len() as f64;
    let offsets = pilot_offsets(data, pilot, l)?;
    let clusters = data
        .clusters
        .iter()
        .zip(offsets)
        .map(|(c, o)| GeeCluster {
            design: DMatrix::from_fn(c.len(), 1, |j, _| c.z[(j, l)] - z_mean),
            offset: o,
            response: c.y.clone(),
        })
        .collect();
    let problem = GeeProblem::new(clusters, pilot.link, pilot.working)?;
    let sol = problem.solve(&[0.0], ctrl)?;
    Ok(LinearComponentFit {
        slope: sol.coefficients[0],
        z_mean,
    })
}
