//! End-to-end fit of a dataset: pilot, knot selection, per-component
//! refits and inference, summarised in a serializable report.

use serde::{Deserialize, Serialize};

use crate::data::{ClusteredDataset, ZScale};
use crate::error::{GeeError, Result};
use crate::gee::SolverControl;
use crate::inference::{
    estimate_sigma, pointwise_ci, sandwich_beta, simultaneous_band, Interval, ProjectionWeight, Sandwich,
};
use crate::knots::{select_ns, step1_knots, step2_candidates, KnotSelection};
use crate::marginal::{CorrelationStructure, LinkFamily};
use crate::stats::two_sided_critical;
use crate::two_step::{fit_component, fit_pilot, AlphaSpec, ComponentFit, GeeModelSpec, PilotFit, SolveSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binary,
}

impl Family {
    pub fn link(self) -> LinkFamily {
        match self {
            Family::Gaussian => LinkFamily::gaussian(),
            Family::Binary => LinkFamily::LogitBernoulli,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = GeeError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" | "identity" => Ok(Family::Gaussian),
            "binary" | "bernoulli" | "logit" => Ok(Family::Binary),
            other => Err(GeeError::Config(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub family: Family,
    pub structure: CorrelationStructure,
    pub alpha: AlphaSpec,
    pub degree: usize,
    pub level: f64,
    pub projection: ProjectionWeight,
    /// Pilot interior knots; the undersmoothing rule when absent.
    pub pilot_knots: Option<usize>,
    /// Inclusive BIC search range; the default rule when absent.
    pub candidates: Option<(usize, usize)>,
    pub grid_points: usize,
    pub solver: SolverControl,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            family: Family::Gaussian,
            structure: CorrelationStructure::Ex,
            alpha: AlphaSpec::Estimate,
            degree: 3,
            level: 0.95,
            projection: ProjectionWeight::Weighted,
            pilot_knots: None,
            candidates: None,
            grid_points: 101,
            solver: SolverControl::default(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(GeeError::ParameterDomain("spline degree must be >= 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(GeeError::Domain { what: "level", value: self.level });
        }
        two_sided_critical(1.0 - self.level)?;
        if self.grid_points < 2 {
            return Err(GeeError::Config("grid_points must be at least 2".into()));
        }
        if let Some((lo, hi)) = self.candidates {
            if lo < 1 || hi < lo {
                return Err(GeeError::Config(format!("invalid candidate range [{lo}, {hi}]")));
            }
        }
        if let AlphaSpec::Fixed(a) = self.alpha {
            if !a.is_finite() {
                return Err(GeeError::Domain { what: "alpha", value: a });
            }
        }
        self.solver.validate()
    }

    fn model_spec(&self) -> GeeModelSpec {
        GeeModelSpec {
            link: self.family.link(),
            structure: self.structure,
            alpha: self.alpha,
            degree: self.degree,
            projection: self.projection,
            solver: self.solver,
        }
    }
}

/// A fitted model with everything needed for further evaluation.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub options: FitOptions,
    pub pilot: PilotFit,
    pub beta_covariance: Sandwich,
    pub selections: Vec<KnotSelection>,
    pub components: Vec<ComponentFit>,
    pub linear_names: Vec<String>,
    pub additive_names: Vec<String>,
    pub z_scales: Vec<ZScale>,
    pub n_clusters: usize,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

/// One row of an exported curve; `z` is on the original covariate scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub z: f64,
    pub z_unit: f64,
    pub estimate: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub band_lower: Option<f64>,
    pub band_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub name: String,
    pub interior_knots: usize,
    pub solution: SolveSummary,
    pub selection: KnotSelection,
    pub z_scale: ZScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub options: FitOptions,
    pub n_clusters: usize,
    pub n_obs: usize,
    pub link: LinkFamily,
    pub working_correlation: crate::marginal::WorkingCorrelation,
    pub pilot_knots: usize,
    pub pilot_solution: SolveSummary,
    pub coefficients: Vec<CoefficientRow>,
    pub components: Vec<ComponentReport>,
    /// Why simultaneous bands are absent, when the splines are not linear.
    pub band_note: Option<String>,
}

pub fn fit_dataset(data: &ClusteredDataset, options: &FitOptions) -> Result<FittedModel> {
    options.validate()?;
    data.validate()?;
    let order = options.degree + 1;
    let n_t = data.n_obs();
    let n1 = match options.pilot_knots {
        Some(n) => n,
        None => step1_knots(n_t, order)?,
    };
    let spec = options.model_spec();
    let pilot = fit_pilot(data, &spec, n1)?;
    if !pilot.solution.converged {
        return Err(GeeError::NotConverged {
            what: "pilot fit".into(),
            iterations: pilot.solution.iterations,
        });
    }
    let sigma = estimate_sigma(&pilot.problem(data)?, &pilot.coefficients())?;
    let beta_covariance = sandwich_beta(data, &pilot, &sigma, options.projection)?;
    let candidates = match options.candidates {
        Some(c) => c,
        None => step2_candidates(n_t, order)?,
    };
    let mut selections = Vec::with_capacity(data.d2());
    let mut components = Vec::with_capacity(data.d2());
    for l in 0..data.d2() {
        let sel = select_ns(data, &pilot, l, candidates, &options.solver)?;
        let fit = fit_component(data, &pilot, l, sel.chosen, Some(&sigma), &options.solver)?;
        if !fit.solution.converged {
            return Err(GeeError::NotConverged {
                what: format!("refit of component '{}'", data.additive_names[l]),
                iterations: fit.solution.iterations,
            });
        }
        selections.push(sel);
        components.push(fit);
    }
    Ok(FittedModel {
        options: *options,
        pilot,
        beta_covariance,
        selections,
        components,
        linear_names: data.linear_names.clone(),
        additive_names: data.additive_names.clone(),
        z_scales: data.z_scales.clone(),
        n_clusters: data.n_clusters(),
        n_obs: n_t,
    })
}

impl FittedModel {
    pub fn beta(&self) -> &[f64] {
        &self.pilot.beta
    }

    pub fn beta_std_errors(&self) -> Vec<f64> {
        self.beta_covariance.standard_errors()
    }

    pub fn coefficient_table(&self) -> Result<Vec<CoefficientRow>> {
        let crit = two_sided_critical(1.0 - self.options.level)?;
        Ok(self
            .linear_names
            .iter()
            .zip(self.beta())
            .zip(self.beta_std_errors())
            .map(|((name, &estimate), std_error)| CoefficientRow {
                name: name.clone(),
                estimate,
                std_error,
                lower: estimate - crit * std_error,
                upper: estimate + crit * std_error,
            })
            .collect())
    }

    fn component(&self, l: usize) -> Result<&ComponentFit> {
        self.components.get(l).ok_or_else(|| {
            GeeError::ParameterDomain(format!(
                "component index {l} out of range for {} components",
                self.components.len()
            ))
        })
    }

    /// Estimate and pointwise interval at `z` on the unit scale.
    pub fn interval(&self, l: usize, z_unit: f64, level: f64) -> Result<Interval> {
        pointwise_ci(self.component(l)?, z_unit, 1.0 - level)
    }

    /// Curve on an equally spaced grid over [0, 1], with simultaneous bands
    /// when the splines are linear.
    pub fn curve(&self, l: usize) -> Result<Vec<CurvePoint>> {
        let fit = self.component(l)?;
        let k = self.options.grid_points;
        let grid: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
        let alpha = 1.0 - self.options.level;
        let band = if fit.basis.degree() == 1 {
            Some(simultaneous_band(fit, &grid, alpha)?)
        } else {
            None
        };
        let scale = self.z_scales[l];
        grid.iter()
            .enumerate()
            .map(|(i, &z)| {
                let ci = pointwise_ci(fit, z, alpha)?;
                Ok(CurvePoint {
                    z: scale.to_original(z),
                    z_unit: z,
                    estimate: ci.estimate,
                    sd: ci.sd,
                    lower: ci.lower,
                    upper: ci.upper,
                    band_lower: band.as_ref().map(|b| b[i].lower),
                    band_upper: band.as_ref().map(|b| b[i].upper),
                })
            })
            .collect()
    }

    pub fn report(&self) -> Result<FitReport> {
        let components = self
            .components
            .iter()
            .zip(&self.selections)
            .enumerate()
            .map(|(l, (fit, sel))| ComponentReport {
                name: self.additive_names[l].clone(),
                interior_knots: fit.basis.interior_count(),
                solution: fit.solution,
                selection: sel.clone(),
                z_scale: self.z_scales[l],
            })
            .collect();
        Ok(FitReport {
            options: self.options,
            n_clusters: self.n_clusters,
            n_obs: self.n_obs,
            link: self.pilot.link,
            working_correlation: self.pilot.working,
            pilot_knots: self.pilot.interior_knots,
            pilot_solution: self.pilot.solution,
            coefficients: self.coefficient_table()?,
            components,
            band_note: (self.options.degree != 1)
                .then(|| "simultaneous bands are only available for linear splines (degree 1)".to_string()),
        })
    }
}
