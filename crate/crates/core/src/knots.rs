//! Knot-number rules: undersmoothing for the pilot fit and BIC selection
//! for the per-component refits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ClusteredDataset;
use crate::error::{GeeError, Result};
use crate::gee::SolverControl;
use crate::two_step::{fit_component, ComponentFit, PilotFit};

fn check_inputs(n_t: usize, order: usize) -> Result<()> {
    if n_t < 2 {
        return Err(GeeError::ParameterDomain(format!("need at least 2 observations, got {n_t}")));
    }
    if order < 2 {
        return Err(GeeError::ParameterDomain(format!("spline order must be >= 2, got {order}")));
    }
    Ok(())
}

/// Pilot interior knot count `round(2 n_T^{1/(2 order)})`, where `order` is
/// the spline degree plus one.
pub fn step1_knots(n_t: usize, order: usize) -> Result<usize> {
    if n_t < 2 || order < 1 {
        return Err(GeeError::ParameterDomain(format!(
            "step1 knot rule needs n_T >= 2 and order >= 1, got ({n_t}, {order})"
        )));
    }
    let v = 2.0 * (n_t as f64).powf(1.0 / (2 * order) as f64);
    Ok((v.round() as usize).max(1))
}

/// Candidate range `[round(a), round(5 a)]` with
/// `a = (n_T ln n_T)^{1/(2 order + 1)}`.
pub fn step2_candidates(n_t: usize, order: usize) -> Result<(usize, usize)> {
    check_inputs(n_t, order)?;
    let n = n_t as f64;
    let a = (n * n.ln()).powf(1.0 / (2 * order + 1) as f64);
    let lo = (a.round() as usize).max(1);
    let hi = ((5.0 * a).round() as usize).max(lo);
    Ok((lo, hi))
}

/// `ln(2 Q / n) + J ln(n) / n`.
pub fn bic(quasi_loss: f64, n_clusters: usize, n_params: usize) -> Result<f64> {
    if !(quasi_loss > 0.0 && quasi_loss.is_finite()) || n_clusters == 0 {
        return Err(GeeError::NumericDomain(format!(
            "BIC needs a positive finite loss and clusters, got {quasi_loss} with n = {n_clusters}"
        )));
    }
    let n = n_clusters as f64;
    Ok((2.0 * quasi_loss / n).ln() + n_params as f64 * n.ln() / n)
}

/// `1/2 sum_i r_i' V_i^{-1} r_i` at a component fit.
pub fn quasi_loss(data: &ClusteredDataset, fit: &ComponentFit) -> Result<f64> {
    let problem = fit.problem(data)?;
    let states = problem.states(&fit.gamma)?;
    let mut q = 0.0;
    for (c, st) in problem.clusters.iter().zip(&states) {
        let r = st.residual(&c.response);
        let vr = st.cov.solve(&r)?;
        q += r.iter().zip(&vr).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(0.5 * q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicEntry {
    pub interior_knots: usize,
    pub bic: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotSelection {
    pub component: usize,
    pub chosen: usize,
    pub trace: Vec<BicEntry>,
}

/// Minimises the BIC of the refit of component `l` over `candidates`;
/// ties go to the smaller knot count. Candidates whose fit fails or does
/// not converge are skipped.
pub fn select_ns(
    data: &ClusteredDataset,
    pilot: &PilotFit,
    l: usize,
    candidates: (usize, usize),
    ctrl: &SolverControl,
) -> Result<KnotSelection> {
    let (lo, hi) = candidates;
    let q = pilot.bases[l].degree();
    let trace: Vec<BicEntry> = (lo..=hi)
        .into_par_iter()
        .map(|ns| {
            let fit = fit_component(data, pilot, l, ns, None, ctrl)
                .and_then(|f| Ok((f.solution.converged, quasi_loss(data, &f)?)));
            match fit {
                Ok((converged, loss)) => match bic(loss, data.n_clusters(), ns + q + 1) {
                    Ok(b) => BicEntry {
                        interior_knots: ns,
                        bic: converged.then_some(b),
                        converged,
                        error: None,
                    },
                    Err(e) => BicEntry {
                        interior_knots: ns,
                        bic: None,
                        converged,
                        error: Some(e.to_string()),
                    },
                },
                Err(e) => BicEntry {
                    interior_knots: ns,
                    bic: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for e in &trace {
        if let Some(b) = e.bic {
            if best.is_none_or(|(_, bb)| b < bb) {
                best = Some((e.interior_knots, b));
            }
        }
    }
    match best {
        Some((chosen, _)) => Ok(KnotSelection {
            component: l,
            chosen,
            trace,
        }),
        None => Err(GeeError::SelectionFailed(
            trace
                .iter()
                .map(|e| {
                    format!(
                        "N={}: {}",
                        e.interior_knots,
                        e.error.clone().unwrap_or_else(|| "did not converge".into())
                    )
                })
                .collect(),
        )),
    }
}
