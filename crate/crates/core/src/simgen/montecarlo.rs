use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::examples::{gen_example1, gen_example2, Example1Config, Example2Config};
use super::replication_rng;
use crate::data::ClusteredDataset;
use crate::error::{GeeError, Result};
use crate::gee::SolverControl;
use crate::inference::{estimate_sigma, pointwise_ci, sandwich_beta, sandwich_theta, ProjectionWeight};
use crate::knots::{select_ns, step1_knots, step2_candidates};
use crate::marginal::{CorrelationStructure, LinkFamily};
use crate::stats::two_sided_critical;
use crate::two_step::{fit_component, fit_oracle, fit_pilot, AlphaSpec, ComponentFit, GeeModelSpec, TruthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "example", rename_all = "snake_case")]
pub enum ExampleConfig {
    Continuous(Example1Config),
    Binary(Example2Config),
}

impl ExampleConfig {
    fn link(&self) -> LinkFamily {
        match self {
            ExampleConfig::Continuous(_) => LinkFamily::gaussian(),
            ExampleConfig::Binary(_) => LinkFamily::LogitBernoulli,
        }
    }

    fn generate<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<(ClusteredDataset, TruthSpec)> {
        match self {
            ExampleConfig::Continuous(c) => gen_example1(c, rng),
            ExampleConfig::Binary(c) => gen_example2(c, rng),
        }
    }

    fn beta(&self) -> Vec<f64> {
        match self {
            ExampleConfig::Continuous(c) => c.beta.to_vec(),
            ExampleConfig::Binary(c) => c.beta.to_vec(),
        }
    }

    fn describe(&self) -> String {
        match self {
            ExampleConfig::Continuous(c) => format!("example 1 (gaussian), n = {}, m = {}", c.n, c.m),
            ExampleConfig::Binary(c) => format!("example 2 (binary), n = {}, m = {}", c.n, c.cluster_size()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub example: ExampleConfig,
    pub structure: CorrelationStructure,
    pub alpha: AlphaSpec,
    pub degree: usize,
    /// Nominal confidence level of the intervals, e.g. 0.95.
    pub level: f64,
    pub nsim: usize,
    pub seed: u64,
    /// Point at which pointwise intervals for each component are recorded.
    pub probe_z: f64,
    pub projection: ProjectionWeight,
    pub solver: SolverControl,
}

impl McConfig {
    pub fn new(example: ExampleConfig, structure: CorrelationStructure, nsim: usize, seed: u64) -> Self {
        Self {
            example,
            structure,
            alpha: AlphaSpec::Estimate,
            degree: 3,
            level: 0.95,
            nsim,
            seed,
            probe_z: 0.5,
            projection: ProjectionWeight::Weighted,
            solver: SolverControl::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nsim < 1 {
            return Err(GeeError::Config("nsim must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(GeeError::Domain { what: "level", value: self.level });
        }
        if !(0.0..=1.0).contains(&self.probe_z) {
            return Err(GeeError::Domain { what: "probe_z", value: self.probe_z });
        }
        self.solver.validate()
    }
}

/// Estimates and intervals for one component at the probe point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub truth: f64,
    pub two_step: f64,
    pub two_step_sd: f64,
    pub two_step_covered: bool,
    pub oracle: f64,
    pub oracle_sd: f64,
    pub oracle_covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub alpha_hat: f64,
    pub pilot_knots: usize,
    pub beta: Vec<f64>,
    pub beta_se: Vec<f64>,
    pub beta_covered: Vec<bool>,
    pub selected_knots: Vec<usize>,
    pub ise_pilot: Vec<f64>,
    pub ise_two_step: Vec<f64>,
    pub ise_oracle: Vec<f64>,
    pub efficiency: Vec<f64>,
    pub probe: Vec<ProbeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub completed: usize,
    pub excluded: usize,
    pub failures: Vec<ReplicationFailure>,
    pub beta_true: Vec<f64>,
    pub coverage: Vec<f64>,
    pub rmse: Vec<f64>,
    pub abs_bias: Vec<f64>,
    pub mise_pilot: Vec<f64>,
    pub mise_two_step: Vec<f64>,
    pub mise_oracle: Vec<f64>,
    /// Efficiency samples per component, one per completed replication.
    pub efficiency: Vec<Vec<f64>>,
    pub efficiency_median: Vec<f64>,
    pub probe_coverage_two_step: Vec<f64>,
    pub probe_coverage_oracle: Vec<f64>,
    pub records: Vec<ReplicationRecord>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl McReport {
    /// Fails when more than 2% of the replications were excluded.
    pub fn validate(&self) -> Result<()> {
        let total = self.completed + self.excluded;
        if self.completed == 0 || self.excluded * 50 > total {
            return Err(GeeError::TooManyFailures {
                excluded: self.excluded,
                total,
            });
        }
        Ok(())
    }
}

fn ise(values: &[f64], truth: &[f64]) -> f64 {
    values.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / values.len() as f64
}

fn fitted_on(basis_design: nalgebra::DMatrix<f64>, gamma: &[f64]) -> Vec<f64> {
    (basis_design * DVector::from_column_slice(gamma)).as_slice().to_vec()
}

fn require_converged(fit: &ComponentFit, what: &str) -> Result<()> {
    if !fit.solution.converged {
        return Err(GeeError::NotConverged {
            what: format!("{what} fit of component {}", fit.component),
            iterations: fit.solution.iterations,
        });
    }
    Ok(())
}

fn replicate(cfg: &McConfig, r: usize) -> Result<ReplicationRecord> {
    let mut rng = replication_rng(cfg.seed, r as u64);
    let (data, truth) = cfg.example.generate(&mut rng)?;
    let spec = GeeModelSpec {
        link: cfg.example.link(),
        structure: cfg.structure,
        alpha: cfg.alpha,
        degree: cfg.degree,
        projection: cfg.projection,
        solver: cfg.solver,
    };
    let order = cfg.degree + 1;
    let n_t = data.n_obs();
    let pilot_knots = step1_knots(n_t, order)?;
    let pilot = fit_pilot(&data, &spec, pilot_knots)?;
    if !pilot.solution.converged {
        return Err(GeeError::NotConverged {
            what: "pilot fit".into(),
            iterations: pilot.solution.iterations,
        });
    }
    let sigma = estimate_sigma(&pilot.problem(&data)?, &pilot.coefficients())?;
    let sb = sandwich_beta(&data, &pilot, &sigma, cfg.projection)?;
    let beta_se = sb.standard_errors();
    let alpha = 1.0 - cfg.level;
    let crit = two_sided_critical(alpha)?;
    let beta_covered = pilot
        .beta
        .iter()
        .zip(&beta_se)
        .zip(&truth.beta)
        .map(|((b, se), t)| (b - t).abs() <= crit * se)
        .collect();
    let candidates = step2_candidates(n_t, order)?;
    let d2 = data.d2();
    let mut rec = ReplicationRecord {
        replication: r,
        alpha_hat: pilot.working.alpha,
        pilot_knots,
        beta: pilot.beta.clone(),
        beta_se,
        beta_covered,
        selected_knots: Vec::with_capacity(d2),
        ise_pilot: Vec::with_capacity(d2),
        ise_two_step: Vec::with_capacity(d2),
        ise_oracle: Vec::with_capacity(d2),
        efficiency: Vec::with_capacity(d2),
        probe: Vec::with_capacity(d2),
    };
    for l in 0..d2 {
        let sel = select_ns(&data, &pilot, l, candidates, &cfg.solver)?;
        let two = fit_component(&data, &pilot, l, sel.chosen, Some(&sigma), &cfg.solver)?;
        require_converged(&two, "two-step")?;
        let mut or = fit_oracle(
            &data,
            &truth,
            pilot.link,
            pilot.working,
            l,
            sel.chosen,
            cfg.degree,
            None,
            &cfg.solver,
        )?;
        require_converged(&or, "oracle")?;
        let sigma_or = estimate_sigma(&or.problem(&data)?, &or.gamma)?;
        or.covariance = Some(sandwich_theta(&data, &or, &sigma_or)?);

        let zs = data.z_column(l);
        let target: Vec<f64> = zs.iter().map(|&z| truth.centered(l, z)).collect();
        let ise_p = ise(&fitted_on(pilot.bases[l].design(&zs)?, &pilot.gamma[l]), &target);
        let ise_t = ise(&fitted_on(two.basis.design(&zs)?, &two.gamma), &target);
        let ise_o = ise(&fitted_on(or.basis.design(&zs)?, &or.gamma), &target);
        let t0 = truth.centered(l, cfg.probe_z);
        let ci_t = pointwise_ci(&two, cfg.probe_z, alpha)?;
        let ci_o = pointwise_ci(&or, cfg.probe_z, alpha)?;
        rec.selected_knots.push(sel.chosen);
        rec.ise_pilot.push(ise_p);
        rec.ise_two_step.push(ise_t);
        rec.ise_oracle.push(ise_o);
        rec.efficiency.push((ise_t / ise_o).sqrt());
        rec.probe.push(ProbeRecord {
            truth: t0,
            two_step: ci_t.estimate,
            two_step_sd: ci_t.sd,
            two_step_covered: ci_t.contains(t0),
            oracle: ci_o.estimate,
            oracle_sd: ci_o.sd,
            oracle_covered: ci_o.contains(t0),
        });
    }
    Ok(rec)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn aggregate(cfg: &McConfig, outcomes: Vec<Result<ReplicationRecord>>) -> McReport {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(ReplicationFailure {
                replication: r,
                code: e.code().to_string(),
                message: e.to_string(),
            }),
        }
    }
    let beta_true = cfg.example.beta();
    let p = beta_true.len();
    let d2 = records.first().map(|r| r.ise_two_step.len()).unwrap_or(0);
    let per_coef = |f: &dyn Fn(&ReplicationRecord, usize) -> f64| -> Vec<f64> {
        (0..p).map(|k| mean(records.iter().map(|r| f(r, k)))).collect()
    };
    let per_comp = |f: &dyn Fn(&ReplicationRecord, usize) -> f64| -> Vec<f64> {
        (0..d2).map(|l| mean(records.iter().map(|r| f(r, l)))).collect()
    };
    let coverage = per_coef(&|r, k| f64::from(u8::from(r.beta_covered[k])));
    let rmse = per_coef(&|r, k| (r.beta[k] - beta_true[k]).powi(2))
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let abs_bias = per_coef(&|r, k| r.beta[k])
        .iter()
        .zip(&beta_true)
        .map(|(m, t)| (m - t).abs())
        .collect();
    let efficiency: Vec<Vec<f64>> = (0..d2)
        .map(|l| records.iter().map(|r| r.efficiency[l]).collect())
        .collect();
    McReport {
        config: *cfg,
        completed: records.len(),
        excluded: failures.len(),
        failures,
        coverage,
        rmse,
        abs_bias,
        mise_pilot: per_comp(&|r, l| r.ise_pilot[l]),
        mise_two_step: per_comp(&|r, l| r.ise_two_step[l]),
        mise_oracle: per_comp(&|r, l| r.ise_oracle[l]),
        efficiency_median: efficiency.iter().cloned().map(median).collect(),
        efficiency,
        probe_coverage_two_step: per_comp(&|r, l| f64::from(u8::from(r.probe[l].two_step_covered))),
        probe_coverage_oracle: per_comp(&|r, l| f64::from(u8::from(r.probe[l].oracle_covered))),
        beta_true,
        records,
        wall_time_secs: 0.0,
    }
}

/// Runs `cfg.nsim` independent replications, in parallel on `threads`
/// workers (all available cores when `None`). Replication `r` draws from
/// stream `r` of the seeded generator, so the report does not depend on
/// the thread count.
pub fn run_monte_carlo(cfg: &McConfig, threads: Option<usize>) -> Result<McReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| GeeError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<ReplicationRecord>> =
        pool.install(|| (0..cfg.nsim).into_par_iter().map(|r| replicate(cfg, r)).collect());
    let mut report = aggregate(cfg, outcomes);
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Aligned text tables of the linear-coefficient and additive-component
/// summaries.
pub fn format_tables(report: &McReport) -> String {
    let cfg = &report.config;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{}, working correlation {}, nsim = {} ({} completed, {} excluded)",
        cfg.example.describe(),
        cfg.structure.label(),
        cfg.nsim,
        report.completed,
        report.excluded
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Linear coefficients ({:.0}% intervals)", 100.0 * cfg.level);
    let _ = writeln!(s, "{:<8}{:>10}{:>12}{:>12}{:>12}", "coef", "true", "coverage", "RMSE", "|Bias|");
    for k in 0..report.beta_true.len() {
        let _ = writeln!(
            s,
            "{:<8}{:>10.4}{:>12.3}{:>12.4}{:>12.4}",
            format!("beta{k}"),
            report.beta_true[k],
            report.coverage[k],
            report.rmse[k],
            report.abs_bias[k]
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Additive components (MISE)");
    let _ = writeln!(
        s,
        "{:<8}{:>12}{:>12}{:>12}{:>12}{:>14}{:>14}",
        "comp", "pilot", "two-step", "oracle", "med. eff", "cov two-step", "cov oracle"
    );
    for l in 0..report.mise_two_step.len() {
        let _ = writeln!(
            s,
            "{:<8}{:>12.5}{:>12.5}{:>12.5}{:>12.4}{:>14.3}{:>14.3}",
            format!("theta{}", l + 1),
            report.mise_pilot[l],
            report.mise_two_step[l],
            report.mise_oracle[l],
            report.efficiency_median[l],
            report.probe_coverage_two_step[l],
            report.probe_coverage_oracle[l]
        );
    }
    let _ = writeln!(s, "(coverage columns refer to pointwise intervals at z = {})", cfg.probe_z);
    s
}
