use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::binary::BinarySampler;
use super::MvnSampler;
use crate::data::{Cluster, ClusteredDataset};
use crate::error::{GeeError, Result};
use crate::marginal::WorkingCorrelation;
use crate::stats::normal_cdf;
use crate::two_step::{ComponentFn, TruthSpec};

/// Variance of the second and third linear covariates given `z`.
pub fn a_of_z(z: f64) -> f64 {
    let s = 0.5 * (2.0 * PI * z).sin();
    (5.0 - s) / (5.0 + s)
}

/// Gaussian design with three linear and three additive covariates and
/// exchangeable errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Config {
    pub n: usize,
    pub m: usize,
    pub error_correlation: f64,
    pub latent_z_ar: f64,
    pub beta: [f64; 3],
}

impl Example1Config {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            error_correlation: 0.5,
            latent_z_ar: 0.5,
            beta: [1.0, -1.0, 0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.m < 2 {
            return Err(GeeError::Config(format!(
                "example 1 needs n >= 1 and m >= 2, got n = {}, m = {}",
                self.n, self.m
            )));
        }
        Ok(())
    }
}

fn sine_components(k: usize, scale: f64) -> Vec<ComponentFn> {
    (0..k)
        .map(|_| Arc::new(move |z: f64| scale * (2.0 * PI * z).sin()) as ComponentFn)
        .collect()
}

pub fn gen_example1<R: Rng + ?Sized>(cfg: &Example1Config, rng: &mut R) -> Result<(ClusteredDataset, TruthSpec)> {
    cfg.validate()?;
    let (n, m) = (cfg.n, cfg.m);
    let latent = MvnSampler::new(&[0.0; 3], &WorkingCorrelation::ar1(cfg.latent_z_ar).build_correlation(3)?)?;
    let errors = MvnSampler::new(
        &vec![0.0; m],
        &WorkingCorrelation::exchangeable(cfg.error_correlation).build_correlation(m)?,
    )?;
    let theta = |z: f64| (2.0 * PI * z).sin();
    let mut clusters = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = DMatrix::zeros(m, 3);
        let mut z = DMatrix::zeros(m, 3);
        for j in 0..m {
            let zs = latent.sample(rng);
            for l in 0..3 {
                z[(j, l)] = normal_cdf(zs[l]);
            }
            x[(j, 0)] = if rng.random_bool(0.5) { 0.5 } else { -0.5 };
            x[(j, 1)] = a_of_z(z[(j, 0)]).sqrt() * rng.sample::<f64, _>(StandardNormal);
            x[(j, 2)] = a_of_z(z[(j, 1)]).sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        let eps = errors.sample(rng);
        let y = (0..m)
            .map(|j| {
                let lin: f64 = (0..3).map(|k| x[(j, k)] * cfg.beta[k]).sum();
                lin + (0..3).map(|l| theta(z[(j, l)])).sum::<f64>() + eps[j]
            })
            .collect();
        clusters.push(Cluster {
            id: (i + 1).to_string(),
            y,
            x,
            z,
        });
    }
    let data = ClusteredDataset::new(
        clusters,
        vec!["x1".into(), "x2".into(), "x3".into()],
        vec!["z1".into(), "z2".into(), "z3".into()],
    )?;
    let truth = TruthSpec::new(cfg.beta.to_vec(), sine_components(3, 1.0), &data)?;
    Ok((data, truth))
}

/// Binary logit design with an intercept, two normal covariates and two
/// uniform additive covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example2Config {
    pub n: usize,
    /// Cluster size; `floor(2 sqrt(n))` when absent.
    pub m: Option<usize>,
    pub correlation: f64,
    pub beta: [f64; 3],
}

impl Example2Config {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            m: None,
            correlation: 0.1,
            beta: [0.5, -0.3, 0.3],
        }
    }

    pub fn cluster_size(&self) -> usize {
        self.m.unwrap_or_else(|| (2.0 * (self.n as f64).sqrt()).floor() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.cluster_size() < 1 {
            return Err(GeeError::Config(format!(
                "example 2 needs n >= 1 and m >= 1, got n = {}, m = {}",
                self.n,
                self.cluster_size()
            )));
        }
        Ok(())
    }
}

pub fn example2_theta1(z: f64) -> f64 {
    0.5 * (2.0 * PI * z).sin()
}

pub fn example2_theta2(z: f64) -> f64 {
    -0.5 * (z - 0.5 + (2.0 * PI * z).sin())
}

pub fn gen_example2<R: Rng + ?Sized>(cfg: &Example2Config, rng: &mut R) -> Result<(ClusteredDataset, TruthSpec)> {
    cfg.validate()?;
    let (n, m) = (cfg.n, cfg.cluster_size());
    let mut clusters = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = DMatrix::zeros(m, 3);
        let mut z = DMatrix::zeros(m, 2);
        let mut p = Vec::with_capacity(m);
        for j in 0..m {
            x[(j, 0)] = 1.0;
            x[(j, 1)] = rng.sample::<f64, _>(StandardNormal);
            x[(j, 2)] = rng.sample::<f64, _>(StandardNormal);
            z[(j, 0)] = rng.random::<f64>();
            z[(j, 1)] = rng.random::<f64>();
            let eta = (0..3).map(|k| x[(j, k)] * cfg.beta[k]).sum::<f64>()
                + example2_theta1(z[(j, 0)])
                + example2_theta2(z[(j, 1)]);
            p.push(1.0 / (1.0 + (-eta).exp()));
        }
        let y = BinarySampler::new(&p, cfg.correlation)?.sample(rng);
        clusters.push(Cluster {
            id: (i + 1).to_string(),
            y,
            x,
            z,
        });
    }
    let data = ClusteredDataset::new(
        clusters,
        vec!["intercept".into(), "x1".into(), "x2".into()],
        vec!["z1".into(), "z2".into()],
    )?;
    let functions: Vec<ComponentFn> = vec![Arc::new(example2_theta1), Arc::new(example2_theta2)];
    let truth = TruthSpec::new(cfg.beta.to_vec(), functions, &data)?;
    Ok((data, truth))
}
