//! Simulation designs, correlated samplers and the Monte Carlo driver.

mod binary;
mod examples;
mod montecarlo;

pub use binary::{binary_correlation_bounds, gen_correlated_binary, latent_correlation, BinarySampler};
pub use examples::{
    a_of_z, example2_theta1, example2_theta2, gen_example1, gen_example2, Example1Config, Example2Config,
};
pub use montecarlo::{
    format_tables, run_monte_carlo, ExampleConfig, McConfig, McReport, ProbeRecord, ReplicationFailure,
    ReplicationRecord,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GeeError, Result};

/// Multivariate normal sampler with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl MvnSampler {
    pub fn new(mean: &[f64], covariance: &DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if covariance.nrows() != k || covariance.ncols() != k {
            return Err(GeeError::DimensionMismatch(format!(
                "mean of length {k} with a {}x{} covariance",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| GeeError::NotPositiveDefinite("covariance is not positive definite".into()))?;
        Ok(Self {
            mean: DVector::from_column_slice(mean),
            factor: chol.l(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let e = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.mean + &self.factor * e).as_slice().to_vec()
    }
}

/// One draw from `N(mean, covariance)`.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &[f64], covariance: &DMatrix<f64>, rng: &mut R) -> Result<Vec<f64>> {
    Ok(MvnSampler::new(mean, covariance)?.sample(rng))
}

/// Seeded generator for replication `stream` of a study with base `seed`.
pub fn replication_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
