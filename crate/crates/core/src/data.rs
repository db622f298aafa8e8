use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GeeError, Result};

/// Observations of one subject: `m` responses with their linear (`m x d1`)
/// and additive (`m x d2`) covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: String,
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Affine map used to bring an additive covariate onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScale {
    pub min: f64,
    pub max: f64,
}

impl ZScale {
    pub const UNIT: ZScale = ZScale { min: 0.0, max: 1.0 };

    pub fn to_unit(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn to_original(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset {
    pub clusters: Vec<Cluster>,
    pub linear_names: Vec<String>,
    pub additive_names: Vec<String>,
    pub z_scales: Vec<ZScale>,
}

impl ClusteredDataset {
    pub fn new(
        clusters: Vec<Cluster>,
        linear_names: Vec<String>,
        additive_names: Vec<String>,
    ) -> Result<Self> {
        let d2 = additive_names.len();
        let ds = Self {
            clusters,
            linear_names,
            additive_names,
            z_scales: vec![ZScale::UNIT; d2],
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let d1 = self.d1();
        let d2 = self.d2();
        if self.clusters.is_empty() {
            return Err(GeeError::Config("dataset has no clusters".into()));
        }
        if self.z_scales.len() != d2 {
            return Err(GeeError::DimensionMismatch("one z scale per additive column".into()));
        }
        for c in &self.clusters {
            let m = c.len();
            if m == 0 {
                return Err(GeeError::EmptyCluster(c.id.clone()));
            }
            if c.x.nrows() != m || c.x.ncols() != d1 || c.z.nrows() != m || c.z.ncols() != d2 {
                return Err(GeeError::DimensionMismatch(format!(
                    "cluster '{}' has inconsistent covariate shapes",
                    c.id
                )));
            }
            for v in c.z.iter() {
                if !(0.0..=1.0).contains(v) {
                    return Err(GeeError::Domain { what: "z", value: *v });
                }
            }
            if c.y.iter().chain(c.x.iter()).any(|v| !v.is_finite()) {
                return Err(GeeError::NumericDomain(format!(
                    "non-finite value in cluster '{}'",
                    c.id
                )));
            }
        }
        Ok(())
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_obs(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).sum()
    }

    pub fn d1(&self) -> usize {
        self.linear_names.len()
    }

    pub fn d2(&self) -> usize {
        self.additive_names.len()
    }

    pub fn max_cluster_size(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).max().unwrap_or(0)
    }

    pub fn equal_cluster_sizes(&self) -> bool {
        let m = self.clusters[0].len();
        self.clusters.iter().all(|c| c.len() == m)
    }

    /// All observed values of additive covariate `l`, cluster by cluster.
    pub fn z_column(&self, l: usize) -> Vec<f64> {
        self.clusters
            .iter()
            .flat_map(|c| c.z.column(l).iter().copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn responses(&self) -> Vec<Vec<f64>> {
        self.clusters.iter().map(|c| c.y.clone()).collect()
    }
}
