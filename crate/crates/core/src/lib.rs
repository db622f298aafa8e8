//! Two-step spline GEE estimation for generalized additive partially linear
//! models with clustered responses.

pub mod cli;
pub mod data;
pub mod error;
pub mod gee;
pub mod inference;
pub mod io;
pub mod knots;
pub mod marginal;
pub mod pipeline;
pub mod spline_basis;
pub mod simgen;
pub mod stats;
pub mod two_step;

pub use data::{Cluster, ClusteredDataset, ZScale};
pub use error::{GeeError, Result};
pub use gee::{GeeCluster, GeeProblem, GeeSolution, SolverControl};
pub use marginal::{CorrelationStructure, LinkFamily, WorkingCorrelation};
pub use spline_basis::{CenteredSplineBasis, KnotVector};
pub use two_step::{AlphaSpec, ComponentFit, GeeModelSpec, PilotFit, TruthSpec};
pub use pipeline::{fit_dataset, Family, FitOptions, FitReport, FittedModel};
