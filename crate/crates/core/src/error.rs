use thiserror::Error;

pub type Result<T> = std::result::Result<T, GeeError>;

#[derive(Debug, Error)]
pub enum GeeError {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("{what} = {value} is outside its admissible range")]
    Domain { what: &'static str, value: f64 },

    #[error("non-finite value encountered: {0}")]
    NumericDomain(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("fitted mean saturated at 0 or 1 in cluster {cluster}, row {row}")]
    Saturation { cluster: usize, row: usize },

    #[error("working covariance of cluster {cluster} is not positive definite")]
    IllConditionedCovariance { cluster: usize },

    #[error("information matrix is singular: {0}")]
    SingularInformation(String),

    #[error("design matrix is rank deficient ({0}); try fewer interior knots")]
    RankDeficientDesign(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NotConverged { what: String, iterations: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("working correlation not identifiable: {0}")]
    NotIdentifiable(String),

    #[error("simultaneous bands require linear splines, got degree {0}")]
    BandRequiresLinearSplines(usize),

    #[error("knot selection failed for every candidate: {}", .0.join("; "))]
    SelectionFailed(Vec<String>),

    #[error("infeasible binary correlation {rho} for marginals ({p1}, {p2}); admissible range [{lower}, {upper}]")]
    InfeasibleCorrelation {
        p1: f64,
        p2: f64,
        rho: f64,
        lower: f64,
        upper: f64,
    },

    #[error("covariance matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("{excluded} of {total} replications failed (limit 2%)")]
    TooManyFailures { excluded: usize, total: usize },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("row {row}, column '{column}': {message}")]
    BadCell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("cluster '{0}' has no observations")]
    EmptyCluster(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GeeError {
    /// Stable machine-readable code, one per variant.
    pub fn code(&self) -> &'static str {
        match self {
            GeeError::ParameterDomain(_) => "parameter_domain",
            GeeError::Domain { .. } => "domain",
            GeeError::NumericDomain(_) => "numeric_domain",
            GeeError::DegenerateDesign(_) => "degenerate_design",
            GeeError::DegenerateVariance(_) => "degenerate_variance",
            GeeError::Saturation { .. } => "saturation",
            GeeError::IllConditionedCovariance { .. } => "ill_conditioned_covariance",
            GeeError::SingularInformation(_) => "singular_information",
            GeeError::RankDeficientDesign(_) => "rank_deficient_design",
            GeeError::NotConverged { .. } => "not_converged",
            GeeError::DimensionMismatch(_) => "dimension_mismatch",
            GeeError::NotIdentifiable(_) => "not_identifiable",
            GeeError::BandRequiresLinearSplines(_) => "band_requires_linear_splines",
            GeeError::SelectionFailed(_) => "selection_failed",
            GeeError::InfeasibleCorrelation { .. } => "infeasible_correlation",
            GeeError::NotPositiveDefinite(_) => "not_positive_definite",
            GeeError::TooManyFailures { .. } => "too_many_failures",
            GeeError::MissingColumn(_) => "missing_column",
            GeeError::BadCell { .. } => "bad_cell",
            GeeError::EmptyCluster(_) => "empty_cluster",
            GeeError::Config(_) => "config",
            GeeError::Io(_) => "io",
            GeeError::Csv(_) => "csv",
            GeeError::Json(_) => "json",
        }
    }

    /// Structured context for the error JSON emitted by the CLI.
    pub fn context(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            GeeError::Domain { what, value } => json!({ "what": what, "value": value }),
            GeeError::Saturation { cluster, row } => json!({ "cluster": cluster, "row": row }),
            GeeError::IllConditionedCovariance { cluster } => json!({ "cluster": cluster }),
            GeeError::NotConverged { what, iterations } => json!({ "what": what, "iterations": iterations }),
            GeeError::BandRequiresLinearSplines(q) => json!({ "degree": q }),
            GeeError::SelectionFailed(d) => json!({ "candidates": d }),
            GeeError::InfeasibleCorrelation {
                p1,
                p2,
                rho,
                lower,
                upper,
            } => json!({ "p1": p1, "p2": p2, "rho": rho, "lower": lower, "upper": upper }),
            GeeError::TooManyFailures { excluded, total } => {
                json!({ "excluded": excluded, "total": total })
            }
            GeeError::MissingColumn(c) => json!({ "column": c }),
            GeeError::BadCell { row, column, .. } => json!({ "row": row, "column": column }),
            GeeError::EmptyCluster(c) => json!({ "cluster": c }),
            _ => json!({}),
        }
    }
}
