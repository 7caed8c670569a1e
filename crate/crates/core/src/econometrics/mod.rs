//! Panel estimation of the first-differenced coach pricing equation:
//! dummy-variable fixed effects, OLS, 2SLS and two-step efficient GMM with a
//! within-city Bartlett HAC weight, plus the usual diagnostics and a
//! publication-style report.

mod design;
mod estimate;
mod linalg;
mod report;

pub use design::{build_design, within_transform, CityDummies, Design, DesignSpec};
pub use estimate::{
    anderson_test, gmm_objective, gmm_two_step, moment_covariance, ols, two_stage_least_squares, AndersonTest,
    ChiSquareTest, EstimationResult, FTest, GmmOptions, ANDERSON_FLOOR,
};
pub(crate) use report::csv_float;
pub use report::{format_cell, render_csv, render_text, significance_marker, CoefficientRow, ReportDocument};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` listed more than once")]
    DuplicateColumn(String),
    #[error("base city `{0}` is not in the panel")]
    UnknownCity(String),
    #[error("rank-deficient {matrix}: column(s) {} are linear combinations of earlier columns", columns.join(", "))]
    RankDeficient { matrix: &'static str, columns: Vec<String> },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{observations} observations are not enough for {parameters} parameters")]
    TooFewObservations { observations: usize, parameters: usize },
    #[error("under-identified: {instruments} excluded instrument(s) for {endogenous} endogenous regressor(s)")]
    UnderIdentified { instruments: usize, endogenous: usize },
    #[error(
        "moment covariance is not positive definite (smallest eigenvalue {min_eigenvalue:e}); \
         add a ridge to the weight matrix or change the number of HAC lags"
    )]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("design has no regressors")]
    EmptyDesign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ols,
    Tsls,
    #[serde(rename = "gmm2step")]
    Gmm2Step,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Ols => "ols",
            EstimatorKind::Tsls => "tsls",
            EstimatorKind::Gmm2Step => "gmm2step",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            EstimatorKind::Ols => "ordinary least squares",
            EstimatorKind::Tsls => "two-stage least squares",
            EstimatorKind::Gmm2Step => "two-step efficient GMM",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermRole {
    Constant,
    Exogenous,
    Endogenous,
    CityDummy,
    TimeDummy,
}

/// A named regressor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub role: TermRole,
}

impl Term {
    pub fn new(name: impl Into<String>, role: TermRole) -> Self {
        Self {
            name: name.into(),
            role,
        }
    }
}
