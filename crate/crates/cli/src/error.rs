use std::path::PathBuf;

use intermodal_core::econometrics::EstimationError;
use intermodal_core::equilibrium::EquilibriumError;
use intermodal_core::instruments::InstrumentError;
use intermodal_core::montecarlo::MonteCarloError;
use intermodal_core::panel::PanelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("estimation failure: {0}")]
    Estimation(String),
    #[error("cannot write `{}`: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Output { .. } => 3,
            CliError::Solver(_) => 4,
            CliError::Estimation(_) => 5,
        }
    }
}

impl From<PanelError> for CliError {
    fn from(e: PanelError) -> Self {
        match e {
            PanelError::Config { .. } => CliError::Config(e.to_string()),
            PanelError::Equilibrium { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EquilibriumError> for CliError {
    fn from(e: EquilibriumError) -> Self {
        match e {
            EquilibriumError::Model(_)
            | EquilibriumError::InvalidSetting(..)
            | EquilibriumError::InvalidShock { .. } => CliError::Config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<InstrumentError> for CliError {
    fn from(e: InstrumentError) -> Self {
        CliError::Config(format!("instrument grouping: {e}"))
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        match e {
            EstimationError::UnknownColumn(_)
            | EstimationError::DuplicateColumn(_)
            | EstimationError::UnknownCity(_) => CliError::Config(format!("design: {e}")),
            _ => CliError::Estimation(e.to_string()),
        }
    }
}

impl From<MonteCarloError> for CliError {
    fn from(e: MonteCarloError) -> Self {
        match e {
            MonteCarloError::Panel(p) => p.into(),
            MonteCarloError::Config { .. } => CliError::Config(e.to_string()),
            MonteCarloError::ThreadPool(_) => CliError::Config(e.to_string()),
        }
    }
}
