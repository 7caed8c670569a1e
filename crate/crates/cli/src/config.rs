//! TOML run configuration: one optional section per subcommand.

use std::path::{Path, PathBuf};

use intermodal_core::econometrics::{DesignSpec, EstimatorKind, GmmOptions};
use intermodal_core::equilibrium::{IterationSettings, ShockScenario};
use intermodal_core::model::ModeParams;
use intermodal_core::montecarlo::MonteCarloConfig;
use intermodal_core::panel::{DgpConfig, Variable};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for generation and Monte Carlo; `--seed` overrides it.
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputSection,
    pub equilibrium: Option<EquilibriumSection>,
    pub shock: Option<ShockSection>,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub montecarlo: MonteCarloConfig,
    /// Directory of the config file; relative input paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSection {
    pub coach: ModeParams,
    pub airline: ModeParams,
    #[serde(default = "unit_income")]
    pub income: f64,
    #[serde(default)]
    pub iteration: IterationSettings,
}

fn unit_income() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSection {
    pub scenarios: Vec<ShockScenario>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub n_cities: usize,
    pub n_months: usize,
    /// Output file name inside the output directory.
    pub file: PathBuf,
    pub dgp: DgpConfig,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            n_cities: 7,
            n_months: 75,
            file: PathBuf::from("panel.csv"),
            dgp: DgpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    /// Panel CSV; defaults to the generated panel in the output directory.
    pub panel: Option<PathBuf>,
    pub estimator: EstimatorKind,
    pub design: DesignSpec,
    /// Instrument groups as lists of city labels; default is two halves.
    pub grouping: Option<Vec<Vec<String>>>,
    pub gmm: GmmOptions,
    pub deflation: Option<DeflationSection>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            panel: None,
            estimator: EstimatorKind::Gmm2Step,
            design: DesignSpec::default(),
            grouping: None,
            gmm: GmmOptions::default(),
            deflation: None,
        }
    }
}

/// Subtracts a monthly inflation rate (percent) from nominal percent changes.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeflationSection {
    /// CSV with columns `month,inflation`.
    pub file: PathBuf,
    #[serde(default = "all_price_columns")]
    pub columns: Vec<String>,
}

fn all_price_columns() -> Vec<String> {
    Variable::ALL.iter().map(|v| v.column_name().to_string()).collect()
}

impl RunConfig {
    pub fn from_str(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read `{}`: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, &base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies a master seed to every random component.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.generate.dgp.seed = seed;
        self.montecarlo.master_seed = seed;
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.output.dir) {
            (Some(dir), _) => dir.to_path_buf(),
            (None, Some(dir)) => self.resolve(dir),
            (None, None) => PathBuf::from("."),
        }
    }

    pub fn equilibrium(&self) -> Result<&EquilibriumSection, CliError> {
        self.equilibrium
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [equilibrium] section".into()))
    }
}
