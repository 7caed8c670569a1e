//! Monte Carlo replications of generate -> instrument -> estimate.
//!
//! Replication `i` draws its panel with seed [`replication_seed`]`(master, i)`.
//! Replications may run on any number of threads; results are collected in
//! index order and reduced sequentially, so the summary does not depend on
//! the thread count.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::econometrics::{
    build_design, csv_float, gmm_two_step, ols, two_stage_least_squares, AndersonTest, ChiSquareTest, DesignSpec,
    EstimationError, EstimationResult, EstimatorKind, GmmOptions, TermRole,
};
use crate::instruments::{build_leave_one_out, Grouping, InstrumentError};
use crate::panel::{generate_panel_detailed, DgpConfig, PanelError, Variable};

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("invalid Monte Carlo setting `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("could not start thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Error)]
pub enum ReplicationError {
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Instruments(#[from] InstrumentError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// Source of the excluded instruments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstrumentScheme {
    /// Leave-one-out group means; `groups = None` uses two halves.
    LeaveOneOut {
        #[serde(default)]
        groups: Option<Vec<Vec<String>>>,
    },
    /// Independent standard normal columns (irrelevant instruments).
    Noise { count: usize },
}

impl Default for InstrumentScheme {
    fn default() -> Self {
        InstrumentScheme::LeaveOneOut { groups: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub replications: usize,
    pub master_seed: u64,
    pub n_cities: usize,
    pub n_months: usize,
    /// Generator settings; its `seed` is replaced per replication.
    pub dgp: DgpConfig,
    pub design: DesignSpec,
    pub instruments: InstrumentScheme,
    /// When non-zero, `invalid_loading * eps_jt` is added to the last
    /// excluded instrument, making it correlated with the error.
    pub invalid_loading: f64,
    pub estimators: Vec<EstimatorKind>,
    pub gmm: GmmOptions,
    /// Nominal size of the reported test rejection rates.
    pub level: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            replications: 500,
            master_seed: 20051130,
            n_cities: 7,
            n_months: 75,
            dgp: DgpConfig::default(),
            design: DesignSpec {
                time_dummies: false,
                ..DesignSpec::default()
            },
            instruments: InstrumentScheme::default(),
            invalid_loading: 0.0,
            estimators: vec![EstimatorKind::Ols, EstimatorKind::Tsls, EstimatorKind::Gmm2Step],
            gmm: GmmOptions::default(),
            level: 0.05,
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<(), MonteCarloError> {
        let cfg = |field: &'static str, reason: String| MonteCarloError::Config { field, reason };
        if self.replications < 2 {
            return Err(cfg("replications", format!("{} < 2", self.replications)));
        }
        if self.estimators.is_empty() {
            return Err(cfg("estimators", "no estimators selected".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(cfg("level", format!("{} is not in (0, 1)", self.level)));
        }
        if !self.invalid_loading.is_finite() {
            return Err(cfg("invalid_loading", "must be finite".into()));
        }
        if let InstrumentScheme::Noise { count: 0 } = self.instruments {
            return Err(cfg("instruments", "noise scheme needs at least one column".into()));
        }
        self.dgp.validate(self.n_cities, self.n_months)?;
        Ok(())
    }
}

/// Seed of replication `index`: the SplitMix64 output for state
/// `master + (index + 1) * 0x9E3779B97F4A7C15`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f(0..n)` on `threads` workers (or the global pool) and returns the
/// results in index order.
pub fn parallel_replications<T, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<T>, MonteCarloError>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let run = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
    match threads {
        None => Ok(run()),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| MonteCarloError::ThreadPool(e.to_string()))
            .map(|pool| pool.install(run)),
    }
}

/// Non-dummy estimates and test statistics of one fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub hansen_j: Option<ChiSquareTest>,
    pub anderson: Option<AndersonTest>,
}

impl From<&EstimationResult> for FitSummary {
    fn from(r: &EstimationResult) -> Self {
        let keep: Vec<usize> = (0..r.terms.len())
            .filter(|&i| {
                matches!(
                    r.terms[i].role,
                    TermRole::Constant | TermRole::Exogenous | TermRole::Endogenous
                )
            })
            .collect();
        Self {
            names: keep.iter().map(|&i| r.terms[i].name.clone()).collect(),
            estimates: keep.iter().map(|&i| r.coefficients[i]).collect(),
            std_errors: keep.iter().map(|&i| r.std_errors[i]).collect(),
            hansen_j: r.hansen_j,
            anderson: r.anderson,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub index: usize,
    pub seed: u64,
    pub fits: Vec<(EstimatorKind, Result<FitSummary, String>)>,
}

fn excluded_instruments(
    config: &MonteCarloConfig,
    panel: &crate::panel::PanelDataset,
    errors: &[f64],
    seed: u64,
) -> Result<DMatrix<f64>, ReplicationError> {
    let mut z = match &config.instruments {
        InstrumentScheme::LeaveOneOut { groups } => {
            let grouping = match groups {
                Some(g) => Grouping::new(g.clone())?,
                None => Grouping::halves(panel.city_ids()),
            };
            build_leave_one_out(panel, &grouping)?.into_matrix()
        }
        InstrumentScheme::Noise { count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            DMatrix::from_fn(panel.len(), *count, |_, _| StandardNormal.sample(&mut rng))
        }
    };
    if config.invalid_loading != 0.0 {
        let last = z.ncols() - 1;
        for (r, e) in errors.iter().enumerate() {
            z[(r, last)] += config.invalid_loading * e;
        }
    }
    Ok(z)
}

pub fn run_replication(config: &MonteCarloConfig, index: usize) -> ReplicationOutcome {
    let seed = replication_seed(config.master_seed, index as u64);
    let prepared = (|| -> Result<_, ReplicationError> {
        let dgp = DgpConfig {
            seed,
            ..config.dgp.clone()
        };
        let g = generate_panel_detailed(&dgp, config.n_cities, config.n_months)?;
        let design = build_design(&g.panel, &config.design)?;
        let z = excluded_instruments(config, &g.panel, &g.errors, seed)?;
        Ok((design, z))
    })();
    let fits = config
        .estimators
        .iter()
        .map(|&kind| {
            let fit = match &prepared {
                Err(e) => Err(e.to_string()),
                Ok((design, z)) => match kind {
                    EstimatorKind::Ols => ols(&design.all_exogenous()),
                    EstimatorKind::Tsls => two_stage_least_squares(design, z),
                    EstimatorKind::Gmm2Step => gmm_two_step(design, z, config.gmm),
                }
                .map(|r| FitSummary::from(&r))
                .map_err(|e| e.to_string()),
            };
            (kind, fit)
        })
        .collect();
    ReplicationOutcome { index, seed, fits }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientSummary {
    pub estimator: EstimatorKind,
    pub name: String,
    pub truth: Option<f64>,
    pub replications: usize,
    pub mean: f64,
    pub sd: f64,
    /// Monte Carlo standard error of the mean, `sd / sqrt(R)`.
    pub mc_se: f64,
    pub bias: Option<f64>,
    /// `bias / mc_se`.
    pub bias_z: Option<f64>,
    pub mean_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestSummary {
    pub estimator: EstimatorKind,
    pub test: String,
    pub level: f64,
    pub replications: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationFailure {
    pub index: usize,
    pub estimator: EstimatorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub replications: usize,
    pub master_seed: u64,
    pub coefficients: Vec<CoefficientSummary>,
    pub tests: Vec<TestSummary>,
    pub failures: Vec<ReplicationFailure>,
}

impl MonteCarloSummary {
    pub fn coefficient(&self, estimator: EstimatorKind, name: &str) -> Option<&CoefficientSummary> {
        self.coefficients
            .iter()
            .find(|c| c.estimator == estimator && c.name == name)
    }

    pub fn test(&self, estimator: EstimatorKind, test: &str) -> Option<&TestSummary> {
        self.tests.iter().find(|t| t.estimator == estimator && t.test == test)
    }

    pub fn coefficients_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "estimator",
            "coefficient",
            "truth",
            "replications",
            "mean",
            "sd",
            "mc_se",
            "bias",
            "bias_z",
            "mean_std_error",
        ])
        .expect("in-memory write");
        let opt = |v: Option<f64>| v.map(csv_float).unwrap_or_default();
        for c in &self.coefficients {
            w.write_record([
                c.estimator.label().to_string(),
                c.name.clone(),
                opt(c.truth),
                c.replications.to_string(),
                csv_float(c.mean),
                csv_float(c.sd),
                csv_float(c.mc_se),
                opt(c.bias),
                opt(c.bias_z),
                csv_float(c.mean_std_error),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
    }

    pub fn tests_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "estimator",
            "test",
            "level",
            "replications",
            "rejections",
            "rejection_rate",
        ])
        .expect("in-memory write");
        for t in &self.tests {
            w.write_record([
                t.estimator.label().to_string(),
                t.test.clone(),
                csv_float(t.level),
                t.replications.to_string(),
                t.rejections.to_string(),
                csv_float(t.rejection_rate),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
    }
}

fn true_value(config: &MonteCarloConfig, name: &str) -> Option<f64> {
    match Variable::from_column_name(name)? {
        Variable::Coach => None,
        v => Some(config.dgp.kappa.get(v)),
    }
}

/// Reduces replication outcomes (in index order) to the summary.
pub fn summarize(config: &MonteCarloConfig, outcomes: &[ReplicationOutcome]) -> MonteCarloSummary {
    let mut coefficients = Vec::new();
    let mut tests = Vec::new();
    let mut failures = Vec::new();
    for (slot, &kind) in config.estimators.iter().enumerate() {
        let fits: Vec<&FitSummary> = outcomes
            .iter()
            .filter_map(|o| match &o.fits[slot].1 {
                Ok(f) => Some(f),
                Err(message) => {
                    failures.push(ReplicationFailure {
                        index: o.index,
                        estimator: kind,
                        message: message.clone(),
                    });
                    None
                }
            })
            .collect();
        let Some(first) = fits.first() else { continue };
        for (c, name) in first.names.iter().enumerate() {
            let values: Vec<f64> = fits.iter().map(|f| f.estimates[c]).collect();
            let r = values.len() as f64;
            let mean = values.iter().sum::<f64>() / r;
            let sd = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
            } else {
                f64::NAN
            };
            let mc_se = sd / r.sqrt();
            let truth = true_value(config, name);
            let bias = truth.map(|t| mean - t);
            coefficients.push(CoefficientSummary {
                estimator: kind,
                name: name.clone(),
                truth,
                replications: values.len(),
                mean,
                sd,
                mc_se,
                bias,
                bias_z: bias.map(|b| if mc_se > 0.0 { b / mc_se } else { f64::NAN }),
                mean_std_error: fits.iter().map(|f| f.std_errors[c]).sum::<f64>() / r,
            });
        }
        let mut push_test = |test: &str, p: Vec<f64>| {
            if p.is_empty() {
                return;
            }
            let rejections = p.iter().filter(|&&p| p < config.level).count();
            tests.push(TestSummary {
                estimator: kind,
                test: test.into(),
                level: config.level,
                replications: p.len(),
                rejections,
                rejection_rate: rejections as f64 / p.len() as f64,
            });
        };
        // Exactly identified J tests (df 0) carry no information.
        let hansen = fits
            .iter()
            .filter_map(|f| f.hansen_j)
            .filter(|j| j.df > 0)
            .map(|j| j.p_value);
        push_test("hansen_j", hansen.collect());
        push_test(
            "anderson",
            fits.iter().filter_map(|f| f.anderson).map(|a| a.p_value).collect(),
        );
    }
    MonteCarloSummary {
        replications: outcomes.len(),
        master_seed: config.master_seed,
        coefficients,
        tests,
        failures,
    }
}

pub fn run_monte_carlo(
    config: &MonteCarloConfig,
    threads: Option<usize>,
) -> Result<MonteCarloSummary, MonteCarloError> {
    config.validate()?;
    let outcomes = parallel_replications(config.replications, threads, |i| run_replication(config, i))?;
    let summary = summarize(config, &outcomes);
    if !summary.failures.is_empty() {
        log::warn!(
            "{} of {} estimator runs failed; first: replication {} ({}): {}",
            summary.failures.len(),
            config.replications * config.estimators.len(),
            summary.failures[0].index,
            summary.failures[0].estimator,
            summary.failures[0].message
        );
    }
    Ok(summary)
}
