//! City-by-month panels of percent fare and input-price changes.
//!
//! All variables are percent changes per month, `100 * delta ln x`. Rows are
//! stored city-major (every month of the first city, then the next city), so
//! row `i` belongs to city `i / n_months` and month `i % n_months`.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{solve_closed_form, EquilibriumError};
use crate::model::{MarketEnv, ModeParams};

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("invalid generator setting `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("schema violation at line {line}, column `{column}`: {reason}")]
    Schema { line: u64, column: String, reason: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("panel has no rows")]
    Empty,
    #[error("unbalanced panel: no observation for city `{city}` in month `{month}`")]
    Unbalanced { city: String, month: String },
    #[error("duplicate observation for city `{city}` in month `{month}` (line {line})")]
    Duplicate { city: String, month: String, line: u64 },
    #[error("equilibrium failed for city `{city}` at period {period}: {source}")]
    Equilibrium {
        city: String,
        period: usize,
        source: EquilibriumError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Numeric columns of the panel, in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Coach,
    Diesel,
    Tire,
    Toll,
    Airline,
}

impl Variable {
    pub const ALL: [Variable; 5] = [
        Variable::Coach,
        Variable::Diesel,
        Variable::Tire,
        Variable::Toll,
        Variable::Airline,
    ];

    pub fn column_name(self) -> &'static str {
        match self {
            Variable::Coach => "d_coach",
            Variable::Diesel => "d_diesel",
            Variable::Tire => "d_tire",
            Variable::Toll => "d_toll",
            Variable::Airline => "d_airline",
        }
    }

    pub fn from_column_name(name: &str) -> Option<Variable> {
        Variable::ALL.into_iter().find(|v| v.column_name() == name)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub city: String,
    pub month: String,
    pub d_coach: f64,
    pub d_diesel: f64,
    pub d_tire: f64,
    pub d_toll: f64,
    pub d_airline: f64,
}

impl Observation {
    pub fn get(&self, var: Variable) -> f64 {
        match var {
            Variable::Coach => self.d_coach,
            Variable::Diesel => self.d_diesel,
            Variable::Tire => self.d_tire,
            Variable::Toll => self.d_toll,
            Variable::Airline => self.d_airline,
        }
    }

    pub fn get_mut(&mut self, var: Variable) -> &mut f64 {
        match var {
            Variable::Coach => &mut self.d_coach,
            Variable::Diesel => &mut self.d_diesel,
            Variable::Tire => &mut self.d_tire,
            Variable::Toll => &mut self.d_toll,
            Variable::Airline => &mut self.d_airline,
        }
    }
}

/// A balanced city x month panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    rows: Vec<Observation>,
    city_ids: Vec<String>,
    time_ids: Vec<String>,
}

impl PanelDataset {
    /// Builds a panel from rows in any order. Cities and months are ordered
    /// by first appearance; rows are re-sorted city-major.
    pub fn from_rows(rows: Vec<Observation>) -> Result<Self, PanelError> {
        let lines: Vec<u64> = (0..rows.len() as u64).map(|i| i + 1).collect();
        Self::from_rows_with_lines(rows, &lines)
    }

    fn from_rows_with_lines(rows: Vec<Observation>, lines: &[u64]) -> Result<Self, PanelError> {
        if rows.is_empty() {
            return Err(PanelError::Empty);
        }
        let mut city_ids: Vec<String> = Vec::new();
        let mut time_ids: Vec<String> = Vec::new();
        let mut city_pos: HashMap<String, usize> = HashMap::new();
        let mut time_pos: HashMap<String, usize> = HashMap::new();
        for r in &rows {
            if !city_pos.contains_key(&r.city) {
                city_pos.insert(r.city.clone(), city_ids.len());
                city_ids.push(r.city.clone());
            }
            if !time_pos.contains_key(&r.month) {
                time_pos.insert(r.month.clone(), time_ids.len());
                time_ids.push(r.month.clone());
            }
        }
        let n_t = time_ids.len();
        let mut slots: Vec<Option<Observation>> = vec![None; city_ids.len() * n_t];
        for (r, &line) in rows.into_iter().zip(lines) {
            for var in Variable::ALL {
                if !r.get(var).is_finite() {
                    return Err(PanelError::Schema {
                        line,
                        column: var.column_name().into(),
                        reason: format!("non-finite value {}", r.get(var)),
                    });
                }
            }
            let idx = city_pos[&r.city] * n_t + time_pos[&r.month];
            if slots[idx].is_some() {
                return Err(PanelError::Duplicate {
                    city: r.city,
                    month: r.month,
                    line,
                });
            }
            slots[idx] = Some(r);
        }
        let mut ordered = Vec::with_capacity(slots.len());
        for (idx, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(r) => ordered.push(r),
                None => {
                    return Err(PanelError::Unbalanced {
                        city: city_ids[idx / n_t].clone(),
                        month: time_ids[idx % n_t].clone(),
                    })
                }
            }
        }
        Ok(Self {
            rows: ordered,
            city_ids,
            time_ids,
        })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn city_ids(&self) -> &[String] {
        &self.city_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    pub fn n_cities(&self) -> usize {
        self.city_ids.len()
    }

    pub fn n_months(&self) -> usize {
        self.time_ids.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, var: Variable) -> Vec<f64> {
        self.rows.iter().map(|r| r.get(var)).collect()
    }

    pub fn city_of_row(&self, row: usize) -> usize {
        row / self.n_months()
    }

    pub fn month_of_row(&self, row: usize) -> usize {
        row % self.n_months()
    }

    pub fn row_index(&self, city: usize, month: usize) -> usize {
        city * self.n_months() + month
    }

    pub fn city_position(&self, label: &str) -> Option<usize> {
        self.city_ids.iter().position(|c| c == label)
    }

    /// Applies `f` to one column in place.
    pub fn map_column(&mut self, var: Variable, mut f: impl FnMut(&Observation, f64) -> f64) {
        for r in &mut self.rows {
            let v = f(r, r.get(var));
            *r.get_mut(var) = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

/// Coefficients of the reduced-form pricing equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kappa {
    pub constant: f64,
    pub diesel: f64,
    pub tire: f64,
    pub toll: f64,
    pub airline: f64,
}

impl Kappa {
    pub fn get(&self, var: Variable) -> f64 {
        match var {
            Variable::Coach => self.constant,
            Variable::Diesel => self.diesel,
            Variable::Tire => self.tire,
            Variable::Toll => self.toll,
            Variable::Airline => self.airline,
        }
    }
}

impl Default for Kappa {
    /// Default coach pricing-equation coefficients.
    fn default() -> Self {
        Self {
            constant: 0.0,
            diesel: 0.267,
            tire: 0.255,
            toll: 0.516,
            airline: 0.311,
        }
    }
}

/// Reduced-form data-generating process.
///
/// ```text
/// d_airline_jt = airline_mean + f_t + nu_jt + endogeneity_rho * eps_jt
/// d_coach_jt   = k1 + k_d d_diesel + k_t d_tire + k_l d_toll + k4 d_airline
///                + gamma_j + gamma_t + eps_jt
/// eps_jt       = error_ar1 * eps_j,t-1 + innovation, sd(eps_jt) = error_sd * h_j
/// ```
///
/// `f_t` is a national airline factor shared by every city; `nu_jt` is a
/// city-specific airline shock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub kappa: Kappa,
    /// City effects `gamma_j`; empty means all zero.
    pub city_effects: Vec<f64>,
    pub time_effect_sd: f64,
    pub diesel: Moments,
    pub tire: Moments,
    pub toll: Moments,
    pub airline_mean: f64,
    pub airline_idio_sd: f64,
    pub national_factor_sd: f64,
    pub error_sd: f64,
    pub error_ar1: f64,
    /// Per-city multipliers of `error_sd`; empty means homoskedastic.
    pub heteroskedasticity: Vec<f64>,
    pub endogeneity_rho: f64,
    /// City labels; empty uses the default label set.
    pub city_labels: Vec<String>,
    pub first_month: String,
    pub seed: u64,
}

impl Default for DgpConfig {
    /// Monthly percent-change moments of a seven-city sample: shifter means
    /// and standard deviations, `error_sd` giving an error variance of 1.345,
    /// and airline components sized so d_airline has a standard deviation
    /// near 4.19.
    fn default() -> Self {
        Self {
            kappa: Kappa::default(),
            city_effects: Vec::new(),
            time_effect_sd: 0.0,
            diesel: Moments { mean: 0.713, sd: 2.628 },
            tire: Moments { mean: 0.256, sd: 1.990 },
            toll: Moments { mean: 0.913, sd: 2.887 },
            airline_mean: 0.769,
            airline_idio_sd: 2.78,
            national_factor_sd: 3.0,
            error_sd: 1.16,
            error_ar1: 0.2,
            heteroskedasticity: Vec::new(),
            endogeneity_rho: 0.8,
            city_labels: Vec::new(),
            first_month: "1999-09".into(),
            seed: 20051130,
        }
    }
}

/// Default city labels (seven state capitals), Belo Horizonte first.
pub const DEFAULT_CITIES: [&str; 7] = [
    "Belo Horizonte",
    "Brasília",
    "Curitiba",
    "Goiânia",
    "Rio de Janeiro",
    "Salvador",
    "São Paulo",
];

pub fn default_city_labels(n: usize) -> Vec<String> {
    if n <= DEFAULT_CITIES.len() {
        DEFAULT_CITIES[..n].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n).map(|i| format!("city-{i:02}")).collect()
    }
}

/// `n` consecutive `YYYY-MM` labels starting at `first` (falls back to
/// `m001, m002, ...` when `first` is not in that form).
pub fn month_labels(first: &str, n: usize) -> Vec<String> {
    let parsed = first
        .split_once('-')
        .and_then(|(y, m)| Some((y.parse::<i32>().ok()?, m.parse::<i32>().ok()?)))
        .filter(|&(_, m)| (1..=12).contains(&m));
    match parsed {
        Some((y, m)) => (0..n as i32)
            .map(|k| {
                let idx = y * 12 + (m - 1) + k;
                format!("{:04}-{:02}", idx.div_euclid(12), idx.rem_euclid(12) + 1)
            })
            .collect(),
        None => (1..=n).map(|k| format!("m{k:03}")).collect(),
    }
}

impl DgpConfig {
    pub fn validate(&self, n_cities: usize, n_months: usize) -> Result<(), PanelError> {
        let cfg = |field: &'static str, reason: String| PanelError::Config { field, reason };
        if n_cities < 2 {
            return Err(cfg(
                "n_cities",
                format!("{n_cities} < 2; instruments need other cities"),
            ));
        }
        if n_months < 3 {
            return Err(cfg("n_months", format!("{n_months} < 3")));
        }
        let sds = [
            ("time_effect_sd", self.time_effect_sd),
            ("diesel.sd", self.diesel.sd),
            ("tire.sd", self.tire.sd),
            ("toll.sd", self.toll.sd),
            ("airline_idio_sd", self.airline_idio_sd),
            ("national_factor_sd", self.national_factor_sd),
            ("error_sd", self.error_sd),
        ];
        for (field, v) in sds {
            if !(v.is_finite() && v >= 0.0) {
                return Err(cfg(field, format!("standard deviation {v} must be finite and >= 0")));
            }
        }
        if !(self.error_ar1.abs() < 1.0) {
            return Err(cfg("error_ar1", format!("|{}| must be < 1", self.error_ar1)));
        }
        if !(self.endogeneity_rho.abs() <= 1.0) {
            return Err(cfg(
                "endogeneity_rho",
                format!("|{}| must be <= 1", self.endogeneity_rho),
            ));
        }
        if !self.city_effects.is_empty() && self.city_effects.len() != n_cities {
            return Err(cfg(
                "city_effects",
                format!("{} values for {n_cities} cities", self.city_effects.len()),
            ));
        }
        if !self.heteroskedasticity.is_empty() {
            if self.heteroskedasticity.len() != n_cities {
                return Err(cfg(
                    "heteroskedasticity",
                    format!("{} values for {n_cities} cities", self.heteroskedasticity.len()),
                ));
            }
            if let Some(h) = self.heteroskedasticity.iter().find(|h| !(h.is_finite() && **h >= 0.0)) {
                return Err(cfg("heteroskedasticity", format!("scale {h} must be >= 0")));
            }
        }
        if !self.city_labels.is_empty() {
            if self.city_labels.len() != n_cities {
                return Err(cfg(
                    "city_labels",
                    format!("{} labels for {n_cities} cities", self.city_labels.len()),
                ));
            }
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = self.city_labels.iter().find(|l| !seen.insert(*l)) {
                return Err(cfg("city_labels", format!("duplicate label `{dup}`")));
            }
        }
        let finite = [
            self.kappa.constant,
            self.kappa.diesel,
            self.kappa.tire,
            self.kappa.toll,
            self.kappa.airline,
            self.diesel.mean,
            self.tire.mean,
            self.toll.mean,
            self.airline_mean,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.city_effects.iter().any(|v| !v.is_finite()) {
            return Err(cfg("kappa", "coefficients and means must be finite".into()));
        }
        Ok(())
    }

    fn labels(&self, n_cities: usize) -> Vec<String> {
        if self.city_labels.is_empty() {
            default_city_labels(n_cities)
        } else {
            self.city_labels.clone()
        }
    }
}

/// A generated panel together with its latent components.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPanel {
    pub panel: PanelDataset,
    /// Realised coach errors `eps_jt`, aligned with `panel.rows()`.
    pub errors: Vec<f64>,
    /// National airline factor `f_t`, one per month.
    pub national_factor: Vec<f64>,
}

pub fn generate_panel(config: &DgpConfig, n_cities: usize, n_months: usize) -> Result<PanelDataset, PanelError> {
    generate_panel_detailed(config, n_cities, n_months).map(|g| g.panel)
}

/// Draws a panel from the reduced-form process.
///
/// The random stream is consumed in a fixed order (per month: national
/// factor, time effect; then per city: initial error, and per month the three
/// shifters, the airline shock and the error innovation), so a seed fully
/// determines the output.
pub fn generate_panel_detailed(
    config: &DgpConfig,
    n_cities: usize,
    n_months: usize,
) -> Result<GeneratedPanel, PanelError> {
    config.validate(n_cities, n_months)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut national = Vec::with_capacity(n_months);
    let mut time_effect = Vec::with_capacity(n_months);
    for _ in 0..n_months {
        national.push(config.national_factor_sd * z());
        time_effect.push(config.time_effect_sd * z());
    }

    let cities = config.labels(n_cities);
    let months = month_labels(&config.first_month, n_months);
    let k = config.kappa;
    let a = config.error_ar1;
    let innovation_scale = (1.0 - a * a).sqrt();
    let mut rows = Vec::with_capacity(n_cities * n_months);
    let mut errors = Vec::with_capacity(n_cities * n_months);
    for (j, city) in cities.iter().enumerate() {
        let sd = config.error_sd * config.heteroskedasticity.get(j).copied().unwrap_or(1.0);
        let gamma_j = config.city_effects.get(j).copied().unwrap_or(0.0);
        let mut eps = sd * z();
        for (t, month) in months.iter().enumerate() {
            let d_diesel = config.diesel.mean + config.diesel.sd * z();
            let d_tire = config.tire.mean + config.tire.sd * z();
            let d_toll = config.toll.mean + config.toll.sd * z();
            let nu = config.airline_idio_sd * z();
            let innovation = sd * innovation_scale * z();
            if t > 0 {
                eps = a * eps + innovation;
            }
            let d_airline = config.airline_mean + national[t] + nu + config.endogeneity_rho * eps;
            let d_coach = k.constant
                + k.diesel * d_diesel
                + k.tire * d_tire
                + k.toll * d_toll
                + k.airline * d_airline
                + gamma_j
                + time_effect[t]
                + eps;
            rows.push(Observation {
                city: city.clone(),
                month: month.clone(),
                d_coach,
                d_diesel,
                d_tire,
                d_toll,
                d_airline,
            });
            errors.push(eps);
        }
    }
    Ok(GeneratedPanel {
        panel: PanelDataset::from_rows(rows)?,
        errors,
        national_factor: national,
    })
}

/// Level paths for one city of a structural simulation. All vectors have
/// one more entry than there are months of changes.
#[derive(Debug, Clone, PartialEq)]
pub struct CityPaths {
    pub label: String,
    /// Input price levels (diesel, tire, toll), strictly positive.
    pub diesel: Vec<f64>,
    pub tire: Vec<f64>,
    pub toll: Vec<f64>,
    /// Log of the unobserved coach cost component.
    pub coach_cost_residual: Vec<f64>,
    /// Airline density-cost parameter path, strictly positive.
    pub airline_phi: Vec<f64>,
}

/// Inputs of [`structural_generate`].
///
/// The coach cost parameter in period `t` is
/// `coach.phi * diesel^e_d * tire^e_t * toll^e_l * exp(residual)`, with
/// `e = cost_elasticities`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralInputs {
    pub coach: ModeParams,
    pub airline: ModeParams,
    pub cost_elasticities: [f64; 3],
    /// Income index path, shared by all cities.
    pub income: Vec<f64>,
    /// Labels of the change periods (one fewer than the level paths).
    pub months: Vec<String>,
    pub cities: Vec<CityPaths>,
}

/// Solves the Nash equilibrium in every city and period and emits
/// `100 * delta ln` of fares. Shifter columns carry each input's contribution
/// to the coach cost parameter, `100 * e_h * delta ln w_h`, so regressing
/// fares on them recovers `mu_1` and the airline coefficient is `mu_1 * beta_12`.
pub fn structural_generate(inputs: &StructuralInputs) -> Result<PanelDataset, PanelError> {
    let n_levels = inputs.months.len() + 1;
    let cfg = |field: &'static str, reason: String| PanelError::Config { field, reason };
    if inputs.cities.is_empty() {
        return Err(cfg("cities", "no cities".into()));
    }
    if inputs.income.len() != n_levels {
        return Err(cfg(
            "income",
            format!("path has {} levels, expected {n_levels}", inputs.income.len()),
        ));
    }
    let mut rows = Vec::with_capacity(inputs.cities.len() * inputs.months.len());
    for city in &inputs.cities {
        let paths = [
            &city.diesel,
            &city.tire,
            &city.toll,
            &city.coach_cost_residual,
            &city.airline_phi,
        ];
        if paths.iter().any(|p| p.len() != n_levels) {
            return Err(cfg(
                "cities",
                format!("paths of `{}` must have {n_levels} levels", city.label),
            ));
        }
        let mut ln_prices = Vec::with_capacity(n_levels);
        for t in 0..n_levels {
            let ln_phi1 = inputs.coach.phi().ln()
                + inputs.cost_elasticities[0] * city.diesel[t].ln()
                + inputs.cost_elasticities[1] * city.tire[t].ln()
                + inputs.cost_elasticities[2] * city.toll[t].ln()
                + city.coach_cost_residual[t];
            let solved = (|| {
                let coach = inputs.coach.with_phi(ln_phi1.exp())?;
                let airline = inputs.airline.with_phi(city.airline_phi[t])?;
                let env = MarketEnv::new(inputs.income[t])?;
                solve_closed_form(&coach, &airline, env)
            })()
            .map_err(|source| PanelError::Equilibrium {
                city: city.label.clone(),
                period: t,
                source,
            })?;
            ln_prices.push((solved.prices.p1.ln(), solved.prices.p2.ln()));
        }
        let e = inputs.cost_elasticities;
        let pct = |path: &[f64], t: usize| 100.0 * (path[t + 1].ln() - path[t].ln());
        for (t, month) in inputs.months.iter().enumerate() {
            rows.push(Observation {
                city: city.label.clone(),
                month: month.clone(),
                d_coach: 100.0 * (ln_prices[t + 1].0 - ln_prices[t].0),
                d_diesel: e[0] * pct(&city.diesel, t),
                d_tire: e[1] * pct(&city.tire, t),
                d_toll: e[2] * pct(&city.toll, t),
                d_airline: 100.0 * (ln_prices[t + 1].1 - ln_prices[t].1),
            });
        }
    }
    PanelDataset::from_rows(rows)
}

/// Random-walk level paths for [`structural_generate`].
///
/// Log input prices and the unobserved coach cost follow independent
/// Gaussian random walks per city; the log airline cost parameter is a
/// random walk whose increments combine a national shock shared by all
/// cities with a city-specific one. Income grows at a constant log rate, so
/// its first difference is absorbed by a regression constant.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralDgp {
    pub coach: ModeParams,
    pub airline: ModeParams,
    pub cost_elasticities: [f64; 3],
    /// Standard deviations of monthly log increments of diesel, tire, toll.
    pub shifter_sd: [f64; 3],
    pub unobserved_cost_sd: f64,
    pub airline_national_sd: f64,
    pub airline_city_sd: f64,
    pub income_growth: f64,
}

pub fn simulate_structural(
    dgp: &StructuralDgp,
    n_cities: usize,
    n_months: usize,
    seed: u64,
) -> Result<PanelDataset, PanelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let n_levels = n_months + 1;
    let national: Vec<f64> = (0..n_levels).map(|_| dgp.airline_national_sd * z()).collect();
    let income = (0..n_levels).map(|t| (dgp.income_growth * t as f64).exp()).collect();
    let cities = default_city_labels(n_cities)
        .into_iter()
        .map(|label| {
            let mut ln = [0.0f64; 5];
            let mut paths: [Vec<f64>; 5] = Default::default();
            for t in 0..n_levels {
                if t > 0 {
                    for h in 0..3 {
                        ln[h] += dgp.shifter_sd[h] * z();
                    }
                    ln[3] += dgp.unobserved_cost_sd * z();
                    ln[4] += national[t] + dgp.airline_city_sd * z();
                }
                for (p, v) in paths.iter_mut().zip(ln) {
                    p.push(v);
                }
            }
            let [diesel, tire, toll, resid, air] = paths;
            let exp = |v: Vec<f64>| v.into_iter().map(f64::exp).collect::<Vec<_>>();
            CityPaths {
                label,
                diesel: exp(diesel),
                tire: exp(tire),
                toll: exp(toll),
                coach_cost_residual: resid,
                airline_phi: air.into_iter().map(|v| dgp.airline.phi() * v.exp()).collect(),
            }
        })
        .collect();
    structural_generate(&StructuralInputs {
        coach: dgp.coach,
        airline: dgp.airline,
        cost_elasticities: dgp.cost_elasticities,
        income,
        months: month_labels("1999-09", n_months),
        cities,
    })
}

const HEADER: [&str; 7] = ["city", "month", "d_coach", "d_diesel", "d_tire", "d_toll", "d_airline"];

/// Writes the panel as UTF-8 CSV with a header row. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv_to<W: Write>(panel: &PanelDataset, writer: W) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in panel.rows() {
        w.write_record([
            r.city.clone(),
            r.month.clone(),
            r.d_coach.to_string(),
            r.d_diesel.to_string(),
            r.d_tire.to_string(),
            r.d_toll.to_string(),
            r.d_airline.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(panel: &PanelDataset, path: impl AsRef<Path>) -> Result<(), PanelError> {
    let file = std::fs::File::create(path)?;
    write_csv_to(panel, std::io::BufWriter::new(file))
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<PanelDataset, PanelError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let idx: Vec<usize> = HEADER.iter().map(|h| find(h)).collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let text = |k: usize| -> Result<&str, PanelError> {
            record.get(idx[k]).map(str::trim).ok_or_else(|| PanelError::Schema {
                line,
                column: HEADER[k].into(),
                reason: "missing cell".into(),
            })
        };
        let number = |k: usize| -> Result<f64, PanelError> {
            let s = text(k)?;
            s.parse::<f64>().map_err(|_| PanelError::Schema {
                line,
                column: HEADER[k].into(),
                reason: format!("non-numeric value `{s}`"),
            })
        };
        let label = |k: usize| -> Result<String, PanelError> {
            let s = text(k)?;
            if s.is_empty() {
                return Err(PanelError::Schema {
                    line,
                    column: HEADER[k].into(),
                    reason: "empty label".into(),
                });
            }
            Ok(s.to_string())
        };
        rows.push(Observation {
            city: label(0)?,
            month: label(1)?,
            d_coach: number(2)?,
            d_diesel: number(3)?,
            d_tire: number(4)?,
            d_toll: number(5)?,
            d_airline: number(6)?,
        });
        lines.push(line);
    }
    PanelDataset::from_rows_with_lines(rows, &lines)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<PanelDataset, PanelError> {
    let file = std::fs::File::open(path)?;
    read_csv_from(std::io::BufReader::new(file))
}
