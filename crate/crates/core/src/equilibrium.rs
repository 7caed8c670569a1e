//! Bertrand-Nash equilibrium of the two-mode market and comparative statics.
//!
//! In logs the reaction curves are straight lines,
//! `ln p_i = a_i + s_i ln p_j` with `s_i = beta_ij / (1 + beta_ii)`, so the
//! equilibrium is the solution of a 2x2 linear system. Best-response
//! iteration is a contraction exactly when `s_1 * s_2 < 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    demand, foc_residual, ln_reaction_price, MarketEnv, Mode, ModeParams, ModelError, PricePair, QuantityPair,
};

/// `|1 - s1*s2|` below this is treated as parallel log-reaction lines.
const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("degenerate reaction system: stability product s1*s2 = {0} (parallel log-reaction lines)")]
    Degenerate(f64),
    #[error("invalid solver setting `{0}`: {1}")]
    InvalidSetting(&'static str, String),
    #[error("shock `{scenario}` is invalid: {reason}")]
    InvalidShock { scenario: String, reason: String },
    #[error("shock `{scenario}` destroys stability: s1*s2 = {product} >= 1")]
    Unstable { scenario: String, product: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub prices: PricePair,
    pub quantities: QuantityPair,
    /// Best-response sweeps performed (zero for the closed form).
    pub iterations: usize,
    pub converged: bool,
    /// Largest relative first-order-condition gap over both modes.
    pub max_foc_residual: f64,
    /// `s1 * s2`, the contraction factor of the log best-response map.
    pub stability_product: f64,
}

/// Product of the two log reaction slopes.
pub fn stability_product(coach: &ModeParams, airline: &ModeParams) -> f64 {
    coach.reaction_slope() * airline.reaction_slope()
}

fn finish(
    coach: &ModeParams,
    airline: &ModeParams,
    env: MarketEnv,
    ln_p1: f64,
    ln_p2: f64,
    iterations: usize,
    converged: bool,
) -> EquilibriumResult {
    let prices = PricePair {
        p1: ln_p1.exp(),
        p2: ln_p2.exp(),
    };
    let (quantities, max_foc_residual) = match demand(coach, airline, prices, env) {
        Ok(q) => {
            let r1 = foc_residual(coach, airline, prices, env, Mode::Coach).unwrap_or(f64::NAN);
            let r2 = foc_residual(coach, airline, prices, env, Mode::Airline).unwrap_or(f64::NAN);
            (q, r1.abs().max(r2.abs()))
        }
        // Diverged iterate: report it as is.
        Err(_) => (
            QuantityPair {
                q1: f64::NAN,
                q2: f64::NAN,
            },
            f64::INFINITY,
        ),
    };
    EquilibriumResult {
        prices,
        quantities,
        iterations,
        converged,
        max_foc_residual,
        stability_product: stability_product(coach, airline),
    }
}

/// Solves the log-linear reaction system directly.
pub fn solve_closed_form(
    coach: &ModeParams,
    airline: &ModeParams,
    env: MarketEnv,
) -> Result<EquilibriumResult, EquilibriumError> {
    MarketEnv::new(env.income)?;
    let (s1, s2) = (coach.reaction_slope(), airline.reaction_slope());
    let (a1, a2) = (coach.reaction_intercept(env), airline.reaction_intercept(env));
    let det = 1.0 - s1 * s2;
    if det.abs() < DEGENERACY_TOL {
        return Err(EquilibriumError::Degenerate(s1 * s2));
    }
    let ln_p1 = (a1 + s1 * a2) / det;
    let ln_p2 = (a2 + s2 * a1) / det;
    Ok(finish(coach, airline, env, ln_p1, ln_p2, 0, true))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationSettings {
    pub start: PricePair,
    /// Weight on the new best response, in (0, 1].
    pub damping: f64,
    /// Convergence threshold on the log best-response gap.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterationSettings {
    fn default() -> Self {
        Self {
            start: PricePair { p1: 1.0, p2: 1.0 },
            damping: 1.0,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// One iterate of [`iterate_with_trace`]: log fares after a full sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub ln_p1: f64,
    pub ln_p2: f64,
}

/// Alternating damped best responses in log fares.
///
/// Each sweep updates the coach fare against the current airline fare, then
/// the airline fare against the updated coach fare. The iterate is declared
/// converged once both log fares are within `tol` of their best responses.
/// Failure to converge is reported through `converged = false` together with
/// the last iterate.
pub fn iterate_to_equilibrium(
    coach: &ModeParams,
    airline: &ModeParams,
    env: MarketEnv,
    settings: &IterationSettings,
) -> Result<EquilibriumResult, EquilibriumError> {
    iterate_with_trace(coach, airline, env, settings).map(|(r, _)| r)
}

pub fn iterate_with_trace(
    coach: &ModeParams,
    airline: &ModeParams,
    env: MarketEnv,
    settings: &IterationSettings,
) -> Result<(EquilibriumResult, Vec<Sweep>), EquilibriumError> {
    MarketEnv::new(env.income)?;
    PricePair::new(settings.start.p1, settings.start.p2)?;
    if !(settings.damping > 0.0 && settings.damping <= 1.0) {
        return Err(EquilibriumError::InvalidSetting(
            "damping",
            format!("{} is outside (0, 1]", settings.damping),
        ));
    }
    if !(settings.tol > 0.0) {
        return Err(EquilibriumError::InvalidSetting(
            "tol",
            format!("{} must be positive", settings.tol),
        ));
    }

    let d = settings.damping;
    let gap = |x1: f64, x2: f64| {
        let g1 = ln_reaction_price(coach, x2, env) - x1;
        let g2 = ln_reaction_price(airline, x1, env) - x2;
        g1.abs().max(g2.abs())
    };

    let (mut x1, mut x2) = (settings.start.p1.ln(), settings.start.p2.ln());
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = gap(x1, x2) < settings.tol;
    while !converged && iterations < settings.max_iter {
        x1 += d * (ln_reaction_price(coach, x2, env) - x1);
        x2 += d * (ln_reaction_price(airline, x1, env) - x2);
        iterations += 1;
        trace.push(Sweep { ln_p1: x1, ln_p2: x2 });
        if !(x1.is_finite() && x2.is_finite()) {
            break;
        }
        converged = gap(x1, x2) < settings.tol;
    }
    Ok((finish(coach, airline, env, x1, x2, iterations, converged), trace))
}

/// Which mode(s) a shock applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShockTarget {
    Coach,
    Airline,
    Both,
}

impl ShockTarget {
    fn hits(self, mode: Mode) -> bool {
        matches!(
            (self, mode),
            (ShockTarget::Both, _) | (ShockTarget::Coach, Mode::Coach) | (ShockTarget::Airline, Mode::Airline)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShockKind {
    /// Scales the density-cost parameter (road tolls, diesel).
    Cost { phi_multiplier: f64 },
    /// Lowers own-price elasticity by `beta_own_delta` and raises the cross
    /// elasticity by `beta_cross_delta` (entry of a rival carrier).
    Rivalry {
        #[serde(default)]
        beta_own_delta: f64,
        #[serde(default)]
        beta_cross_delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockScenario {
    pub name: String,
    pub target: ShockTarget,
    #[serde(flatten)]
    pub kind: ShockKind,
}

impl ShockScenario {
    pub fn cost(name: impl Into<String>, target: ShockTarget, phi_multiplier: f64) -> Self {
        Self {
            name: name.into(),
            target,
            kind: ShockKind::Cost { phi_multiplier },
        }
    }

    pub fn rivalry(name: impl Into<String>, target: ShockTarget, beta_own_delta: f64, beta_cross_delta: f64) -> Self {
        Self {
            name: name.into(),
            target,
            kind: ShockKind::Rivalry {
                beta_own_delta,
                beta_cross_delta,
            },
        }
    }
}

/// Applies a scenario to the base parameters. Demand scales `alpha` are held
/// fixed. Shocks that break a parameter invariant or push `s1*s2` to 1 or
/// beyond are rejected rather than clamped.
pub fn apply_shock(
    coach: &ModeParams,
    airline: &ModeParams,
    scenario: &ShockScenario,
) -> Result<(ModeParams, ModeParams), EquilibriumError> {
    let invalid = |reason: String| EquilibriumError::InvalidShock {
        scenario: scenario.name.clone(),
        reason,
    };
    let shock_one = |p: &ModeParams, mode: Mode| -> Result<ModeParams, EquilibriumError> {
        if !scenario.target.hits(mode) {
            return Ok(*p);
        }
        match scenario.kind {
            ShockKind::Cost { phi_multiplier } => {
                if !(phi_multiplier.is_finite() && phi_multiplier > 0.0) {
                    return Err(invalid(format!(
                        "phi_multiplier must be positive, got {phi_multiplier}"
                    )));
                }
                p.with_phi(p.phi() * phi_multiplier).map_err(|e| invalid(e.to_string()))
            }
            ShockKind::Rivalry {
                beta_own_delta,
                beta_cross_delta,
            } => {
                if !(beta_own_delta.is_finite() && beta_cross_delta.is_finite()) {
                    return Err(invalid("elasticity deltas must be finite".into()));
                }
                p.with_elasticities(p.beta_own() - beta_own_delta, p.beta_cross() + beta_cross_delta)
                    .map_err(|e| invalid(format!("{mode:?}: {e}")))
            }
        }
    };
    let shocked = (shock_one(coach, Mode::Coach)?, shock_one(airline, Mode::Airline)?);
    let product = stability_product(&shocked.0, &shocked.1);
    if product >= 1.0 {
        return Err(EquilibriumError::Unstable {
            scenario: scenario.name.clone(),
            product,
        });
    }
    Ok(shocked)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticsRow {
    pub scenario: String,
    pub old_prices: PricePair,
    /// `None` when the scenario could not be solved; see `failure`.
    pub new_prices: Option<PricePair>,
    /// `100 * delta ln p` for coach and airline.
    pub pct_change: Option<(f64, f64)>,
    pub failure: Option<String>,
}

/// Re-solves the equilibrium under each scenario. Scenarios that cannot be
/// solved yield a flagged row instead of aborting the table.
pub fn comparative_statics_report(
    coach: &ModeParams,
    airline: &ModeParams,
    env: MarketEnv,
    scenarios: &[ShockScenario],
) -> Result<Vec<StaticsRow>, EquilibriumError> {
    let base = solve_closed_form(coach, airline, env)?.prices;
    let rows = scenarios
        .iter()
        .map(|sc| {
            let solved = apply_shock(coach, airline, sc).and_then(|(c, a)| solve_closed_form(&c, &a, env));
            match solved {
                Ok(eq) => StaticsRow {
                    scenario: sc.name.clone(),
                    old_prices: base,
                    new_prices: Some(eq.prices),
                    pct_change: Some((
                        100.0 * (eq.prices.p1.ln() - base.p1.ln()),
                        100.0 * (eq.prices.p2.ln() - base.p2.ln()),
                    )),
                    failure: None,
                },
                Err(e) => StaticsRow {
                    scenario: sc.name.clone(),
                    old_prices: base,
                    new_prices: None,
                    pct_change: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}
