//! Structural primitives of the two-mode fare competition model.
//!
//! Mode 1 is the coach operator, mode 2 the airline. Demand is constant
//! elasticity in own price, rival price and income:
//!
//! ```text
//! q_i = alpha_i * p_i^(-beta_ii) * p_j^(beta_ij) * Y^(delta_i)
//! TC_i = FC_i + (phi_i / 2) * q_i^2
//! ```
//!
//! Every power law is evaluated in logs and exponentiated once, so extreme
//! elasticities in Monte Carlo sweeps do not overflow intermediate terms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("{what} must be strictly positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{what} must be non-negative and finite, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("markup undefined for own-price elasticity {0} (requires beta_own > 1)")]
    MarkupUndefined(f64),
}

/// Identifies one side of the two-mode market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Coach,
    Airline,
}

impl Mode {
    pub fn rival(self) -> Mode {
        match self {
            Mode::Coach => Mode::Airline,
            Mode::Airline => Mode::Coach,
        }
    }
}

/// Demand and cost primitives of one transport mode.
///
/// Construction enforces `beta_own > 1`: below that the markup factor is
/// negative or infinite and the pricing problem has no interior optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModeParams", into = "RawModeParams")]
pub struct ModeParams {
    alpha: f64,
    beta_own: f64,
    beta_cross: f64,
    delta: f64,
    fixed_cost: f64,
    phi: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModeParams {
    alpha: f64,
    beta_own: f64,
    beta_cross: f64,
    delta: f64,
    fixed_cost: f64,
    phi: f64,
}

impl TryFrom<RawModeParams> for ModeParams {
    type Error = ModelError;

    fn try_from(raw: RawModeParams) -> Result<Self, Self::Error> {
        ModeParams::new(
            raw.alpha,
            raw.beta_own,
            raw.beta_cross,
            raw.delta,
            raw.fixed_cost,
            raw.phi,
        )
    }
}

impl From<ModeParams> for RawModeParams {
    fn from(p: ModeParams) -> Self {
        RawModeParams {
            alpha: p.alpha,
            beta_own: p.beta_own,
            beta_cross: p.beta_cross,
            delta: p.delta,
            fixed_cost: p.fixed_cost,
            phi: p.phi,
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            reason: "must be strictly positive and finite",
        })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            reason: "must be non-negative and finite",
        })
    }
}

impl ModeParams {
    pub fn new(
        alpha: f64,
        beta_own: f64,
        beta_cross: f64,
        delta: f64,
        fixed_cost: f64,
        phi: f64,
    ) -> Result<Self, ModelError> {
        if !(beta_own.is_finite() && beta_own > 1.0) {
            return Err(ModelError::InvalidParameter {
                name: "beta_own",
                value: beta_own,
                reason: "own-price elasticity must exceed 1",
            });
        }
        Ok(Self {
            alpha: positive("alpha", alpha)?,
            beta_own,
            beta_cross: non_negative("beta_cross", beta_cross)?,
            delta: non_negative("delta", delta)?,
            fixed_cost: positive("fixed_cost", fixed_cost)?,
            phi: positive("phi", phi)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta_own(&self) -> f64 {
        self.beta_own
    }

    pub fn beta_cross(&self) -> f64 {
        self.beta_cross
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn fixed_cost(&self) -> f64 {
        self.fixed_cost
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Copy with a different density-cost parameter.
    pub fn with_phi(&self, phi: f64) -> Result<Self, ModelError> {
        Self::new(
            self.alpha,
            self.beta_own,
            self.beta_cross,
            self.delta,
            self.fixed_cost,
            phi,
        )
    }

    /// Copy with different own and cross elasticities.
    pub fn with_elasticities(&self, beta_own: f64, beta_cross: f64) -> Result<Self, ModelError> {
        Self::new(self.alpha, beta_own, beta_cross, self.delta, self.fixed_cost, self.phi)
    }

    /// Markup factor `eta = beta_own / (beta_own - 1)`.
    pub fn markup(&self) -> f64 {
        self.beta_own / (self.beta_own - 1.0)
    }

    /// Reaction exponent `mu = 1 / (1 + beta_own)`.
    pub fn mu(&self) -> f64 {
        1.0 / (1.0 + self.beta_own)
    }

    /// Log-slope of the reaction curve, `mu * beta_cross`.
    pub fn reaction_slope(&self) -> f64 {
        self.mu() * self.beta_cross
    }

    /// Intercept of the log reaction curve:
    /// `mu * ln(alpha * eta * phi * Y^delta)`.
    pub fn reaction_intercept(&self, env: MarketEnv) -> f64 {
        self.mu() * (self.alpha.ln() + self.markup().ln() + self.phi.ln() + self.delta * env.income.ln())
    }

    fn ln_demand(&self, own_price: f64, rival_price: f64, env: MarketEnv) -> f64 {
        self.alpha.ln() - self.beta_own * own_price.ln()
            + self.beta_cross * rival_price.ln()
            + self.delta * env.income.ln()
    }
}

/// Exogenous market state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketEnv {
    pub income: f64,
}

impl MarketEnv {
    pub fn new(income: f64) -> Result<Self, ModelError> {
        check_positive("income", income)?;
        Ok(Self { income })
    }
}

impl Default for MarketEnv {
    fn default() -> Self {
        Self { income: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePair {
    /// Coach fare.
    pub p1: f64,
    /// Airline fare.
    pub p2: f64,
}

impl PricePair {
    pub fn new(p1: f64, p2: f64) -> Result<Self, ModelError> {
        check_positive("coach price", p1)?;
        check_positive("airline price", p2)?;
        Ok(Self { p1, p2 })
    }

    pub fn get(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Coach => self.p1,
            Mode::Airline => self.p2,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        check_positive("coach price", self.p1)?;
        check_positive("airline price", self.p2)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantityPair {
    pub q1: f64,
    pub q2: f64,
}

impl QuantityPair {
    pub fn get(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Coach => self.q1,
            Mode::Airline => self.q2,
        }
    }
}

fn check_positive(what: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::NonPositive { what, value })
    }
}

fn check_quantity(q: f64) -> Result<(), ModelError> {
    if q.is_finite() && q >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Negative {
            what: "quantity",
            value: q,
        })
    }
}

/// Quantity demanded from one mode given its own fare and the rival's.
pub fn mode_demand(params: &ModeParams, own_price: f64, rival_price: f64, env: MarketEnv) -> Result<f64, ModelError> {
    check_positive("own price", own_price)?;
    check_positive("rival price", rival_price)?;
    check_positive("income", env.income)?;
    Ok(params.ln_demand(own_price, rival_price, env).exp())
}

/// Demand system for both modes.
pub fn demand(
    coach: &ModeParams,
    airline: &ModeParams,
    prices: PricePair,
    env: MarketEnv,
) -> Result<QuantityPair, ModelError> {
    prices.validate()?;
    Ok(QuantityPair {
        q1: mode_demand(coach, prices.p1, prices.p2, env)?,
        q2: mode_demand(airline, prices.p2, prices.p1, env)?,
    })
}

pub fn total_cost(params: &ModeParams, q: f64) -> Result<f64, ModelError> {
    check_quantity(q)?;
    Ok(params.fixed_cost + 0.5 * params.phi * q * q)
}

pub fn marginal_cost(params: &ModeParams, q: f64) -> Result<f64, ModelError> {
    check_quantity(q)?;
    Ok(params.phi * q)
}

pub fn profit(params: &ModeParams, price: f64, q: f64) -> Result<f64, ModelError> {
    check_positive("price", price)?;
    Ok(price * q - total_cost(params, q)?)
}

/// `eta = beta_own / (beta_own - 1)`; undefined at and below the pole.
pub fn markup_factor(beta_own: f64) -> Result<f64, ModelError> {
    if beta_own.is_finite() && beta_own > 1.0 {
        Ok(beta_own / (beta_own - 1.0))
    } else {
        Err(ModelError::MarkupUndefined(beta_own))
    }
}

/// Profit-maximising fare of a mode given the rival's fare:
/// `(alpha * eta * phi * Y^delta)^mu * rival^(mu * beta_cross)`.
pub fn reaction_price(params: &ModeParams, rival_price: f64, env: MarketEnv) -> Result<f64, ModelError> {
    check_positive("rival price", rival_price)?;
    check_positive("income", env.income)?;
    Ok(ln_reaction_price(params, rival_price.ln(), env).exp())
}

pub(crate) fn ln_reaction_price(params: &ModeParams, ln_rival: f64, env: MarketEnv) -> f64 {
    params.reaction_intercept(env) + params.reaction_slope() * ln_rival
}

/// Relative first-order-condition gap `(p_i - eta_i * phi_i * q_i) / p_i`.
///
/// Zero exactly on the mode's reaction curve, positive when the fare is above
/// the best response and negative below it.
pub fn foc_residual(
    coach: &ModeParams,
    airline: &ModeParams,
    prices: PricePair,
    env: MarketEnv,
    mode: Mode,
) -> Result<f64, ModelError> {
    let q = demand(coach, airline, prices, env)?;
    let params = match mode {
        Mode::Coach => coach,
        Mode::Airline => airline,
    };
    let p = prices.get(mode);
    Ok((p - params.markup() * marginal_cost(params, q.get(mode))?) / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(alpha: f64, beta_own: f64, beta_cross: f64, delta: f64, phi: f64) -> ModeParams {
        ModeParams::new(alpha, beta_own, beta_cross, delta, 10.0, phi).unwrap()
    }

    /// Grid argmax of Bertrand profit over the own fare, rival fare held fixed.
    fn grid_best_response(p: &ModeParams, rival: f64, env: MarketEnv, lo: f64, hi: f64, n: usize) -> (f64, f64) {
        let step = (hi - lo) / n as f64;
        let mut best = (lo, f64::NEG_INFINITY);
        for k in 0..=n {
            let price = lo + step * k as f64;
            let q = p.alpha * price.powf(-p.beta_own) * rival.powf(p.beta_cross) * env.income.powf(p.delta);
            let pi = price * q - p.fixed_cost - 0.5 * p.phi * q * q;
            if pi > best.1 {
                best = (price, pi);
            }
        }
        (best.0, step)
    }

    #[test]
    fn demand_examples() {
        let unit = params(3.0, 2.0, 0.5, 1.0, 1.0);
        let q = demand(&unit, &unit, PricePair::new(1.0, 1.0).unwrap(), MarketEnv::default()).unwrap();
        assert!((q.q1 - 3.0).abs() < 1e-14);

        let own_only = params(1.0, 2.0, 0.0, 0.0, 1.0);
        let q = demand(
            &own_only,
            &own_only,
            PricePair::new(2.0, 7.3).unwrap(),
            MarketEnv::new(4.2).unwrap(),
        )
        .unwrap();
        assert!((q.q1 - 0.25).abs() < 1e-15);

        // 40-digit mpmath evaluation of the demand formula.
        let p = params(1.5, 1.8, 0.4, 0.7, 1.0);
        let q = demand(&p, &p, PricePair::new(1.2, 2.0).unwrap(), MarketEnv::new(1.1).unwrap()).unwrap();
        assert!((q.q1 - 1.523_883_946_792_207_3).abs() < 1e-14);
        assert!((q.q2 - 0.495_318_609_299_968_57).abs() < 1e-14);
    }

    #[test]
    fn demand_rejects_bad_domain() {
        let p = params(1.0, 2.0, 0.5, 1.0, 1.0);
        let bad = PricePair { p1: 0.0, p2: 1.0 };
        assert!(demand(&p, &p, bad, MarketEnv::default()).is_err());
        let bad_env = MarketEnv { income: -1.0 };
        assert!(demand(&p, &p, PricePair::new(1.0, 1.0).unwrap(), bad_env).is_err());
        assert!(PricePair::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn cost_and_profit_examples() {
        let p = ModeParams::new(1.0, 2.0, 0.0, 0.0, 10.0, 2.0).unwrap();
        assert_eq!(total_cost(&p, 0.0).unwrap(), 10.0);
        assert_eq!(total_cost(&p, 3.0).unwrap(), 19.0);
        assert_eq!(marginal_cost(&p, 0.0).unwrap(), 0.0);
        assert_eq!(marginal_cost(&p, 3.0).unwrap(), 6.0);
        assert_eq!(profit(&p, 5.0, 0.0).unwrap(), -10.0);
        assert_eq!(profit(&p, 5.0, 3.0).unwrap(), -4.0);
        assert!(total_cost(&p, -1.0).is_err());
        assert!(marginal_cost(&p, -0.5).is_err());
        assert!(profit(&p, 5.0, -0.5).is_err());

        let q = ModeParams::new(1.0, 2.0, 0.0, 0.0, 5.5, 0.8).unwrap();
        assert!((total_cost(&q, 7.3).unwrap() - 26.816).abs() < 1e-12);
        assert!((marginal_cost(&q, 7.3).unwrap() - 5.84).abs() < 1e-12);
        assert!((profit(&q, 3.1, 7.3).unwrap() - (-4.186)).abs() < 1e-12);
    }

    #[test]
    fn markup_examples() {
        assert_eq!(markup_factor(2.0).unwrap(), 2.0);
        assert_eq!(markup_factor(3.0).unwrap(), 1.5);
        assert!((markup_factor(1.0001).unwrap() - 10001.0).abs() < 1e-6);
        assert!(matches!(markup_factor(1.0), Err(ModelError::MarkupUndefined(_))));
        assert!(markup_factor(0.5).is_err());
    }

    #[test]
    fn construction_rejects_invariant_violations() {
        assert!(ModeParams::new(1.0, 1.0, 0.1, 0.1, 1.0, 1.0).is_err());
        assert!(ModeParams::new(0.0, 2.0, 0.1, 0.1, 1.0, 1.0).is_err());
        assert!(ModeParams::new(1.0, 2.0, -0.1, 0.1, 1.0, 1.0).is_err());
        assert!(ModeParams::new(1.0, 2.0, 0.1, -0.1, 1.0, 1.0).is_err());
        assert!(ModeParams::new(1.0, 2.0, 0.1, 0.1, 0.0, 1.0).is_err());
        assert!(ModeParams::new(1.0, 2.0, 0.1, 0.1, 1.0, 0.0).is_err());
        assert!(ModeParams::new(1.0, f64::NAN, 0.1, 0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn reaction_price_examples() {
        let p = params(1.0, 2.0, 0.0, 1.0, 1.0);
        for rival in [0.3, 1.0, 17.0] {
            let r = reaction_price(&p, rival, MarketEnv::default()).unwrap();
            assert!((r - 2f64.powf(1.0 / 3.0)).abs() < 1e-14);
            assert!((r - 1.259_921).abs() < 1e-6);
        }

        let p = params(1.0, 2.0, 0.9, 1.0, 1.0);
        let h = 1e-5;
        let env = MarketEnv::default();
        let up = reaction_price(&p, (0.4f64.ln() + h).exp(), env).unwrap().ln();
        let dn = reaction_price(&p, (0.4f64.ln() - h).exp(), env).unwrap().ln();
        assert!(((up - dn) / (2.0 * h) - 0.3).abs() < 1e-9);

        let p = params(1.5, 1.8, 0.4, 0.7, 0.9);
        let env = MarketEnv::new(1.1).unwrap();
        let r = reaction_price(&p, 2.0, env).unwrap();
        assert!((r - 1.681_433_522_370_12).abs() < 1e-13);
        let (grid, step) = grid_best_response(&p, 2.0, env, 0.5, 4.0, 70_000);
        assert!((grid - r).abs() <= step);

        assert!(reaction_price(&p, 0.0, env).is_err());
    }

    #[test]
    fn foc_residual_examples() {
        let c = params(1.5, 1.8, 0.4, 0.7, 0.9);
        let a = params(0.8, 2.5, 0.6, 0.3, 1.3);
        let env = MarketEnv::new(1.1).unwrap();
        let p2 = 1.7;
        let p1 = reaction_price(&c, p2, env).unwrap();
        let prices = PricePair::new(p1, p2).unwrap();
        assert!(foc_residual(&c, &a, prices, env, Mode::Coach).unwrap().abs() < 1e-14);

        let s = params(1.0, 2.0, 0.9, 1.0, 1.0);
        let off = PricePair::new(0.7, 0.7).unwrap();
        let r1 = foc_residual(&s, &s, off, MarketEnv::default(), Mode::Coach).unwrap();
        let r2 = foc_residual(&s, &s, off, MarketEnv::default(), Mode::Airline).unwrap();
        assert_eq!(r1, r2);

        // Sign agrees with the brute-force best response.
        let (grid, step) = grid_best_response(&a, 1.3, env, 0.2, 5.0, 50_000);
        for own in [0.5, 0.9, 2.0, 4.0] {
            if (own - grid).abs() <= 2.0 * step {
                continue;
            }
            let r = foc_residual(&c, &a, PricePair::new(1.3, own).unwrap(), env, Mode::Airline).unwrap();
            assert_eq!(r > 0.0, own > grid, "own = {own}, grid = {grid}");
        }
    }

    #[test]
    fn deserialisation_goes_through_validation() {
        let raw = RawModeParams {
            alpha: 1.0,
            beta_own: 0.9,
            beta_cross: 0.1,
            delta: 0.1,
            fixed_cost: 1.0,
            phi: 1.0,
        };
        assert!(ModeParams::try_from(raw).is_err());
        let ok = RawModeParams { beta_own: 1.9, ..raw };
        assert_eq!(ModeParams::try_from(ok).unwrap().beta_own(), 1.9);
    }

    fn arb_params() -> impl Strategy<Value = ModeParams> {
        (0.3f64..3.0, 1.1f64..4.0, 0.0f64..1.5, 0.0f64..1.5, 0.3f64..3.0)
            .prop_map(|(a, b, c, d, f)| ModeParams::new(a, b, c, d, 2.0, f).unwrap())
    }

    proptest! {
        #[test]
        fn demand_monotonicity(p in arb_params(), p1 in 0.2f64..5.0, p2 in 0.2f64..5.0, y in 0.5f64..2.0, bump in 1.01f64..1.5) {
            let env = MarketEnv::new(y).unwrap();
            let base = mode_demand(&p, p1, p2, env).unwrap();
            prop_assert!(mode_demand(&p, p1 * bump, p2, env).unwrap() < base);
            if p.beta_cross() > 1e-9 {
                prop_assert!(mode_demand(&p, p1, p2 * bump, env).unwrap() > base);
            }
            if p.delta() > 1e-9 {
                prop_assert!(mode_demand(&p, p1, p2, MarketEnv::new(y * bump).unwrap()).unwrap() > base);
            }
        }

        #[test]
        fn elasticity_identity(p in arb_params(), p1 in 0.2f64..5.0, p2 in 0.2f64..5.0, y in 0.5f64..2.0) {
            let h: f64 = 1e-5;
            let ln_q = |a: f64, b: f64, inc: f64| mode_demand(&p, a, b, MarketEnv::new(inc).unwrap()).unwrap().ln();
            let own = (ln_q(p1 * h.exp(), p2, y) - ln_q(p1 * (-h).exp(), p2, y)) / (2.0 * h);
            let cross = (ln_q(p1, p2 * h.exp(), y) - ln_q(p1, p2 * (-h).exp(), y)) / (2.0 * h);
            let inc = (ln_q(p1, p2, y * h.exp()) - ln_q(p1, p2, y * (-h).exp())) / (2.0 * h);
            prop_assert!((own + p.beta_own()).abs() < 1e-6);
            prop_assert!((cross - p.beta_cross()).abs() < 1e-6);
            prop_assert!((inc - p.delta()).abs() < 1e-6);
        }

        #[test]
        fn markup_identity_on_reaction_curve(c in arb_params(), a in arb_params(), p2 in 0.2f64..5.0, y in 0.5f64..2.0) {
            let env = MarketEnv::new(y).unwrap();
            let p1 = reaction_price(&c, p2, env).unwrap();
            let q = demand(&c, &a, PricePair::new(p1, p2).unwrap(), env).unwrap();
            let lerner = c.markup() * marginal_cost(&c, q.q1).unwrap();
            prop_assert!(((p1 - lerner) / p1).abs() < 1e-10);
        }

        #[test]
        fn reaction_curve_is_log_affine(c in arb_params(), y in 0.5f64..2.0, x0 in -2.0f64..2.0, d1 in 0.1f64..1.0, d2 in 0.1f64..1.0) {
            let env = MarketEnv::new(y).unwrap();
            let pts: Vec<(f64, f64)> = [x0, x0 + d1, x0 + d1 + d2]
                .iter()
                .map(|&x| (x, reaction_price(&c, x.exp(), env).unwrap().ln()))
                .collect();
            let s01 = (pts[1].1 - pts[0].1) / (pts[1].0 - pts[0].0);
            let s12 = (pts[2].1 - pts[1].1) / (pts[2].0 - pts[1].0);
            prop_assert!((s01 - s12).abs() < 1e-12);
            prop_assert!((s01 - c.reaction_slope()).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_argmax_matches_reaction_price() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let c = params(
                rng.random_range(0.3..3.0),
                rng.random_range(1.2..4.0),
                rng.random_range(0.0..1.2),
                rng.random_range(0.0..1.0),
                rng.random_range(0.3..3.0),
            );
            let env = MarketEnv::new(rng.random_range(0.7..1.4)).unwrap();
            let rival: f64 = rng.random_range(0.3..3.0);
            let r = reaction_price(&c, rival, env).unwrap();
            let (grid, step) = grid_best_response(&c, rival, env, 0.25 * r, 4.0 * r, 20_000);
            assert!((grid - r).abs() <= step, "grid {grid} vs closed form {r}");
        }
    }
}
