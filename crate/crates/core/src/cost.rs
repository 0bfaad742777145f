//! Execution costs in the one-sided, dynamic-spread and zero-spread variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impact::{
    one_sided_impact, two_sided_impact, zero_spread_impact, ContinuousStrategy, DiscreteStrategy,
    ImpactPath,
};
use crate::liquidity::LiquidityProfile;
use crate::quad;

/// Default total panel count for the deviation-squared quadrature.
pub const DEFAULT_PANELS: usize = 10_000;

/// Expected cost of a pure buy program split into its three contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// `A0·x`.
    pub unaffected: f64,
    /// `(γ/2)·x²`.
    pub permanent: f64,
    /// Temporary-impact cost `J`.
    pub temporary: f64,
    pub total: f64,
}

fn check_delta(delta0: f64) -> Result<()> {
    if delta0 >= 0.0 && delta0.is_finite() {
        Ok(())
    } else {
        Err(Error::precondition(format!("initial deviation {delta0} must be >= 0")))
    }
}

/// `Σ (D_n + K_n ξ_n / 2) ξ_n` against a given deviation path.
fn impact_sum(profile: &LiquidityProfile, strategy: &DiscreteStrategy, path: &ImpactPath) -> f64 {
    strategy
        .grid()
        .nodes()
        .iter()
        .zip(strategy.trades())
        .zip(path.pre_trade())
        .map(|((&t, &xi), &d)| (d + 0.5 * profile.k(t) * xi) * xi)
        .sum()
}

/// Temporary-impact cost `J` of a nonnegative schedule.
pub fn temp_cost(profile: &LiquidityProfile, strategy: &DiscreteStrategy, delta0: f64) -> Result<f64> {
    check_delta(delta0)?;
    let path = one_sided_impact(profile, strategy, delta0)?;
    Ok(impact_sum(profile, strategy, &path))
}

/// Buy and sell legs of a two-sided program in the dynamic-spread model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicSpreadLegs {
    /// `Σ (A0 + D_n + ξ_n/(2q_n)) ξ_n`.
    pub buy_cost: f64,
    /// `Σ (B0 − D̃_n − η_n/(2q_n)) η_n`.
    pub sell_proceeds: f64,
    /// `buy_cost − sell_proceeds`.
    pub total: f64,
}

/// Both legs of buying and selling with unaffected quotes fixed at `ask_price` and
/// `bid_price`, where `1/q_n = γ + K_n`.
#[allow(clippy::too_many_arguments)]
pub fn dynamic_spread_legs(
    profile: &LiquidityProfile,
    buys: &DiscreteStrategy,
    sells: &DiscreteStrategy,
    ask0: f64,
    bid0: f64,
    ask_price: f64,
    bid_price: f64,
) -> Result<DynamicSpreadLegs> {
    if !(bid_price <= ask_price) {
        return Err(Error::precondition(format!(
            "unaffected bid {bid_price} exceeds ask {ask_price}"
        )));
    }
    let (ask, bid) = two_sided_impact(profile, buys, sells, ask0, bid0)?;
    let gamma = profile.permanent_impact();
    let (mut buy_cost, mut sell_proceeds) = (0.0, 0.0);
    for (n, &t) in buys.grid().nodes().iter().enumerate() {
        let depth_inv = gamma + profile.k(t);
        let xi = buys.trades()[n];
        let eta = sells.trades()[n];
        buy_cost += (ask_price + ask.before(n) + 0.5 * depth_inv * xi) * xi;
        sell_proceeds += (bid_price - bid.before(n) - 0.5 * depth_inv * eta) * eta;
    }
    Ok(DynamicSpreadLegs { buy_cost, sell_proceeds, total: buy_cost - sell_proceeds })
}

/// Total cost of buying and selling in the dynamic-spread model.
#[allow(clippy::too_many_arguments)]
pub fn total_cost_dynamic_spread(
    profile: &LiquidityProfile,
    buys: &DiscreteStrategy,
    sells: &DiscreteStrategy,
    ask0: f64,
    bid0: f64,
    ask_price: f64,
    bid_price: f64,
) -> Result<f64> {
    dynamic_spread_legs(profile, buys, sells, ask0, bid0, ask_price, bid_price).map(|l| l.total)
}

/// Cost of signed net trades in the zero-spread model (negative means proceeds).
pub fn zero_spread_cost(
    profile: &LiquidityProfile,
    strategy: &DiscreteStrategy,
    delta0: f64,
) -> Result<f64> {
    let path = zero_spread_impact(profile, strategy, delta0)?;
    Ok(impact_sum(profile, strategy, &path))
}

/// Zero-spread cost of a continuous schedule, using the Simpson-integrated deviation
/// path and `∫ D·rate dt` over the rate tabulation.
pub fn continuous_zero_spread_cost(
    profile: &LiquidityProfile,
    strategy: &ContinuousStrategy,
    delta0: f64,
) -> Result<f64> {
    let path = strategy.deviation_path(profile, delta0)?;
    let times = strategy.rate_times();
    let last = times.len() - 1;
    let weighted: Vec<f64> = path
        .pre_trade()
        .iter()
        .zip(strategy.rates())
        .enumerate()
        // the rate sees the post-impulse deviation at t = 0
        .map(|(i, (&d, &r))| if i == 0 { path.after(0) * r } else { d * r })
        .collect();
    let h = times[1] - times[0];
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
    let running = if uniform {
        quad::simpson_samples(&weighted, h)
    } else {
        times
            .windows(2)
            .zip(weighted.windows(2))
            .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
            .sum()
    };
    let k0 = profile.eval_k(0.0)?;
    let k_t = profile.eval_k(profile.horizon())?;
    let first = (delta0 + 0.5 * k0 * strategy.initial()) * strategy.initial();
    let last_trade = (path.before(last) + 0.5 * k_t * strategy.terminal()) * strategy.terminal();
    Ok(first + running + last_trade)
}

/// Cost recomputed from the deviation path alone:
/// `½[D²_{T+}/K_T − δ²/K_0 + ∫ (K' + 2ρK) D²/K² dt]`.
///
/// Between trade nodes the deviation decays smoothly, so each interval is integrated
/// separately with composite Simpson; `panels` is the total panel budget over `[t_0, t_N]`.
/// Agrees with [`zero_spread_cost`] (and [`temp_cost`] for buys) up to quadrature error.
/// The integrand scales like `K'/K²`, so profiles with `K` close to zero need more panels.
pub fn cost_via_impact_identity(
    profile: &LiquidityProfile,
    strategy: &DiscreteStrategy,
    delta0: f64,
    panels: usize,
) -> Result<f64> {
    if !profile.is_differentiable() {
        return Err(Error::UnsupportedProfile(
            "the deviation-squared identity needs K' (enable finite differences for tables)".into(),
        ));
    }
    let path = zero_spread_impact(profile, strategy, delta0)?;
    let nodes = strategy.grid().nodes();
    let span = nodes[nodes.len() - 1] - nodes[0];
    let weight = |t: f64| {
        let k = profile.k(t);
        let (dk, _) = profile.k_derivatives(t);
        (dk + 2.0 * profile.rho(t) * k) / (k * k)
    };
    let mut integral = 0.0;
    for n in 0..nodes.len() - 1 {
        let (t0, t1) = (nodes[n], nodes[n + 1]);
        let start = path.after(n);
        if start == 0.0 {
            continue;
        }
        let m = ((panels as f64) * (t1 - t0) / span).ceil() as usize;
        integral += quad::simpson(
            |t| {
                let d = start * profile.decay(t0, t);
                weight(t) * d * d
            },
            t0,
            t1,
            m,
        );
    }
    let k_first = profile.k(nodes[0]);
    let k_last = profile.k(nodes[nodes.len() - 1]);
    let terminal = path.terminal();
    Ok(0.5 * (terminal * terminal / k_last - delta0 * delta0 / k_first + integral))
}

/// Splits the expected cost of a buy program into unaffected, permanent and temporary parts.
pub fn cost_decomposition(
    profile: &LiquidityProfile,
    buys: &DiscreteStrategy,
    delta0: f64,
    ask_price: f64,
) -> Result<CostBreakdown> {
    let x = buys.target();
    let temporary = temp_cost(profile, buys, delta0)?;
    let unaffected = ask_price * x;
    let permanent = 0.5 * profile.permanent_impact() * x * x;
    Ok(CostBreakdown {
        unaffected,
        permanent,
        temporary,
        total: unaffected + permanent + temporary,
    })
}
