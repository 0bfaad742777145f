//! Zero-spread optimal strategies in closed form, continuous-time barriers and
//! manipulation regimes.
//!
//! Everything here is driven by `f = (K' + ρK) / (K' + 2ρK)`. When `K' + 2ρK > 0` the
//! optimal zero-spread strategy keeps the deviation at `δ↕·f_t` on `(0, T]`.

use serde::Serialize;

use crate::cost::zero_spread_cost;
use crate::error::{Error, Result};
use crate::impact::{ContinuousStrategy, DiscreteStrategy};
use crate::liquidity::{ImpactFamily, LiquidityProfile, TimeGrid};
use crate::quad;

/// Default number of uniform samples for condition checks.
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Default Simpson panel count for the `c`, value and barrier integrals.
pub const DEFAULT_PANELS: usize = 10_000;

const REGIME_TOL: f64 = 1e-9;
const WITNESS_HALVINGS: usize = 60;

/// Pointwise quantities derived from `K`, `K'`, `K''`, `ρ` and `ρ'`.
#[derive(Debug, Clone, Copy)]
struct Local {
    k: f64,
    rho: f64,
    /// `K' + ρK`
    num: f64,
    /// `K' + 2ρK`
    den: f64,
    f: f64,
    df: f64,
}

impl Local {
    fn at(profile: &LiquidityProfile, t: f64) -> Local {
        let k = profile.k(t);
        let (dk, ddk) = profile.k_derivatives(t);
        let rho = profile.rho(t);
        let drho = profile.rho_derivative(t);
        let num = dk + rho * k;
        let den = dk + 2.0 * rho * k;
        let dnum = ddk + drho * k + rho * dk;
        let dden = ddk + 2.0 * drho * k + 2.0 * rho * dk;
        Local {
            k,
            rho,
            num,
            den,
            f: num / den,
            df: (dnum * den - num * dden) / (den * den),
        }
    }

    /// `f' + ρf`
    fn drive(&self) -> f64 {
        self.df + self.rho * self.f
    }
}

fn require_differentiable(profile: &LiquidityProfile) -> Result<()> {
    if profile.is_differentiable() {
        Ok(())
    } else {
        Err(Error::UnsupportedProfile(
            "closed-form routes need K' and K'' (enable finite differences for tables)".into(),
        ))
    }
}

/// `samples` uniform times on `[0, T]` merged with the table nodes.
fn sample_times(profile: &LiquidityProfile, samples: usize) -> Vec<f64> {
    let horizon = profile.horizon();
    let n = samples.max(2) - 1;
    let mut times: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    times.extend(profile.table_nodes());
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn uniform_times(horizon_start: f64, horizon_end: f64, panels: usize) -> (Vec<f64>, f64) {
    let n = quad::even_panels(panels);
    let h = (horizon_end - horizon_start) / n as f64;
    let times = (0..=n).map(|i| horizon_start + h * i as f64).collect();
    (times, h)
}

fn positive_den(locals: &[Local], times: &[f64]) -> Result<()> {
    match locals.iter().zip(times).find(|(l, _)| !(l.den > 0.0)) {
        Some((_, &t)) => Err(Error::ConditionViolated {
            condition: "K' + 2ρK > 0".into(),
            t,
        }),
        None => Ok(()),
    }
}

/// `f` and `f'` tabulated on uniform samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FProfile {
    times: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
}

impl FProfile {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn df(&self) -> &[f64] {
        &self.df
    }
}

/// Tabulates `f` and `f'` at `samples` uniform times. Fails with the first time at which
/// `K' + 2ρK ≤ 0`.
pub fn f_profile(profile: &LiquidityProfile, samples: usize) -> Result<FProfile> {
    require_differentiable(profile)?;
    let n = samples.max(2) - 1;
    let times: Vec<f64> = (0..=n).map(|i| profile.horizon() * i as f64 / n as f64).collect();
    let locals: Vec<Local> = times.iter().map(|&t| Local::at(profile, t)).collect();
    positive_den(&locals, &times)?;
    Ok(FProfile {
        f: locals.iter().map(|l| l.f).collect(),
        df: locals.iter().map(|l| l.df).collect(),
        times,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManipulationRegime {
    /// A round trip with negative expected cost exists.
    PriceManipulation,
    /// Intermediate sells lower the cost of a buy program.
    TransactionTriggered,
    Clean,
    /// `min (K' + 2ρK)` is within tolerance of zero.
    Boundary,
}

/// Buy one share at `t`, sell it at `t + eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundTrip {
    pub t: f64,
    pub eps: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManipulationVerdict {
    pub regime: ManipulationRegime,
    /// Sample at which the violated condition was observed.
    pub violation_time: Option<f64>,
    /// Profitable round trip (price manipulation only; absent if the ε search failed).
    pub witness: Option<RoundTrip>,
}

/// Round trip of one share bought at `t` and sold at `t + eps` in the zero-spread model.
///
/// Its cost is `(K_t + K_{t+ε})/2 − K_t exp(−∫_t^{t+ε} ρ)`.
pub fn round_trip_witness(
    profile: &LiquidityProfile,
    t: f64,
    eps: f64,
) -> Result<(DiscreteStrategy, f64)> {
    if !(eps > 0.0) {
        return Err(Error::precondition(format!("round-trip length {eps} must be positive")));
    }
    let horizon = profile.horizon();
    if !(t >= 0.0) || t + eps > horizon * (1.0 + 1e-12) {
        return Err(Error::precondition(format!(
            "round trip [{t}, {t} + {eps}] does not fit in [0, {horizon}]"
        )));
    }
    let grid = TimeGrid::new(profile, vec![t, (t + eps).min(horizon)])?;
    let strategy = DiscreteStrategy::new(grid, vec![1.0, -1.0])?;
    let cost = zero_spread_cost(profile, &strategy, 0.0)?;
    Ok((strategy, cost))
}

fn search_witness(profile: &LiquidityProfile, t: f64) -> Option<RoundTrip> {
    let horizon = profile.horizon();
    let mut eps = (0.1 * horizon).min(horizon - t);
    if eps <= 0.0 {
        // violation at T: look just before it
        eps = 0.1 * horizon;
    }
    for _ in 0..=WITNESS_HALVINGS {
        let start = t.min(horizon - eps);
        if let Ok((_, cost)) = round_trip_witness(profile, start, eps) {
            if cost < 0.0 {
                return Some(RoundTrip { t: start, eps, cost });
            }
        }
        eps *= 0.5;
    }
    None
}

/// Sampling-based regime classification.
///
/// `K' + 2ρK < 0` somewhere gives price manipulation, with a witness found by halving
/// `ε`. Otherwise `f_0 < 0` or `f' + ρf < 0` somewhere gives transaction-triggered
/// manipulation. A minimum of `K' + 2ρK` within `1e−9` of zero is reported as a boundary
/// case. Violations strictly between samples can be missed.
pub fn classify_manipulation(profile: &LiquidityProfile, samples: usize) -> Result<ManipulationVerdict> {
    require_differentiable(profile)?;
    let times = sample_times(profile, samples);
    let locals: Vec<Local> = times.iter().map(|&t| Local::at(profile, t)).collect();
    let (argmin, min_den) = locals
        .iter()
        .enumerate()
        .map(|(i, l)| (i, l.den))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least two samples");
    if min_den < -REGIME_TOL {
        let t = times[argmin];
        return Ok(ManipulationVerdict {
            regime: ManipulationRegime::PriceManipulation,
            violation_time: Some(t),
            witness: search_witness(profile, t),
        });
    }
    if min_den.abs() <= REGIME_TOL {
        return Ok(ManipulationVerdict {
            regime: ManipulationRegime::Boundary,
            violation_time: Some(times[argmin]),
            witness: None,
        });
    }
    let triggered = if locals[0].f < -REGIME_TOL {
        Some(times[0])
    } else {
        locals
            .iter()
            .zip(&times)
            .find(|(l, _)| l.drive() < -REGIME_TOL)
            .map(|(_, &t)| t)
    };
    Ok(ManipulationVerdict {
        regime: if triggered.is_some() {
            ManipulationRegime::TransactionTriggered
        } else {
            ManipulationRegime::Clean
        },
        violation_time: triggered,
        witness: None,
    })
}

/// Optimal zero-spread strategy together with its value.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSpreadOptimum {
    pub strategy: ContinuousStrategy,
    pub value: f64,
    /// `δ↕`: the deviation on `(0, T]` is `δ↕·f_t`.
    pub delta_updown: f64,
    /// `∫(f' + ρf)/K dt + f_0/K_0 + (1 − f_T)/K_T`.
    pub c: f64,
}

/// Unique optimal strategy of the zero-spread problem for a target `x` and initial
/// deviation `delta`, with integrals by composite Simpson on `panels` panels.
pub fn zero_spread_optimal(
    profile: &LiquidityProfile,
    delta: f64,
    x: f64,
    panels: usize,
) -> Result<ZeroSpreadOptimum> {
    require_differentiable(profile)?;
    if !(delta.is_finite() && x.is_finite()) {
        return Err(Error::precondition("target and deviation must be finite"));
    }
    let horizon = profile.horizon();
    let (times, h) = uniform_times(0.0, horizon, panels);
    let locals: Vec<Local> = times.iter().map(|&t| Local::at(profile, t)).collect();
    positive_den(&locals, &times)?;

    let first = locals[0];
    let last = locals[locals.len() - 1];
    let drive: Vec<f64> = locals.iter().map(|l| l.drive() / l.k).collect();
    let c = quad::simpson_samples(&drive, h) + first.f / first.k + (1.0 - last.f) / last.k;
    let delta_updown = (x + delta / first.k) / c;

    let running: Vec<f64> = locals
        .iter()
        .map(|l| l.den * l.f * l.f / (2.0 * l.k * l.k))
        .collect();
    let value = delta_updown * delta_updown * (quad::simpson_samples(&running, h) + 0.5 / last.k)
        - delta * delta / (2.0 * first.k);

    let rate = drive.iter().map(|d| delta_updown * d).collect();
    let strategy = ContinuousStrategy::new(
        delta_updown * first.f / first.k - delta / first.k,
        times,
        rate,
        delta_updown * (1.0 - last.f) / last.k,
    )?;
    Ok(ZeroSpreadOptimum { strategy, value, delta_updown, c })
}

/// Checks `K' + 2ρK > 0`, `K' + ρK ≥ 0` and `f' + ρf ≥ 0` on the samples.
fn check_no_triggered(profile: &LiquidityProfile, samples: usize) -> Result<()> {
    require_differentiable(profile)?;
    for t in sample_times(profile, samples) {
        let l = Local::at(profile, t);
        let failed = if !(l.den > 0.0) {
            Some("K' + 2ρK > 0")
        } else if l.num < -REGIME_TOL {
            Some("K' + ρK >= 0")
        } else if l.drive() < -REGIME_TOL {
            Some("f' + ρf >= 0")
        } else {
            None
        };
        if let Some(condition) = failed {
            return Err(Error::ConditionViolated { condition: condition.into(), t });
        }
    }
    Ok(())
}

fn barrier_unchecked(profile: &LiquidityProfile, t: f64, panels: usize) -> f64 {
    let horizon = profile.horizon();
    if t >= horizon {
        return 0.0;
    }
    let here = Local::at(profile, t);
    if here.f <= 0.0 {
        return f64::INFINITY;
    }
    let end = Local::at(profile, horizon);
    let tail = quad::simpson(
        |s| {
            let l = Local::at(profile, s);
            l.drive() / l.k
        },
        t,
        horizon,
        panels,
    );
    (tail + (1.0 - end.f) / end.k) / here.f
}

/// Continuous-time barrier `c(t)`; `0` at `T` and `f64::INFINITY` where `f_t = 0`.
pub fn continuous_barrier(
    profile: &LiquidityProfile,
    t: f64,
    samples: usize,
    panels: usize,
) -> Result<f64> {
    profile.eval_k(t)?;
    check_no_triggered(profile, samples)?;
    Ok(barrier_unchecked(profile, t, panels))
}

/// [`continuous_barrier`] at several times with a single condition check.
pub fn continuous_barrier_curve(
    profile: &LiquidityProfile,
    times: &[f64],
    samples: usize,
    panels: usize,
) -> Result<Vec<f64>> {
    for &t in times {
        profile.eval_k(t)?;
    }
    check_no_triggered(profile, samples)?;
    Ok(times.iter().map(|&t| barrier_unchecked(profile, t, panels)).collect())
}

/// Closed-form optimum of the dynamic-spread buy problem.
///
/// Requires the no-transaction-triggered-manipulation condition and `δ ≤ x/c(0)`; the
/// optimum then coincides with the zero-spread one. Outside that range the discrete
/// solver is the only route.
pub fn dynamic_spread_optimal(
    profile: &LiquidityProfile,
    delta: f64,
    x: f64,
    samples: usize,
    panels: usize,
) -> Result<ZeroSpreadOptimum> {
    if !(x >= 0.0 && delta >= 0.0) {
        return Err(Error::precondition("dynamic-spread buy programs need x >= 0 and delta >= 0"));
    }
    check_no_triggered(profile, samples)?;
    let c0 = barrier_unchecked(profile, 0.0, panels);
    if delta * c0 > x {
        return Err(Error::precondition(format!(
            "initial ratio x/delta = {} lies in the wait region below c(0) = {c0}",
            x / delta
        )));
    }
    zero_spread_optimal(profile, delta, x, panels)
}

/// Sampling-based sufficient check for an infinite barrier at `t`: `K'_t + ρ_t K_t < 0`,
/// or `K_t exp(−∫_t^s ρ) > K_s` for some sampled `s > t`.
///
/// The derivative test is skipped for tables without finite differences.
pub fn infinite_barrier_check(profile: &LiquidityProfile, t: f64, samples: usize) -> Result<bool> {
    let k = profile.eval_k(t)?;
    if profile.is_differentiable() && Local::at(profile, t).num < 0.0 {
        return Ok(true);
    }
    Ok(sample_times(profile, samples)
        .into_iter()
        .filter(|&s| s > t)
        .any(|s| k * profile.decay(t, s) > profile.k(s)))
}

/// Regime endpoints for the shape parameter of a family (`ν` or the slope `m`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeThresholds {
    /// Smallest admissible parameter (exclusive).
    pub domain_lower: f64,
    /// Price manipulation below this value.
    pub manipulation_upper: f64,
    /// Transaction-triggered manipulation between `manipulation_upper` and this value.
    pub transaction_triggered_upper: f64,
    /// Trading everything at `T` is optimal below this value (dynamic spread).
    pub infinite_barrier_upper: f64,
}

impl RegimeThresholds {
    fn regime(&self, p: f64) -> ManipulationRegime {
        if p < self.manipulation_upper {
            ManipulationRegime::PriceManipulation
        } else if p == self.manipulation_upper {
            ManipulationRegime::Boundary
        } else if p < self.transaction_triggered_upper {
            ManipulationRegime::TransactionTriggered
        } else {
            ManipulationRegime::Clean
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Form {
    Constant { kappa: f64, rho: f64, horizon: f64 },
    Exponential { kappa: f64, nu: f64, rho: f64, horizon: f64 },
    StraightLine { kappa: f64, m: f64, rho: f64, horizon: f64 },
    /// Everything at `T`.
    Terminal { k_terminal: f64, horizon: f64 },
}

/// Literal closed-form optimum of one of the example families, for `δ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticStrategy {
    form: Form,
    x: f64,
}

impl AnalyticStrategy {
    fn exponential_scale(nu: f64, rho: f64, horizon: f64) -> f64 {
        (nu + 1.0).powi(2) - (-nu * rho * horizon).exp()
    }

    fn m_tilde(kappa: f64, m: f64, rho: f64, horizon: f64) -> f64 {
        2.0 * m + kappa * rho * (2.0 * m * rho * horizon / (m + 2.0 * kappa * rho)).ln_1p()
    }

    pub fn initial(&self) -> f64 {
        let x = self.x;
        match self.form {
            Form::Constant { rho, horizon, .. } => x / (rho * horizon + 2.0),
            Form::Exponential { nu, rho, horizon, .. } => {
                x * nu * (nu + 1.0) / Self::exponential_scale(nu, rho, horizon)
            }
            Form::StraightLine { kappa, m, rho, horizon } => {
                let mt = Self::m_tilde(kappa, m, rho, horizon);
                2.0 * m * (m + kappa * rho) * x / ((m + 2.0 * kappa * rho) * mt)
            }
            Form::Terminal { .. } => 0.0,
        }
    }

    /// Trading rate on `(0, T)`.
    pub fn rate(&self, t: f64) -> f64 {
        let x = self.x;
        match self.form {
            Form::Constant { rho, horizon, .. } => x * rho / (rho * horizon + 2.0),
            Form::Exponential { nu, rho, horizon, .. } => {
                x * nu * (nu + 1.0) / Self::exponential_scale(nu, rho, horizon)
                    * rho
                    * (-nu * rho * t).exp()
            }
            Form::StraightLine { kappa, m, rho, horizon } => {
                let mt = Self::m_tilde(kappa, m, rho, horizon);
                let s = m + 2.0 * kappa * rho + 2.0 * m * rho * t;
                2.0 * m * kappa * rho * rho * (2.0 * kappa * rho + m * (3.0 + 2.0 * rho * t)) * x
                    / (s * s * mt)
            }
            Form::Terminal { .. } => 0.0,
        }
    }

    pub fn terminal(&self) -> f64 {
        let x = self.x;
        match self.form {
            Form::Constant { rho, horizon, .. } => x / (rho * horizon + 2.0),
            Form::Exponential { nu, rho, horizon, .. } => {
                x * nu * (-nu * rho * horizon).exp() / Self::exponential_scale(nu, rho, horizon)
            }
            Form::StraightLine { kappa, m, rho, horizon } => {
                let mt = Self::m_tilde(kappa, m, rho, horizon);
                2.0 * m * kappa * rho * x / ((m + 2.0 * kappa * rho + 2.0 * m * rho * horizon) * mt)
            }
            Form::Terminal { .. } => x,
        }
    }

    /// Continuous-time barrier; `0` at `T`.
    pub fn barrier(&self, t: f64) -> f64 {
        let horizon = match self.form {
            Form::Constant { horizon, .. }
            | Form::Exponential { horizon, .. }
            | Form::StraightLine { horizon, .. }
            | Form::Terminal { horizon, .. } => horizon,
        };
        if t >= horizon {
            return 0.0;
        }
        match self.form {
            Form::Constant { kappa, rho, .. } => (1.0 + rho * (horizon - t)) / kappa,
            Form::Exponential { kappa, nu, rho, .. } => {
                if nu == -1.0 {
                    return f64::INFINITY;
                }
                ((nu + 1.0) * (-nu * rho * t).exp() - (-nu * rho * horizon).exp())
                    / (kappa * nu * (nu + 1.0))
            }
            Form::StraightLine { kappa, m, rho, .. } => {
                let s_t = m + 2.0 * kappa * rho + 2.0 * m * rho * t;
                let s_end = m + 2.0 * kappa * rho + 2.0 * m * rho * horizon;
                let log = (2.0 * m * rho * (t - horizon) / s_end).ln_1p();
                rho * (2.0 * m - s_t * log) / (2.0 * m * (m + kappa * rho + m * rho * t))
            }
            Form::Terminal { .. } => f64::INFINITY,
        }
    }

    /// Expected cost; at `δ = 0` it equals `δ↕·x/2`.
    pub fn value(&self) -> f64 {
        let x = self.x;
        match self.form {
            Form::Constant { kappa, rho, horizon } => kappa * x * x / (rho * horizon + 2.0),
            Form::Exponential { kappa, nu, rho, horizon } => {
                x * x * kappa * nu * (nu + 2.0) / (2.0 * Self::exponential_scale(nu, rho, horizon))
            }
            Form::StraightLine { kappa, m, rho, horizon } => {
                m * kappa * x * x / Self::m_tilde(kappa, m, rho, horizon)
            }
            Form::Terminal { k_terminal, .. } => 0.5 * k_terminal * x * x,
        }
    }

    /// Samples the rate at `panels + 1` uniform times.
    pub fn to_continuous(&self, horizon: f64, panels: usize) -> Result<ContinuousStrategy> {
        ContinuousStrategy::from_rate_fn(
            self.initial(),
            |t| self.rate(t),
            self.terminal(),
            horizon,
            panels,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticExample {
    /// `None` for the constant family, which has no shape parameter.
    pub thresholds: Option<RegimeThresholds>,
    pub regime: ManipulationRegime,
    /// `None` where no closed form is available for the dynamic-spread optimum.
    pub strategy: Option<AnalyticStrategy>,
}

/// Literal closed forms for the constant, exponential and straight-line families.
///
/// Only `δ = 0` is covered. Where price manipulation rules out a zero-spread optimum, the
/// strategy is the dynamic-spread one (everything at `T` when the barrier is infinite).
pub fn analytic_example(profile: &LiquidityProfile, x: f64, delta: f64) -> Result<AnalyticExample> {
    if delta != 0.0 {
        return Err(Error::precondition("analytic examples assume an initial deviation of 0"));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::precondition(format!("order size {x} must be >= 0")));
    }
    let rho = profile.constant_resilience().ok_or_else(|| {
        Error::UnsupportedProfile("analytic examples need constant resilience".into())
    })?;
    let horizon = profile.horizon();
    let terminal_only = Form::Terminal { k_terminal: profile.k(horizon), horizon };
    let (thresholds, regime, form) = match *profile.family() {
        ImpactFamily::Constant { kappa } => {
            (None, ManipulationRegime::Clean, Some(Form::Constant { kappa, rho, horizon }))
        }
        ImpactFamily::Exponential { kappa, nu } => {
            let th = RegimeThresholds {
                domain_lower: f64::NEG_INFINITY,
                manipulation_upper: -2.0,
                transaction_triggered_upper: -1.0,
                infinite_barrier_upper: -1.0,
            };
            let form = if nu == 0.0 {
                Form::Constant { kappa, rho, horizon }
            } else if nu >= -1.0 {
                Form::Exponential { kappa, nu, rho, horizon }
            } else {
                terminal_only
            };
            (Some(th), th.regime(nu), Some(form))
        }
        ImpactFamily::StraightLine { kappa, slope: m } => {
            let th = RegimeThresholds {
                domain_lower: -kappa / horizon,
                manipulation_upper: -2.0 * rho * kappa / (1.0 + 2.0 * rho * horizon),
                transaction_triggered_upper: -2.0 * rho * kappa / (3.0 + 2.0 * rho * horizon),
                infinite_barrier_upper: -(kappa / horizon) * (1.0 - (-rho * horizon).exp()),
            };
            if !(th.domain_lower < th.manipulation_upper
                && th.manipulation_upper < th.transaction_triggered_upper
                && th.infinite_barrier_upper < th.transaction_triggered_upper)
            {
                return Err(Error::Internal(format!("threshold ordering fails: {th:?}")));
            }
            let form = if m == 0.0 {
                Some(Form::Constant { kappa, rho, horizon })
            } else if m >= th.transaction_triggered_upper {
                Some(Form::StraightLine { kappa, m, rho, horizon })
            } else if m < th.infinite_barrier_upper {
                Some(terminal_only)
            } else {
                None
            };
            (Some(th), th.regime(m), form)
        }
        _ => {
            return Err(Error::UnsupportedProfile(
                "analytic examples cover the constant, exponential and straight-line families".into(),
            ))
        }
    };
    Ok(AnalyticExample {
        thresholds,
        regime,
        strategy: form.map(|form| AnalyticStrategy { form, x }),
    })
}
