//! Price-deviation paths generated by trading schedules.
//!
//! Trades placed at a node affect the deviation strictly after that node: `pre[n]` is the
//! deviation an order at `t_n` executes against and `post[n]` the deviation right after it.
//! Between nodes the transient part decays by the grid's factor `a_n`.

use crate::error::{Error, Result};
use crate::liquidity::{LiquidityProfile, TimeGrid};

/// Trades `ξ_0 … ξ_N` at the nodes of a grid (shares, signed).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStrategy {
    grid: TimeGrid,
    trades: Vec<f64>,
}

impl DiscreteStrategy {
    pub fn new(grid: TimeGrid, trades: Vec<f64>) -> Result<Self> {
        if trades.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} trades for a grid with {} nodes",
                trades.len(),
                grid.len()
            )));
        }
        if let Some(n) = trades.iter().position(|v| !v.is_finite()) {
            return Err(Error::precondition(format!("trade {n} is not finite")));
        }
        Ok(DiscreteStrategy { grid, trades })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        let trades = vec![0.0; grid.len()];
        DiscreteStrategy { grid, trades }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn trades(&self) -> &[f64] {
        &self.trades
    }

    /// Net position built up by the schedule.
    pub fn target(&self) -> f64 {
        self.trades.iter().sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.trades.iter().all(|&x| x >= 0.0)
    }

    pub(crate) fn require_nonnegative(&self, what: &str) -> Result<()> {
        match self.trades.iter().position(|&x| x < 0.0) {
            Some(n) => Err(Error::precondition(format!(
                "{what}: trade {n} = {} is negative",
                self.trades[n]
            ))),
            None => Ok(()),
        }
    }
}

/// Deviation values around each trading time plus the post-terminal value.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactPath {
    times: Vec<f64>,
    pre: Vec<f64>,
    post: Vec<f64>,
}

impl ImpactPath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Deviation just before the trade at node `n` (the càglàd value `D_{t_n}`).
    pub fn before(&self, n: usize) -> f64 {
        self.pre[n]
    }

    /// Deviation just after the trade at node `n` (`D_{t_n+}`).
    pub fn after(&self, n: usize) -> f64 {
        self.post[n]
    }

    pub fn pre_trade(&self) -> &[f64] {
        &self.pre
    }

    pub fn post_trade(&self) -> &[f64] {
        &self.post
    }

    /// `D_{T+}`.
    pub fn terminal(&self) -> f64 {
        self.post[self.post.len() - 1]
    }

    pub(crate) fn from_parts(times: Vec<f64>, pre: Vec<f64>, post: Vec<f64>) -> Self {
        ImpactPath { times, pre, post }
    }
}

fn node_impacts(profile: &LiquidityProfile, grid: &TimeGrid) -> Result<Vec<f64>> {
    grid.nodes().iter().map(|&t| profile.eval_k(t)).collect()
}

/// Transient-impact recursion `D_{n+} = D_n + K_n u_n`, `D_{n+1} = D_{n+} a_n`.
fn propagate(grid: &TimeGrid, impacts: &[f64], trades: &[f64], delta0: f64) -> ImpactPath {
    let n = trades.len();
    let mut pre = Vec::with_capacity(n);
    let mut post = Vec::with_capacity(n);
    let mut d = delta0;
    for i in 0..n {
        pre.push(d);
        d += impacts[i] * trades[i];
        post.push(d);
        if i + 1 < n {
            d *= grid.decay_factors()[i];
        }
    }
    ImpactPath::from_parts(grid.nodes().to_vec(), pre, post)
}

/// Deviation of the best ask from its unaffected level for a pure buy schedule.
pub fn one_sided_impact(
    profile: &LiquidityProfile,
    strategy: &DiscreteStrategy,
    delta0: f64,
) -> Result<ImpactPath> {
    if !(delta0 >= 0.0 && delta0.is_finite()) {
        return Err(Error::precondition(format!("initial deviation {delta0} must be >= 0")));
    }
    strategy.require_nonnegative("one-sided impact")?;
    let impacts = node_impacts(profile, strategy.grid())?;
    Ok(propagate(strategy.grid(), &impacts, strategy.trades(), delta0))
}

/// Ask and bid deviations in the dynamic-spread model with permanent impact `γ`.
///
/// Buys move the ask by `γ + K·decay` and the bid by `-γ(1 - decay)`; sells act
/// symmetrically. Returns `(ask, bid)`.
pub fn two_sided_impact(
    profile: &LiquidityProfile,
    buys: &DiscreteStrategy,
    sells: &DiscreteStrategy,
    ask0: f64,
    bid0: f64,
) -> Result<(ImpactPath, ImpactPath)> {
    if !(ask0 >= 0.0 && bid0 >= 0.0 && ask0.is_finite() && bid0.is_finite()) {
        return Err(Error::precondition("initial deviations must be finite and >= 0"));
    }
    if !buys.grid().matches(sells.grid()) {
        return Err(Error::GridMismatch("buys and sells are on different grids".into()));
    }
    buys.require_nonnegative("buys")?;
    sells.require_nonnegative("sells")?;
    let grid = buys.grid();
    let impacts = node_impacts(profile, grid)?;
    let gamma = profile.permanent_impact();
    Ok((
        side_deviation(grid, &impacts, gamma, buys.trades(), sells.trades(), ask0),
        side_deviation(grid, &impacts, gamma, sells.trades(), buys.trades(), bid0),
    ))
}

/// One side of the book: `same` trades hit this side, `other` trades the opposite one.
///
/// Writes the deviation as `γ(Θ_same - Θ_other) + X` where the transient part `X`
/// receives `K ξ_same + γ ξ_other` at each node and decays with `ρ`.
fn side_deviation(
    grid: &TimeGrid,
    impacts: &[f64],
    gamma: f64,
    same: &[f64],
    other: &[f64],
    initial: f64,
) -> ImpactPath {
    let n = same.len();
    let mut pre = Vec::with_capacity(n);
    let mut post = Vec::with_capacity(n);
    let mut transient = initial;
    let mut permanent = 0.0;
    for i in 0..n {
        pre.push(transient + permanent);
        transient += impacts[i] * same[i] + gamma * other[i];
        permanent += gamma * (same[i] - other[i]);
        post.push(transient + permanent);
        if i + 1 < n {
            transient *= grid.decay_factors()[i];
        }
    }
    ImpactPath::from_parts(grid.nodes().to_vec(), pre, post)
}

/// Deviation `D↕` of the common bid/ask in the zero-spread model, driven by net trades.
pub fn zero_spread_impact(
    profile: &LiquidityProfile,
    strategy: &DiscreteStrategy,
    delta0: f64,
) -> Result<ImpactPath> {
    if !delta0.is_finite() {
        return Err(Error::precondition("initial deviation must be finite"));
    }
    let impacts = node_impacts(profile, strategy.grid())?;
    Ok(propagate(strategy.grid(), &impacts, strategy.trades(), delta0))
}

/// Impulse at `t = 0`, a tabulated trading rate on `(0, T)`, and an impulse at `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousStrategy {
    initial: f64,
    rate_times: Vec<f64>,
    rate: Vec<f64>,
    terminal: f64,
}

impl ContinuousStrategy {
    /// `rate_times` must start at 0 and end at the horizon. The rate is interpolated by
    /// quadratics through consecutive node triples (linearly for two nodes), so on uniform
    /// nodes its integral is composite Simpson.
    pub fn new(initial: f64, rate_times: Vec<f64>, rate: Vec<f64>, terminal: f64) -> Result<Self> {
        if rate_times.len() < 2 || rate_times.len() != rate.len() {
            return Err(Error::precondition(
                "rate tabulation needs at least two (t, rate) pairs",
            ));
        }
        if rate_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::precondition("rate times must be strictly increasing"));
        }
        if rate_times[0] != 0.0 {
            return Err(Error::precondition("rate tabulation must start at t = 0"));
        }
        if !(initial.is_finite() && terminal.is_finite()) || rate.iter().any(|r| !r.is_finite()) {
            return Err(Error::precondition("strategy entries must be finite"));
        }
        Ok(ContinuousStrategy {
            initial,
            rate_times,
            rate,
            terminal,
        })
    }

    /// Samples `rate_fn` at `panels + 1` uniform times on `[0, horizon]`.
    pub fn from_rate_fn<F: Fn(f64) -> f64>(
        initial: f64,
        rate_fn: F,
        terminal: f64,
        horizon: f64,
        panels: usize,
    ) -> Result<Self> {
        let panels = panels.max(1);
        let times: Vec<f64> = (0..=panels)
            .map(|i| horizon * i as f64 / panels as f64)
            .collect();
        let rate = times.iter().map(|&t| rate_fn(t)).collect();
        Self::new(initial, times, rate, terminal)
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn terminal(&self) -> f64 {
        self.terminal
    }

    pub fn rate_times(&self) -> &[f64] {
        &self.rate_times
    }

    pub fn rates(&self) -> &[f64] {
        &self.rate
    }

    pub fn horizon(&self) -> f64 {
        self.rate_times[self.rate_times.len() - 1]
    }

    fn interval(&self, t: f64) -> usize {
        self.rate_times
            .partition_point(|&x| x <= t)
            .saturating_sub(1)
            .min(self.rate_times.len() - 2)
    }

    /// Interpolant on interval `i` in Newton form around its triple's first node.
    fn segment(&self, i: usize) -> Segment {
        let (ts, rs) = (&self.rate_times, &self.rate);
        if ts.len() == 2 {
            return Segment { t0: ts[0], r0: rs[0], c1: (rs[1] - rs[0]) / (ts[1] - ts[0]), c2: 0.0, h1: 0.0 };
        }
        let j = (i - i % 2).min(ts.len() - 3);
        let (h1, h2) = (ts[j + 1] - ts[j], ts[j + 2] - ts[j + 1]);
        let c1 = (rs[j + 1] - rs[j]) / h1;
        let c2 = ((rs[j + 2] - rs[j + 1]) / h2 - c1) / (h1 + h2);
        Segment { t0: ts[j], r0: rs[j], c1, c2, h1 }
    }

    /// Interpolated trading rate at `t`, clamped to `[0, T]`.
    pub fn rate_at(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon());
        self.segment(self.interval(t)).eval(t)
    }

    /// `∫_0^t rate`, exact for the interpolated rate.
    fn cumulative_rate(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rate_times.len() - 1 {
            let (t0, t1) = (self.rate_times[i], self.rate_times[i + 1]);
            if t <= t0 {
                break;
            }
            acc += self.segment(i).integral(t0, t.min(t1));
        }
        acc
    }

    /// Shares traded continuously on `(0, T)`.
    pub fn rate_mass(&self) -> f64 {
        self.cumulative_rate(self.horizon())
    }

    /// `ΔΘ_0 + ∫ rate + ΔΘ_T`.
    pub fn total(&self) -> f64 {
        self.initial + self.rate_mass() + self.terminal
    }

    /// Maps the schedule onto `grid`: the rate mass of `[t_n, t_{n+1})` is traded at `t_n`,
    /// the initial impulse at the first node and the terminal impulse at the last one.
    /// The discretisation error is `O(Δt)`.
    pub fn to_discrete(&self, grid: &TimeGrid) -> Result<DiscreteStrategy> {
        let nodes = grid.nodes();
        let horizon = self.horizon();
        let tol = 1e-12 * horizon.max(1.0);
        if nodes[0].abs() > tol || (nodes[nodes.len() - 1] - horizon).abs() > tol {
            return Err(Error::GridMismatch(
                "evaluation grid must span the strategy horizon".into(),
            ));
        }
        let cumulative: Vec<f64> = nodes.iter().map(|&t| self.cumulative_rate(t)).collect();
        let mut trades: Vec<f64> = cumulative.windows(2).map(|w| w[1] - w[0]).collect();
        trades.push(0.0);
        trades[0] += self.initial;
        let last = trades.len() - 1;
        trades[last] += self.terminal;
        DiscreteStrategy::new(grid.clone(), trades)
    }

    /// Zero-spread deviation path at the rate nodes, integrating the rate contribution
    /// `∫ K_s r_s e^{-∫_s^t ρ} ds` with Simpson's rule on each rate interval.
    pub fn deviation_path(&self, profile: &LiquidityProfile, delta0: f64) -> Result<ImpactPath> {
        let times = &self.rate_times;
        let last = times.len() - 1;
        if (times[last] - profile.horizon()).abs() > 1e-12 * profile.horizon() {
            return Err(Error::GridMismatch(
                "rate tabulation must end at the profile horizon".into(),
            ));
        }
        let mut pre = Vec::with_capacity(times.len());
        let mut post = Vec::with_capacity(times.len());
        pre.push(delta0);
        let mut d = delta0 + profile.eval_k(0.0)? * self.initial;
        post.push(d);
        for i in 0..last {
            let (t0, t1) = (times[i], times[i + 1].min(profile.horizon()));
            let mid = 0.5 * (t0 + t1);
            let contribution = (t1 - t0) / 6.0
                * (profile.k(t0) * self.rate[i] * profile.decay(t0, t1)
                    + 4.0 * profile.k(mid) * self.rate_at(mid) * profile.decay(mid, t1)
                    + profile.k(t1) * self.rate[i + 1]);
            d = d * profile.decay(t0, t1) + contribution;
            pre.push(d);
            post.push(d);
        }
        post[last] = d + profile.k(profile.horizon()) * self.terminal;
        Ok(ImpactPath::from_parts(times.clone(), pre, post))
    }
}

/// `r0 + c1 s + c2 s (s − h1)` with `s = t − t0`.
struct Segment {
    t0: f64,
    r0: f64,
    c1: f64,
    c2: f64,
    h1: f64,
}

impl Segment {
    fn eval(&self, t: f64) -> f64 {
        let s = t - self.t0;
        self.r0 + s * (self.c1 + self.c2 * (s - self.h1))
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a - self.t0, b - self.t0);
        let (d1, d2, d3) = (b - a, b * b - a * a, b * b * b - a * a * a);
        self.r0 * d1 + 0.5 * (self.c1 - self.c2 * self.h1) * d2 + self.c2 * d3 / 3.0
    }
}
