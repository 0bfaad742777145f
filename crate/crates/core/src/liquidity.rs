//! Time-varying liquidity: price impact `K`, resilience `ρ`, permanent impact `γ`.
//!
//! A [`LiquidityProfile`] is immutable once built and validated. Parametric families
//! expose analytic derivatives; tabulated impact tables are linearly interpolated and
//! differentiated by finite differences on the local table spacing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parametric form of the price-impact coefficient `K(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ImpactFamily {
    /// `K(t) = κ`.
    Constant { kappa: f64 },
    /// `K(t) = κ·exp(ν ρ t)`; requires constant resilience.
    Exponential { kappa: f64, nu: f64 },
    /// `K(t) = κ + m t`.
    StraightLine { kappa: f64, slope: f64 },
    /// `K(t) = c0 + c1 t + c2 t²`.
    Quadratic { c0: f64, c1: f64, c2: f64 },
    /// Linear interpolation through `(t, K)` nodes spanning `[0, T]`.
    Tabulated { table: Vec<(f64, f64)> },
}

/// Resilience speed `ρ(t)`, per unit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resilience {
    Constant(f64),
    /// Linear interpolation through `(t, ρ)` nodes spanning `[0, T]`.
    Tabulated(Vec<(f64, f64)>),
}

/// How `K'` and `K''` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
    /// Tabulated impact with finite differences switched off.
    Unavailable,
}

/// Piecewise-linear table over `[0, T]` with a cumulative integral cache.
#[derive(Debug, Clone, PartialEq)]
struct Table {
    times: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Table {
    fn new(field: &str, pairs: &[(f64, f64)], horizon: f64) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::invalid(field, "a table needs at least two nodes"));
        }
        let tol = 1e-12 * horizon;
        let mut times: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let values: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid(field, "table entries must be finite"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(field, "table times must be strictly increasing"));
        }
        if times[0].abs() > tol {
            return Err(Error::invalid(field, "first table node must be t = 0"));
        }
        let last = times.len() - 1;
        if (times[last] - horizon).abs() > tol {
            return Err(Error::invalid(field, "last table node must be t = T"));
        }
        times[0] = 0.0;
        times[last] = horizon;
        if let Some(i) = values.iter().position(|&v| v <= 0.0) {
            return Err(Error::invalid(
                field,
                format!("value {} at t = {} is not strictly positive", values[i], times[i]),
            ));
        }
        let mut cumulative = Vec::with_capacity(times.len());
        cumulative.push(0.0);
        for i in 1..times.len() {
            let seg = 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
            cumulative.push(cumulative[i - 1] + seg);
        }
        Ok(Table {
            times,
            values,
            cumulative,
        })
    }

    /// Index `i` of the segment `[times[i], times[i+1]]` containing `t`.
    fn segment(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&x| x <= t);
        i.saturating_sub(1).min(self.times.len() - 2)
    }

    fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// Exact integral of the interpolant on `[0, t]`.
    fn integral_to(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let t0 = self.times[i];
        self.cumulative[i] + 0.5 * (self.values[i] + self.eval(t)) * (t - t0)
    }

    /// Table spacing around `t`; the smaller neighbour at interior nodes.
    fn local_spacing(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let mut h = self.times[i + 1] - self.times[i];
        if t == self.times[i] && i > 0 {
            h = h.min(self.times[i] - self.times[i - 1]);
        }
        if t == self.times[i + 1] && i + 2 < self.times.len() {
            h = h.min(self.times[i + 2] - self.times[i + 1]);
        }
        h
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }
}

/// First and second derivative at `t` of the quadratic through three equally spaced
/// samples of `f`, the window of width `2h` shifted to stay inside `[0, horizon]`.
fn three_point_derivatives<F: Fn(f64) -> f64>(f: F, t: f64, h: f64, horizon: f64) -> (f64, f64) {
    let h = h.min(0.5 * horizon);
    let lower = (t - h).min(horizon - 2.0 * h).max(0.0);
    let x = [lower, lower + h, (lower + 2.0 * h).min(horizon)];
    let y = [f(x[0]), f(x[1]), f(x[2])];
    let d0 = (x[0] - x[1]) * (x[0] - x[2]);
    let d1 = (x[1] - x[0]) * (x[1] - x[2]);
    let d2 = (x[2] - x[0]) * (x[2] - x[1]);
    let first = y[0] * (2.0 * t - x[1] - x[2]) / d0
        + y[1] * (2.0 * t - x[0] - x[2]) / d1
        + y[2] * (2.0 * t - x[0] - x[1]) / d2;
    let second = 2.0 * (y[0] / d0 + y[1] / d1 + y[2] / d2);
    (first, second)
}

#[derive(Debug, Clone, PartialEq)]
enum ImpactRepr {
    Parametric,
    Table(Table),
}

#[derive(Debug, Clone, PartialEq)]
enum ResilienceRepr {
    Constant(f64),
    Table(Table),
}

/// Validated liquidity inputs of the order-book model.
#[derive(Debug, Clone, PartialEq)]
pub struct LiquidityProfile {
    family: ImpactFamily,
    impact: ImpactRepr,
    resilience: ResilienceRepr,
    horizon: f64,
    permanent_impact: f64,
    finite_differences: bool,
}

impl LiquidityProfile {
    /// Builds and validates a profile. `permanent_impact` is `γ ≥ 0`.
    pub fn new(
        family: ImpactFamily,
        resilience: Resilience,
        horizon: f64,
        permanent_impact: f64,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("profile.horizon", "T must be finite and > 0"));
        }
        if !(permanent_impact.is_finite() && permanent_impact >= 0.0) {
            return Err(Error::invalid("profile.gamma", "γ must be finite and >= 0"));
        }
        let resilience = match resilience {
            Resilience::Constant(rho) => {
                if !(rho.is_finite() && rho > 0.0) {
                    return Err(Error::invalid("profile.rho", "ρ must be finite and > 0"));
                }
                ResilienceRepr::Constant(rho)
            }
            Resilience::Tabulated(pairs) => {
                ResilienceRepr::Table(Table::new("profile.rho_table", &pairs, horizon)?)
            }
        };
        let impact = validate_family(&family, &resilience, horizon)?;
        Ok(LiquidityProfile {
            family,
            impact,
            resilience,
            horizon,
            permanent_impact,
            finite_differences: true,
        })
    }

    /// Shorthand for constant `K ≡ κ`, constant `ρ`, no permanent impact.
    pub fn constant(kappa: f64, rho: f64, horizon: f64) -> Result<Self> {
        Self::new(
            ImpactFamily::Constant { kappa },
            Resilience::Constant(rho),
            horizon,
            0.0,
        )
    }

    /// `K(t) = κ e^{νρt}` with constant `ρ`.
    pub fn exponential(kappa: f64, nu: f64, rho: f64, horizon: f64) -> Result<Self> {
        Self::new(
            ImpactFamily::Exponential { kappa, nu },
            Resilience::Constant(rho),
            horizon,
            0.0,
        )
    }

    /// `K(t) = κ + m t` with constant `ρ`.
    pub fn straight_line(kappa: f64, slope: f64, rho: f64, horizon: f64) -> Result<Self> {
        Self::new(
            ImpactFamily::StraightLine { kappa, slope },
            Resilience::Constant(rho),
            horizon,
            0.0,
        )
    }

    /// Returns a copy with permanent impact `γ`.
    pub fn with_permanent_impact(mut self, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::invalid("profile.gamma", "γ must be finite and >= 0"));
        }
        self.permanent_impact = gamma;
        Ok(self)
    }

    /// Enables or disables finite-difference derivatives for tabulated impact.
    pub fn with_finite_differences(mut self, enabled: bool) -> Self {
        self.finite_differences = enabled;
        self
    }

    pub fn family(&self) -> &ImpactFamily {
        &self.family
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn permanent_impact(&self) -> f64 {
        self.permanent_impact
    }

    /// Constant resilience, if `ρ` is not tabulated.
    pub fn constant_resilience(&self) -> Option<f64> {
        match self.resilience {
            ResilienceRepr::Constant(rho) => Some(rho),
            ResilienceRepr::Table(_) => None,
        }
    }

    pub fn resilience_spec(&self) -> Resilience {
        match &self.resilience {
            ResilienceRepr::Constant(rho) => Resilience::Constant(*rho),
            ResilienceRepr::Table(t) => Resilience::Tabulated(t.pairs().collect()),
        }
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        match (&self.impact, self.finite_differences) {
            (ImpactRepr::Parametric, _) => DerivativeMode::Analytic,
            (ImpactRepr::Table(_), true) => DerivativeMode::FiniteDifference,
            (ImpactRepr::Table(_), false) => DerivativeMode::Unavailable,
        }
    }

    pub fn is_differentiable(&self) -> bool {
        self.derivative_mode() != DerivativeMode::Unavailable
    }

    /// Times at which tabulated inputs have nodes (empty for parametric profiles).
    pub fn table_nodes(&self) -> Vec<f64> {
        let mut nodes = Vec::new();
        if let ImpactRepr::Table(t) = &self.impact {
            nodes.extend_from_slice(&t.times);
        }
        if let ResilienceRepr::Table(t) = &self.resilience {
            nodes.extend_from_slice(&t.times);
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        nodes
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let tol = 1e-12 * self.horizon;
        if !t.is_finite() || t < -tol || t > self.horizon + tol {
            return Err(Error::Domain {
                t,
                lower: 0.0,
                upper: self.horizon,
            });
        }
        Ok(t.clamp(0.0, self.horizon))
    }

    /// Price impact `K(t)`.
    pub fn eval_k(&self, t: f64) -> Result<f64> {
        Ok(self.k(self.check_time(t)?))
    }

    /// `(K'(t), K''(t))`; analytic for parametric families, finite differences for tables.
    pub fn eval_k_derivatives(&self, t: f64) -> Result<(f64, f64)> {
        let t = self.check_time(t)?;
        if !self.is_differentiable() {
            return Err(Error::UnsupportedProfile(
                "tabulated impact without finite-difference derivatives".into(),
            ));
        }
        Ok(self.k_derivatives(t))
    }

    /// Resilience `ρ(t)`.
    pub fn eval_rho(&self, t: f64) -> Result<f64> {
        Ok(self.rho(self.check_time(t)?))
    }

    /// `exp(-∫_s^t ρ_u du)` for `0 ≤ s ≤ t ≤ T`.
    pub fn decay_factor(&self, s: f64, t: f64) -> Result<f64> {
        let s = self.check_time(s)?;
        let t = self.check_time(t)?;
        if s > t {
            return Err(Error::Domain {
                t: s,
                lower: 0.0,
                upper: t,
            });
        }
        Ok(self.decay(s, t))
    }

    pub(crate) fn k(&self, t: f64) -> f64 {
        match (&self.family, &self.impact) {
            (_, ImpactRepr::Table(table)) => table.eval(t),
            (ImpactFamily::Constant { kappa }, _) => *kappa,
            (ImpactFamily::Exponential { kappa, nu }, _) => {
                kappa * (nu * self.rho_for_exponential() * t).exp()
            }
            (ImpactFamily::StraightLine { kappa, slope }, _) => kappa + slope * t,
            (ImpactFamily::Quadratic { c0, c1, c2 }, _) => c0 + t * (c1 + t * c2),
            (ImpactFamily::Tabulated { .. }, ImpactRepr::Parametric) => unreachable!(),
        }
    }

    pub(crate) fn k_derivatives(&self, t: f64) -> (f64, f64) {
        match (&self.family, &self.impact) {
            (_, ImpactRepr::Table(table)) => {
                three_point_derivatives(|s| table.eval(s), t, table.local_spacing(t), self.horizon)
            }
            (ImpactFamily::Constant { .. }, _) => (0.0, 0.0),
            (ImpactFamily::Exponential { nu, .. }, _) => {
                let r = nu * self.rho_for_exponential();
                let k = self.k(t);
                (r * k, r * r * k)
            }
            (ImpactFamily::StraightLine { slope, .. }, _) => (*slope, 0.0),
            (ImpactFamily::Quadratic { c1, c2, .. }, _) => (c1 + 2.0 * c2 * t, 2.0 * c2),
            (ImpactFamily::Tabulated { .. }, ImpactRepr::Parametric) => unreachable!(),
        }
    }

    pub(crate) fn rho(&self, t: f64) -> f64 {
        match &self.resilience {
            ResilienceRepr::Constant(rho) => *rho,
            ResilienceRepr::Table(table) => table.eval(t),
        }
    }

    /// `ρ'(t)`; zero for constant resilience.
    pub(crate) fn rho_derivative(&self, t: f64) -> f64 {
        match &self.resilience {
            ResilienceRepr::Constant(_) => 0.0,
            ResilienceRepr::Table(table) => {
                three_point_derivatives(|s| table.eval(s), t, table.local_spacing(t), self.horizon)
                    .0
            }
        }
    }

    /// `∫_s^t ρ_u du`.
    pub(crate) fn rho_integral(&self, s: f64, t: f64) -> f64 {
        match &self.resilience {
            ResilienceRepr::Constant(rho) => rho * (t - s),
            ResilienceRepr::Table(table) => table.integral_to(t) - table.integral_to(s),
        }
    }

    pub(crate) fn decay(&self, s: f64, t: f64) -> f64 {
        (-self.rho_integral(s, t)).exp()
    }

    fn rho_for_exponential(&self) -> f64 {
        match self.resilience {
            ResilienceRepr::Constant(rho) => rho,
            // rejected at construction
            ResilienceRepr::Table(_) => f64::NAN,
        }
    }
}

fn validate_family(
    family: &ImpactFamily,
    resilience: &ResilienceRepr,
    horizon: f64,
) -> Result<ImpactRepr> {
    let finite = |field: &str, v: f64| {
        if v.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(field, "must be finite"))
        }
    };
    match family {
        ImpactFamily::Constant { kappa } => {
            finite("profile.kappa", *kappa)?;
            if *kappa <= 0.0 {
                return Err(Error::invalid("profile.kappa", "κ must be > 0"));
            }
        }
        ImpactFamily::Exponential { kappa, nu } => {
            finite("profile.kappa", *kappa)?;
            finite("profile.nu", *nu)?;
            if *kappa <= 0.0 {
                return Err(Error::invalid("profile.kappa", "κ must be > 0"));
            }
            if let ResilienceRepr::Table(_) = resilience {
                return Err(Error::invalid(
                    "profile.rho",
                    "the exponential family K = κ exp(νρt) requires constant ρ",
                ));
            }
        }
        ImpactFamily::StraightLine { kappa, slope } => {
            finite("profile.kappa", *kappa)?;
            finite("profile.slope", *slope)?;
            if *kappa <= 0.0 {
                return Err(Error::invalid("profile.kappa", "κ must be > 0"));
            }
            if kappa + slope * horizon <= 0.0 {
                return Err(Error::invalid(
                    "profile.slope",
                    format!("K(T) = κ + mT = {} must be > 0 (m > -κ/T)", kappa + slope * horizon),
                ));
            }
        }
        ImpactFamily::Quadratic { c0, c1, c2 } => {
            finite("profile.coefficients", *c0)?;
            finite("profile.coefficients", *c1)?;
            finite("profile.coefficients", *c2)?;
            let k = |t: f64| c0 + t * (c1 + t * c2);
            let mut candidates = vec![0.0, horizon];
            if *c2 != 0.0 {
                let vertex = -c1 / (2.0 * c2);
                if vertex > 0.0 && vertex < horizon {
                    candidates.push(vertex);
                }
            }
            if let Some(&t) = candidates.iter().find(|&&t| k(t) <= 0.0) {
                return Err(Error::invalid(
                    "profile.coefficients",
                    format!("K({t}) = {} is not strictly positive", k(t)),
                ));
            }
        }
        ImpactFamily::Tabulated { table } => {
            return Ok(ImpactRepr::Table(Table::new("profile.table", table, horizon)?));
        }
    }
    Ok(ImpactRepr::Parametric)
}

/// Trading times `t_0 < … < t_N` inside `[0, T]` with their decay factors
/// `a_j = exp(-∫_{t_j}^{t_{j+1}} ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    decay: Vec<f64>,
}

impl TimeGrid {
    pub fn new(profile: &LiquidityProfile, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::precondition("a time grid needs N >= 1 (two nodes)"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::precondition("grid nodes must be strictly increasing"));
        }
        let tol = 1e-12 * profile.horizon();
        if nodes[0] < -tol || nodes[nodes.len() - 1] > profile.horizon() + tol {
            return Err(Error::precondition("grid nodes must lie in [0, T]"));
        }
        let mut nodes = nodes;
        for t in nodes.iter_mut() {
            *t = t.clamp(0.0, profile.horizon());
        }
        let decay: Vec<f64> = nodes.windows(2).map(|w| profile.decay(w[0], w[1])).collect();
        if let Some(j) = decay.iter().position(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::precondition(format!(
                "decay factor a_{j} = {} is not in (0, 1)",
                decay[j]
            )));
        }
        Ok(TimeGrid { nodes, decay })
    }

    /// `N + 1` equally spaced nodes on `[0, T]`.
    pub fn uniform(profile: &LiquidityProfile, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::precondition("a time grid needs N >= 1"));
        }
        let horizon = profile.horizon();
        let nodes = (0..=steps)
            .map(|i| {
                if i == steps {
                    horizon
                } else {
                    horizon * i as f64 / steps as f64
                }
            })
            .collect();
        Self::new(profile, nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn decay_factors(&self) -> &[f64] {
        &self.decay
    }

    /// Number of steps `N` (the grid has `N + 1` nodes).
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let i = self.nodes.partition_point(|&x| x < t);
        if i == 0 {
            0
        } else if i == self.nodes.len() {
            i - 1
        } else if (self.nodes[i] - t) < (t - self.nodes[i - 1]) {
            i
        } else {
            i - 1
        }
    }

    /// Same nodes within `1e-12` relative.
    pub fn matches(&self, other: &TimeGrid) -> bool {
        self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }
}
