//! Optimal execution in block-shaped limit order books with time-varying depth and resilience.
//!
//! The order book is described by a [`LiquidityProfile`]: the inverse depth `K_t`, the
//! resilience `ρ_t`, the horizon `T` and the permanent impact `γ`. On a [`TimeGrid`] the
//! [`dp`] module solves the discrete buy problem by backward induction and returns the
//! optimal trades through a wait-region barrier. The [`closedform`] module covers the
//! zero-spread continuous-time problem: the optimal strategy, its barrier and a
//! classification of price manipulation.

pub mod closedform;
pub mod cost;
pub mod dp;
mod error;
pub mod impact;
pub mod liquidity;
pub mod quad;

pub use closedform::{
    analytic_example, classify_manipulation, continuous_barrier, continuous_barrier_curve,
    dynamic_spread_optimal, f_profile, infinite_barrier_check, round_trip_witness,
    zero_spread_optimal, AnalyticExample, AnalyticStrategy, FProfile, ManipulationRegime,
    ManipulationVerdict, RegimeThresholds, RoundTrip, ZeroSpreadOptimum,
};
pub use cost::{
    cost_decomposition, cost_via_impact_identity, dynamic_spread_legs, temp_cost, total_cost_dynamic_spread,
    zero_spread_cost, CostBreakdown, DynamicSpreadLegs,
};
pub use dp::{
    backstep, dp_value, extract_strategy, solve, terminal_vf, Diagnostics, PiecewiseQuadratic,
    QuadPiece, SolveResult,
};
pub use error::{Error, Result};
pub use impact::{
    one_sided_impact, two_sided_impact, zero_spread_impact, ContinuousStrategy, DiscreteStrategy,
    ImpactPath,
};
pub use liquidity::{DerivativeMode, ImpactFamily, LiquidityProfile, Resilience, TimeGrid};
