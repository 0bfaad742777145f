//! Backward induction for the discrete buy problem.
//!
//! With `y = x/δ` the value function reduces to `V(t_n, x, δ) = δ² V_n(y)`, where each
//! `V_n` is a C¹ piecewise quadratic. One backward step rescales `V_{n+1}` by the decay
//! factor, locates the minimiser `c_n` of
//!
//! ```text
//! L(y) = (1 + 2 K_n a_n² V_{n+1}(y / a_n)) / (1 + K_n y)²
//! ```
//!
//! and replaces everything above `c_n` by a single quadratic. Trading is optimal exactly
//! when `y > c_n`, and then the trade brings the ratio down to `c_n`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::impact::DiscreteStrategy;
use crate::liquidity::{LiquidityProfile, TimeGrid};

const MERGE_TOL: f64 = 1e-12;
const C1_TOL: f64 = 1e-9;
const INEQ_TOL: f64 = 1e-12;

/// `α y² + β y + γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadPiece {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl QuadPiece {
    pub fn eval(&self, y: f64) -> f64 {
        (self.alpha * y + self.beta) * y + self.gamma
    }

    pub fn slope(&self, y: f64) -> f64 {
        2.0 * self.alpha * y + self.beta
    }

    /// The piece of `y ↦ a² q(y / a)`.
    pub fn rescaled(&self, a: f64) -> QuadPiece {
        QuadPiece {
            alpha: self.alpha,
            beta: self.beta * a,
            gamma: self.gamma * a * a,
        }
    }

    /// `(slope, intercept)` of the numerator of `L'` on this piece, for a piece that is
    /// already expressed in the coordinates of the current step.
    fn l_coefficients(&self, k: f64) -> (f64, f64) {
        (
            2.0 * self.alpha - k * self.beta,
            self.beta - 2.0 * k * self.gamma - 1.0,
        )
    }

    /// Quadratic that applies above the barrier: `(K L/2, L, (L − 1)/(2K))`.
    fn buy_region(k: f64, l_star: f64) -> QuadPiece {
        QuadPiece {
            alpha: 0.5 * k * l_star,
            beta: l_star,
            gamma: (l_star - 1.0) / (2.0 * k),
        }
    }

    fn check(&self, lower: f64, index: usize) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.beta > 0.0
            && 4.0 * self.alpha * self.gamma + self.beta - self.beta * self.beta >= -INEQ_TOL
            && lower * self.beta + 2.0 * self.gamma >= -INEQ_TOL;
        if ok {
            Ok(())
        } else {
            Err(Error::Internal(format!(
                "piece {index} violates the value-function inequalities: {self:?} above y = {lower}"
            )))
        }
    }
}

/// C¹ piecewise quadratic on `[0, ∞)`.
///
/// `breakpoints` holds the interior points `0 < y_1 < … < y_{M−1}`; piece `i` applies on
/// `(y_i, y_{i+1}]` with `y_0 = 0` and `y_M = ∞`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseQuadratic {
    breakpoints: Vec<f64>,
    pieces: Vec<QuadPiece>,
}

impl PiecewiseQuadratic {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<QuadPiece>) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::precondition(format!(
                "{} pieces need {} breakpoints, got {}",
                pieces.len(),
                pieces.len().saturating_sub(1),
                breakpoints.len()
            )));
        }
        let mut prev = 0.0;
        for &b in &breakpoints {
            if !(b > prev) || !b.is_finite() {
                return Err(Error::precondition(
                    "breakpoints must be finite, positive and strictly increasing",
                ));
            }
            prev = b;
        }
        Ok(PiecewiseQuadratic { breakpoints, pieces })
    }

    /// `V_N(y) = (1 + K_N y / 2) y`.
    pub fn terminal(k_last: f64) -> Self {
        PiecewiseQuadratic {
            breakpoints: Vec::new(),
            pieces: vec![QuadPiece { alpha: 0.5 * k_last, beta: 1.0, gamma: 0.0 }],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[QuadPiece] {
        &self.pieces
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    /// Index of the piece that applies at `y`.
    pub fn piece_index(&self, y: f64) -> usize {
        self.breakpoints.partition_point(|&b| b < y)
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.pieces[self.piece_index(y)].eval(y)
    }

    pub fn slope(&self, y: f64) -> f64 {
        self.pieces[self.piece_index(y)].slope(y)
    }

    /// `α` of the unbounded piece, i.e. `lim δ²V(x/δ) / x²` as `δ → 0`.
    pub fn leading_coefficient(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].alpha
    }

    fn lower(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.breakpoints[i - 1]
        }
    }

    /// Checks positivity, the two coefficient inequalities and C¹ continuity.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.pieces.iter().enumerate() {
            p.check(self.lower(i), i)?;
        }
        for (i, &y) in self.breakpoints.iter().enumerate() {
            let (lo, hi) = (&self.pieces[i], &self.pieces[i + 1]);
            let value_gap = (lo.eval(y) - hi.eval(y)).abs();
            let slope_gap = (lo.slope(y) - hi.slope(y)).abs();
            if value_gap > C1_TOL * (1.0 + lo.eval(y).abs())
                || slope_gap > C1_TOL * (1.0 + lo.slope(y).abs())
            {
                return Err(Error::Internal(format!(
                    "value function is not C1 at breakpoint {y}: value gap {value_gap:e}, slope gap {slope_gap:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Terminal value function for `grid`.
pub fn terminal_vf(profile: &LiquidityProfile, grid: &TimeGrid) -> PiecewiseQuadratic {
    PiecewiseQuadratic::terminal(profile.k(grid.nodes()[grid.len() - 1]))
}

enum Scan {
    /// `l < 0` everywhere: wait.
    Infinite,
    /// Root `c` inside the piece reached after dropping `dropped` pieces from the top.
    Root { c: f64, piece: QuadPiece, lower: f64, dropped: usize },
}

/// Walks pieces from the top down. `pieces` yields `(lower breakpoint, piece)` already in
/// the current coordinates; `l` has a single sign change from negative to positive.
fn scan<I>(pieces: I, k: f64) -> Result<Scan>
where
    I: Iterator<Item = (f64, QuadPiece)>,
{
    let mut upper = f64::INFINITY;
    let mut last = None;
    for (dropped, (lower, piece)) in pieces.enumerate() {
        let (s, b) = piece.l_coefficients(k);
        let at_lower = s * lower + b;
        if at_lower < 0.0 {
            let c = if s > 0.0 {
                (-b / s).clamp(lower, upper)
            } else if upper.is_infinite() {
                return Ok(Scan::Infinite);
            } else {
                upper
            };
            return Ok(Scan::Root { c, piece, lower, dropped });
        }
        upper = lower;
        last = Some((lower, piece, dropped));
    }
    // l(0) >= 0: buy down to zero
    match last {
        Some((lower, piece, dropped)) => Ok(Scan::Root { c: lower, piece, lower, dropped }),
        None => Err(Error::Internal("empty value function".into())),
    }
}

/// Whether a barrier `c` is close enough to the breakpoint `lower` below it to replace it.
/// Measured in `K y`, the scale on which the pieces vary.
fn merges(c: f64, lower: f64, k: f64) -> bool {
    k * (c - lower) <= MERGE_TOL * (1.0 + k * c)
}

fn l_value(piece: &QuadPiece, k: f64, y: f64) -> f64 {
    (1.0 + 2.0 * k * piece.eval(y)) / ((1.0 + k * y) * (1.0 + k * y))
}

/// One backward step on an explicit value function. Returns `V_n` and the barrier `c_n`.
pub fn backstep(vf_next: &PiecewiseQuadratic, k_n: f64, a_n: f64) -> Result<(PiecewiseQuadratic, f64)> {
    if !(k_n > 0.0 && k_n.is_finite()) {
        return Err(Error::precondition(format!("impact coefficient {k_n} must be positive")));
    }
    if !(a_n > 0.0 && a_n < 1.0) {
        return Err(Error::precondition(format!("decay factor {a_n} must lie in (0, 1)")));
    }
    vf_next.validate()?;
    let m = vf_next.pieces.len();
    let rescaled = (0..m)
        .rev()
        .map(|i| (vf_next.lower(i) * a_n, vf_next.pieces[i].rescaled(a_n)));
    match scan(rescaled, k_n)? {
        Scan::Infinite => {
            let breakpoints = vf_next.breakpoints.iter().map(|b| b * a_n).collect();
            let pieces = vf_next.pieces.iter().map(|p| p.rescaled(a_n)).collect();
            Ok((PiecewiseQuadratic { breakpoints, pieces }, f64::INFINITY))
        }
        Scan::Root { c, piece, lower, dropped } => {
            let top = QuadPiece::buy_region(k_n, l_value(&piece, k_n, c));
            let mut keep = m - dropped;
            let mut bp = c;
            if merges(c, lower, k_n) {
                keep -= 1;
                bp = lower;
            }
            let mut breakpoints: Vec<f64> =
                vf_next.breakpoints[..keep.saturating_sub(1)].iter().map(|b| b * a_n).collect();
            let mut pieces: Vec<QuadPiece> =
                vf_next.pieces[..keep].iter().map(|p| p.rescaled(a_n)).collect();
            if keep > 0 {
                breakpoints.push(bp);
            }
            pieces.push(top);
            Ok((PiecewiseQuadratic { breakpoints, pieces }, c))
        }
    }
}

/// Per-solve bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Pieces of `V_n`, indexed by grid node.
    pub piece_counts: Vec<usize>,
    /// Pieces discarded above the barrier at each step (index `n` for the step building `V_n`).
    pub dropped: Vec<usize>,
    /// Barriers that fell within merge tolerance of an existing breakpoint.
    pub merged: usize,
    pub max_pieces: usize,
    /// Set when some `V_n` has more than `N − n + 1` pieces.
    pub piece_bound_exceeded: bool,
    /// Largest relative value/slope mismatch at a newly created breakpoint.
    pub max_c1_residual: f64,
}

/// Pieces are stored once, in the coordinates of the step that created them, and shared
/// between all later value functions.
#[derive(Debug, Clone)]
struct Node {
    piece: QuadPiece,
    lower: f64,
    below: Option<usize>,
    step: usize,
}

/// Barrier, value functions and diagnostics of a discrete solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    grid: TimeGrid,
    impact: Vec<f64>,
    barrier: Vec<f64>,
    nodes: Vec<Node>,
    tops: Vec<usize>,
    log_decay: Vec<f64>,
    diagnostics: Diagnostics,
}

impl SolveResult {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `c_0, …, c_N` with `c_N = 0` and `f64::INFINITY` for an empty buy region.
    pub fn barrier(&self) -> &[f64] {
        &self.barrier
    }

    /// `K` at the grid nodes.
    pub fn impact_coefficients(&self) -> &[f64] {
        &self.impact
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn steps(&self) -> usize {
        self.barrier.len() - 1
    }

    fn scale(&self, n: usize, step: usize) -> f64 {
        (self.log_decay[n] - self.log_decay[step]).exp()
    }

    /// Pieces of `V_n` from the top down, as `(lower breakpoint, piece)` in step-`n` coordinates.
    fn walk(&self, n: usize) -> impl Iterator<Item = (f64, QuadPiece)> + '_ {
        let mut cursor = Some(self.tops[n]);
        std::iter::from_fn(move || {
            let node = &self.nodes[cursor?];
            cursor = node.below;
            let a = self.scale(n, node.step);
            Some((node.lower * a, node.piece.rescaled(a)))
        })
    }

    /// `V_n` as an explicit piecewise quadratic.
    pub fn value_function(&self, n: usize) -> PiecewiseQuadratic {
        let mut parts: Vec<(f64, QuadPiece)> = self.walk(n).collect();
        parts.reverse();
        PiecewiseQuadratic {
            breakpoints: parts.iter().skip(1).map(|(b, _)| *b).collect(),
            pieces: parts.into_iter().map(|(_, p)| p).collect(),
        }
    }

    /// The whole stack `V_0, …, V_N`.
    pub fn value_functions(&self) -> Vec<PiecewiseQuadratic> {
        (0..self.barrier.len()).map(|n| self.value_function(n)).collect()
    }

    /// `V_n(y)` without materialising the value function.
    pub fn eval(&self, n: usize, y: f64) -> f64 {
        self.walk(n)
            .find(|(lower, _)| *lower < y || *lower == 0.0)
            .map(|(_, p)| p.eval(y))
            .unwrap_or(0.0)
    }

    fn leading_coefficient(&self, n: usize) -> f64 {
        self.nodes[self.tops[n]].piece.alpha
    }
}

/// Runs the backward recursion over `grid`.
pub fn solve(profile: &LiquidityProfile, grid: &TimeGrid) -> Result<SolveResult> {
    let times = grid.nodes();
    let horizon = profile.horizon();
    if times[times.len() - 1] > horizon * (1.0 + 1e-12) {
        return Err(Error::GridMismatch(format!(
            "grid ends at {} beyond the horizon {horizon}",
            times[times.len() - 1]
        )));
    }
    let impact: Vec<f64> = times.iter().map(|&t| profile.k(t)).collect();
    if let Some((n, k)) = impact.iter().enumerate().find(|(_, k)| !(**k > 0.0 && k.is_finite())) {
        return Err(Error::precondition(format!("K at node {n} is {k}, must be positive")));
    }
    let decay = grid.decay_factors();
    let steps = grid.steps();
    let mut log_decay = vec![0.0; steps + 1];
    for j in 0..steps {
        log_decay[j + 1] = log_decay[j] - decay[j].ln();
    }

    let mut nodes = vec![Node {
        piece: QuadPiece { alpha: 0.5 * impact[steps], beta: 1.0, gamma: 0.0 },
        lower: 0.0,
        below: None,
        step: steps,
    }];
    let mut depth = vec![1usize];
    let mut tops = vec![0usize; steps + 1];
    tops[steps] = 0;
    let mut barrier = vec![0.0; steps + 1];
    let mut diagnostics = Diagnostics {
        piece_counts: vec![0; steps + 1],
        dropped: vec![0; steps + 1],
        merged: 0,
        max_pieces: 1,
        piece_bound_exceeded: false,
        max_c1_residual: 0.0,
    };
    diagnostics.piece_counts[steps] = 1;

    for n in (0..steps).rev() {
        let k = impact[n];
        // pieces of V_{n+1} seen in step-n coordinates, with their arena index
        let mut cursor = Some(tops[n + 1]);
        let mut order = Vec::new();
        let walk = std::iter::from_fn(|| {
            let id = cursor?;
            let node = &nodes[id];
            cursor = node.below;
            order.push(id);
            let a = (log_decay[n] - log_decay[node.step]).exp();
            Some((node.lower * a, node.piece.rescaled(a)))
        });
        let outcome = scan(walk, k)?;
        match outcome {
            Scan::Infinite => {
                barrier[n] = f64::INFINITY;
                tops[n] = tops[n + 1];
            }
            Scan::Root { c, piece, lower, dropped } => {
                let l_star = l_value(&piece, k, c);
                let top = QuadPiece::buy_region(k, l_star);
                top.check(c, 0)?;
                let residual = ((top.eval(c) - piece.eval(c)).abs() / (1.0 + piece.eval(c).abs()))
                    .max((top.slope(c) - piece.slope(c)).abs() / (1.0 + piece.slope(c).abs()));
                diagnostics.max_c1_residual = diagnostics.max_c1_residual.max(residual);

                let holder = order[dropped];
                let (lower_bp, below, dropped_total) = if merges(c, lower, k) {
                    diagnostics.merged += 1;
                    (lower, nodes[holder].below, dropped + 1)
                } else {
                    (c, Some(holder), dropped)
                };
                diagnostics.dropped[n] = dropped_total;
                barrier[n] = c;
                let new_depth = below.map_or(0, |b| depth[b]) + 1;
                nodes.push(Node { piece: top, lower: lower_bp, below, step: n });
                depth.push(new_depth);
                tops[n] = nodes.len() - 1;
            }
        }
        let count = depth[tops[n]];
        diagnostics.piece_counts[n] = count;
        diagnostics.max_pieces = diagnostics.max_pieces.max(count);
        if count > steps - n + 1 {
            diagnostics.piece_bound_exceeded = true;
        }
    }

    Ok(SolveResult {
        grid: grid.clone(),
        impact,
        barrier,
        nodes,
        tops,
        log_decay,
        diagnostics,
    })
}

fn check_state(x: f64, delta: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::precondition(format!("order size {x} must be >= 0")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::precondition(format!("deviation {delta} must be >= 0")));
    }
    Ok(())
}

/// Optimal buy schedule for `x` shares starting from deviation `delta0`.
pub fn extract_strategy(result: &SolveResult, x: f64, delta0: f64) -> Result<DiscreteStrategy> {
    check_state(x, delta0)?;
    let steps = result.steps();
    let decay = result.grid.decay_factors();
    let mut trades = Vec::with_capacity(steps + 1);
    let (mut remaining, mut delta) = (x, delta0);
    for n in 0..steps {
        let c = result.barrier[n];
        let k = result.impact[n];
        let xi = if c.is_infinite() {
            0.0
        } else {
            ((remaining - c * delta) / (1.0 + k * c)).max(0.0)
        };
        trades.push(xi);
        remaining -= xi;
        delta = (delta + k * xi) * decay[n];
    }
    trades.push(remaining);
    DiscreteStrategy::new(result.grid.clone(), trades)
}

/// Minimal expected temporary cost of buying `x` from node `n` at deviation `delta`.
pub fn dp_value(result: &SolveResult, n: usize, delta: f64, x: f64) -> Result<f64> {
    check_state(x, delta)?;
    if n > result.steps() {
        return Err(Error::precondition(format!(
            "node {n} outside a grid with {} steps",
            result.steps()
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if delta == 0.0 {
        return Ok(x * x * result.leading_coefficient(n));
    }
    Ok(delta * delta * result.eval(n, x / delta))
}
