#![allow(dead_code)]

use lobexec::closedform::{self, ManipulationRegime};
use lobexec::{
    cost, dp, impact, DiscreteStrategy, ImpactFamily, LiquidityProfile, Resilience, TimeGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn random_resilience(r: &mut ChaCha8Rng, horizon: f64, allow_table: bool) -> Resilience {
    if allow_table && r.gen_bool(0.2) {
        let n = r.gen_range(3..7);
        Resilience::Tabulated(
            (0..n)
                .map(|i| (horizon * i as f64 / (n - 1) as f64, r.gen_range(0.3..4.0)))
                .collect(),
        )
    } else {
        Resilience::Constant(r.gen_range(0.2..5.0))
    }
}

/// Any valid profile, including ones that admit manipulation in the zero-spread model.
pub fn any_profile(r: &mut ChaCha8Rng) -> LiquidityProfile {
    loop {
        let horizon = r.gen_range(0.5..3.0);
        let kappa = r.gen_range(0.2..3.0);
        let family = match r.gen_range(0..5) {
            0 => ImpactFamily::Constant { kappa },
            1 => ImpactFamily::Exponential { kappa, nu: r.gen_range(-3.0..3.0) },
            2 => ImpactFamily::StraightLine {
                kappa,
                slope: r.gen_range(-0.95 * kappa / horizon..3.0),
            },
            3 => ImpactFamily::Quadratic {
                c0: kappa,
                c1: r.gen_range(-1.0..1.0),
                c2: r.gen_range(-0.5..1.0),
            },
            _ => {
                let n = r.gen_range(3..8);
                ImpactFamily::Tabulated {
                    table: (0..n)
                        .map(|i| (horizon * i as f64 / (n - 1) as f64, r.gen_range(0.3..2.5)))
                        .collect(),
                }
            }
        };
        if let ImpactFamily::Quadratic { c0, c1, c2 } = family {
            // Same depth floor as the straight-line slope range.
            let k_min = (0..=100)
                .map(|i| horizon * i as f64 / 100.0)
                .map(|t| c0 + t * (c1 + t * c2))
                .fold(f64::INFINITY, f64::min);
            if k_min < 0.05 * kappa {
                continue;
            }
        }
        let exponential = matches!(family, ImpactFamily::Exponential { .. });
        let resilience = random_resilience(r, horizon, !exponential);
        if let Ok(p) = LiquidityProfile::new(family, resilience, horizon, 0.0) {
            return p;
        }
    }
}

/// Smooth profile without transaction-triggered manipulation.
pub fn clean_profile(r: &mut ChaCha8Rng) -> LiquidityProfile {
    loop {
        let horizon = r.gen_range(0.5..3.0);
        let kappa = r.gen_range(0.2..3.0);
        let rho = r.gen_range(0.2..5.0);
        let candidate = match r.gen_range(0..4) {
            0 => LiquidityProfile::constant(kappa, rho, horizon),
            1 => {
                // K_T / K_0 = exp(ν ρ T) stays within e^{±12}
                let nu_max = 3.0f64.min(12.0 / (rho * horizon));
                LiquidityProfile::exponential(kappa, r.gen_range(-1.0..nu_max), rho, horizon)
            }
            2 => {
                let lower = -2.0 * rho * kappa / (3.0 + 2.0 * rho * horizon);
                LiquidityProfile::straight_line(kappa, r.gen_range(lower..3.0), rho, horizon)
            }
            _ => LiquidityProfile::new(
                ImpactFamily::Quadratic {
                    c0: kappa,
                    c1: r.gen_range(-0.3..1.0),
                    c2: r.gen_range(-0.2..1.0),
                },
                Resilience::Constant(rho),
                horizon,
                0.0,
            ),
        };
        let Ok(p) = candidate else { continue };
        let clean = closedform::classify_manipulation(&p, 2001)
            .map(|v| v.regime == ManipulationRegime::Clean)
            .unwrap_or(false);
        if clean {
            return p;
        }
    }
}

pub fn random_grid(r: &mut ChaCha8Rng, profile: &LiquidityProfile, max_steps: usize) -> TimeGrid {
    let steps = r.gen_range(1..=max_steps);
    if r.gen_bool(0.5) {
        return TimeGrid::uniform(profile, steps).unwrap();
    }
    let horizon = profile.horizon();
    let mut interior: Vec<f64> = (0..steps - 1).map(|_| r.gen_range(0.0..horizon)).collect();
    interior.sort_by(f64::total_cmp);
    let mut nodes = vec![0.0];
    for t in interior {
        if t - nodes[nodes.len() - 1] > 1e-3 * horizon && horizon - t > 1e-3 * horizon {
            nodes.push(t);
        }
    }
    nodes.push(horizon);
    TimeGrid::new(profile, nodes).unwrap()
}

pub fn random_buys(r: &mut ChaCha8Rng, grid: &TimeGrid, x: f64) -> DiscreteStrategy {
    let mut weights: Vec<f64> = (0..grid.len())
        .map(|_| if r.gen_bool(0.3) { 0.0 } else { r.gen_range(0.0..1.0) })
        .collect();
    let last = weights.len() - 1;
    weights[last] += 1e-3;
    let total: f64 = weights.iter().sum();
    DiscreteStrategy::new(grid.clone(), weights.iter().map(|w| x * w / total).collect()).unwrap()
}

pub fn random_signed(r: &mut ChaCha8Rng, grid: &TimeGrid) -> DiscreteStrategy {
    let trades = (0..grid.len()).map(|_| r.gen_range(-5.0..5.0)).collect();
    DiscreteStrategy::new(grid.clone(), trades).unwrap()
}

/// Hessian of the quadratic temporary cost in `(ξ_0, …, ξ_N)`, max-row-sum norm.
pub fn cost_hessian_norm(profile: &LiquidityProfile, grid: &TimeGrid) -> f64 {
    let nodes = grid.nodes();
    let n = nodes.len();
    let k: Vec<f64> = nodes.iter().map(|&t| profile.eval_k(t).unwrap()).collect();
    let mut norm: f64 = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += if i == j {
                k[i]
            } else {
                let (lo, hi) = (i.min(j), i.max(j));
                k[lo] * profile.decay_factor(nodes[lo], nodes[hi]).unwrap()
            };
        }
        norm = norm.max(row);
    }
    norm
}

/// Minimum of the temporary cost over the lattice `{ξ ≥ 0, Σξ = x, ξ ∈ hℤ}`, `h = x/steps`.
pub fn brute_force_min(profile: &LiquidityProfile, grid: &TimeGrid, x: f64, delta: f64, steps: usize) -> f64 {
    let n = grid.len();
    let h = x / steps as f64;
    let mut units = vec![0usize; n];
    let mut best = f64::INFINITY;
    fn rec(
        i: usize,
        left: usize,
        units: &mut Vec<usize>,
        best: &mut f64,
        eval: &dyn Fn(&[usize]) -> f64,
    ) {
        if i == units.len() - 1 {
            units[i] = left;
            *best = best.min(eval(units));
            return;
        }
        for u in 0..=left {
            units[i] = u;
            rec(i + 1, left - u, units, best, eval);
        }
    }
    let nodes = grid.nodes();
    let k: Vec<f64> = nodes.iter().map(|&t| profile.eval_k(t).unwrap()).collect();
    let a = grid.decay_factors().to_vec();
    let eval = |u: &[usize]| {
        let mut d = delta;
        let mut c = 0.0;
        for j in 0..u.len() {
            let xi = u[j] as f64 * h;
            c += (d + 0.5 * k[j] * xi) * xi;
            d += k[j] * xi;
            if j < a.len() {
                d *= a[j];
            }
        }
        c
    };
    rec(0, steps, &mut units, &mut best, &eval);
    best
}

// ---- property checks shared by the proptest suites and the acceptance target ----

/// `dp_value(n, aδ, ax) = a²·dp_value(n, δ, x)` and the same scaling for zero-spread cost.
pub fn check_scaling(seed: u64) -> Check {
    let r = &mut rng(seed);
    let p = any_profile(r);
    let g = random_grid(r, &p, 30);
    let res = dp::solve(&p, &g).map_err(|e| e.to_string())?;
    let (x, delta, a) = (r.gen_range(0.1..100.0), r.gen_range(0.0..10.0), r.gen_range(0.01..50.0));
    let n = r.gen_range(0..=g.steps());
    let v = dp::dp_value(&res, n, delta, x).unwrap();
    let scaled = dp::dp_value(&res, n, a * delta, a * x).unwrap();
    if !rel_close(scaled, a * a * v, 1e-12) {
        return Err(format!("dp scaling: {scaled} vs {}", a * a * v));
    }
    let s = random_signed(r, &g);
    let c = cost::zero_spread_cost(&p, &s, delta).unwrap();
    let sa = DiscreteStrategy::new(g.clone(), s.trades().iter().map(|t| a * t).collect()).unwrap();
    let ca = cost::zero_spread_cost(&p, &sa, a * delta).unwrap();
    let scale = (a * a * c).abs().max(a * a * (delta * delta + s.trades().iter().map(|t| t * t).sum::<f64>()));
    if (ca - a * a * c).abs() > 1e-10 * scale {
        return Err(format!("cost scaling: {ca} vs {}", a * a * c));
    }
    Ok(())
}

/// Trading `ξ` at `t_n` costs the same as trading `ξ₁` and then `ξ − ξ₁` at the same time.
pub fn check_splitting(seed: u64) -> Check {
    let r = &mut rng(seed);
    let p = any_profile(r);
    let g = random_grid(r, &p, 20);
    if g.steps() < 1 {
        return Ok(());
    }
    let x = r.gen_range(1.0..100.0);
    let s = random_buys(r, &g, x);
    let delta = r.gen_range(0.0..5.0);
    let whole = cost::temp_cost(&p, &s, delta).unwrap();
    let path = impact::one_sided_impact(&p, &s, delta).unwrap();

    let n = r.gen_range(0..g.steps());
    let first = r.gen_range(0.0..=1.0) * s.trades()[n];
    let nodes = g.nodes();
    let k_n = p.eval_k(nodes[n]).unwrap();
    // prefix up to and including the first part at t_n, then the rest from the post-trade state
    let mut prefix = s.trades()[..n].to_vec();
    prefix.push(first);
    let (head, head_dev) = if n == 0 {
        ((delta + 0.5 * k_n * first) * first, delta + k_n * first)
    } else {
        let hg = TimeGrid::new(&p, nodes[..=n].to_vec()).unwrap();
        let hs = DiscreteStrategy::new(hg, prefix).unwrap();
        let hp = impact::one_sided_impact(&p, &hs, delta).unwrap();
        (cost::temp_cost(&p, &hs, delta).unwrap(), hp.after(n))
    };
    let mut rest = vec![s.trades()[n] - first];
    rest.extend_from_slice(&s.trades()[n + 1..]);
    let tg = TimeGrid::new(&p, nodes[n..].to_vec()).unwrap();
    let ts = DiscreteStrategy::new(tg, rest).unwrap();
    let tail = cost::temp_cost(&p, &ts, head_dev).unwrap();
    let tail_path = impact::one_sided_impact(&p, &ts, head_dev).unwrap();
    if !rel_close(head + tail, whole, 1e-12) {
        return Err(format!("split cost {} vs {whole}", head + tail));
    }
    if !rel_close(tail_path.after(0), path.after(n), 1e-12) {
        return Err(format!("post-trade deviation {} vs {}", tail_path.after(0), path.after(n)));
    }
    Ok(())
}

/// Deviation-squared identity against the direct sum, 1e−6 relative.
pub fn check_identity(seed: u64) -> Check {
    let r = &mut rng(seed);
    let p = loop {
        let p = any_profile(r);
        if !p.table_nodes().is_empty() {
            continue;
        }
        break p;
    };
    let g = random_grid(r, &p, 40);
    let x = r.gen_range(1.0..100.0);
    let s = random_buys(r, &g, x);
    let delta = r.gen_range(0.0..5.0);
    let direct = cost::temp_cost(&p, &s, delta).unwrap();
    let identity = cost::cost_via_impact_identity(&p, &s, delta, cost::DEFAULT_PANELS).unwrap();
    if !rel_close(direct, identity, 1e-6) {
        return Err(format!("identity {identity} vs direct {direct} on {:?}", p.family()));
    }
    Ok(())
}

/// Dynamic-spread round trips never earn money.
pub fn check_round_trip(seed: u64) -> Check {
    let r = &mut rng(seed);
    let gamma = if r.gen_bool(0.5) { 0.0 } else { 0.5 };
    let p = any_profile(r).with_permanent_impact(gamma).unwrap();
    let g = random_grid(r, &p, 20);
    let volume = r.gen_range(0.1..50.0);
    let buys = random_buys(r, &g, volume);
    let sells = random_buys(r, &g, volume);
    let price = r.gen_range(0.0..100.0);
    let c = cost::total_cost_dynamic_spread(&p, &buys, &sells, 0.0, 0.0, price, price).unwrap();
    if c < -1e-9 * (1.0 + price * volume) {
        return Err(format!("round trip earns {c} on {:?}", p.family()));
    }
    Ok(())
}

/// Every value function of a solve satisfies the piecewise-quadratic invariants, and the
/// solve agrees with chained explicit backsteps.
pub fn check_vf_invariants(seed: u64) -> Check {
    let r = &mut rng(seed);
    let p = any_profile(r);
    let g = random_grid(r, &p, 60);
    let res = dp::solve(&p, &g).map_err(|e| e.to_string())?;
    let mut vf = dp::terminal_vf(&p, &g);
    for n in (0..g.steps()).rev() {
        let k = p.eval_k(g.nodes()[n]).unwrap();
        let (next, c) = dp::backstep(&vf, k, g.decay_factors()[n]).map_err(|e| format!("step {n}: {e}"))?;
        vf = next;
        vf.validate().map_err(|e| format!("step {n}: {e}"))?;
        let stacked = res.value_function(n);
        stacked.validate().map_err(|e| format!("stack {n}: {e}"))?;
        let cs = res.barrier()[n];
        // a flat `l` makes the root ill-conditioned; the value function is not
        let same_vf = || {
            [c, cs, 2.0 * c.max(cs)]
                .iter()
                .all(|&y| rel_close(stacked.eval(y), vf.eval(y), 1e-9))
        };
        if !(cs == c || rel_close(cs, c, 1e-9) || (c.is_finite() && cs.is_finite() && same_vf())) {
            return Err(format!("barrier {cs} vs {c} at step {n}"));
        }
        if !(cs > 0.0) {
            return Err(format!("barrier {cs} at step {n} is not positive"));
        }
    }
    if res.diagnostics().piece_bound_exceeded {
        return Err("piece-count bound exceeded".into());
    }
    Ok(())
}

/// `dp_value(n, δ, x) < (δ + K_n x/2)·x` before the last node.
pub fn check_never_complete_early(seed: u64) -> Check {
    let r = &mut rng(seed);
    let p = any_profile(r);
    let g = random_grid(r, &p, 40);
    if g.steps() == 0 {
        return Ok(());
    }
    let res = dp::solve(&p, &g).map_err(|e| e.to_string())?;
    let n = r.gen_range(0..g.steps());
    let (x, delta) = (r.gen_range(0.01..100.0), r.gen_range(0.0..10.0));
    let v = dp::dp_value(&res, n, delta, x).unwrap();
    let k = p.eval_k(g.nodes()[n]).unwrap();
    let immediate = (delta + 0.5 * k * x) * x;
    if !(v < immediate) {
        return Err(format!("dp value {v} not below immediate cost {immediate}"));
    }
    Ok(())
}

/// `ΔΘ_0 + ∫rate + ΔΘ_T = x` for the closed-form optimum.
pub fn check_mass(seed: u64) -> Check {
    let r = &mut rng(seed);
    let p = clean_profile(r);
    let x = r.gen_range(1.0..100.0);
    let delta = r.gen_range(0.0..2.0);
    let opt = closedform::zero_spread_optimal(&p, delta, x, closedform::DEFAULT_PANELS)
        .map_err(|e| e.to_string())?;
    if !rel_close(opt.strategy.total(), x, 1e-6) {
        return Err(format!("mass {} vs {x}", opt.strategy.total()));
    }
    Ok(())
}

/// The deviation of the closed-form optimum equals `δ↕ f_t` on `(0, T]`.
pub fn check_constant_deviation(seed: u64) -> Check {
    let r = &mut rng(seed);
    let p = clean_profile(r);
    let x = r.gen_range(1.0..100.0);
    let delta = r.gen_range(0.0..2.0);
    let opt = closedform::zero_spread_optimal(&p, delta, x, closedform::DEFAULT_PANELS)
        .map_err(|e| e.to_string())?;
    let path = opt.strategy.deviation_path(&p, delta).map_err(|e| e.to_string())?;
    let fp = closedform::f_profile(&p, opt.strategy.rate_times().len()).map_err(|e| e.to_string())?;
    let du = opt.delta_updown;
    for (i, (&d, &f)) in path.pre_trade().iter().zip(fp.f()).enumerate().skip(1) {
        if (d - du * f).abs() > 1e-6 * du.abs().max(1e-12) {
            return Err(format!("deviation {d} vs {} at node {i}", du * f));
        }
    }
    if (path.after(0) - du * fp.f()[0]).abs() > 1e-6 * du.abs() {
        return Err(format!("deviation after the first impulse {} vs {}", path.after(0), du * fp.f()[0]));
    }
    if (path.terminal() - du).abs() > 1e-6 * du.abs() {
        return Err(format!("terminal deviation {} vs {du}", path.terminal()));
    }
    Ok(())
}
