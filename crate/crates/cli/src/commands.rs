//! One function per subcommand. Each writes its CSV artifacts and returns the `results`
//! object of the summary.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use lobexec::{
    analytic_example, classify_manipulation, continuous_barrier_curve, cost_decomposition,
    cost_via_impact_identity, dp_value, dynamic_spread_legs, dynamic_spread_optimal,
    extract_strategy, solve, temp_cost, zero_spread_cost, DiscreteStrategy, ImpactFamily,
    LiquidityProfile, SolveResult, TimeGrid,
};
use serde_json::{json, Value};

use crate::config::{LoadedConfig, Variant};
use crate::output::{num, read_schedule, write_csv};

fn steps(cfg: &LoadedConfig) -> Result<usize> {
    cfg.run.grid.steps.ok_or_else(|| anyhow!("grid.steps is required (or pass --n)"))
}

fn diagnostics(result: &SolveResult) -> Value {
    let d = result.diagnostics();
    json!({
        "steps": result.steps(),
        "max_pieces": d.max_pieces,
        "piece_bound_exceeded": d.piece_bound_exceeded,
        "merged": d.merged,
        "dropped_total": d.dropped.iter().sum::<usize>(),
        "max_c1_residual": num(d.max_c1_residual),
        "piece_counts": d.piece_counts,
    })
}

pub fn solve_cmd(cfg: &LoadedConfig, out: &Path) -> Result<Value> {
    let profile = cfg.profile()?;
    let order = &cfg.run.order;
    let grid = TimeGrid::uniform(&profile, steps(cfg)?)?;
    let result = solve(&profile, &grid)?;
    let strategy = extract_strategy(&result, order.x, order.delta)?;
    let value = dp_value(&result, 0, order.delta, order.x)?;
    let breakdown = cost_decomposition(&profile, &strategy, order.delta, order.ask)?;

    let nodes = grid.nodes();
    let barrier_rows: Vec<Vec<f64>> =
        nodes.iter().zip(result.barrier()).map(|(&t, &c)| vec![t, c]).collect();
    write_csv(&out.join("barrier.csv"), &["t", "c"], &barrier_rows)?;
    let trade_rows: Vec<Vec<f64>> =
        nodes.iter().zip(strategy.trades()).map(|(&t, &xi)| vec![t, xi]).collect();
    write_csv(&out.join("strategy.csv"), &["t", "trade"], &trade_rows)?;

    Ok(json!({
        "value": num(value),
        "cost": {
            "unaffected": num(breakdown.unaffected),
            "permanent": num(breakdown.permanent),
            "temporary": num(breakdown.temporary),
            "total": num(breakdown.total),
        },
        "barrier_start": num(result.barrier()[0]),
        "diagnostics": diagnostics(&result),
    }))
}

fn shape_parameter(profile: &LiquidityProfile) -> Option<f64> {
    match profile.family() {
        ImpactFamily::Exponential { nu, .. } => Some(*nu),
        ImpactFamily::StraightLine { slope, .. } => Some(*slope),
        _ => None,
    }
}

pub fn classify_cmd(cfg: &LoadedConfig) -> Result<Value> {
    let profile = cfg.profile()?;
    let verdict = classify_manipulation(&profile, cfg.run.numerics.samples)?;
    let mut results = json!({
        "regime": verdict.regime,
        "violation_time": verdict.violation_time.map(num),
        "witness": verdict.witness.map(|w| json!({
            "t": num(w.t),
            "eps": num(w.eps),
            "cost": num(w.cost),
        })),
    });
    if let (Some(p), Ok(example)) = (shape_parameter(&profile), analytic_example(&profile, 0.0, 0.0)) {
        if let Some(th) = example.thresholds {
            results["analytic"] = json!({
                "parameter": num(p),
                "regime": example.regime,
                "domain_lower": num(th.domain_lower),
                "manipulation_upper": num(th.manipulation_upper),
                "transaction_triggered_upper": num(th.transaction_triggered_upper),
                "infinite_barrier_upper": num(th.infinite_barrier_upper),
            });
        }
    }
    Ok(results)
}

struct ConvergeRow {
    n: usize,
    value: f64,
    barrier: Vec<f64>,
    seconds: f64,
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

pub fn converge_cmd(cfg: &LoadedConfig, out: &Path) -> Result<Value> {
    let profile = cfg.profile()?;
    let run = &cfg.run;
    let order = &run.order;
    let mut sweep = run.grid.sweep.clone();
    if sweep.is_empty() {
        sweep.extend(run.grid.steps);
    }
    if sweep.is_empty() {
        bail!("grid.sweep is empty");
    }
    let times = &run.grid.times;
    let (samples, panels) = (run.numerics.samples, run.numerics.panels);

    let reference = match run.grid.reference_value {
        Some(v) => v,
        None => dynamic_spread_optimal(&profile, order.delta, order.x, samples, panels)
            .map(|o| o.value)
            .context("no closed-form reference; set grid.reference_value")?,
    };
    let reference_barrier = continuous_barrier_curve(&profile, times, samples, panels).ok();

    let rows: Vec<Result<ConvergeRow>> = std::thread::scope(|s| {
        let handles: Vec<_> = sweep
            .iter()
            .map(|&n| {
                let profile = &profile;
                s.spawn(move || -> Result<ConvergeRow> {
                    let start = Instant::now();
                    let grid = TimeGrid::uniform(profile, n)?;
                    let result = solve(profile, &grid)?;
                    let value = dp_value(&result, 0, order.delta, order.x)?;
                    let barrier =
                        times.iter().map(|&t| result.barrier()[grid.nearest_index(t)]).collect();
                    Ok(ConvergeRow { n, value, barrier, seconds: start.elapsed().as_secs_f64() })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("solver thread panicked"))))
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let barrier_gap = |row: &ConvergeRow, i: usize| match &reference_barrier {
        Some(c) if row.barrier[i].is_infinite() && c[i].is_infinite() => 0.0,
        Some(c) => relative_gap(row.barrier[i], c[i]),
        None => f64::NAN,
    };
    let mut header = vec!["n".to_string(), "dp_value".into(), "closed_form".into(), "rel_gap".into()];
    header.extend(times.iter().map(|t| format!("barrier_gap_{t}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![r.n as f64, r.value, reference, relative_gap(r.value, reference)];
            line.extend((0..times.len()).map(|i| barrier_gap(r, i)));
            line
        })
        .collect();
    write_csv(&out.join("converge.csv"), &header_refs, &table)?;
    let timing: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.n as f64, r.seconds]).collect();
    write_csv(&out.join("timing.csv"), &["n", "wall_seconds"], &timing)?;

    println!("{:>8} {:>22} {:>12} {:>10}", "n", "dp_value", "rel_gap", "seconds");
    for (r, line) in rows.iter().zip(&table) {
        println!("{:>8} {:>22.12} {:>12.3e} {:>10.3}", r.n, r.value, line[3], r.seconds);
    }

    Ok(json!({
        "reference_value": num(reference),
        "reference_barrier": reference_barrier.map(|c| c.into_iter().map(num).collect::<Vec<_>>()),
        "rows": rows.iter().zip(&table).map(|(r, line)| json!({
            "n": r.n,
            "dp_value": num(r.value),
            "rel_gap": num(line[3]),
            "barrier_gaps": line[4..].iter().map(|&g| num(g)).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    }))
}

/// Reads a schedule and checks it against the configured grid when one is given.
fn load_schedule(cfg: &LoadedConfig, profile: &LiquidityProfile, path: &Path) -> Result<DiscreteStrategy> {
    let (times, trades) = read_schedule(&cfg.resolve(path))?;
    let grid = TimeGrid::new(profile, times)?;
    if let Some(n) = cfg.run.grid.steps {
        let expected = TimeGrid::uniform(profile, n)?;
        if !expected.matches(&grid) {
            bail!("{}: times do not match the configured grid with {n} steps", path.display());
        }
    }
    Ok(DiscreteStrategy::new(grid, trades)?)
}

fn split_signed(s: &DiscreteStrategy) -> Result<(DiscreteStrategy, DiscreteStrategy)> {
    let buys = s.trades().iter().map(|v| v.max(0.0)).collect();
    let sells = s.trades().iter().map(|v| (-v).max(0.0)).collect();
    Ok((
        DiscreteStrategy::new(s.grid().clone(), buys)?,
        DiscreteStrategy::new(s.grid().clone(), sells)?,
    ))
}

fn identity_check(profile: &LiquidityProfile, s: &DiscreteStrategy, delta: f64, panels: usize) -> Value {
    if profile.is_differentiable() {
        cost_via_impact_identity(profile, s, delta, panels).map_or(Value::Null, num)
    } else {
        Value::Null
    }
}

pub fn evaluate_cmd(cfg: &LoadedConfig, variant: Variant) -> Result<Value> {
    let profile = cfg.profile()?;
    let run = &cfg.run;
    let order = &run.order;
    let path = run
        .evaluate
        .strategy
        .as_deref()
        .ok_or_else(|| anyhow!("evaluate.strategy is required"))?;
    let strategy = load_schedule(cfg, &profile, path)?;
    match variant {
        Variant::OneSided => {
            if !strategy.is_nonnegative() {
                bail!("one-sided evaluation needs nonnegative trades");
            }
            let breakdown = cost_decomposition(&profile, &strategy, order.delta, order.ask)?;
            Ok(json!({
                "variant": "one-sided",
                "temporary": num(temp_cost(&profile, &strategy, order.delta)?),
                "cost": {
                    "unaffected": num(breakdown.unaffected),
                    "permanent": num(breakdown.permanent),
                    "temporary": num(breakdown.temporary),
                    "total": num(breakdown.total),
                },
            }))
        }
        Variant::Dynamic => {
            let (buys, sells) = match run.evaluate.sells.as_deref() {
                Some(sp) => {
                    let sells = load_schedule(cfg, &profile, sp)?;
                    if !sells.grid().matches(strategy.grid()) {
                        bail!("buy and sell schedules use different grids");
                    }
                    if !(strategy.is_nonnegative() && sells.is_nonnegative()) {
                        bail!("separate buy and sell schedules must be nonnegative");
                    }
                    (strategy, sells)
                }
                None => split_signed(&strategy)?,
            };
            let legs = dynamic_spread_legs(
                &profile, &buys, &sells, order.delta, order.bid_delta, order.ask, order.bid,
            )?;
            Ok(json!({
                "variant": "dynamic",
                "buy_cost": num(legs.buy_cost),
                "sell_proceeds": num(legs.sell_proceeds),
                "total": num(legs.total),
            }))
        }
        Variant::Zero => {
            let cost = zero_spread_cost(&profile, &strategy, order.delta)?;
            Ok(json!({
                "variant": "zero",
                "temporary": num(cost),
                "identity_check": identity_check(&profile, &strategy, order.delta, run.numerics.panels),
            }))
        }
    }
}

pub fn barrier_cmd(cfg: &LoadedConfig, out: &Path) -> Result<Value> {
    let profile = cfg.profile()?;
    let run = &cfg.run;
    let points = run.grid.points.max(2);
    let horizon = profile.horizon();
    let times: Vec<f64> =
        (0..points).map(|i| horizon * i as f64 / (points - 1) as f64).collect();
    let curve = continuous_barrier_curve(&profile, &times, run.numerics.samples, run.numerics.panels)?;
    let rows: Vec<Vec<f64>> = times.iter().zip(&curve).map(|(&t, &c)| vec![t, c]).collect();
    write_csv(&out.join("barrier.csv"), &["t", "c"], &rows)?;
    Ok(json!({
        "points": points,
        "barrier_start": num(curve[0]),
        "barrier_end": num(curve[points - 1]),
    }))
}
