use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const CONSTANT: &str = r#"
[profile]
family = "constant"
kappa = 1.0
rho = 2.0
horizon = 1.0

[order]
x = 100.0

[grid]
steps = 1000
sweep = [1, 10, 100, 1000]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn lobexec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobexec")).args(args).output().unwrap()
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    lobexec(&args)
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[i].parse().unwrap()).collect()
}

#[test]
fn solve_constant_profile() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONSTANT);
    let out = dir.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let c = column(&out.join("barrier.csv"), "c");
    assert!((c[0] - 3.0).abs() < 0.01, "c(0) = {}", c[0]);
    let trades = column(&out.join("strategy.csv"), "trade");
    assert_eq!(trades.len(), 1001);
    assert!((trades[0] - 25.0).abs() < 0.1);
    assert!((trades[1000] - 25.0).abs() < 0.1);
    let s = summary(&out);
    let value = s["results"]["value"].as_f64().unwrap();
    assert!((value - 2500.0).abs() / 2500.0 < 1e-3);
    assert_eq!(s["results"]["diagnostics"]["piece_bound_exceeded"], Value::Bool(false));
}

#[test]
fn zero_order_gives_zero_schedule() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONSTANT);
    let out = dir.path().join("out");
    let o = run("solve", &cfg, &out, &["--set", "order.x=0.0", "--n", "50"]);
    assert!(o.status.success());
    assert!(column(&out.join("strategy.csv"), "trade").iter().all(|&v| v == 0.0));
    assert_eq!(summary(&out)["results"]["cost"]["total"].as_f64(), Some(0.0));
}

#[test]
fn invalid_kappa_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &CONSTANT.replace("kappa = 1.0", "kappa = -1.0"));
    let out = dir.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("profile.kappa"));
    let s = summary(&out);
    assert!(s["error"]["message"].as_str().unwrap().contains("profile.kappa"));
}

#[test]
fn parse_error_reports_a_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[profile]\nkappa = = 1\n");
    let o = run("solve", &cfg, &dir.path().join("out"), &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn classify_regimes() {
    let dir = TempDir::new().unwrap();
    let exp = write_config(
        dir.path(),
        "e.toml",
        "[profile]\nfamily = \"exponential\"\nkappa = 1.0\nnu = -2.5\nrho = 2.0\nhorizon = 1.0\n",
    );
    let out = dir.path().join("e");
    assert!(run("classify", &exp, &out, &[]).status.success());
    let s = summary(&out);
    assert_eq!(s["results"]["regime"], "price-manipulation");
    assert!(s["results"]["witness"]["cost"].as_f64().unwrap() < 0.0);

    let cfg = write_config(dir.path(), "c.toml", CONSTANT);
    let out = dir.path().join("c");
    assert!(run("classify", &cfg, &out, &[]).status.success());
    assert_eq!(summary(&out)["results"]["regime"], "clean");

    let line = write_config(
        dir.path(),
        "l.toml",
        "[profile]\nfamily = \"straight-line\"\nkappa = 1.0\nslope = -0.9\nrho = 2.0\nhorizon = 1.0\n",
    );
    let out = dir.path().join("l");
    assert!(run("classify", &line, &out, &[]).status.success());
    let s = summary(&out);
    assert_eq!(s["results"]["regime"], s["results"]["analytic"]["regime"]);
}

#[test]
fn converge_gap_shrinks() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONSTANT);
    let out = dir.path().join("out");
    assert!(run("converge", &cfg, &out, &[]).status.success());
    let n = column(&out.join("converge.csv"), "n");
    let gap = column(&out.join("converge.csv"), "rel_gap");
    assert_eq!(n, vec![1.0, 10.0, 100.0, 1000.0]);
    assert!(gap.windows(2).all(|w| w[1] < w[0]), "{gap:?}");
    assert_eq!(column(&out.join("timing.csv"), "n").len(), 4);
}

#[test]
fn converge_exponential_within_one_percent() {
    let dir = TempDir::new().unwrap();
    let text = CONSTANT.replace("family = \"constant\"", "family = \"exponential\"\nnu = 0.5");
    let cfg = write_config(dir.path(), "e.toml", &text);
    let out = dir.path().join("out");
    assert!(run("converge", &cfg, &out, &["--set", "grid.sweep=[1000]"]).status.success());
    assert!(column(&out.join("converge.csv"), "rel_gap")[0] <= 0.01);
}

#[test]
fn converge_without_reference_fails_in_manipulation_regime() {
    let dir = TempDir::new().unwrap();
    let text = CONSTANT.replace("family = \"constant\"", "family = \"exponential\"\nnu = -2.5");
    let cfg = write_config(dir.path(), "e.toml", &text);
    let out = dir.path().join("out");
    assert!(!run("converge", &cfg, &out, &[]).status.success());
    assert!(summary(&out)["error"]["message"].as_str().unwrap().contains("reference_value"));
    assert!(run("converge", &cfg, &out, &["--set", "grid.reference_value=1.0"]).status.success());
}

#[test]
fn evaluate_own_strategy_matches_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{CONSTANT}\n[evaluate]\nstrategy = \"out/strategy.csv\"\n"));
    let out = dir.path().join("out");
    assert!(run("solve", &cfg, &out, &["--n", "200"]).status.success());
    let value = summary(&out)["results"]["value"].as_f64().unwrap();

    let eval = dir.path().join("eval");
    let o = run("evaluate", &cfg, &eval, &["--n", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cost = summary(&eval)["results"]["temporary"].as_f64().unwrap();
    assert!((cost - value).abs() <= 1e-8 * value.abs().max(1.0));

    let o = run("evaluate", &cfg, &eval, &["--n", "100"]);
    assert!(!o.status.success(), "grid mismatch must be rejected");
}

#[test]
fn evaluate_twap_costs_more_than_optimum() {
    let dir = TempDir::new().unwrap();
    let mut twap = String::from("t,trade\n");
    for i in 0..=100 {
        twap.push_str(&format!("{},{}\n", i as f64 / 100.0, 100.0 / 101.0));
    }
    std::fs::write(dir.path().join("twap.csv"), twap).unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{CONSTANT}\n[evaluate]\nstrategy = \"twap.csv\"\n"));
    let out = dir.path().join("out");
    assert!(run("evaluate", &cfg, &out, &["--n", "100"]).status.success());
    assert!(summary(&out)["results"]["temporary"].as_f64().unwrap() >= 2500.0);

    assert!(run("evaluate", &cfg, &out, &["--n", "100", "--variant", "zero"]).status.success());
    let s = summary(&out);
    let zero = s["results"]["temporary"].as_f64().unwrap();
    let identity = s["results"]["identity_check"].as_f64().unwrap();
    assert!((zero - identity).abs() / zero < 1e-6);
}

#[test]
fn evaluate_dynamic_round_trip_is_not_profitable() {
    let dir = TempDir::new().unwrap();
    let mut trip = String::from("t,trade\n");
    for i in 0..=20 {
        let v = match i {
            3 => 7.0,
            4 => 2.0,
            9 => -6.0,
            15 => -3.0,
            _ => 0.0,
        };
        trip.push_str(&format!("{},{}\n", i as f64 / 20.0, v));
    }
    std::fs::write(dir.path().join("trip.csv"), trip).unwrap();
    let text = format!(
        "{}\n[evaluate]\nstrategy = \"trip.csv\"\nvariant = \"dynamic\"\n",
        CONSTANT.replace("x = 100.0", "x = 0.0\nask = 10.0\nbid = 10.0")
    );
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    let o = run("evaluate", &cfg, &out, &["--n", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &summary(&out)["results"];
    assert!(r["total"].as_f64().unwrap() >= 0.0);
    assert!(r["buy_cost"].as_f64().unwrap() > 0.0);

    let o = run("evaluate", &cfg, &out, &["--n", "20", "--variant", "one-sided"]);
    assert!(!o.status.success(), "negative trades are forbidden one-sided");
}

#[test]
fn barrier_curve_starts_near_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONSTANT);
    let out = dir.path().join("out");
    assert!(run("barrier", &cfg, &out, &[]).status.success());
    let c = column(&out.join("barrier.csv"), "c");
    assert_eq!(c.len(), 101);
    assert!((c[0] - 3.0).abs() < 1e-6);
    assert_eq!(c[100], 0.0);
}

#[test]
fn infinite_barrier_is_written_as_inf() {
    let dir = TempDir::new().unwrap();
    let text = CONSTANT.replace("family = \"constant\"", "family = \"straight-line\"\nslope = -0.9");
    let cfg = write_config(dir.path(), "l.toml", &text);
    let out = dir.path().join("out");
    assert!(run("solve", &cfg, &out, &["--n", "20"]).status.success());
    let raw = std::fs::read_to_string(out.join("barrier.csv")).unwrap();
    assert!(raw.lines().nth(1).unwrap().ends_with(",inf"));
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONSTANT);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for cmd in ["solve", "converge"] {
        assert!(run(cmd, &cfg, &a, &[]).status.success());
        assert!(run(cmd, &cfg, &b, &[]).status.success());
        for file in ["summary.json", "barrier.csv", "strategy.csv", "converge.csv"] {
            if a.join(file).exists() {
                assert_eq!(
                    std::fs::read(a.join(file)).unwrap(),
                    std::fs::read(b.join(file)).unwrap(),
                    "{cmd}: {file}"
                );
            }
        }
    }
}
