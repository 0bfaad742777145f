//! CSV and JSON writers with fixed numeric formatting.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Value;

/// 17 significant digits; `inf`/`-inf`/`nan` sentinels.
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// JSON number, or the CSV sentinel string for non-finite values.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(fmt(v)), Value::Number)
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a two-column `t,trade` file.
pub fn read_schedule(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read strategy {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(ti), Some(xi)) = (col("t"), col("trade")) else {
        bail!("{}: expected columns `t` and `trade`", path.display());
    };
    let (mut times, mut trades) = (Vec::new(), Vec::new());
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            let field = record.get(i).unwrap_or("").trim();
            field
                .parse::<f64>()
                .with_context(|| format!("{}: row {}: bad number `{field}`", path.display(), line + 2))
        };
        times.push(parse(ti)?);
        trades.push(parse(xi)?);
    }
    Ok((times, trades))
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
