//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use lobexec::{ImpactFamily, LiquidityProfile, Resilience};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RhoInput {
    Constant(f64),
    Table(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, Deserialize)]
pub struct ProfileConfig {
    pub horizon: f64,
    pub rho: RhoInput,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "enabled")]
    pub finite_differences: bool,
    #[serde(flatten)]
    pub impact: ImpactFamily,
}

fn enabled() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderConfig {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub delta: f64,
    /// Unaffected ask `A0`.
    #[serde(default)]
    pub ask: f64,
    /// Unaffected bid `B0`.
    #[serde(default)]
    pub bid: f64,
    /// Initial bid-side deviation.
    #[serde(default)]
    pub bid_delta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub steps: Option<usize>,
    #[serde(default)]
    pub sweep: Vec<usize>,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    pub reference_value: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            steps: None,
            sweep: Vec::new(),
            times: default_times(),
            points: default_points(),
            reference_value: None,
        }
    }
}

fn default_times() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75]
}

fn default_points() -> usize {
    101
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default = "default_count")]
    pub samples: usize,
    #[serde(default = "default_count")]
    pub panels: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig { samples: default_count(), panels: default_count() }
    }
}

fn default_count() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    OneSided,
    Dynamic,
    Zero,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub strategy: Option<PathBuf>,
    pub sells: Option<PathBuf>,
    #[serde(default)]
    pub variant: Variant,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: ProfileConfig,
    #[serde(default)]
    pub order: OrderConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
}

/// Parsed configuration with its raw table kept for the summary echo.
pub struct LoadedConfig {
    pub run: RunConfig,
    pub raw: toml::Table,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn profile(&self) -> Result<LiquidityProfile> {
        let p = &self.run.profile;
        let resilience = match &p.rho {
            RhoInput::Constant(rho) => Resilience::Constant(*rho),
            RhoInput::Table(table) => Resilience::Tabulated(table.clone()),
        };
        let profile = LiquidityProfile::new(p.impact.clone(), resilience, p.horizon, p.gamma)?;
        Ok(profile.with_finite_differences(p.finite_differences))
    }

    /// Resolves a path from the config relative to the config file.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

/// Parses a `key=value` override; the value is read as a TOML literal, falling back to a string.
pub fn parse_override(arg: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{arg}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override `{arg}` has an empty key");
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    Ok((key.to_string(), value))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut current = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            current.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{part}` is not a table"))?;
    }
    Ok(())
}

pub fn load(path: &Path, overrides: &[(String, toml::Value)]) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut raw: toml::Table =
        toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))?;
    for (key, value) in overrides {
        set_path(&mut raw, key, value.clone())?;
    }
    let run: RunConfig = toml::Value::Table(raw.clone())
        .try_into()
        .with_context(|| format!("invalid config {}", path.display()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { run, raw, base_dir })
}
