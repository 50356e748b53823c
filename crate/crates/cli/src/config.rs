//! JSON config loading: file, then `BBSENSE_SEED`, then `--overrides`.

use std::f64::consts::TAU;
use std::path::Path;

use bbsense::harness::UnitConvention;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SEED_ENV: &str = "BBSENSE_SEED";

/// Reads `path` (or starts from the defaults), applies the seed variable and
/// the `key=value` overrides, and deserializes with field-path errors.
pub fn load<T>(path: Option<&Path>, overrides: &[String], env_seed: Option<&str>) -> Result<T, CliError>
where
    T: DeserializeOwned + Serialize + Default,
{
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            let raw: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: invalid JSON: {e}", p.display())))?;
            let cfg: T = parse(raw, &p.display().to_string())?;
            to_value(&cfg)?
        }
        None => to_value(&T::default())?,
    };
    if let Some(seed) = env_seed {
        let seed: u64 = seed
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={seed:?} is not an unsigned integer")))?;
        set_path(&mut value, "seed_root", Value::from(seed))?;
    }
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override {ov:?} is not key=value")))?;
        set_path(&mut value, key.trim(), literal(raw.trim()))?;
    }
    parse(value, "config")
}

fn to_value<T: Serialize>(cfg: &T) -> Result<Value, CliError> {
    serde_json::to_value(cfg).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse<T: DeserializeOwned>(value: Value, origin: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Usage(format!("{origin}: field `{path}`: {}", e.into_inner()))
    })
}

/// JSON literal when it parses as one, string otherwise.
fn literal(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Replaces an existing entry at a dotted path; array elements are addressed
/// by index (`cells.0.m`). Unknown keys are rejected.
fn set_path(root: &mut Value, key: &str, new: Value) -> Result<(), CliError> {
    let unknown = || CliError::Usage(format!("unknown config key `{key}`"));
    let mut cur = root;
    for part in key.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(part).ok_or_else(unknown)?,
            Value::Array(items) => {
                let i: usize = part.parse().map_err(|_| unknown())?;
                items.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    *cur = new;
    Ok(())
}

/// A single register built by `instance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceConfig {
    pub m: usize,
    pub r: f64,
    pub b_min_rel: f64,
    pub omega_min: f64,
    pub units: UnitConvention,
    pub seed_root: u64,
    /// Haar eigenvectors for the transversality statistics; 0 skips them.
    pub n_eigvecs: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            m: 1,
            r: 8.0,
            b_min_rel: 1e-3,
            omega_min: TAU * 1e8,
            units: UnitConvention::RadPerS,
            seed_root: 2024,
            n_eigvecs: 2000,
        }
    }
}

/// The flatness ladder behind `inset.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlatnessConfig {
    pub m: usize,
    pub b_min_rel: f64,
    pub omega_min: f64,
    pub units: UnitConvention,
    /// Values of `|delta_omega| / B`.
    pub ladder: Vec<f64>,
    pub n_omega: usize,
    /// Evaluation time in units of `sqrt(N) / (m b_min)`.
    pub t_eval_factor: f64,
    /// Drive amplitude is `signal_scale * b_min`.
    pub signal_scale: f64,
    pub seed_root: u64,
    pub max_drive_ratio: f64,
}

impl Default for FlatnessConfig {
    fn default() -> Self {
        FlatnessConfig {
            m: 1,
            b_min_rel: 1e-3,
            omega_min: TAU * 1e8,
            units: UnitConvention::RadPerS,
            ladder: vec![4.0, 8.0, 16.0, 32.0, 64.0],
            n_omega: 64,
            t_eval_factor: 0.1,
            signal_scale: 1.0,
            seed_root: 2024,
            max_drive_ratio: bbsense::floquet::DEFAULT_MAX_DRIVE_RATIO,
        }
    }
}

/// Product-formula error scan behind `trotter.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrotterConfig {
    pub r: f64,
    pub omega_min: f64,
    pub b_rel: f64,
    /// Carrier at `omega_min + carrier_fraction * delta_omega`.
    pub carrier_fraction: f64,
    pub t_final: f64,
    pub dts: Vec<f64>,
    pub seed_root: u64,
    /// Replace the control by its diagonal spectrum so it commutes with the
    /// signal generator.
    pub commuting: bool,
}

impl Default for TrotterConfig {
    fn default() -> Self {
        TrotterConfig {
            r: 8.0,
            omega_min: 1.0,
            b_rel: 0.01,
            carrier_fraction: 0.5,
            t_final: 40.0,
            dts: vec![0.01, 0.02, 0.04, 0.08, 0.16],
            seed_root: 2024,
            commuting: false,
        }
    }
}
