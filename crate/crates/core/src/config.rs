//! TOML run configuration with preset inheritance and `key=value` overrides.
//!
//! ```toml
//! preset = "baseline"
//! dim = 2
//! n = 128
//! tau = 1e-3
//! t_final = 10.0
//! initial = "gaussian_ring"
//!
//! [params]
//! chi_H = 0.01
//! ```

use std::path::Path;

use serde::Deserialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::ModelParams;
use crate::scenarios::{
    EcmSplit, FaultInjection, InitialCondition, MonitorConfig, Scenario, SNAPSHOTS_2D, SNAPSHOTS_3D,
};
use crate::stepper::Scheme;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    name: Option<String>,
    #[serde(default = "default_preset")]
    preset: String,
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_tau")]
    tau: f64,
    #[serde(default = "default_t_final")]
    t_final: f64,
    #[serde(default)]
    scheme: Option<Scheme>,
    #[serde(default)]
    initial: Option<InitialCondition>,
    #[serde(default)]
    ecm_split: EcmSplit,
    snapshot_times: Option<Vec<f64>>,
    #[serde(default)]
    nutrient_right_edge_source: bool,
    #[serde(default)]
    monitors: MonitorConfig,
    #[serde(default)]
    params: Table,
    fault: Option<FaultInjection>,
}

fn default_preset() -> String {
    "baseline".into()
}
fn default_dim() -> usize {
    2
}
fn default_n() -> usize {
    128
}
fn default_tau() -> f64 {
    1e-3
}
fn default_t_final() -> f64 {
    10.0
}

const TOP_LEVEL_KEYS: [&str; 14] = [
    "name",
    "preset",
    "dim",
    "n",
    "tau",
    "t_final",
    "scheme",
    "initial",
    "ecm_split",
    "snapshot_times",
    "nutrient_right_edge_source",
    "monitors",
    "params",
    "fault",
];

/// Parses an override value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key `v` was just written"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies one `key=value` override. Dotted keys address nested tables; a
/// bare model parameter name such as `chi_H` is routed into `[params]`.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    let mut path: Vec<&str> = key.split('.').collect();
    if path.len() == 1 && !TOP_LEVEL_KEYS.contains(&path[0]) {
        let known = toml::Value::try_from(ModelParams::baseline()).expect("params serialize");
        if known.get(path[0]).is_some() || ["kappa_sigma", "kappa_M"].contains(&path[0]) {
            path.insert(0, "params");
        } else {
            return Err(Error::config(format!("unknown configuration key `{key}`")));
        }
    }
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("malformed key `{key}`")));
    }
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(raw));
    Ok(())
}

/// A loaded configuration: the scenario plus the effective TOML that reproduces it.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub effective: Table,
}

impl RunConfig {
    pub fn from_table(mut table: Table, overrides: &[String], default_name: &str) -> Result<Self> {
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let file: RunFile = table
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;

        let mut params = toml::Value::try_from(ModelParams::preset(&file.preset)?)
            .map_err(|e| Error::config(e.to_string()))?
            .as_table()
            .cloned()
            .expect("params serialize to a table");
        for (k, v) in file.params {
            params.insert(k, v);
        }
        let params: ModelParams = params
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("[params]: {}", e.message())))?;

        let grid = GridSpec::new(file.dim, file.n)?;
        let default_initial = if file.dim == 3 {
            InitialCondition::TwoTumors
        } else {
            InitialCondition::GaussianRing
        };
        let snapshot_times = file.snapshot_times.unwrap_or_else(|| {
            let d: &[f64] = if file.dim == 3 {
                &SNAPSHOTS_3D
            } else {
                &SNAPSHOTS_2D
            };
            d.iter().copied().filter(|&t| t <= file.t_final).collect()
        });
        let scenario = Scenario {
            name: file.name.unwrap_or_else(|| default_name.to_string()),
            grid,
            params,
            initial: file.initial.unwrap_or(default_initial),
            ecm_split: file.ecm_split,
            t_final: file.t_final,
            tau: file.tau,
            scheme: file.scheme.unwrap_or(Scheme::Etdrk2),
            snapshot_times,
            monitors: file.monitors,
            nutrient_right_edge_source: file.nutrient_right_edge_source,
            fault: file.fault,
        };
        scenario.validate()?;
        Ok(Self {
            scenario,
            effective: table,
        })
    }

    pub fn from_str(text: &str, overrides: &[String], default_name: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        Self::from_table(table, overrides, default_name)
    }

    /// Loads `path`; the scenario name defaults to the file stem.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        Self::from_str(&text, overrides, stem).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn effective_toml(&self) -> String {
        toml::to_string(&self.effective).expect("tables serialize")
    }
}
