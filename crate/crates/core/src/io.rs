//! Snapshot and CSV writers.
//!
//! Snapshots are raw little-endian f64 arrays in grid order (x fastest) with a
//! JSON sidecar of the same stem.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, AXIS_ORDER};
use crate::model::{ModelParams, SimState};
use crate::scenarios::MonitorRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub scenario: String,
    pub field: String,
    pub t: f64,
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub axis_order: String,
    pub min: f64,
    pub max: f64,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn snapshot_stem(field: &str, t: f64) -> String {
    format!("{field}_t{t:.4}")
}

/// Writes `<dir>/<field>_t<t>.bin` and its `.json` sidecar; returns the `.bin` path.
pub fn write_snapshot(
    dir: &Path,
    scenario: &str,
    field_name: &str,
    field: &ScalarField,
    t: f64,
) -> Result<PathBuf> {
    let stem = snapshot_stem(field_name, t);
    let bin = dir.join(format!("{stem}.bin"));
    let bytes: Vec<u8> = field.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_file(&bin, &bytes)?;
    let g = field.grid();
    let meta = SnapshotMeta {
        scenario: scenario.to_string(),
        field: field_name.to_string(),
        t,
        dim: g.dim(),
        n: g.cells(),
        axis_order: AXIS_ORDER.to_string(),
        min: field.min(),
        max: field.max(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
    write_file(&dir.join(format!("{stem}.json")), json.as_bytes())?;
    Ok(bin)
}

/// Writes the five model fields plus `phi_V` and `psi_sigma`.
pub fn write_state_snapshots(
    dir: &Path,
    scenario: &str,
    state: &SimState,
    params: &ModelParams,
) -> Result<()> {
    for (name, f) in state.fields() {
        write_snapshot(dir, scenario, name, f, state.t)?;
    }
    write_snapshot(dir, scenario, "phi_V", &state.phi_v(), state.t)?;
    write_snapshot(
        dir,
        scenario,
        "psi_sigma",
        &state.psi_sigma(params.phi_sigma0_max)?,
        state.t,
    )?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`], given the `.bin` path.
pub fn read_snapshot(bin: &Path) -> Result<(SnapshotMeta, ScalarField)> {
    let side = bin.with_extension("json");
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: SnapshotMeta = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", side.display())))?;
    let bytes = fs::read(bin).map_err(|e| Error::io(bin, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::config(format!(
            "{}: length is not a multiple of 8",
            bin.display()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let field = ScalarField::from_vec(GridSpec::new(meta.dim, meta.n)?, data)?;
    Ok((meta, field))
}

pub const MONITOR_HEADER: &str =
    "step,t,phiT_max,phiT_min,phiN_max,theta_min,psi_sigma_norm,psi_M_norm,com_x";

pub fn monitor_csv(records: &[MonitorRecord]) -> String {
    let mut out = String::from(MONITOR_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            r.t,
            r.phi_t_max,
            r.phi_t_min,
            r.phi_n_max,
            r.theta_min,
            r.psi_sigma_norm,
            r.psi_m_norm,
            r.com_x
        );
    }
    out
}

pub fn write_monitor_csv(path: &Path, records: &[MonitorRecord]) -> Result<()> {
    write_file(path, monitor_csv(records).as_bytes())
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyRow {
    pub level: usize,
    pub refined_value: f64,
    pub diff_to_next: Option<f64>,
    pub observed_order: Option<f64>,
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("level,refined_value,diff_to_next,observed_order\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.level,
            r.refined_value,
            opt(r.diff_to_next),
            opt(r.observed_order)
        );
    }
    out
}

pub fn write_study_csv(path: &Path, rows: &[StudyRow]) -> Result<()> {
    write_file(path, study_csv(rows).as_bytes())
}

pub fn write_slice_csv(path: &Path, x: &[f64], values: &[f64]) -> Result<()> {
    let mut out = String::from("x,value\n");
    for (a, b) in x.iter().zip(values) {
        let _ = writeln!(out, "{a},{b}");
    }
    write_file(path, out.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::config(e.to_string()))?;
    write_file(path, text.as_bytes())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}
