//! Self-convergence studies, structure reports and timing.

use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::io::StudyRow;
use crate::model::{ModelParams, SimState};
use crate::scenarios::{run, MonitorRecord, RunReport, Scenario};
use crate::stepper::{Scheme, StepConfig, Stepper, INVARIANT_SLACK};

/// Field sampled along the x-axis line through the domain center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeField {
    PhiT,
    PhiN,
    PsiSigma,
    PsiM,
    Theta,
}

impl ProbeField {
    pub const ALL: [ProbeField; 5] = [
        Self::PhiT,
        Self::PhiN,
        Self::PsiSigma,
        Self::PsiM,
        Self::Theta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::PhiT => "phi_T",
            Self::PhiN => "phi_N",
            Self::PsiSigma => "psi_sigma",
            Self::PsiM => "psi_M",
            Self::Theta => "theta",
        }
    }

    fn extract(self, s: &SimState, params: &ModelParams) -> Result<ScalarField> {
        Ok(match self {
            Self::PhiT => s.phi_t.clone(),
            Self::PhiN => s.phi_n.clone(),
            Self::PsiSigma => s.psi_sigma(params.phi_sigma0_max)?,
            Self::PsiM => s.psi_m(),
            Self::Theta => s.theta.clone(),
        })
    }
}

impl FromStr for ProbeField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown probe field `{s}`")))
    }
}

/// Values of a field on the line y = 0 (and z = 0), every node in x.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slice {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl Slice {
    /// Keeps every `stride`-th node.
    pub fn restrict(&self, stride: usize) -> Slice {
        Slice {
            x: self.x.iter().step_by(stride).copied().collect(),
            values: self.values.iter().step_by(stride).copied().collect(),
        }
    }

    pub fn max_diff(&self, other: &Slice) -> f64 {
        assert_eq!(
            self.values.len(),
            other.values.len(),
            "slices differ in length"
        );
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

pub fn center_slice(field: &ScalarField) -> Slice {
    let g = field.grid();
    let mid = g.cells() / 2;
    let x = (0..g.nodes_per_axis()).map(|i| g.coord(i)).collect();
    let values = (0..g.nodes_per_axis())
        .map(|i| match g.dim() {
            2 => field.at(&[i, mid]),
            _ => field.at(&[i, mid, mid]),
        })
        .collect();
    Slice { x, values }
}

pub fn probe_slice(s: &SimState, probe: ProbeField, params: &ModelParams) -> Result<Slice> {
    Ok(center_slice(&probe.extract(s, params)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Temporal,
    Spatial,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyLevel {
    /// tau for temporal studies, N for spatial ones.
    pub refined_value: f64,
    pub slices: Vec<(ProbeField, Slice)>,
}

/// Final-time probe slices of a sequence of runs, each refining the previous one.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub kind: StudyKind,
    pub t_final: f64,
    pub levels: Vec<StudyLevel>,
}

impl ConvergenceStudy {
    fn slice(&self, level: usize, probe: ProbeField) -> Result<&Slice> {
        self.levels[level]
            .slices
            .iter()
            .find(|(p, _)| *p == probe)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::config(format!("probe {} was not recorded", probe.name())))
    }

    fn refinement(&self, k: usize) -> f64 {
        let (a, b) = (
            self.levels[k].refined_value,
            self.levels[k + 1].refined_value,
        );
        match self.kind {
            StudyKind::Temporal => a / b,
            StudyKind::Spatial => b / a,
        }
    }

    /// Max-norm differences between consecutive levels, compared on the
    /// coarsest level's nodes.
    pub fn diffs(&self, probe: ProbeField) -> Result<Vec<f64>> {
        let coarse_len = self.slice(0, probe)?.values.len();
        (0..self.levels.len().saturating_sub(1))
            .map(|k| {
                let a = self.slice(k, probe)?;
                let b = self.slice(k + 1, probe)?;
                let ra = a.restrict((a.values.len() - 1) / (coarse_len - 1));
                let rb = b.restrict((b.values.len() - 1) / (coarse_len - 1));
                Ok(ra.max_diff(&rb))
            })
            .collect()
    }

    /// Observed orders `log(d_k / d_{k+1}) / log(r)`.
    pub fn orders(&self, probe: ProbeField) -> Result<Vec<f64>> {
        let d = self.diffs(probe)?;
        Ok(d.windows(2)
            .enumerate()
            .map(|(k, w)| (w[0] / w[1]).ln() / self.refinement(k + 1).ln())
            .collect())
    }

    /// Successive-difference ratios `d_k / d_{k+1}`.
    pub fn ratios(&self, probe: ProbeField) -> Result<Vec<f64>> {
        let d = self.diffs(probe)?;
        Ok(d.windows(2).map(|w| w[0] / w[1]).collect())
    }

    pub fn rows(&self, probe: ProbeField) -> Result<Vec<StudyRow>> {
        let d = self.diffs(probe)?;
        let o = self.orders(probe)?;
        Ok((0..self.levels.len())
            .map(|k| StudyRow {
                level: k,
                refined_value: self.levels[k].refined_value,
                diff_to_next: d.get(k).copied(),
                observed_order: if k >= 1 { o.get(k - 1).copied() } else { None },
            })
            .collect())
    }
}

fn final_slices(s: &Scenario, probes: &[ProbeField]) -> Result<Vec<(ProbeField, Slice)>> {
    let report = run(s, |_| Ok(()))?.into_result()?;
    probes
        .iter()
        .map(|&p| Ok((p, probe_slice(&report.final_state, p, &s.params)?)))
        .collect()
}

/// Runs `scenarios` on up to `jobs` threads, preserving order.
fn run_all(
    scenarios: &[Scenario],
    probes: &[ProbeField],
    jobs: usize,
) -> Result<Vec<Vec<(ProbeField, Slice)>>> {
    let jobs = jobs.max(1);
    let mut out = Vec::with_capacity(scenarios.len());
    for chunk in scenarios.chunks(jobs) {
        let results: Vec<Result<_>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|s| scope.spawn(move || final_slices(s, probes)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("study worker panicked"))
                .collect()
        });
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

/// Runs `scenario` with `tau0 / 2^k` for `k = 0..levels` and records the final-time probes.
pub fn temporal_convergence(
    scenario: &Scenario,
    tau0: f64,
    levels: usize,
    probes: &[ProbeField],
    jobs: usize,
) -> Result<ConvergenceStudy> {
    if levels < 3 {
        return Err(Error::config("a temporal study needs at least 3 levels"));
    }
    if !scenario.grid.cells().is_multiple_of(2) {
        return Err(Error::config("probe slices need an even N"));
    }
    let runs: Vec<Scenario> = (0..levels)
        .map(|k| Scenario {
            tau: tau0 / f64::from(1u32 << k),
            snapshot_times: Vec::new(),
            fault: None,
            ..scenario.clone()
        })
        .collect();
    let slices = run_all(&runs, probes, jobs)?;
    Ok(ConvergenceStudy {
        kind: StudyKind::Temporal,
        t_final: scenario.t_final,
        levels: runs
            .iter()
            .zip(slices)
            .map(|(s, slices)| StudyLevel {
                refined_value: s.tau,
                slices,
            })
            .collect(),
    })
}

/// Runs `scenario` on each N in `ns` (increasing, each dividing the next) at a fixed tau.
pub fn spatial_convergence(
    scenario: &Scenario,
    ns: &[usize],
    tau: f64,
    probes: &[ProbeField],
    jobs: usize,
) -> Result<ConvergenceStudy> {
    if ns.len() < 3 {
        return Err(Error::config(
            "a spatial study needs at least 3 resolutions",
        ));
    }
    if !ns[0].is_multiple_of(2)
        || ns
            .windows(2)
            .any(|w| w[1] <= w[0] || !w[1].is_multiple_of(w[0]))
    {
        return Err(Error::config(format!(
            "resolutions {ns:?} must be even, increasing, and each divide the next"
        )));
    }
    let runs = ns
        .iter()
        .map(|&n| {
            Ok(Scenario {
                grid: GridSpec::new(scenario.grid.dim(), n)?,
                tau,
                snapshot_times: Vec::new(),
                fault: None,
                ..scenario.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let slices = run_all(&runs, probes, jobs)?;
    Ok(ConvergenceStudy {
        kind: StudyKind::Spatial,
        t_final: scenario.t_final,
        levels: ns
            .iter()
            .zip(slices)
            .map(|(&n, slices)| StudyLevel {
                refined_value: n as f64,
                slices,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstViolation {
    pub step: usize,
    pub detail: String,
}

/// Per-step structure series plus a pass/fail verdict.
#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub rows: Vec<MonitorRecord>,
    pub passed: bool,
    pub first_violation: Option<FirstViolation>,
}

fn record_violation(r: &MonitorRecord, theta0_max: f64) -> Option<String> {
    let tol = INVARIANT_SLACK;
    let checks = [
        (
            r.psi_sigma_norm <= 1.0 + tol,
            "max |psi_sigma|",
            r.psi_sigma_norm,
        ),
        (r.psi_m_norm <= 1.0 + tol, "max |psi_M|", r.psi_m_norm),
        (r.phi_t_max <= 1.0 + tol, "max phi_T", r.phi_t_max),
        (r.phi_t_min >= -tol, "min phi_T", r.phi_t_min),
        (r.phi_n_min >= -tol, "min phi_N", r.phi_n_min),
        (r.theta_min >= -tol, "min theta", r.theta_min),
        (r.theta_max <= theta0_max + tol, "max theta", r.theta_max),
    ];
    checks
        .iter()
        .find(|(ok, _, v)| !ok || !v.is_finite())
        .map(|(_, what, v)| format!("{what} = {v}"))
}

/// Verdict over a run: fails on the earliest step where either a monitor
/// series leaves its bound or the pointwise checker recorded a breach.
pub fn structure_monitor_report(report: &RunReport, params: &ModelParams) -> StructureReport {
    let from_series = report.monitor.iter().find_map(|r| {
        record_violation(r, params.theta0_max).map(|detail| FirstViolation {
            step: r.step,
            detail,
        })
    });
    let from_breaches = report.breaches.first().map(|b| FirstViolation {
        step: b.step,
        detail: b.violation.to_string(),
    });
    let first_violation = match (from_series, from_breaches) {
        (Some(a), Some(b)) => Some(if b.step < a.step { b } else { a }),
        (a, b) => a.or(b),
    };
    StructureReport {
        rows: report.monitor.clone(),
        passed: first_violation.is_none() && report.passed(),
        first_violation,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerfRow {
    pub n: usize,
    pub median_step_seconds: f64,
    pub ratio_to_prev: Option<f64>,
    /// `(N_k/N_{k-1})^d * log N_k / log N_{k-1}`.
    pub predicted_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerfTable {
    pub dim: usize,
    pub steps_per_batch: usize,
    pub batches: usize,
    pub rows: Vec<PerfRow>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median wall time per ETDRK2 step of the bump-tumor setup on each N.
/// Batches for different N are interleaved so that slow drifts in machine
/// load hit all resolutions alike.
pub fn perf_scaling(
    dim: usize,
    ns: &[usize],
    steps_per_batch: usize,
    batches: usize,
) -> Result<PerfTable> {
    if steps_per_batch == 0 || batches == 0 {
        return Err(Error::config(
            "perf_scaling needs at least one batch of one step",
        ));
    }
    let params = ModelParams::baseline();
    let cfg = StepConfig {
        tau: 1e-3,
        scheme: Scheme::Etdrk2,
        nutrient_right_edge_source: false,
    };
    let mut setups = Vec::new();
    for &n in ns {
        let base = Scenario::tumor_ring_2d("baseline")?;
        let s = Scenario {
            grid: GridSpec::new(dim, n)?,
            ..base
        };
        let state = s.initial_state()?;
        let stepper = Stepper::new(s.grid, params.clone(), cfg)?;
        // Warm-up: page in tables and transform plans.
        let state = stepper.step(&state, 0)?;
        setups.push((stepper, state));
    }
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(batches); ns.len()];
    for _ in 0..batches {
        for (k, (stepper, state)) in setups.iter_mut().enumerate() {
            let start = Instant::now();
            let mut s = state.clone();
            for n in 0..steps_per_batch {
                s = stepper.step(&s, n)?;
            }
            let elapsed: Duration = start.elapsed();
            samples[k].push(elapsed.as_secs_f64() / steps_per_batch as f64);
            *state = s;
        }
    }
    let medians: Vec<f64> = samples.into_iter().map(median).collect();
    let rows = (0..ns.len())
        .map(|k| PerfRow {
            n: ns[k],
            median_step_seconds: medians[k],
            ratio_to_prev: (k > 0).then(|| medians[k] / medians[k - 1]),
            predicted_ratio: (k > 0).then(|| {
                let r = ns[k] as f64 / ns[k - 1] as f64;
                r.powi(dim as i32) * (ns[k] as f64).ln() / (ns[k - 1] as f64).ln()
            }),
        })
        .collect();
    Ok(PerfTable {
        dim,
        steps_per_batch,
        batches,
        rows,
    })
}
