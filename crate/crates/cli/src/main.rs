use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tumor_etd::config::RunConfig;
use tumor_etd::harness::{
    spatial_convergence, structure_monitor_report, temporal_convergence, ConvergenceStudy,
    ProbeField,
};
use tumor_etd::io;
use tumor_etd::scenarios::{Outcome, RunReport};
use tumor_etd::{run, Error, Scheme};

#[derive(Parser)]
#[command(
    name = "tumorsim",
    version,
    about = "ETD simulator for phase-field tumor growth with ECM degradation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration. Without it the default 2D ring setup is used.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override a configuration key, e.g. `--set tau=5e-4` or `--set chi_H=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Worker threads for convergence studies.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Etd1,
    Etdrk2,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write monitors, snapshots and a summary.
    Run(Common),
    /// Self-convergence study in time or space.
    Converge {
        #[arg(value_enum)]
        kind: ConvergeKind,
        #[command(flatten)]
        common: Common,
        /// Number of time-step levels (tau, tau/2, ...).
        #[arg(long, default_value_t = 5)]
        levels: usize,
        /// Resolutions for a spatial study.
        #[arg(long = "Ns", value_delimiter = ',', default_values_t = [32usize, 64, 128])]
        ns: Vec<usize>,
        /// Probe fields (default: all).
        #[arg(long = "probe")]
        probes: Vec<String>,
    },
    /// Run with structure monitors and report a verdict.
    Check(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvergeKind {
    Time,
    Space,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) => 2,
        Error::Structure { .. } => 3,
        Error::Numerical { .. } => 4,
        Error::Io { .. } => 1,
    }
}

fn load(c: &Common) -> Result<RunConfig, Error> {
    let mut overrides = c.set.clone();
    if let Some(s) = c.scheme {
        overrides.push(format!(
            "scheme={}",
            match s {
                SchemeArg::Etd1 => Scheme::Etd1,
                SchemeArg::Etdrk2 => Scheme::Etdrk2,
            }
        ));
    }
    match &c.config {
        Some(p) => RunConfig::load(p, &overrides),
        None => RunConfig::from_str("", &overrides, "default"),
    }
}

fn outcome_code(o: &Outcome) -> u8 {
    match o {
        Outcome::Completed => 0,
        Outcome::StructureBreach { .. } => 3,
        Outcome::NumericalFailure { .. } => 4,
    }
}

fn summary(report: &RunReport, cfg: &RunConfig, passed: bool) -> serde_json::Value {
    let t = &report.timings;
    json!({
        "scenario": report.scenario,
        "scheme": cfg.scenario.scheme.to_string(),
        "dim": cfg.scenario.grid.dim(),
        "N": cfg.scenario.grid.cells(),
        "tau": cfg.scenario.tau,
        "t_final": cfg.scenario.t_final,
        "steps_taken": report.steps_taken,
        "outcome": report.outcome,
        "verdict": if passed { "PASS" } else { "FAIL" },
        "breach_count": report.breaches.len(),
        "breaches": report.breaches.iter().take(8).collect::<Vec<_>>(),
        "wall_seconds": report.wall_time.as_secs_f64(),
        "stage_seconds": {
            "nonlinear": t.nonlinear.as_secs_f64(),
            "spectral": t.spectral.as_secs_f64(),
            "pointwise": t.pointwise.as_secs_f64(),
        },
        "final": report.monitor.last(),
    })
}

fn cmd_run(c: &Common, check_only: bool) -> Result<u8, Error> {
    let cfg = load(c)?;
    let out = &c.out;
    io::write_text(&out.join("effective_config.toml"), &cfg.effective_toml())?;
    let s = &cfg.scenario;
    let snap_dir = out.join("snapshots");
    let report = run(s, |state| {
        if check_only {
            Ok(())
        } else {
            io::write_state_snapshots(&snap_dir, &s.name, state, &s.params)
        }
    })?;
    io::write_monitor_csv(&out.join("monitor.csv"), &report.monitor)?;
    let structure = structure_monitor_report(&report, &s.params);
    if check_only {
        io::write_monitor_csv(&out.join("structure.csv"), &structure.rows)?;
    }
    let mut sum = summary(&report, &cfg, structure.passed);
    sum["first_violation"] = json!(structure.first_violation);
    io::write_json(&out.join("summary.json"), &sum)?;
    match &structure.first_violation {
        Some(v) => eprintln!("FAIL: structure violated at step {}: {}", v.step, v.detail),
        None if report.passed() => eprintln!(
            "PASS: {} steps in {:.2} s",
            report.steps_taken,
            report.wall_time.as_secs_f64()
        ),
        None => {}
    }
    if let Outcome::NumericalFailure { step, stage } = &report.outcome {
        eprintln!("FAIL: non-finite values at step {step} in the {stage} stage");
    }
    let code = outcome_code(&report.outcome);
    Ok(if code == 0 && !structure.passed {
        3
    } else {
        code
    })
}

fn write_study(
    out: &Path,
    tag: &str,
    study: &ConvergenceStudy,
    probes: &[ProbeField],
) -> Result<serde_json::Value, Error> {
    let mut per_probe = serde_json::Map::new();
    for &p in probes {
        let rows = study.rows(p)?;
        io::write_study_csv(
            &out.join(format!("convergence_{tag}_{}.csv", p.name())),
            &rows,
        )?;
        for (k, level) in study.levels.iter().enumerate() {
            if let Some((_, sl)) = level.slices.iter().find(|(q, _)| *q == p) {
                io::write_slice_csv(
                    &out.join(format!("slice_{tag}_{}_level{k}.csv", p.name())),
                    &sl.x,
                    &sl.values,
                )?;
            }
        }
        per_probe.insert(
            p.name().to_string(),
            json!({ "diffs": study.diffs(p)?, "ratios": study.ratios(p)?, "orders": study.orders(p)? }),
        );
    }
    Ok(serde_json::Value::Object(per_probe))
}

fn cmd_converge(
    kind: ConvergeKind,
    c: &Common,
    levels: usize,
    ns: &[usize],
    probes: &[String],
) -> Result<u8, Error> {
    let cfg = load(c)?;
    let probes: Vec<ProbeField> = if probes.is_empty() {
        ProbeField::ALL.to_vec()
    } else {
        probes.iter().map(|p| p.parse()).collect::<Result<_, _>>()?
    };
    io::write_text(&c.out.join("effective_config.toml"), &cfg.effective_toml())?;
    let start = Instant::now();
    let s = &cfg.scenario;
    let (tag, study) = match kind {
        ConvergeKind::Time => (
            "time",
            temporal_convergence(s, s.tau, levels, &probes, c.jobs)?,
        ),
        ConvergeKind::Space => ("space", spatial_convergence(s, ns, s.tau, &probes, c.jobs)?),
    };
    let per_probe = write_study(&c.out, tag, &study, &probes)?;
    for (name, v) in per_probe.as_object().expect("object") {
        eprintln!("{name}: orders {}", v["orders"]);
    }
    io::write_json(
        &c.out.join("summary.json"),
        &json!({
            "scenario": s.name,
            "study": tag,
            "levels": study.levels.iter().map(|l| l.refined_value).collect::<Vec<_>>(),
            "t_final": study.t_final,
            "probes": per_probe,
            "wall_seconds": start.elapsed().as_secs_f64(),
        }),
    )?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c, false),
        Command::Check(c) => cmd_run(c, true),
        Command::Converge {
            kind,
            common,
            levels,
            ns,
            probes,
        } => cmd_converge(*kind, common, *levels, ns, probes),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
