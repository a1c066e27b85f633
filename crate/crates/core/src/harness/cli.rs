//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::config;
use super::eoc::{eoc_spatial, eoc_temporal, EocOutcome};
use super::output::{write_vtk, DiagnosticsWriter};
use super::scenario::{preset, scenario_convergence, ScenarioConfig, ScenarioKind};
use crate::dynamics::{Simulation, StepSetup};
use crate::error::{Error, Result};
use crate::solver::NewtonConfig;

#[derive(Debug, Parser)]
#[command(name = "nacns", version, about = "Non-isothermal Allen-Cahn-Navier-Stokes finite element solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write diagnostics and snapshots.
    Run(RunArgs),
    /// Spatial convergence study on nested meshes.
    EocSpace(EocArgs),
    /// Temporal convergence study on a fixed mesh.
    EocTime(EocArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Melt,
    Laser,
    Dendrite,
    Convergence,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Melt => ScenarioKind::Melt,
            ScenarioArg::Laser => ScenarioKind::Laser,
            ScenarioArg::Dendrite => ScenarioKind::Dendrite,
            ScenarioArg::Convergence => ScenarioKind::Convergence,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_enum, required_unless_present = "config")]
    scenario: Option<ScenarioArg>,
    /// Config file; its values override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cells per direction (sets both nx and ny).
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Steps between VTK snapshots; 0 disables them.
    #[arg(long)]
    snapshot_stride: Option<usize>,
}

#[derive(Debug, Args)]
struct EocArgs {
    /// Error levels `A..B`; level B+1 is solved as the reference.
    #[arg(long, value_parser = parse_levels)]
    levels: (u32, u32),
    /// Base configuration (default: the convergence preset).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh cells per direction for temporal studies.
    #[arg(long, default_value_t = 16)]
    nx: usize,
    /// Fixed time step for spatial studies.
    #[arg(long, default_value_t = 0.1 / 256.0)]
    tau: f64,
    /// Base step of the temporal sequence `tau0 * 2^-k`.
    #[arg(long, default_value_t = 0.1)]
    tau0: f64,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn parse_levels(s: &str) -> std::result::Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let a: u32 = a.trim().parse().map_err(|_| format!("bad level `{a}`"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad level `{b}`"))?;
    if a > b {
        return Err(format!("empty level range {a}..{b}"));
    }
    Ok((a, b))
}

/// Parses `argv` (program name first) and runs the command. Returns 0 on
/// success, 1 on a run failure and 2 on a usage error.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    configure_threads();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::EocSpace(a) => eoc(a, true),
        Command::EocTime(a) => eoc(a, false),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Sizes the global pool from `NACNS_THREADS` (0 or unset: automatic).
fn configure_threads() {
    let n = std::env::var("NACNS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if n > 0 && rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::debug!("thread pool already initialised");
    }
}

fn run_config(a: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let cfg = config::load(path)?;
            if let Some(s) = a.scenario {
                if cfg.scenario != ScenarioKind::from(s) {
                    return Err(Error::InvalidArgument(format!(
                        "--scenario {} disagrees with `scenario = {}` in {}",
                        ScenarioKind::from(s).name(),
                        cfg.scenario.name(),
                        path.display()
                    )));
                }
            }
            cfg
        }
        None => {
            let kind = a.scenario.map(ScenarioKind::from).unwrap_or(ScenarioKind::Melt);
            preset(kind).ok_or_else(|| Error::InvalidArgument("scenario has no preset".into()))?
        }
    };
    if let Some(n) = a.nx {
        cfg.nx = n;
        cfg.ny = n;
    }
    if let Some(t) = a.tau {
        cfg.tau = t;
    }
    if let Some(t) = a.t_end {
        cfg.t_end = t;
    }
    if let Some(d) = &a.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(s) = a.snapshot_stride {
        cfg.snapshot_stride = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("snapshot_{step:05}.vtk"))
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = run_config(&a)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    config::save(&cfg, &cfg.out_dir.join("run.cfg"))?;
    let disc = cfg.discretization()?;
    let initial = cfg.initial_state(&disc)?;
    let setup = StepSetup {
        disc: &disc,
        params: &cfg.params,
        sources: &cfg.sources,
        tau: cfg.tau,
        newton: NewtonConfig::default(),
    };
    let mut sim = Simulation::new(setup, initial)?;
    let total = sim.steps_until(cfg.t_end);
    log::info!(
        "{}: {}x{} mesh, {} unknowns, {total} steps of {}",
        cfg.scenario.name(),
        cfg.nx,
        cfg.ny,
        disc.layout.len(),
        cfg.tau
    );
    let mut csv = DiagnosticsWriter::create(&cfg.out_dir.join("diagnostics.csv"))?;
    let stride = cfg.snapshot_stride;
    if stride > 0 {
        write_vtk(&snapshot_path(&cfg.out_dir, 0), &disc, &sim.state)?;
    }
    let outcome = sim.run_until(cfg.t_end, |state, d| {
        csv.write(d)?;
        if stride > 0 && d.step % stride == 0 {
            write_vtk(&snapshot_path(&cfg.out_dir, d.step), &disc, state)?;
        }
        if d.step % 100 == 0 {
            log::info!("step {}/{total} t={} S={} E={}", d.step, d.t, d.entropy, d.total_energy);
        }
        Ok(())
    });
    if let Err(e) = outcome {
        if stride > 0 {
            write_vtk(&cfg.out_dir.join("snapshot_failed.vtk"), &disc, &sim.state)?;
        }
        return Err(e);
    }
    println!("{}: {} steps to t={} written to {}", cfg.scenario.name(), sim.step, sim.time(), cfg.out_dir.display());
    Ok(())
}

fn eoc(a: EocArgs, spatial: bool) -> Result<()> {
    let mut base = match &a.config {
        Some(p) => config::load(p)?,
        None => scenario_convergence(),
    };
    if let Some(t) = a.t_end {
        base.t_end = t;
    }
    let (k_min, k_max) = a.levels;
    let out: EocOutcome = if spatial {
        eoc_spatial(&base, k_min, k_max, a.tau)?
    } else {
        eoc_temporal(&base, a.nx, k_min, k_max, a.tau0)?
    };
    std::fs::create_dir_all(&a.out_dir)?;
    let stem = if spatial { "eoc_space" } else { "eoc_time" };
    std::fs::write(a.out_dir.join(format!("{stem}.csv")), out.report.to_csv())?;
    let table = out.report.to_table();
    std::fs::write(a.out_dir.join(format!("{stem}.txt")), &table)?;
    print!("{table}");
    println!("min theta {}", out.min_theta);
    Ok(())
}
