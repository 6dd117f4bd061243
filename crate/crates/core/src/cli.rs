//! Command-line front end. Exit codes: 0 success, 1 validation failure,
//! 2 numerical failure. Failures print one JSON line on stderr.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config_onto, ConfigError, ExperimentConfig, IntegratorKind};
use crate::energy::GainSpec;
use crate::ergodic::{gibbs_vs_sde, write_samples_csv, GibbsStudy, MetropolisOptions};
use crate::error::Error;
use crate::fig1;
use crate::grid::Grid;
use crate::kernel::BochnerOptions;
use crate::operator::{check_assumption5, KernelOperator, SpectralDecomposition};
use crate::sde::{
    convergence_table, doss_sussmann_simulate, doss_sussmann_study, em_simulate_full, galerkin_simulate,
    TrajectoryRecord,
};

#[derive(Debug, Parser)]
#[command(name = "amari-flow", version, about = "Stochastic neural fields as H₋₁ gradient flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (`[section]` / `key = value`); defaults if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `section.key=value`, applied after the config file.
    #[arg(long = "override", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Classify the kernel and write kernel-report.json.
    CheckKernel(Common),
    /// Eigenvalues of the discretized operator: spectrum.csv.
    Spectrum(Common),
    /// One trajectory with the configured integrator: trajectory.csv.
    Simulate(Common),
    /// Galerkin truncation error against the full grid: convergence.csv.
    GalerkinCompare(Common),
    /// Energy and norms along a trajectory: energy.csv.
    EnergyTrace(Common),
    /// Pathwise integrator against Euler–Maruyama under step halving: ds-compare.csv.
    DossSussmannCompare(Common),
    /// MCMC moments of the Gibbs density against SDE time averages.
    GibbsCompare(Common),
    /// Metastability preset: fig1-trajectory.csv and switches.csv.
    Fig1(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckKernel(_) => "check-kernel",
            Command::Spectrum(_) => "spectrum",
            Command::Simulate(_) => "simulate",
            Command::GalerkinCompare(_) => "galerkin-compare",
            Command::EnergyTrace(_) => "energy-trace",
            Command::DossSussmannCompare(_) => "doss-sussmann-compare",
            Command::GibbsCompare(_) => "gibbs-compare",
            Command::Fig1(_) => "fig1",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::CheckKernel(c)
            | Command::Spectrum(c)
            | Command::Simulate(c)
            | Command::GalerkinCompare(c)
            | Command::EnergyTrace(c)
            | Command::DossSussmannCompare(c)
            | Command::GibbsCompare(c)
            | Command::Fig1(c) => c,
        }
    }
}

pub const SUBCOMMANDS: [&str; 8] = [
    "check-kernel",
    "spectrum",
    "simulate",
    "galerkin-compare",
    "energy-trace",
    "doss-sussmann-compare",
    "gibbs-compare",
    "fig1",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Compute(#[from] Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Compute(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(e) => e.kind(),
            CliError::Compute(e) => e.kind(),
            CliError::Io(_) => "Io",
            CliError::Usage(_) => "Usage",
        }
    }

    /// The one-line machine-readable reason.
    pub fn reason_line(&self) -> String {
        json!({ "status": "error", "exit": self.exit_code(), "kind": self.kind(), "message": self.to_string() })
            .to_string()
    }
}

/// Base config for a subcommand before any file or override.
pub fn base_config(subcommand: &str) -> ExperimentConfig {
    if subcommand == "fig1" {
        fig1::preset()
    } else {
        ExperimentConfig::default()
    }
}

pub fn load_config(
    subcommand: &str,
    path: Option<&Path>,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<ExperimentConfig, CliError> {
    let base = base_config(subcommand);
    let mut cfg = match path {
        Some(p) => parse_config_onto(&fs::read_to_string(p)?, base)?,
        None => base,
    };
    for o in overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            if code != 0 {
                eprintln!("{}", CliError::Usage(e.kind().to_string()).reason_line());
            }
            return code;
        }
    };
    let name = cli.command.name();
    let common = cli.command.common();
    let result = load_config(name, common.config.as_deref(), common.seed, &common.overrides)
        .and_then(|cfg| run_subcommand(name, &cfg, &common.out));
    match result {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.reason_line());
            e.exit_code()
        }
    }
}

/// Runs one pipeline and returns human-readable summary lines.
pub fn run_subcommand(name: &str, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    if !SUBCOMMANDS.contains(&name) {
        return Err(CliError::Usage(format!("unknown subcommand `{name}`")));
    }
    fs::create_dir_all(out)?;
    match name {
        "check-kernel" => check_kernel(cfg, out),
        "spectrum" => spectrum(cfg, out),
        "simulate" => simulate(cfg, out),
        "galerkin-compare" => galerkin_compare(cfg, out),
        "energy-trace" => energy_trace(cfg, out),
        "doss-sussmann-compare" => ds_compare(cfg, out),
        "gibbs-compare" => gibbs_compare(cfg, out),
        _ => fig1_run(cfg, out),
    }
}

/// Exit code of [`run_subcommand`] without printing.
pub fn run_to_exit_code(name: &str, cfg: &ExperimentConfig, out: &Path) -> i32 {
    match run_subcommand(name, cfg, out) {
        Ok(_) => 0,
        Err(e) => e.exit_code(),
    }
}

fn create(out: &Path, cfg: &ExperimentConfig, file: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = out.join(format!("{}{file}", cfg.output.prefix));
    Ok((path.clone(), BufWriter::new(File::create(path)?)))
}

struct Setup {
    grid: Grid,
    op: KernelOperator,
    dec: SpectralDecomposition,
    gain: GainSpec,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let spec = cfg.kernel.spec()?;
    let grid = cfg.grid.grid()?;
    let op = KernelOperator::with_mode(spec, grid, cfg.grid.apply);
    let dec = op.decompose(cfg.grid.rel_tol, cfg.grid.neg_tol)?;
    cfg.validate_rank(dec.rank())?;
    Ok(Setup { grid, op, dec, gain: cfg.gain.spec() })
}

fn write_traj(out: &Path, cfg: &ExperimentConfig, file: &str, tr: &TrajectoryRecord) -> Result<String, CliError> {
    let (path, mut w) = create(out, cfg, file)?;
    tr.write_csv(&mut w)?;
    w.flush()?;
    Ok(format!("wrote {}", path.display()))
}

fn check_kernel(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let spec = cfg.kernel.spec()?;
    let analytic = spec.classify();
    let numeric = spec.bochner_numeric_check(&BochnerOptions::default())?;
    let grid = cfg.grid.grid()?;
    let gram = spec.gram_min_eigenvalue(&grid.nodes())?;
    let thresholds: serde_json::Map<String, serde_json::Value> =
        spec.thresholds().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let report = json!({
        "family": spec.family(),
        "scale": spec.scale(),
        "verdict": analytic.verdict,
        "witness": analytic.witness,
        "thresholds": thresholds,
        "numeric_verdict": numeric.verdict,
        "numeric_witness": numeric.witness,
        "gram_min_eigenvalue": gram,
    });
    let (path, mut w) = create(out, cfg, "kernel-report.json")?;
    writeln!(w, "{}", serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?)?;
    w.flush()?;
    Ok(vec![format!("verdict {:?}", analytic.verdict), format!("wrote {}", path.display())])
}

fn spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let s = setup(cfg)?;
    let (path, mut w) = create(out, cfg, "spectrum.csv")?;
    s.dec.write_csv(&mut w)?;
    w.flush()?;
    let mut lines = vec![format!("rank {}", s.dec.rank()), format!("wrote {}", path.display())];
    if let Some(rule) = cfg.noise_spec().rule() {
        let b = rule.coefficients(s.dec.lambdas())?;
        let rep = check_assumption5(s.dec.lambdas(), &b, s.dec.rank())?;
        lines.push(format!(
            "noise trace sum {} (non-decaying terms: {})",
            rep.partial_sums.last().copied().unwrap_or(0.0),
            rep.growth_flag
        ));
    }
    Ok(lines)
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let s = setup(cfg)?;
    let u0 = cfg.initial_field(s.grid, &s.dec)?;
    let sim = cfg.sim_config(u0);
    let noise = cfg.noise_spec();
    let tr = match cfg.sim.integrator {
        IntegratorKind::Em => em_simulate_full(&s.op, &s.dec, s.gain, &noise, &sim)?,
        IntegratorKind::Galerkin => {
            galerkin_simulate(&s.dec, s.gain, &noise, &sim, cfg.galerkin.modes.resolve(s.dec.rank()))?
        }
        IntegratorKind::DossSussmann => doss_sussmann_simulate(&s.op, &s.dec, s.gain, &noise, &sim, cfg.sim.substeps)?,
    };
    Ok(vec![format!("{} steps", tr.steps), write_traj(out, cfg, "trajectory.csv", &tr)?])
}

fn galerkin_compare(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let s = setup(cfg)?;
    let u0 = cfg.initial_field(s.grid, &s.dec)?;
    let list: Vec<usize> = cfg.galerkin.n_list.iter().map(|m| m.resolve(s.dec.rank())).collect();
    let table = convergence_table(&s.op, &s.dec, s.gain, &cfg.noise_spec(), &cfg.sim_config(u0), &list)?;
    let (path, mut w) = create(out, cfg, "convergence.csv")?;
    writeln!(w, "n,sup_error")?;
    for (n, e) in &table {
        writeln!(w, "{n},{}", crate::fmt_f64(*e))?;
    }
    w.flush()?;
    Ok(vec![format!("wrote {}", path.display())])
}

fn energy_trace(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let s = setup(cfg)?;
    let u0 = cfg.initial_field(s.grid, &s.dec)?;
    let sim = cfg.sim_config(u0).diagnostics(true);
    let tr = em_simulate_full(&s.op, &s.dec, s.gain, &cfg.noise_spec(), &sim)?;
    let (path, mut w) = create(out, cfg, "energy.csv")?;
    writeln!(w, "t,theta,norm_h,norm_hm1")?;
    let d = &tr.diagnostics;
    let f = |v: Option<f64>| crate::fmt_f64(v.unwrap_or(f64::NAN));
    for k in 0..tr.len() {
        writeln!(
            w,
            "{},{},{},{}",
            crate::fmt_f64(tr.times[k]),
            f(d.theta[k]),
            crate::fmt_f64(d.norm_h[k]),
            f(d.norm_hm1[k])
        )?;
    }
    w.flush()?;
    let max_rise = d.theta.windows(2).filter_map(|p| Some(p[1]? - p[0]?)).fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![format!("max energy increase per snapshot {max_rise:e}"), format!("wrote {}", path.display())])
}

fn ds_compare(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let s = setup(cfg)?;
    let u0 = cfg.initial_field(s.grid, &s.dec)?;
    let rows = doss_sussmann_study(
        &s.op,
        &s.dec,
        s.gain,
        &cfg.noise_spec(),
        &cfg.sim_config(u0),
        cfg.sim.substeps,
        cfg.sim.halvings,
    )?;
    let (path, mut w) = create(out, cfg, "ds-compare.csv")?;
    writeln!(w, "dt,sup_discrepancy,ratio")?;
    let mut prev: Option<f64> = None;
    for (dt, e) in &rows {
        let ratio = prev.map_or(f64::NAN, |p| p / e);
        writeln!(w, "{},{},{}", crate::fmt_f64(*dt), crate::fmt_f64(*e), crate::fmt_f64(ratio))?;
        prev = Some(*e);
    }
    w.flush()?;
    Ok(vec![format!("wrote {}", path.display())])
}

fn gibbs_compare(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let s = setup(cfg)?;
    let g = &cfg.gibbs;
    let study = GibbsStudy {
        modes: g.modes,
        mcmc: MetropolisOptions {
            steps: g.mcmc_steps,
            step_scale: g.step_scale,
            burn_in: g.burn_in,
            seed: cfg.sim.seed,
        },
        sde_dt: g.sde_dt,
        sde_t_end: g.sde_t_end,
        sde_burn_in: g.sde_burn_in,
        sde_record_every: g.sde_record_every,
    };
    let cmp = gibbs_vs_sde(&s.dec, s.gain, cfg.sim.alpha, cfg.sim.epsilon, &study, cfg.sim.seed)?;
    let (p1, mut w) = create(out, cfg, "samples.csv")?;
    write_samples_csv(&cmp.chain.samples, g.burn_in, &mut w)?;
    w.flush()?;
    let (p2, mut w) = create(out, cfg, "moments.jsonl")?;
    cmp.report.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(vec![
        format!("acceptance rate {:.3}", cmp.chain.acceptance_rate),
        format!("max |z| {:.3} pass {}", cmp.report.max_abs_z, cmp.report.pass),
        format!("wrote {}", p1.display()),
        format!("wrote {}", p2.display()),
    ])
}

fn fig1_run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let run = fig1::run(cfg)?;
    let traj_line = write_traj(out, cfg, "fig1-trajectory.csv", &run.trajectory)?;
    let (path, mut w) = create(out, cfg, "switches.csv")?;
    writeln!(w, "time,direction")?;
    for e in &run.events {
        writeln!(w, "{},{:?}", crate::fmt_f64(e.time), e.direction)?;
    }
    w.flush()?;
    let mean = run.trajectory.final_state().iter().sum::<f64>() / cfg.grid.n as f64;
    Ok(vec![
        format!("equilibria {:?}", run.equilibria),
        format!("thresholds {:?}", run.thresholds),
        format!("events {} final mean {mean:.4}", run.events.len()),
        traj_line,
        format!("wrote {}", path.display()),
    ])
}
