//! `fwdback`: batch driver for the forward-backward diffusion pipeline.
//!
//! Exit status: 0 on success, 1 on pipeline errors or when the final flux
//! residual misses `ε_{J-1}|Ω_T|`, 2 on config errors.

mod config;
mod output;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{config_error, parse_type, ConfigError, Overrides, RawConfig, RunConfig};
use fwdback::scheme::{build_initial_state, general_existence, refine_once, RunPlan, SchemeError, StatePair};
use fwdback::verify::VerificationReport;
use fwdback::{Profile, SolutionType};
use output::OutDir;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fwdback", version, about = "Approximate Lipschitz solutions of forward-backward diffusion equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the profile landmarks and, per level r, the branch inverses.
    InspectProfile {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset name or expression in s; overrides the config.
        #[arg(long)]
        profile: Option<String>,
        /// Flux levels, repeated or comma separated.
        #[arg(long = "r", value_delimiter = ',', allow_negative_numbers = true)]
        levels: Vec<f64>,
    },
    /// Solve the modified classical problem and write (u*, v*).
    SolveClassical(RunArgs),
    /// Run the refinement passes, writing every pass.
    Refine(RunArgs),
    /// Run the refinement passes and print each pass against its budgets.
    Verify(RunArgs),
    /// The refinement run on a built-in 1D config.
    Demo(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long = "type", value_parser = type_arg)]
    solution_type: Option<SolutionType>,
    #[arg(long)]
    seed: Option<u64>,
}

fn type_arg(s: &str) -> Result<SolutionType, String> {
    parse_type(s).ok_or_else(|| format!("expected I or II, got {s}"))
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0:#}")]
    Pipeline(#[from] anyhow::Error),
    #[error("final flux residual {value} exceeds the budget {budget}")]
    Budget { value: f64, budget: f64 },
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            _ => 1,
        }
    }
}

impl From<SchemeError> for Failure {
    fn from(e: SchemeError) -> Self {
        match e {
            SchemeError::InvalidSetting { field, reason } => Failure::Config(config_error(&field, reason)),
            SchemeError::RTildeOutOfRange { r_tilde, lo, hi } => {
                Failure::Config(config_error("r_tilde", format!("{r_tilde} not inside ({lo}, {hi})")))
            }
            e => Failure::Pipeline(e.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::InspectProfile { config, profile, levels } => inspect_profile(config, profile, &levels),
        Command::SolveClassical(a) => load(&a, false).and_then(|c| solve_classical(&c)),
        Command::Refine(a) => load(&a, false).and_then(|c| refine(&c, Mode::Write)),
        Command::Verify(a) => load(&a, false).and_then(|c| refine(&c, Mode::Print)),
        Command::Demo(a) => load(&a, true).and_then(|c| refine(&c, Mode::Write)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn load(args: &RunArgs, demo: bool) -> Result<RunConfig, Failure> {
    let raw = match (&args.config, demo) {
        (Some(path), _) => RawConfig::load(path)?,
        (None, true) => RawConfig::demo(),
        (None, false) => return Err(config_error("config", "--config PATH is required").into()),
    };
    let over = Overrides { passes: args.passes, solution_type: args.solution_type, seed: args.seed, out: args.out.clone() };
    if over.passes == Some(0) {
        return Err(config_error("passes", "must be at least 1").into());
    }
    Ok(raw.resolve(&over)?)
}

fn inspect_profile(config: Option<PathBuf>, profile: Option<String>, levels: &[f64]) -> Result<(), Failure> {
    let spec = match (profile, config) {
        (Some(s), _) => s,
        (None, Some(path)) => RawConfig::load(&path)?.profile.unwrap_or_else(|| "quadratic-glued".into()),
        (None, None) => "quadratic-glued".into(),
    };
    let p = Profile::from_spec(&spec).map_err(|e| config_error("profile", e))?;
    println!("landmark, value");
    for (name, value) in [
        ("s_minus", p.s_minus),
        ("s_zero", p.s_zero),
        ("s_plus", p.s_plus),
        ("sigma_s_minus", p.sigma(p.s_minus)),
        ("sigma_s_plus", p.sigma(p.s_plus)),
    ] {
        println!("{name}, {value:.6}");
    }
    if !levels.is_empty() {
        println!("r, s_plus_r, s_minus1_r, s_minus2_r");
    }
    for &r in levels {
        match p.branch_inverses(r) {
            Ok(b) => println!("{r}, {:.6}, {:.6}, {:.6}", b.s_plus_r, b.s_minus1_r, b.s_minus2_r),
            Err(e) => println!("{r}, error: {e}"),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GridSummary {
    dim: usize,
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    nt: usize,
    t_end: f64,
}

#[derive(Serialize)]
struct Summary {
    command: &'static str,
    profile: String,
    #[serde(rename = "type")]
    solution_type: SolutionType,
    route: serde_json::Value,
    r_tilde: f64,
    grid: GridSummary,
    passes: usize,
    epsilon0: f64,
    eta: f64,
    seed: u64,
    ut_cap: f64,
    vt_cap: f64,
    omega_measure: f64,
    below_measure: f64,
    flux_budget: f64,
    final_flux: f64,
    passed: bool,
    patches_applied: usize,
    patches_skipped: usize,
    incomplete: Vec<String>,
    flux_trace: Vec<f64>,
}

fn summary(cfg: &RunConfig, command: &'static str, route: serde_json::Value, state: &StatePair, budget: Option<f64>, incomplete: Vec<String>) -> Summary {
    let g = &state.grid;
    let last = state.history.last();
    let final_flux = last.map_or(0.0, |r| r.flux_residual);
    let flux_budget = budget.unwrap_or(f64::INFINITY);
    Summary {
        command,
        profile: cfg.profile_spec.clone(),
        solution_type: cfg.settings.solution_type,
        route,
        r_tilde: state.r_tilde,
        grid: GridSummary { dim: g.dim, nx: g.nx, ny: g.ny, lx: g.lx, ly: g.ly, nt: g.nt, t_end: g.t_end },
        passes: cfg.settings.passes,
        epsilon0: cfg.settings.epsilon0,
        eta: cfg.settings.eta,
        seed: cfg.settings.seed,
        ut_cap: state.ut_cap,
        vt_cap: state.vt_cap,
        omega_measure: g.spacetime_measure(),
        below_measure: state.omega1_measure(),
        flux_budget: budget.unwrap_or(0.0),
        final_flux,
        passed: final_flux <= flux_budget,
        patches_applied: state.patches.iter().filter(|p| p.skipped.is_none()).count(),
        patches_skipped: state.patches.iter().filter(|p| p.skipped.is_some()).count(),
        incomplete,
        flux_trace: state.history.iter().map(|r| r.flux_residual).collect(),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<OutDir, Failure> {
    let path = cfg.out.clone().unwrap_or_else(|| PathBuf::from("fwdback-out"));
    Ok(OutDir::create(&path)?)
}

fn plan(cfg: &RunConfig) -> Result<RunPlan, SchemeError> {
    RunPlan::new(cfg.profile.clone(), cfg.grid.clone(), cfg.u0.clone(), cfg.settings)
}

fn solve_classical(cfg: &RunConfig) -> Result<(), Failure> {
    let out = out_dir(cfg)?;
    let plan = plan(cfg)?;
    let mut state = build_initial_state(&plan)?;
    let rep = state.report(&plan.profile, 0)?;
    state.history.push(rep.clone());
    out.state("state_pass0.csv", &state)?;
    out.report(&rep)?;
    out.json("summary.json", &summary(cfg, "solve-classical", "Classical".into(), &state, None, Vec::new()))?;
    println!("wrote {}", out.path().display());
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Write,
    Print,
}

fn refine(cfg: &RunConfig, mode: Mode) -> Result<(), Failure> {
    let out = match mode {
        Mode::Write => Some(out_dir(cfg)?),
        Mode::Print => cfg.out.as_ref().map(|p| OutDir::create(p)).transpose()?,
    };
    let command = if mode == Mode::Print { "verify" } else { "refine" };
    let write_state = |state: &StatePair, rep: &VerificationReport| -> Result<()> {
        if let Some(out) = &out {
            if mode == Mode::Write {
                out.state(&format!("state_pass{}.csv", rep.pass_index), state)?;
            }
            out.report(rep)?;
        }
        Ok(())
    };

    let plan = match plan(cfg) {
        Ok(p) => p,
        Err(SchemeError::HypothesisFailed(why)) => return existence_route(cfg, command, &why, out.as_ref(), &write_state),
        Err(e) => return Err(e.into()),
    };
    let mut state = build_initial_state(&plan)?;
    let first = state.report(&plan.profile, 0)?;
    write_state(&state, &first).context("writing pass 0")?;
    state.history.push(first);
    let mut incomplete = Vec::new();
    for j in 0..plan.passes {
        state = match refine_once(state, plan.epsilon(j), &plan, j) {
            Ok(s) => s,
            Err(e @ SchemeError::PassIncomplete { .. }) => {
                incomplete.push(e.to_string());
                let SchemeError::PassIncomplete { state, .. } = e else { unreachable!() };
                *state
            }
            Err(e) => return Err(e.into()),
        };
        let rep = state.history.last().expect("pass report").clone();
        write_state(&state, &rep).with_context(|| format!("writing pass {}", j + 1))?;
    }
    let budget = plan.epsilon(plan.passes - 1) * state.grid.spacetime_measure();
    finish(cfg, command, "Direct".into(), &state, budget, incomplete, out.as_ref(), &plan)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cfg: &RunConfig,
    command: &'static str,
    route: serde_json::Value,
    state: &StatePair,
    budget: f64,
    incomplete: Vec<String>,
    out: Option<&OutDir>,
    plan: &RunPlan,
) -> Result<(), Failure> {
    print_table(state, plan);
    let s = summary(cfg, command, route, state, Some(budget), incomplete);
    if let Some(out) = out {
        out.patches(&state.patches)?;
        out.json("summary.json", &s)?;
    }
    if s.passed {
        Ok(())
    } else {
        Err(Failure::Budget { value: s.final_flux, budget })
    }
}

fn print_table(state: &StatePair, plan: &RunPlan) {
    let omega = state.grid.spacetime_measure();
    let below = state.omega1_measure();
    println!("pass, epsilon, flux, flux_budget, set, set_budget, ut, ut_cap, mass_drift");
    for r in &state.history {
        let eps = if r.pass_index == 0 { plan.epsilon0 } else { plan.epsilon(r.pass_index - 1) };
        let set = r.set_residuals.get("below").copied().unwrap_or(0.0);
        println!(
            "{}, {eps}, {:.6e}, {:.6e}, {:.6e}, {:.6e}, {:.4}, {:.4}, {:.3e}",
            r.pass_index,
            r.flux_residual,
            eps * omega,
            set,
            eps * below,
            r.caps.ut,
            state.ut_cap,
            r.mass_drift
        );
    }
}

/// Data outside the hypothesis: constant or everywhere steep.
fn existence_route(
    cfg: &RunConfig,
    command: &'static str,
    why: &str,
    out: Option<&OutDir>,
    write_state: &dyn Fn(&StatePair, &VerificationReport) -> Result<()>,
) -> Result<(), Failure> {
    eprintln!("note: {why}; using the general existence route");
    let ex = general_existence(&cfg.profile, &cfg.u0, &cfg.grid, cfg.settings)?;
    let last = ex.reports.last().expect("existence report").clone();
    write_state(&ex.state, &last)?;
    for r in &ex.reports[..ex.reports.len() - 1] {
        if let Some(out) = out {
            out.report(r)?;
        }
    }
    let route = serde_json::to_value(ex.route).map_err(anyhow::Error::from)?;
    let omega = ex.state.grid.spacetime_measure();
    let budget = cfg.settings.epsilon0 / 2f64.powi(cfg.settings.passes as i32 - 1) * omega;
    let s = summary(cfg, command, route.clone(), &ex.state, Some(budget), ex.incomplete.into_iter().collect());
    if let Some(out) = out {
        out.patches(&ex.state.patches)?;
        out.json("summary.json", &s)?;
    }
    println!("route {route}, final flux {:.6e}, budget {:.6e}", s.final_flux, budget);
    if s.passed {
        Ok(())
    } else {
        Err(Failure::Budget { value: s.final_flux, budget })
    }
}
