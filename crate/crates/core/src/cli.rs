//! Command-line front end.
//!
//! Exit codes: 0 converged (or all checks passed), 2 not converged or a
//! check failed, 3 invalid input.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::engine::{brute_force_follower_nash, run_algorithm1, EquilibriumReport, RunStatus};
use crate::error::{Error, Result};
use crate::follower::{check_pda_convergence, FollowerGame, FollowerScheme};
use crate::leader::{build_t, build_w_b, spectral_radius_check, LeaderScheme};
use crate::scenario::ScenarioConfig;
use crate::structure::structural_checks;
use crate::trace::{self, EmitFlags};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_INVALID_INPUT: i32 = 3;

/// Name of the effective scenario written next to the run artifacts.
pub const EFFECTIVE_SCENARIO_FILE: &str = "scenario.toml";

#[derive(Debug, Parser)]
#[command(name = "segrid", version, about = "Stackelberg equilibrium between grid generators and microgrids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for the equilibrium and write report, traces and plot data.
    Run(RunArgs),
    /// Print the follower step condition and the leader iteration radius.
    Check(ScenarioArgs),
    /// Run the structural checks without solving.
    Validate(ScenarioArgs),
    /// Compare the follower equilibrium against a brute-force grid search.
    Oracle(OracleArgs),
    /// Re-check a recorded follower trace step by step and against a re-run.
    Replay(ReplayArgs),
}

/// Scheme and solver overrides applied on top of the scenario file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Follower update scheme: iua, rua or pda.
    #[arg(long)]
    pub follower: Option<FollowerScheme>,
    /// Leader information scheme: kpp, kgd or kba.
    #[arg(long)]
    pub leader: Option<LeaderScheme>,
    /// Seed for the initial point, update draws and measurement noise
    #[arg(long)]
    pub seed: Option<u64>,
    /// Follower stopping threshold, MW.
    #[arg(long)]
    pub eps1: Option<f64>,
    /// Leader stopping threshold, MW.
    #[arg(long)]
    pub eps2: Option<f64>,
    /// Iteration cap for both the follower and the leader loops.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Std. dev. of angle measurement noise, rad.
    #[arg(long)]
    pub noise_std: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) -> Result<()> {
        let s = &mut cfg.solver;
        if let Some(v) = self.follower {
            s.follower_scheme = v;
        }
        if let Some(v) = self.leader {
            s.leader_scheme = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.eps1 {
            s.eps1 = v;
        }
        if let Some(v) = self.eps2 {
            s.eps2 = v;
        }
        if let Some(v) = self.max_iters {
            s.max_inner_iters = v;
            s.max_outer_iters = v;
        }
        if let Some(v) = self.noise_std {
            s.noise_std = v;
        }
        s.validate()?;
        cfg.file.solver = s.clone();
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, required = true)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file; repeat for a batch, which runs in parallel.
    #[arg(long, required = true, num_args = 1..)]
    pub scenario: Vec<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output directory; each scenario writes into its own subdirectory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Skip the follower and leader trace CSVs
    #[arg(long)]
    pub no_traces: bool,
    /// Skip diagnostics.json
    #[arg(long)]
    pub no_diagnostics: bool,
    /// Skip the plot_*.csv files
    #[arg(long)]
    pub no_plots: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Grid spacing of the brute-force search, MW.
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Follower trace written by `run`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Scenario the trace came from; defaults to the effective scenario
    /// stored next to the trace.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = String::new();
    let code = match execute(&cli.command, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_invalid_input() || matches!(e, Error::Io(_)) {
                EXIT_INVALID_INPUT
            } else {
                EXIT_NOT_CONVERGED
            }
        }
    };
    print!("{stdout}");
    code
}

/// Runs a parsed command, appending its console output to `out`.
pub fn execute(command: &Command, out: &mut String) -> Result<i32> {
    match command {
        Command::Run(args) => cmd_run(args, out),
        Command::Check(args) => cmd_check(args, out),
        Command::Validate(args) => cmd_validate(args, out),
        Command::Oracle(args) => cmd_oracle(args, out),
        Command::Replay(args) => cmd_replay(args, out),
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_path(path)?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

pub fn status_exit_code(status: RunStatus) -> i32 {
    match status {
        RunStatus::Converged => EXIT_OK,
        _ => EXIT_NOT_CONVERGED,
    }
}

fn fmt_vec(v: &[f64], digits: usize) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.digits$}")).collect();
    format!("[{}]", items.join(", "))
}

pub fn summarize(report: &EquilibriumReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{}: {} ({}+{}, seed {})",
        report.scenario,
        report.status,
        report.follower_scheme,
        report.leader_scheme,
        report.seed
    );
    let _ = writeln!(s, "  P_g*   = {} MW", fmt_vec(&report.p_g_star, 3));
    let _ = writeln!(s, "  P_dg*  = {} MW", fmt_vec(&report.p_dg_star, 3));
    let _ = writeln!(s, "  P_d*   = {} MW", fmt_vec(&report.p_d_star, 3));
    for m in &report.microgrids {
        let _ = writeln!(
            s,
            "  microgrid {} {} {:.3} MW",
            m.bus,
            m.direction,
            m.net_injection_mw.abs()
        );
    }
    let _ = writeln!(
        s,
        "  follower steps {} + {}, leader sweeps {}",
        report.inner_steps_initial, report.inner_steps_final, report.leader_sweeps
    );
    let d = &report.diagnostics;
    let _ = writeln!(
        s,
        "  PDA condition {:.4} vs {:.4}, rho(M) {:.4}, cond(W) {:.3e}, caps ok {}",
        d.pda_condition.lhs, d.pda_condition.rhs, d.rho_m, d.cond_w, d.caps_ok
    );
    if let Some(v) = &report.verification {
        let _ = writeln!(
            s,
            "  equilibrium check: {} ({} violations, min gaps {:.3e} / {:.3e})",
            if v.passed() { "passed" } else { "failed" },
            v.violations.len(),
            v.min_microgrid_gap,
            v.min_generator_gap
        );
    }
    s
}

fn cmd_run(args: &RunArgs, out: &mut String) -> Result<i32> {
    let emit = EmitFlags {
        traces: !args.no_traces,
        diagnostics: !args.no_diagnostics,
        plots: !args.no_plots,
    };
    let results: Vec<(String, i32)> = args
        .scenario
        .par_iter()
        .map(|path| match run_one(path, &args.overrides, &args.out, emit) {
            Ok((text, code)) => (text, code),
            Err(e) => {
                let code = if e.is_invalid_input() || matches!(e, Error::Io(_)) {
                    EXIT_INVALID_INPUT
                } else {
                    EXIT_NOT_CONVERGED
                };
                (format!("{}: error: {e}\n", path.display()), code)
            }
        })
        .collect();
    let mut code = EXIT_OK;
    for (text, c) in results {
        out.push_str(&text);
        code = code.max(c);
    }
    Ok(code)
}

fn run_one(path: &Path, overrides: &Overrides, out_dir: &Path, emit: EmitFlags) -> Result<(String, i32)> {
    let cfg = load(path, overrides)?;
    let report = run_algorithm1(&cfg)?;
    let dir = out_dir.join(&cfg.name);
    trace::write_artifacts(&dir, &report, &cfg, emit)?;
    std::fs::write(dir.join(EFFECTIVE_SCENARIO_FILE), cfg.file.to_toml()?)?;
    let mut text = summarize(&report);
    let _ = writeln!(text, "  artifacts in {}", dir.display());
    Ok((text, status_exit_code(report.status)))
}

/// One-line verdict on both convergence preconditions.
pub fn check_line(cfg: &ScenarioConfig) -> Result<(String, bool)> {
    let net = &cfg.network;
    let pda = check_pda_convergence(net, &cfg.microgrids);
    let t = build_t(net)?;
    let system = build_w_b(net, &cfg.generators, &t, nalgebra::DVector::zeros(net.n_g()))?;
    let spectral = spectral_radius_check(&system);
    let line = format!(
        "{:.3} {} {}: PDA condition {}; rho(M)={:.3} {} 1",
        pda.lhs,
        if pda.satisfied { "<" } else { ">=" },
        pda.rhs,
        if pda.satisfied { "satisfied" } else { "not satisfied" },
        spectral.rho,
        if spectral.converges { "<" } else { ">=" },
    );
    Ok((line, pda.satisfied && spectral.converges))
}

fn cmd_check(args: &ScenarioArgs, out: &mut String) -> Result<i32> {
    let cfg = load(&args.scenario, &args.overrides)?;
    let (line, ok) = check_line(&cfg)?;
    let _ = writeln!(out, "{line}");
    let pda = check_pda_convergence(&cfg.network, &cfg.microgrids);
    let _ = writeln!(
        out,
        "max s_ij/s_ii = {:.4}, tau in [{:.3}, {:.3}]",
        pda.max_coupling_ratio, pda.tau_min, pda.tau_max
    );
    Ok(if ok { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_validate(args: &ScenarioArgs, out: &mut String) -> Result<i32> {
    let cfg = load(&args.scenario, &args.overrides)?;
    let checks = structural_checks(&cfg.network, &cfg.generators);
    let mut all = true;
    for c in &checks {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        all &= c.passed();
        let _ = writeln!(out, "{verdict} {}", c.property);
        for line in c.report.to_string().lines() {
            let _ = writeln!(out, "    {line}");
        }
    }
    Ok(if all { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_oracle(args: &OracleArgs, out: &mut String) -> Result<i32> {
    let cfg = load(&args.scenario.scenario, &args.scenario.overrides)?;
    let report = run_algorithm1(&cfg)?;
    let net = &cfg.network;
    let game = FollowerGame::new(net, cfg.microgrids.clone(), cfg.market)?;
    let direct = game.solve_direct(&report.p_g_star)?;
    let brute = brute_force_follower_nash(
        net,
        &cfg.microgrids,
        &cfg.market,
        &report.p_g_star,
        args.grid_step,
    )?;
    let gap = crate::linalg::max_abs_diff(&direct.p_d, &brute.p_d);
    let run_gap = crate::linalg::max_abs_diff(&report.p_d_star, &brute.p_d);
    let tol = 2.0 * args.grid_step;
    let _ = writeln!(out, "P_g*             = {} MW", fmt_vec(&report.p_g_star, 4));
    let _ = writeln!(out, "grid oracle P_d  = {} MW ({} sweeps)", fmt_vec(&brute.p_d, 4), brute.sweeps);
    let _ = writeln!(out, "direct solve P_d = {} MW", fmt_vec(&direct.p_d, 4));
    let _ = writeln!(out, "run result P_d   = {} MW", fmt_vec(&report.p_d_star, 4));
    let ok = brute.converged && gap <= tol;
    let _ = writeln!(
        out,
        "{} max |direct - oracle| = {gap:.3e} MW (tolerance {tol}), max |run - oracle| = {run_gap:.3e} MW",
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(if ok { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_replay(args: &ReplayArgs, out: &mut String) -> Result<i32> {
    let scenario = match &args.scenario {
        Some(p) => p.clone(),
        None => args
            .trace
            .parent()
            .unwrap_or(Path::new("."))
            .join(EFFECTIVE_SCENARIO_FILE),
    };
    let cfg = ScenarioConfig::from_path(&scenario)?;
    let bytes = std::fs::read(&args.trace)?;
    let recorded = trace::read_follower_trace(bytes.as_slice())?;
    let replay = trace::replay_follower_trace(&cfg, &recorded)?;
    let _ = writeln!(
        out,
        "{} rows, {} steps recomputed, {} skipped, {} mismatches",
        replay.rows,
        replay.steps_checked,
        replay.steps_skipped,
        replay.mismatches.len()
    );
    for m in replay.mismatches.iter().take(10) {
        let _ = writeln!(
            out,
            "  {} step {} {}: recorded {} recomputed {}",
            m.phase, m.step, m.field, m.recorded, m.recomputed
        );
    }
    let rerun = trace::rerun_follower_trace(&cfg)?;
    let identical = rerun == bytes;
    let _ = writeln!(
        out,
        "re-run with seed {}: {}",
        cfg.solver.seed,
        if identical { "byte-identical" } else { "differs" }
    );
    Ok(if replay.passed() && identical {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}
