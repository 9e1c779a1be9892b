//! End-to-end equilibrium search and its checks.
//!
//! The leader acquires follower information once, on the first outer pass,
//! then solves its KKT system offline; the followers re-converge to the
//! announced generation and the run ends.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::follower::{
    check_pda_convergence, follower_cost, FollowerGame, FollowerRunOptions, FollowerScheme,
    FollowerStep, MarketParams, MicrogridParams, PdaConditionReport,
};
use crate::leader::{
    build_t, build_w_b, direct_solve, gauss_seidel_solve, kba_consistency, kba_infer,
    kgd_acquire, kpp_acquire, leader_cost, spectral_radius_check, t5_from_gamma, GeneratorParams,
    LeaderScheme, LeaderSweep,
};
use crate::network::{BusId, PowerNetwork};
use crate::scenario::ScenarioConfig;

/// Absolute tolerance on cost gaps when checking equilibrium conditions.
pub const SE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    /// The first follower loop hit its step limit.
    InnerNotConverged,
    /// Gauss-Seidel hit its sweep limit.
    LeaderNotConverged,
    /// The followers did not settle on the announced generation.
    FinalNotConverged,
    /// Both loops settled but a sampled deviation beats the result.
    NotEquilibrium,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::InnerNotConverged => "inner_not_converged",
            RunStatus::LeaderNotConverged => "leader_not_converged",
            RunStatus::FinalNotConverged => "final_not_converged",
            RunStatus::NotEquilibrium => "not_equilibrium",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderMethod {
    GaussSeidel,
    /// Direct solve, used when the Gauss-Seidel iteration matrix has
    /// spectral radius at least one.
    Direct,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub pda_condition: PdaConditionReport,
    pub rho_m: f64,
    pub gauss_seidel_converges: bool,
    pub cond_w: f64,
    /// `T̃5` as acquired by the configured scheme.
    pub t5_tilde: Vec<f64>,
    pub leader_method: LeaderMethod,
    pub caps_ok: bool,
    pub within_caps: Vec<bool>,
    /// `‖T̃5(fresh angles) − T̃5(acquired)‖∞` after the followers settle.
    pub kba_consistency: Option<f64>,
    /// Components flagged as clamped during KGD acquisition.
    pub kgd_clamped: Option<Vec<bool>>,
    /// Whether every microgrid ends strictly inside its feasible interval.
    pub followers_interior: bool,
}

/// Signed net injection of a microgrid together with its reading.
#[derive(Debug, Clone, Serialize)]
pub struct MicrogridOutcome {
    pub bus: BusId,
    pub net_injection_mw: f64,
    pub generation_mw: f64,
    /// "sells" for positive net injection, "buys" for negative.
    pub direction: &'static str,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub scenario: String,
    pub follower_scheme: FollowerScheme,
    pub leader_scheme: LeaderScheme,
    pub seed: u64,
    pub status: RunStatus,
    /// Net injections of the microgrid buses, MW.
    pub p_d_star: Vec<f64>,
    /// Renewable generation of the microgrid buses, MW.
    pub p_dg_star: Vec<f64>,
    pub p_g_star: Vec<f64>,
    pub mu: Vec<f64>,
    /// Angles of all non-slack buses in internal order, rad.
    pub theta_star: Vec<f64>,
    pub bus_labels: Vec<BusId>,
    pub microgrids: Vec<MicrogridOutcome>,
    pub leader_cost: f64,
    pub initial_generation: Vec<f64>,
    pub inner_steps_initial: usize,
    pub inner_steps_final: usize,
    pub leader_sweeps: usize,
    pub diagnostics: Diagnostics,
    pub verification: Option<SeVerification>,
    #[serde(skip)]
    pub follower_trace: Vec<FollowerPhaseStep>,
    #[serde(skip)]
    pub leader_trace: Vec<LeaderSweep>,
}

impl EquilibriumReport {
    pub fn is_converged(&self) -> bool {
        self.status == RunStatus::Converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowerPhase {
    /// Followers settling on the random initial generation.
    Initial,
    /// Followers settling on the announced leader solution.
    Final,
}

impl FollowerPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            FollowerPhase::Initial => "initial",
            FollowerPhase::Final => "final",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerPhaseStep {
    pub phase: FollowerPhase,
    pub step: FollowerStep,
}

pub fn run_algorithm1(config: &ScenarioConfig) -> Result<EquilibriumReport> {
    let net = &config.network;
    let solver = &config.solver;
    solver.validate()?;
    let game = FollowerGame::new(net, config.microgrids.clone(), config.market)?;
    let t = build_t(net)?;
    let mut system = build_w_b(net, &config.generators, &t, DVector::zeros(net.n_g()))?;

    let pda_condition = check_pda_convergence(net, &config.microgrids);
    log::info!(
        "PDA condition: {:.4} < {:.4} is {}",
        pda_condition.lhs,
        pda_condition.rhs,
        pda_condition.satisfied
    );
    let spectral = spectral_radius_check(&system);
    log::info!("rho(M) = {:.4}, cond(W) = {:.3e}", spectral.rho, system.cond_w);

    let mut rng = ChaCha8Rng::seed_from_u64(solver.seed);
    let opts = FollowerRunOptions {
        eps: solver.eps1,
        max_steps: solver.max_inner_iters,
        noise_std: solver.noise_std,
    };

    let start = game.random_start(&mut rng);
    let p_g0: Vec<f64> = config
        .generators
        .iter()
        .map(|g| g.gen_cap_mw * rng.random::<f64>())
        .collect();
    let first = game.run(solver.follower_scheme, &p_g0, start, &mut rng, &opts)?;
    let mut follower_trace: Vec<FollowerPhaseStep> = first
        .trace
        .iter()
        .map(|s| FollowerPhaseStep {
            phase: FollowerPhase::Initial,
            step: s.clone(),
        })
        .collect();

    let mut partial = PartialRun {
        config,
        p_d: first.p_d.clone(),
        p_g: p_g0.clone(),
        mu: vec![0.0; net.n_g()],
        p_g0: p_g0.clone(),
        inner_initial: first.steps,
        inner_final: 0,
        sweeps: 0,
        diagnostics: Diagnostics {
            pda_condition,
            rho_m: spectral.rho,
            gauss_seidel_converges: spectral.converges,
            cond_w: system.cond_w,
            t5_tilde: vec![],
            leader_method: if spectral.converges {
                LeaderMethod::GaussSeidel
            } else {
                LeaderMethod::Direct
            },
            caps_ok: true,
            within_caps: vec![],
            kba_consistency: None,
            kgd_clamped: None,
            followers_interior: false,
        },
    };
    if !first.converged {
        log::warn!("followers did not converge within {} steps", solver.max_inner_iters);
        return partial.finish(RunStatus::InnerNotConverged, follower_trace, vec![]);
    }

    let noise = measurement_noise(solver.noise_std)?;
    let t5 = match solver.leader_scheme {
        LeaderScheme::Kpp => {
            t5_from_gamma(net, &t, &kpp_acquire(&config.microgrids, &config.market, net))?
        }
        LeaderScheme::Kgd => {
            let lo: Vec<f64> = (0..game.n_d()).map(|i| game.lower(i)).collect();
            let hi: Vec<f64> = (0..game.n_d()).map(|i| game.upper(i)).collect();
            let est = kgd_acquire(net, &p_g0, &first.p_d, Some((&lo, &hi)))?;
            partial.diagnostics.kgd_clamped = Some(est.clamped);
            t5_from_gamma(net, &t, &est.gamma)?
        }
        LeaderScheme::Kba => {
            let theta_g = measure_generator_angles(net, &game, &first.p_d, &p_g0, &noise, &mut rng)?;
            -kba_infer(net, &t, &p_g0, &theta_g)?
        }
    };
    system.set_t5(t5);
    partial.diagnostics.t5_tilde = system.t5_tilde().iter().copied().collect();

    let (solution, leader_trace) = if spectral.converges {
        let run = gauss_seidel_solve(
            &system,
            &DVector::zeros(3 * net.n_g()),
            solver.eps2,
            solver.max_outer_iters,
        )?;
        partial.sweeps = run.sweeps;
        if !run.converged {
            partial.p_g = run.solution.p_g.clone();
            partial.mu = run.solution.mu.clone();
            return partial.finish(RunStatus::LeaderNotConverged, follower_trace, run.trace);
        }
        (run.solution, run.trace)
    } else {
        log::warn!(
            "rho(M) = {:.4} >= 1: Gauss-Seidel would diverge, solving W X = b directly",
            spectral.rho
        );
        (direct_solve(&system)?.0, vec![])
    };
    partial.diagnostics.within_caps = solution.within_caps.clone();
    partial.diagnostics.caps_ok = solution.caps_ok();
    if !solution.caps_ok() {
        log::warn!("leader solution violates generation caps: {:?}", solution.p_g);
    }
    partial.p_g = solution.p_g.clone();
    partial.mu = solution.mu.clone();

    let last = game.run(
        solver.follower_scheme,
        &solution.p_g,
        first.p_d.clone(),
        &mut rng,
        &opts,
    )?;
    follower_trace.extend(last.trace.iter().map(|s| FollowerPhaseStep {
        phase: FollowerPhase::Final,
        step: s.clone(),
    }));
    partial.p_d = last.p_d.clone();
    partial.inner_final = last.steps;
    if solver.leader_scheme == LeaderScheme::Kba {
        let theta_g = measure_generator_angles(net, &game, &last.p_d, &solution.p_g, &noise, &mut rng)?;
        partial.diagnostics.kba_consistency = Some(kba_consistency(
            net,
            &t,
            &system.t5_tilde(),
            &solution.p_g,
            &theta_g,
        )?);
    }
    if !last.converged {
        return partial.finish(RunStatus::FinalNotConverged, follower_trace, leader_trace);
    }
    let mut report = partial.finish(RunStatus::Converged, follower_trace, leader_trace)?;
    let verification = verify_se(&report, config, solver.verify_samples)?;
    if !verification.passed() {
        log::warn!(
            "{} sampled deviations improve on the result",
            verification.violations.len()
        );
        report.status = RunStatus::NotEquilibrium;
    }
    report.verification = Some(verification);
    Ok(report)
}

struct PartialRun<'a> {
    config: &'a ScenarioConfig,
    p_d: Vec<f64>,
    p_g: Vec<f64>,
    mu: Vec<f64>,
    p_g0: Vec<f64>,
    inner_initial: usize,
    inner_final: usize,
    sweeps: usize,
    diagnostics: Diagnostics,
}

impl PartialRun<'_> {
    fn finish(
        mut self,
        status: RunStatus,
        follower_trace: Vec<FollowerPhaseStep>,
        leader_trace: Vec<LeaderSweep>,
    ) -> Result<EquilibriumReport> {
        let cfg = self.config;
        let net = &cfg.network;
        let mut p = self.p_d.clone();
        p.extend_from_slice(&self.p_g);
        let theta = net.angles_from_injections(&p)?;
        self.diagnostics.followers_interior = cfg
            .microgrids
            .iter()
            .zip(&self.p_d)
            .all(|(m, &x)| x > -m.load_mw && x < m.p_max());
        let microgrids = cfg
            .microgrids
            .iter()
            .zip(&self.p_d)
            .zip(net.indexing().microgrid_labels())
            .enumerate()
            .map(|(i, ((m, &x), &bus))| MicrogridOutcome {
                bus,
                net_injection_mw: x,
                generation_mw: x + m.load_mw,
                direction: if x < 0.0 { "buys" } else { "sells" },
                cost: crate::follower::unchecked_cost(m, &cfg.market, x + m.load_mw, theta[i]),
            })
            .collect();
        Ok(EquilibriumReport {
            scenario: cfg.name.clone(),
            follower_scheme: cfg.solver.follower_scheme,
            leader_scheme: cfg.solver.leader_scheme,
            seed: cfg.solver.seed,
            status,
            p_dg_star: cfg
                .microgrids
                .iter()
                .zip(&self.p_d)
                .map(|(m, &x)| x + m.load_mw)
                .collect(),
            leader_cost: leader_cost(&cfg.generators, &self.p_g, &theta[net.n_d()..]),
            p_d_star: self.p_d,
            p_g_star: self.p_g,
            mu: self.mu,
            theta_star: theta,
            bus_labels: net.indexing().labels.clone(),
            microgrids,
            initial_generation: self.p_g0,
            inner_steps_initial: self.inner_initial,
            inner_steps_final: self.inner_final,
            leader_sweeps: self.sweeps,
            diagnostics: self.diagnostics,
            verification: None,
            follower_trace,
            leader_trace,
        })
    }
}

fn measurement_noise(std: f64) -> Result<Option<Normal<f64>>> {
    if std > 0.0 {
        Ok(Some(
            Normal::new(0.0, std).map_err(|e| Error::Domain(e.to_string()))?,
        ))
    } else {
        Ok(None)
    }
}

fn measure_generator_angles<R: Rng + ?Sized>(
    net: &PowerNetwork,
    game: &FollowerGame<'_>,
    p_d: &[f64],
    p_g: &[f64],
    noise: &Option<Normal<f64>>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut theta = net.angles_from_injections(&game.injections(p_d, p_g))?;
    let mut theta_g = theta.split_off(net.n_d());
    if let Some(dist) = noise {
        for th in theta_g.iter_mut() {
            *th += dist.sample(rng);
        }
    }
    Ok(theta_g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerKind {
    Microgrid,
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeViolation {
    pub player: PlayerKind,
    pub bus: BusId,
    /// Deviating generation, MW.
    pub deviation_mw: f64,
    /// Cost at the deviation minus cost at the claimed equilibrium.
    pub cost_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeVerification {
    pub samples_per_player: usize,
    pub microgrid_samples: usize,
    pub generator_samples: usize,
    /// Smallest microgrid cost gap seen (negative means a violation).
    pub min_microgrid_gap: f64,
    pub min_generator_gap: f64,
    pub violations: Vec<SeViolation>,
}

impl SeVerification {
    pub fn follower_condition_holds(&self) -> bool {
        !self.violations.iter().any(|v| v.player == PlayerKind::Microgrid)
    }

    pub fn leader_condition_holds(&self) -> bool {
        !self.violations.iter().any(|v| v.player == PlayerKind::Generator)
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks both equilibrium conditions of a report with the scenario's seed.
pub fn verify_se(
    report: &EquilibriumReport,
    config: &ScenarioConfig,
    n_samples: usize,
) -> Result<SeVerification> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.solver.seed);
    rng.set_stream(1);
    verify_se_at(config, &report.p_d_star, &report.p_g_star, n_samples, &mut rng)
}

/// Sampled check of both conditions at a claimed profile: no microgrid
/// gains by deviating unilaterally, and no generator lowers the aggregate
/// leader cost by deviating while the followers re-solve their game.
pub fn verify_se_at<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    p_d: &[f64],
    p_g: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<SeVerification> {
    let net = &config.network;
    let game = FollowerGame::new(net, config.microgrids.clone(), config.market)?;
    let mut out = SeVerification {
        samples_per_player: n_samples,
        microgrid_samples: 0,
        generator_samples: 0,
        min_microgrid_gap: f64::INFINITY,
        min_generator_gap: f64::INFINITY,
        violations: vec![],
    };
    for (i, m) in config.microgrids.iter().enumerate() {
        for dev in deviation_samples(m.gen_cap_mw, n_samples, rng) {
            let gap = microgrid_deviation_gap(&game, i, dev, p_d, p_g)?;
            out.microgrid_samples += 1;
            out.min_microgrid_gap = out.min_microgrid_gap.min(gap);
            if gap < -SE_TOLERANCE {
                out.violations.push(SeViolation {
                    player: PlayerKind::Microgrid,
                    bus: net.indexing().labels[i],
                    deviation_mw: dev,
                    cost_gap: gap,
                });
            }
        }
    }
    let base = leader_cost_with_response(&game, &config.generators, p_g)?;
    for (j, g) in config.generators.iter().enumerate() {
        for dev in deviation_samples(g.gen_cap_mw, n_samples, rng) {
            let mut p = p_g.to_vec();
            p[j] = dev;
            let gap = leader_cost_with_response(&game, &config.generators, &p)? - base;
            out.generator_samples += 1;
            out.min_generator_gap = out.min_generator_gap.min(gap);
            if gap < -SE_TOLERANCE {
                out.violations.push(SeViolation {
                    player: PlayerKind::Generator,
                    bus: net.indexing().labels[net.n_d() + j],
                    deviation_mw: dev,
                    cost_gap: gap,
                });
            }
        }
    }
    Ok(out)
}

/// Both endpoints followed by `n − 2` uniform draws on `[0, cap]`.
fn deviation_samples<R: Rng + ?Sized>(cap: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n.max(2));
    out.push(0.0);
    out.push(cap);
    while out.len() < n {
        out.push(cap * rng.random::<f64>());
    }
    out
}

/// `J_i(deviation) − J_i(equilibrium)` for microgrid `i`, everyone else fixed.
pub fn microgrid_deviation_gap(
    game: &FollowerGame<'_>,
    i: usize,
    generation_mw: f64,
    p_d: &[f64],
    p_g: &[f64],
) -> Result<f64> {
    let load = game.params()[i].load_mw;
    let claimed = p_d[i] + load;
    let claimed_cost = {
        let mut p = game.injections(p_d, p_g);
        p[i] = claimed - load;
        let theta = game.network().angles_from_injections(&p)?;
        crate::follower::unchecked_cost(&game.params()[i], game.market(), claimed, theta[i])
    };
    Ok(game.cost_at(i, generation_mw, p_d, p_g)? - claimed_cost)
}

/// Aggregate leader cost when the followers play their equilibrium
/// response to `p_g`.
pub fn leader_cost_with_response(
    game: &FollowerGame<'_>,
    gens: &[GeneratorParams],
    p_g: &[f64],
) -> Result<f64> {
    let response = game.solve_direct(p_g)?;
    let theta = game
        .network()
        .angles_from_injections(&game.injections(&response.p_d, p_g))?;
    Ok(leader_cost(gens, p_g, &theta[game.n_d()..]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceResult {
    /// Net injections at the grid fixed point, MW.
    pub p_d: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Largest follower count the grid oracle accepts.
pub const BRUTE_FORCE_MAX_MICROGRIDS: usize = 4;

/// Sequential best response where every response is the minimizer of the
/// microgrid cost over a uniform grid on `[0, cap]` (cap included), with
/// the bus angle recomputed from the flow map. Stops when a full sweep
/// changes nothing.
pub fn brute_force_follower_nash(
    net: &PowerNetwork,
    params: &[MicrogridParams],
    market: &MarketParams,
    p_g: &[f64],
    grid_step: f64,
) -> Result<BruteForceResult> {
    let d = net.n_d();
    if d > BRUTE_FORCE_MAX_MICROGRIDS {
        return Err(Error::Domain(format!(
            "grid oracle supports at most {BRUTE_FORCE_MAX_MICROGRIDS} microgrids, got {d}"
        )));
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::Domain("grid step must be positive".into()));
    }
    if params.len() != d {
        return Err(Error::Dimension {
            what: "microgrid parameter list",
            expected: d,
            got: params.len(),
        });
    }
    if p_g.len() != net.n_g() {
        return Err(Error::Dimension {
            what: "generator output vector",
            expected: net.n_g(),
            got: p_g.len(),
        });
    }
    let mut gen: Vec<f64> = params.iter().map(|m| 0.5 * m.gen_cap_mw).collect();
    let max_sweeps = 10_000;
    for sweep in 1..=max_sweeps {
        let mut changed = false;
        for i in 0..d {
            let next = grid_best_response(net, params, market, p_g, &gen, i, grid_step)?;
            if next != gen[i] {
                changed = true;
                gen[i] = next;
            }
        }
        if !changed {
            return Ok(BruteForceResult {
                p_d: net_injections(params, &gen),
                sweeps: sweep,
                converged: true,
            });
        }
    }
    log::warn!("grid oracle did not settle within {max_sweeps} sweeps");
    Ok(BruteForceResult {
        p_d: net_injections(params, &gen),
        sweeps: max_sweeps,
        converged: false,
    })
}

fn net_injections(params: &[MicrogridParams], gen: &[f64]) -> Vec<f64> {
    params.iter().zip(gen).map(|(m, &g)| g - m.load_mw).collect()
}

/// Grid minimizer of microgrid `i`'s cost with every other generation fixed.
pub fn grid_best_response(
    net: &PowerNetwork,
    params: &[MicrogridParams],
    market: &MarketParams,
    p_g: &[f64],
    gen: &[f64],
    i: usize,
    grid_step: f64,
) -> Result<f64> {
    let m = &params[i];
    let mut p = net_injections(params, gen);
    p.extend_from_slice(p_g);
    // θᵢ is affine in microgrid i's own injection; evaluate the flow map at
    // two points and interpolate.
    p[i] = -m.load_mw;
    let theta_lo = net.angles_from_injections(&p)?[i];
    p[i] = m.gen_cap_mw - m.load_mw;
    let theta_hi = net.angles_from_injections(&p)?[i];
    let slope = if m.gen_cap_mw > 0.0 {
        (theta_hi - theta_lo) / m.gen_cap_mw
    } else {
        0.0
    };
    let n_points = (m.gen_cap_mw / grid_step).floor() as usize;
    let mut best = (f64::INFINITY, 0.0);
    let mut consider = |g: f64| -> Result<()> {
        let cost = follower_cost(m, market, g, theta_lo + slope * g)?;
        if cost < best.0 {
            best = (cost, g);
        }
        Ok(())
    };
    for k in 0..=n_points {
        consider((k as f64 * grid_step).min(m.gen_cap_mw))?;
    }
    consider(m.gen_cap_mw)?;
    Ok(best.1)
}
