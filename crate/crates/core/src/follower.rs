//! The microgrid (follower) Nash game.
//!
//! Each microgrid `i` picks its renewable generation `Pᵢᵍ ∈ [0, capᵢ]` and pays
//! `ψᵢPᵢᵍ + ζ(Pᵢˡ − Pᵢᵍ) + ½ηᵢ²θᵢ²`. Through `θ = S·P` the unique best response
//! is a clamp of `(γᵢ − ḡ₋ᵢ)/sᵢᵢ` onto `[−Pᵢˡ, Pᵢᵐᵃˣ]`, where
//! `γᵢ = (ζ − ψᵢ)/(ηᵢ² sᵢᵢ)` and `ḡ₋ᵢ = Σ_{j≠i} sᵢⱼPⱼ` runs over every other
//! bus, generators included. All strategies here are net injections
//! `Pᵢ = Pᵢᵍ − Pᵢˡ`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::PowerNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrogridParams {
    /// Unit generation cost ψ, $/MWh.
    pub psi: f64,
    /// Angle-regulation weight η.
    pub eta: f64,
    pub load_mw: f64,
    pub gen_cap_mw: f64,
    /// Per-step update probability for the randomized schemes.
    pub tau: f64,
}

impl MicrogridParams {
    pub fn validate(&self, label: &str) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("microgrid {label}: {what}")));
        if !self.psi.is_finite() {
            return bad("psi must be finite");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.load_mw >= 0.0 && self.load_mw.is_finite()) {
            return bad("load must be non-negative");
        }
        if !(self.gen_cap_mw >= 0.0 && self.gen_cap_mw.is_finite()) {
            return bad("generation cap must be non-negative");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie strictly between 0 and 1");
        }
        Ok(())
    }

    /// Upper bound on net injection, `cap − load`.
    pub fn p_max(&self) -> f64 {
        self.gen_cap_mw - self.load_mw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Unit market price ζ, $/MWh.
    pub zeta: f64,
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::Validation("market price zeta must be non-negative".into()));
        }
        Ok(())
    }
}

/// Cost of microgrid `i` at generation `p_gen` and bus angle `theta`.
pub fn follower_cost(
    params: &MicrogridParams,
    market: &MarketParams,
    p_gen: f64,
    theta: f64,
) -> Result<f64> {
    if !(0.0..=params.gen_cap_mw).contains(&p_gen) {
        return Err(Error::Domain(format!(
            "generation {p_gen} MW outside [0, {}]",
            params.gen_cap_mw
        )));
    }
    Ok(unchecked_cost(params, market, p_gen, theta))
}

pub(crate) fn unchecked_cost(
    params: &MicrogridParams,
    market: &MarketParams,
    p_gen: f64,
    theta: f64,
) -> f64 {
    params.psi * p_gen
        + market.zeta * (params.load_mw - p_gen)
        + 0.5 * params.eta * params.eta * theta * theta
}

/// Closed-form best response: `(γᵢ − ḡ₋ᵢ)/sᵢᵢ` clamped to `[−load, p_max]`.
pub fn best_response(gamma_i: f64, gbar_minus_i: f64, s_ii: f64, load: f64, p_max: f64) -> f64 {
    f64::min(p_max, f64::max(-load, (gamma_i - gbar_minus_i) / s_ii))
}

/// `γᵢ = (ζ − ψᵢ)/(ηᵢ² sᵢᵢ)`.
pub fn gamma_of(params: &MicrogridParams, market: &MarketParams, s_ii: f64) -> f64 {
    (market.zeta - params.psi) / (params.eta * params.eta * s_ii)
}

/// Interior best-response system `H·P_d = q` at fixed generator outputs.
#[derive(Debug, Clone)]
pub struct FollowerReduction {
    pub gamma: Vec<f64>,
    /// `H = [sᵢⱼ/sᵢᵢ]` over microgrid buses.
    pub h: DMatrix<f64>,
    /// `qᵢ = γᵢ/sᵢᵢ − Σ_{j∈gen} (sᵢⱼ/sᵢᵢ)Pⱼ`.
    pub q: DVector<f64>,
    pub p_max: Vec<f64>,
}

/// `H = [sᵢⱼ/sᵢᵢ]` for the microgrid block.
pub fn h_matrix(net: &PowerNetwork) -> DMatrix<f64> {
    let d = net.n_d();
    DMatrix::from_fn(d, d, |i, j| net.s_at(i, j) / net.s_at(i, i))
}

/// `K = [sᵢ,gⱼ/sᵢᵢ]`, microgrid rows by generator columns, so that
/// `Λ = K·P_g` is the generator contribution inside `q`.
pub fn generator_coupling(net: &PowerNetwork) -> DMatrix<f64> {
    let (d, g) = (net.n_d(), net.n_g());
    DMatrix::from_fn(d, g, |i, j| net.s_at(i, d + j) / net.s_at(i, i))
}

/// Which follower update rule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FollowerScheme {
    /// Synchronous best response of every microgrid.
    Iua,
    /// Each microgrid best-responds with probability τᵢ.
    Rua,
    /// Like RUA but driven only by the measured local bus angle.
    Pda,
}

impl fmt::Display for FollowerScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FollowerScheme::Iua => "iua",
            FollowerScheme::Rua => "rua",
            FollowerScheme::Pda => "pda",
        })
    }
}

impl std::str::FromStr for FollowerScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iua" => Ok(FollowerScheme::Iua),
            "rua" => Ok(FollowerScheme::Rua),
            "pda" => Ok(FollowerScheme::Pda),
            other => Err(Error::schema(
                "follower_scheme",
                format!("unknown scheme `{other}` (expected iua, rua or pda)"),
            )),
        }
    }
}

/// Sufficient condition for PDA convergence:
/// `τ̄ · max_{i≠j} sᵢⱼ/sᵢᵢ · (N_d − 1) < τ̲`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdaConditionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub tau_max: f64,
    pub tau_min: f64,
    pub max_coupling_ratio: f64,
    pub note: String,
}

pub fn check_pda_convergence(net: &PowerNetwork, params: &[MicrogridParams]) -> PdaConditionReport {
    let tau_max = params.iter().map(|p| p.tau).fold(f64::NEG_INFINITY, f64::max);
    let tau_min = params.iter().map(|p| p.tau).fold(f64::INFINITY, f64::min);
    let ratio = net.max_microgrid_coupling_ratio();
    let lhs = if net.n_d() <= 1 {
        0.0
    } else {
        tau_max * ratio * (net.n_d() - 1) as f64
    };
    let satisfied = lhs < tau_min;
    let note = if satisfied {
        "sufficient condition holds: PDA converges almost surely".to_string()
    } else {
        "sufficient condition fails; this does not prove divergence".to_string()
    };
    PdaConditionReport {
        lhs,
        rhs: tau_min,
        satisfied,
        tau_max,
        tau_min,
        max_coupling_ratio: ratio,
        note,
    }
}

/// Solution of the follower game at fixed generator outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerSolution {
    pub p_d: Vec<f64>,
    /// False when `H⁻¹q` left the feasible box and the clamped fixed point
    /// was computed instead.
    pub interior: bool,
    pub fallback_sweeps: usize,
}

/// One recorded follower step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerStep {
    pub step: usize,
    pub p_d: Vec<f64>,
    pub theta_d: Vec<f64>,
    pub updated: Vec<bool>,
    /// `‖P_d⁽ⁿ⁺¹⁾ − P_d⁽ⁿ⁾‖∞`; NaN for the initial record.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerRun {
    pub scheme: FollowerScheme,
    pub p_d: Vec<f64>,
    pub steps: usize,
    pub converged: bool,
    pub trace: Vec<FollowerStep>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerRunOptions {
    pub eps: f64,
    pub max_steps: usize,
    /// Standard deviation of Gaussian noise on measured angles (PDA only).
    pub noise_std: f64,
}

impl Default for FollowerRunOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_steps: 10_000,
            noise_std: 0.0,
        }
    }
}

/// The follower game on a fixed network.
#[derive(Debug, Clone)]
pub struct FollowerGame<'a> {
    net: &'a PowerNetwork,
    params: Vec<MicrogridParams>,
    market: MarketParams,
    gamma: Vec<f64>,
}

impl<'a> FollowerGame<'a> {
    pub fn new(
        net: &'a PowerNetwork,
        params: Vec<MicrogridParams>,
        market: MarketParams,
    ) -> Result<Self> {
        net.indexing().require_game_roles()?;
        if params.len() != net.n_d() {
            return Err(Error::Dimension {
                what: "microgrid parameter list",
                expected: net.n_d(),
                got: params.len(),
            });
        }
        market.validate()?;
        for (p, label) in params.iter().zip(net.indexing().microgrid_labels()) {
            p.validate(&label.to_string())?;
        }
        let gamma = params
            .iter()
            .enumerate()
            .map(|(i, p)| gamma_of(p, &market, net.s_at(i, i)))
            .collect();
        Ok(Self {
            net,
            params,
            market,
            gamma,
        })
    }

    pub fn network(&self) -> &'a PowerNetwork {
        self.net
    }

    pub fn params(&self) -> &[MicrogridParams] {
        &self.params
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn n_d(&self) -> usize {
        self.params.len()
    }

    pub fn lower(&self, i: usize) -> f64 {
        -self.params[i].load_mw
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.params[i].p_max()
    }

    pub fn clamp(&self, i: usize, p: f64) -> f64 {
        f64::min(self.upper(i), f64::max(self.lower(i), p))
    }

    /// Concatenated injection vector `[P_d; P_g]`.
    pub fn injections(&self, p_d: &[f64], p_g: &[f64]) -> Vec<f64> {
        let mut p = Vec::with_capacity(p_d.len() + p_g.len());
        p.extend_from_slice(p_d);
        p.extend_from_slice(p_g);
        p
    }

    /// True bus angles of the microgrid buses at the given injections.
    pub fn theta_d(&self, p_d: &[f64], p_g: &[f64]) -> Result<Vec<f64>> {
        let mut theta = self.net.angles_from_injections(&self.injections(p_d, p_g))?;
        theta.truncate(self.n_d());
        Ok(theta)
    }

    /// `ḡ₋ᵢ = Σ_{j≠i} sᵢⱼPⱼ` over all other buses.
    pub fn gbar_minus(&self, i: usize, p_d: &[f64], p_g: &[f64]) -> f64 {
        let d = self.n_d();
        let mut acc = 0.0;
        for (j, &pj) in p_d.iter().enumerate() {
            if j != i {
                acc += self.net.s_at(i, j) * pj;
            }
        }
        for (k, &pk) in p_g.iter().enumerate() {
            acc += self.net.s_at(i, d + k) * pk;
        }
        acc
    }

    /// `Ψᵢ`: best response of microgrid `i` to everybody else.
    pub fn respond(&self, i: usize, p_d: &[f64], p_g: &[f64]) -> f64 {
        best_response(
            self.gamma[i],
            self.gbar_minus(i, p_d, p_g),
            self.net.s_at(i, i),
            self.params[i].load_mw,
            self.params[i].p_max(),
        )
    }

    pub fn reduction(&self, p_g: &[f64]) -> Result<FollowerReduction> {
        self.check_generators(p_g)?;
        let d = self.n_d();
        let k = generator_coupling(self.net);
        let lambda = &k * DVector::from_column_slice(p_g);
        let q = DVector::from_fn(d, |i, _| self.gamma[i] / self.net.s_at(i, i) - lambda[i]);
        Ok(FollowerReduction {
            gamma: self.gamma.clone(),
            h: h_matrix(self.net),
            q,
            p_max: self.params.iter().map(MicrogridParams::p_max).collect(),
        })
    }

    /// Interior equilibrium `H⁻¹q`, falling back to the clamped fixed point
    /// when it leaves the feasible box.
    pub fn solve_direct(&self, p_g: &[f64]) -> Result<FollowerSolution> {
        let red = self.reduction(p_g)?;
        let p = linalg::checked_solve(&red.h, &red.q, "H (normalized microgrid block of S)")?;
        let p_d: Vec<f64> = p.iter().copied().collect();
        let interior = p_d
            .iter()
            .enumerate()
            .all(|(i, &x)| x >= self.lower(i) && x <= self.upper(i));
        if interior {
            return Ok(FollowerSolution {
                p_d,
                interior,
                fallback_sweeps: 0,
            });
        }
        let start: Vec<f64> = p_d.iter().enumerate().map(|(i, &x)| self.clamp(i, x)).collect();
        let (p_d, sweeps) = self.clamped_fixed_point(start, p_g, 1e-12, 1_000_000);
        Ok(FollowerSolution {
            p_d,
            interior: false,
            fallback_sweeps: sweeps,
        })
    }

    /// Cyclic best-response sweeps to the clamped equilibrium. The game is
    /// the box-constrained minimization of `½PᵀS₁P − cᵀP`, so the sweeps
    /// converge for any start.
    pub fn clamped_fixed_point(
        &self,
        mut p_d: Vec<f64>,
        p_g: &[f64],
        tol: f64,
        max_sweeps: usize,
    ) -> (Vec<f64>, usize) {
        for sweep in 1..=max_sweeps {
            let mut change = 0.0_f64;
            for i in 0..self.n_d() {
                let next = self.respond(i, &p_d, p_g);
                change = change.max((next - p_d[i]).abs());
                p_d[i] = next;
            }
            if change <= tol {
                return (p_d, sweep);
            }
        }
        (p_d, max_sweeps)
    }

    /// Synchronous best response of every microgrid.
    pub fn iua_step(&self, p_d: &[f64], p_g: &[f64]) -> Vec<f64> {
        (0..self.n_d()).map(|i| self.respond(i, p_d, p_g)).collect()
    }

    /// One Bernoulli(τᵢ) draw per microgrid, in bus order.
    pub fn draw_update_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        self.params
            .iter()
            .map(|p| rng.random::<f64>() < p.tau)
            .collect()
    }

    pub fn rua_step<R: Rng + ?Sized>(
        &self,
        p_d: &[f64],
        p_g: &[f64],
        rng: &mut R,
    ) -> (Vec<f64>, Vec<bool>) {
        let mask = self.draw_update_mask(rng);
        (self.rua_step_masked(p_d, p_g, &mask), mask)
    }

    pub fn rua_step_masked(&self, p_d: &[f64], p_g: &[f64], mask: &[bool]) -> Vec<f64> {
        (0..self.n_d())
            .map(|i| {
                if mask[i] {
                    self.respond(i, p_d, p_g)
                } else {
                    p_d[i]
                }
            })
            .collect()
    }

    pub fn pda_step<R: Rng + ?Sized>(
        &self,
        p_d: &[f64],
        theta_d: &[f64],
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<bool>)> {
        self.check_angles(theta_d)?;
        let mask = self.draw_update_mask(rng);
        Ok((self.pda_step_masked(p_d, theta_d, &mask)?, mask))
    }

    /// Local update from the measured angle only:
    /// `clamp((γᵢ − θᵢ + sᵢᵢPᵢ)/sᵢᵢ)`.
    pub fn pda_step_masked(&self, p_d: &[f64], theta_d: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
        self.check_angles(theta_d)?;
        Ok((0..self.n_d())
            .map(|i| {
                if !mask[i] {
                    return p_d[i];
                }
                let s_ii = self.net.s_at(i, i);
                best_response(
                    self.gamma[i],
                    theta_d[i] - s_ii * p_d[i],
                    s_ii,
                    self.params[i].load_mw,
                    self.params[i].p_max(),
                )
            })
            .collect())
    }

    /// Uniform feasible draw in `[−Pᵢˡ, Pᵢᵐᵃˣ]` for every microgrid.
    pub fn random_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.n_d())
            .map(|i| {
                let (lo, hi) = (self.lower(i), self.upper(i));
                lo + (hi - lo) * rng.random::<f64>()
            })
            .collect()
    }

    /// Iterates `scheme` from `start` until the step residual drops to
    /// `opts.eps` with every microgrid having updated since the residual
    /// last exceeded it.
    pub fn run<R: Rng + ?Sized>(
        &self,
        scheme: FollowerScheme,
        p_g: &[f64],
        start: Vec<f64>,
        rng: &mut R,
        opts: &FollowerRunOptions,
    ) -> Result<FollowerRun> {
        self.check_generators(p_g)?;
        if start.len() != self.n_d() {
            return Err(Error::Dimension {
                what: "initial microgrid strategy",
                expected: self.n_d(),
                got: start.len(),
            });
        }
        let noise = if opts.noise_std > 0.0 {
            Some(Normal::new(0.0, opts.noise_std).map_err(|e| Error::Domain(e.to_string()))?)
        } else {
            None
        };
        let d = self.n_d();
        let mut p_d = start;
        let mut trace = vec![FollowerStep {
            step: 0,
            theta_d: self.theta_d(&p_d, p_g)?,
            p_d: p_d.clone(),
            updated: vec![false; d],
            residual: f64::NAN,
        }];
        let mut quiet_updates = vec![false; d];
        for step in 1..=opts.max_steps {
            let (next, mask) = match scheme {
                FollowerScheme::Iua => (self.iua_step(&p_d, p_g), vec![true; d]),
                FollowerScheme::Rua => self.rua_step(&p_d, p_g, rng),
                FollowerScheme::Pda => {
                    let mut measured = self.theta_d(&p_d, p_g)?;
                    if let Some(dist) = &noise {
                        for th in measured.iter_mut() {
                            *th += dist.sample(rng);
                        }
                    }
                    self.pda_step(&p_d, &measured, rng)?
                }
            };
            let residual = linalg::max_abs_diff(&next, &p_d);
            p_d = next;
            trace.push(FollowerStep {
                step,
                theta_d: self.theta_d(&p_d, p_g)?,
                p_d: p_d.clone(),
                updated: mask.clone(),
                residual,
            });
            if !residual.is_finite() {
                break;
            }
            if !(residual <= opts.eps) {
                quiet_updates.iter_mut().for_each(|u| *u = false);
                continue;
            }
            for (u, m) in quiet_updates.iter_mut().zip(&mask) {
                *u |= *m;
            }
            if quiet_updates.iter().all(|&u| u) {
                return Ok(FollowerRun {
                    scheme,
                    p_d,
                    steps: step,
                    converged: true,
                    trace,
                });
            }
        }
        Ok(FollowerRun {
            scheme,
            p_d,
            steps: trace.len() - 1,
            converged: false,
            trace,
        })
    }

    /// Cost of microgrid `i` when it generates `p_gen` and everybody else
    /// plays `p_d`/`p_g`.
    pub fn cost_at(&self, i: usize, p_gen: f64, p_d: &[f64], p_g: &[f64]) -> Result<f64> {
        let mut dev = p_d.to_vec();
        dev[i] = p_gen - self.params[i].load_mw;
        let theta = self.net.angles_from_injections(&self.injections(&dev, p_g))?;
        follower_cost(&self.params[i], &self.market, p_gen, theta[i])
    }

    fn check_generators(&self, p_g: &[f64]) -> Result<()> {
        if p_g.len() != self.net.n_g() {
            return Err(Error::Dimension {
                what: "generator output vector",
                expected: self.net.n_g(),
                got: p_g.len(),
            });
        }
        Ok(())
    }

    fn check_angles(&self, theta_d: &[f64]) -> Result<()> {
        if theta_d.len() != self.n_d() {
            return Err(Error::Dimension {
                what: "measured microgrid angles",
                expected: self.n_d(),
                got: theta_d.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{load_network, BranchSpec, BusRole, BusSpec, NetworkSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(psi: f64, load: f64, cap: f64) -> MicrogridParams {
        MicrogridParams {
            psi,
            eta: 1.0,
            load_mw: load,
            gen_cap_mw: cap,
            tau: 0.5,
        }
    }

    /// Star around the slack with a ring among the non-slack buses.
    fn ring_network(n_d: usize, n_g: usize) -> PowerNetwork {
        let n = n_d + n_g;
        let mut buses = vec![BusSpec {
            id: 0,
            role: BusRole::Slack,
            load_mw: 0.0,
        }];
        let mut branches = Vec::new();
        for k in 1..=n {
            buses.push(BusSpec {
                id: k as u32,
                role: if k <= n_d {
                    BusRole::Microgrid
                } else {
                    BusRole::Generator
                },
                load_mw: 0.0,
            });
            branches.push(BranchSpec {
                from: 0,
                to: k as u32,
                reactance_pu: 0.5 + 0.1 * k as f64,
            });
            if k < n {
                branches.push(BranchSpec {
                    from: k as u32,
                    to: k as u32 + 1,
                    reactance_pu: 0.3,
                });
            }
        }
        load_network(&NetworkSpec {
            base_mva: 1.0,
            slack_id: Some(0),
            buses,
            branches,
        })
        .unwrap()
    }

    #[test]
    fn cost_with_price_equal_to_unit_cost() {
        let p = params(50.0, 10.0, 20.0);
        let m = MarketParams { zeta: 50.0 };
        for g in [0.0, 7.5, 20.0] {
            assert!((follower_cost(&p, &m, g, 0.0).unwrap() - 500.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_at_case_study_prices() {
        let p = params(110.0, 220.0, 100.0);
        let m = MarketParams { zeta: 140.0 };
        assert_eq!(follower_cost(&p, &m, 0.0, 0.0).unwrap(), 30800.0);
    }

    #[test]
    fn cost_angle_term_only() {
        let p = params(0.0, 5.0, 10.0);
        let m = MarketParams { zeta: 3.0 };
        assert!((follower_cost(&p, &m, 5.0, 0.1).unwrap() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn cost_rejects_cap_violation() {
        let p = params(0.0, 5.0, 10.0);
        let m = MarketParams { zeta: 3.0 };
        assert!(matches!(follower_cost(&p, &m, 10.5, 0.0), Err(Error::Domain(_))));
        assert!(matches!(follower_cost(&p, &m, -0.1, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn best_response_branches() {
        assert_eq!(best_response(0.4, 0.4, 2.0, 10.0, 5.0), 0.0);
        // γ ≤ ḡ − s·load → −load
        assert_eq!(best_response(-30.0, 0.0, 2.0, 10.0, 5.0), -10.0);
        assert_eq!(best_response(-20.0, 0.0, 2.0, 10.0, 5.0), -10.0);
        // γ ≥ ḡ + s·p_max → p_max
        assert_eq!(best_response(10.0, 0.0, 2.0, 10.0, 5.0), 5.0);
        assert_eq!(best_response(3.0, 1.0, 2.0, 10.0, 5.0), 1.0);
    }

    #[test]
    fn single_microgrid_direct_is_scalar_formula() {
        let net = ring_network(1, 2);
        let game = FollowerGame::new(
            &net,
            vec![params(10.0, 100.0, 200.0)],
            MarketParams { zeta: 12.0 },
        )
        .unwrap();
        let p_g = [3.0, -1.0];
        let red = game.reduction(&p_g).unwrap();
        assert_eq!(red.h[(0, 0)], 1.0);
        let s11 = net.s_at(0, 0);
        let expected =
            game.gamma()[0] / s11 - (net.s_at(0, 1) / s11) * 3.0 - (net.s_at(0, 2) / s11) * -1.0;
        let sol = game.solve_direct(&p_g).unwrap();
        assert!(sol.interior);
        assert!((sol.p_d[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn determinant_identity_for_h() {
        let net = ring_network(4, 2);
        let h = h_matrix(&net);
        let prod: f64 = (0..4).map(|i| net.s_at(i, i)).product();
        let lhs = net.s1().determinant();
        assert!((lhs - h.determinant() * prod).abs() <= 1e-12 * lhs.abs());
        assert!((0..4).all(|i| h[(i, i)] == 1.0));
    }

    #[test]
    fn pda_condition_examples() {
        let net = ring_network(1, 1);
        let report = check_pda_convergence(&net, &[params(0.0, 1.0, 1.0)]);
        assert_eq!(report.lhs, 0.0);
        assert!(report.satisfied);

        // hand-built numbers: τ̄ = τ̲ = 0.5, ratio 0.9, N_d = 3
        let lhs: f64 = 0.5 * 0.9 * 2.0;
        assert!((lhs - 0.9).abs() < 1e-15 && lhs > 0.5);
    }

    #[test]
    fn fixed_point_is_preserved_by_every_scheme() {
        let net = ring_network(3, 2);
        let ps = vec![
            params(10.0, 50.0, 100.0),
            params(11.0, 60.0, 100.0),
            params(9.0, 40.0, 100.0),
        ];
        let game = FollowerGame::new(&net, ps, MarketParams { zeta: 10.5 }).unwrap();
        let p_g = [5.0, 2.0];
        let sol = game.solve_direct(&p_g).unwrap();
        let (fixed, _) = game.clamped_fixed_point(sol.p_d, &p_g, 0.0, 10_000);
        assert_eq!(game.iua_step(&fixed, &p_g), fixed);
        let theta = game.theta_d(&fixed, &p_g).unwrap();
        let pda = game.pda_step_masked(&fixed, &theta, &[true; 3]).unwrap();
        assert!(linalg::max_abs_diff(&pda, &fixed) < 1e-9);
    }

    #[test]
    fn all_hold_leaves_state_unchanged() {
        let net = ring_network(2, 1);
        let game = FollowerGame::new(
            &net,
            vec![params(1.0, 5.0, 10.0), params(2.0, 5.0, 10.0)],
            MarketParams { zeta: 1.5 },
        )
        .unwrap();
        let p_d = [1.0, -2.0];
        assert_eq!(game.rua_step_masked(&p_d, &[0.5], &[false, false]), p_d.to_vec());
        let theta = game.theta_d(&p_d, &[0.5]).unwrap();
        assert_eq!(
            game.pda_step_masked(&p_d, &theta, &[false, false]).unwrap(),
            p_d.to_vec()
        );
        assert_eq!(
            game.rua_step_masked(&p_d, &[0.5], &[true, true]),
            game.iua_step(&p_d, &[0.5])
        );
    }

    #[test]
    fn symmetric_pair_stays_symmetric_under_iua() {
        // microgrids 1 and 2 mirror each other around generator 3
        let spec = NetworkSpec {
            base_mva: 1.0,
            slack_id: Some(0),
            buses: vec![
                BusSpec { id: 0, role: BusRole::Slack, load_mw: 0.0 },
                BusSpec { id: 1, role: BusRole::Microgrid, load_mw: 0.0 },
                BusSpec { id: 2, role: BusRole::Microgrid, load_mw: 0.0 },
                BusSpec { id: 3, role: BusRole::Generator, load_mw: 0.0 },
            ],
            branches: vec![
                BranchSpec { from: 1, to: 3, reactance_pu: 0.2 },
                BranchSpec { from: 2, to: 3, reactance_pu: 0.2 },
                BranchSpec { from: 3, to: 0, reactance_pu: 0.1 },
            ],
        };
        let net = load_network(&spec).unwrap();
        let p = params(1.0, 20.0, 40.0);
        let game =
            FollowerGame::new(&net, vec![p.clone(), p], MarketParams { zeta: 1.2 }).unwrap();
        let mut state = vec![3.0, 3.0];
        for _ in 0..20 {
            state = game.iua_step(&state, &[4.0]);
            assert_eq!(state[0], state[1]);
        }
    }

    #[test]
    fn pda_matches_rua_under_same_draws() {
        let net = ring_network(3, 2);
        let ps = vec![
            params(10.0, 50.0, 100.0),
            params(11.0, 60.0, 100.0),
            params(9.0, 40.0, 100.0),
        ];
        let game = FollowerGame::new(&net, ps, MarketParams { zeta: 10.5 }).unwrap();
        let p_g = [5.0, 2.0];
        let mut rng_a = ChaCha8Rng::seed_from_u64(3);
        let mut rng_b = ChaCha8Rng::seed_from_u64(3);
        let mut a = vec![-10.0, 5.0, 0.0];
        let mut b = a.clone();
        for _ in 0..30 {
            let (na, ma) = game.rua_step(&a, &p_g, &mut rng_a);
            let theta = game.theta_d(&b, &p_g).unwrap();
            let (nb, mb) = game.pda_step(&b, &theta, &mut rng_b).unwrap();
            assert_eq!(ma, mb);
            assert!(linalg::max_abs_diff(&na, &nb) < 1e-9);
            a = na;
            b = nb;
        }
    }

    #[test]
    fn fixed_seed_replays_identically() {
        let net = ring_network(3, 1);
        let ps = vec![
            params(10.0, 50.0, 100.0),
            params(11.0, 60.0, 100.0),
            params(9.0, 40.0, 100.0),
        ];
        let game = FollowerGame::new(&net, ps, MarketParams { zeta: 10.5 }).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = game.random_start(&mut rng);
            game.run(
                FollowerScheme::Rua,
                &[1.0],
                start,
                &mut rng,
                &FollowerRunOptions::default(),
            )
            .unwrap()
        };
        let (a, b) = (run(9), run(9));
        assert_eq!(a.steps, b.steps);
        for (x, y) in a.trace.iter().zip(&b.trace) {
            assert_eq!(x.residual.to_bits(), y.residual.to_bits());
            assert_eq!(x.p_d, y.p_d);
            assert_eq!(x.updated, y.updated);
        }
    }

    #[test]
    fn angle_length_mismatch_is_an_error() {
        let net = ring_network(2, 1);
        let game = FollowerGame::new(
            &net,
            vec![params(1.0, 5.0, 10.0), params(2.0, 5.0, 10.0)],
            MarketParams { zeta: 1.5 },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            game.pda_step(&[0.0, 0.0], &[0.0], &mut rng),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn scheme_parses_case_insensitively() {
        assert_eq!("PDA".parse::<FollowerScheme>().unwrap(), FollowerScheme::Pda);
        assert!("xyz".parse::<FollowerScheme>().is_err());
    }
}
