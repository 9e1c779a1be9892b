//! Generator-side reduction of the leader problem.
//!
//! With the followers' interior response `P_d = H⁻¹q`, the DC constraints
//! collapse to `T1·θ_g + T2·q − P_g = 0`. Stationarity of the Lagrangian
//! together with that constraint is the linear system `W·X = b` over
//! `X = [P_g; μ; θ_g]`:
//!
//! ```text
//!     | A1      T3 − I   0  |        | −b_cost |
//! W = | 0       T1ᵀ      A2 |,   b = |    0    |
//!     | T4 − I  0        T1 |        |   T5    |
//! ```
//!
//! Sign convention: `T5 = −T2·Υ` with `Υᵢ = γᵢ/sᵢᵢ`, while the angle-only
//! estimate is `T̃5 = T2·Υ`, so `T5 = −T̃5`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::follower::{generator_coupling, h_matrix};
use crate::linalg;
use crate::network::PowerNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Quadratic cost coefficient, $/MW².
    pub a: f64,
    /// Linear cost coefficient, $/MW.
    pub b: f64,
    /// Fixed cost, $.
    pub c: f64,
    /// Angle-regulation weight.
    pub alpha: f64,
    pub gen_cap_mw: f64,
}

impl GeneratorParams {
    pub fn validate(&self, label: &str) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("generator {label}: {what}")));
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad("a must be positive");
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return bad("b must be non-negative");
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad("c must be non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.gen_cap_mw >= 0.0 && self.gen_cap_mw.is_finite()) {
            return bad("generation cap must be non-negative");
        }
        Ok(())
    }

    /// `½aP² + bP + c`.
    pub fn generation_cost(&self, p: f64) -> f64 {
        0.5 * self.a * p * p + self.b * p + self.c
    }
}

/// Aggregate leader objective `Σⱼ Cⱼ(Pⱼ) + ½αⱼθⱼ²`.
pub fn leader_cost(gens: &[GeneratorParams], p_g: &[f64], theta_g: &[f64]) -> f64 {
    gens.iter()
        .zip(p_g)
        .zip(theta_g)
        .map(|((g, &p), &th)| g.generation_cost(p) + 0.5 * g.alpha * th * th)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeaderScheme {
    /// Microgrids disclose ψ and η.
    Kpp,
    /// Microgrids report their response to an announced generation.
    Kgd,
    /// Generators infer the aggregate from their own bus angles.
    Kba,
}

impl fmt::Display for LeaderScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LeaderScheme::Kpp => "kpp",
            LeaderScheme::Kgd => "kgd",
            LeaderScheme::Kba => "kba",
        })
    }
}

impl std::str::FromStr for LeaderScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kpp" => Ok(LeaderScheme::Kpp),
            "kgd" => Ok(LeaderScheme::Kgd),
            "kba" => Ok(LeaderScheme::Kba),
            other => Err(Error::schema(
                "leader_scheme",
                format!("unknown scheme `{other}` (expected kpp, kgd or kba)"),
            )),
        }
    }
}

/// `T1 = B3·B1⁻¹·B2 − B4` and `T2 = B3·B1⁻¹·H⁻¹`.
#[derive(Debug, Clone)]
pub struct TMatrices {
    pub t1: DMatrix<f64>,
    pub t2: DMatrix<f64>,
}

pub fn build_t(net: &PowerNetwork) -> Result<TMatrices> {
    net.indexing().require_game_roles()?;
    let b1_inv = linalg::checked_inverse(&net.b1(), "B1 (microgrid block of B)")?;
    let h_inv = linalg::checked_inverse(&h_matrix(net), "H (normalized microgrid block of S)")?;
    let b3_b1_inv = net.b3() * b1_inv;
    let t1 = &b3_b1_inv * net.b2() - net.b4();
    let t2 = b3_b1_inv * h_inv;
    if let Some(j) = (0..t1.nrows()).find(|&j| !(t1[(j, j)] > 0.0)) {
        return Err(Error::Structural(format!(
            "T1 diagonal entry {j} is {} but must be positive",
            t1[(j, j)]
        )));
    }
    Ok(TMatrices { t1, t2 })
}

/// `Υᵢ = γᵢ/sᵢᵢ`.
pub fn upsilon(net: &PowerNetwork, gamma: &[f64]) -> DVector<f64> {
    DVector::from_fn(net.n_d(), |i, _| gamma[i] / net.s_at(i, i))
}

/// `T5 = −T2·Υ`.
pub fn t5_from_gamma(net: &PowerNetwork, t: &TMatrices, gamma: &[f64]) -> Result<DVector<f64>> {
    if gamma.len() != net.n_d() {
        return Err(Error::Dimension {
            what: "gamma vector",
            expected: net.n_d(),
            got: gamma.len(),
        });
    }
    Ok(-(&t.t2 * upsilon(net, gamma)))
}

/// Assembled leader KKT system.
#[derive(Debug, Clone)]
pub struct LeaderSystem {
    pub n_g: usize,
    pub t1: DMatrix<f64>,
    pub t2: DMatrix<f64>,
    pub t3: DMatrix<f64>,
    pub t4: DMatrix<f64>,
    pub t5: DVector<f64>,
    /// `K = [sᵢ,gⱼ/sᵢᵢ]` (microgrid rows, generator columns).
    pub coupling: DMatrix<f64>,
    pub a1: DVector<f64>,
    pub a2: DVector<f64>,
    pub cost_linear: DVector<f64>,
    pub caps: Vec<f64>,
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Lower-triangular part of `W` including the diagonal.
    pub d: DMatrix<f64>,
    /// Gauss-Seidel iteration matrix `D⁻¹(D − W)`.
    pub m: DMatrix<f64>,
    pub cond_w: f64,
}

pub fn build_w_b(
    net: &PowerNetwork,
    gens: &[GeneratorParams],
    t: &TMatrices,
    t5: DVector<f64>,
) -> Result<LeaderSystem> {
    let g = net.n_g();
    if gens.len() != g {
        return Err(Error::Dimension {
            what: "generator parameter list",
            expected: g,
            got: gens.len(),
        });
    }
    if t5.len() != g {
        return Err(Error::Dimension {
            what: "T5 vector",
            expected: g,
            got: t5.len(),
        });
    }
    for (p, label) in gens.iter().zip(net.indexing().generator_labels()) {
        p.validate(&label.to_string())?;
    }
    let coupling = generator_coupling(net);
    // T4(i,j) = −Σ_p T2(i,p)·s_{p,gⱼ}/s_pp ; T3 = T4ᵀ
    let t4 = -(&t.t2 * &coupling);
    let t3 = t4.transpose();
    let a1 = DVector::from_iterator(g, gens.iter().map(|p| p.a));
    let a2 = DVector::from_iterator(g, gens.iter().map(|p| p.alpha));
    let cost_linear = DVector::from_iterator(g, gens.iter().map(|p| p.b));
    let eye = DMatrix::<f64>::identity(g, g);

    let mut w = DMatrix::<f64>::zeros(3 * g, 3 * g);
    w.view_mut((0, 0), (g, g)).copy_from(&DMatrix::from_diagonal(&a1));
    w.view_mut((0, g), (g, g)).copy_from(&(&t3 - &eye));
    w.view_mut((g, g), (g, g)).copy_from(&t.t1.transpose());
    w.view_mut((g, 2 * g), (g, g)).copy_from(&DMatrix::from_diagonal(&a2));
    w.view_mut((2 * g, 0), (g, g)).copy_from(&(&t4 - &eye));
    w.view_mut((2 * g, 2 * g), (g, g)).copy_from(&t.t1);

    let cond_w = linalg::condition_number(&w);
    if !(cond_w <= linalg::SINGULAR_CONDITION) {
        return Err(Error::Singular {
            what: "leader KKT matrix W".into(),
            condition: cond_w,
        });
    }
    let d = w.lower_triangle();
    if let Some(i) = (0..3 * g).find(|&i| d[(i, i)] == 0.0) {
        return Err(Error::Structural(format!(
            "W diagonal entry {i} is zero, so its lower-triangular part is singular"
        )));
    }
    let d_inv = d
        .clone()
        .solve_lower_triangular(&DMatrix::identity(3 * g, 3 * g))
        .ok_or_else(|| Error::Structural("lower-triangular part of W is singular".into()))?;
    let m = &d_inv * (&d - &w);

    let mut system = LeaderSystem {
        n_g: g,
        t1: t.t1.clone(),
        t2: t.t2.clone(),
        t3,
        t4,
        t5: DVector::zeros(g),
        coupling,
        a1,
        a2,
        cost_linear,
        caps: gens.iter().map(|p| p.gen_cap_mw).collect(),
        w,
        b: DVector::zeros(3 * g),
        d,
        m,
        cond_w,
    };
    system.set_t5(t5);
    Ok(system)
}

impl LeaderSystem {
    /// Replaces `T5` and the third block of `b`.
    pub fn set_t5(&mut self, t5: DVector<f64>) {
        let g = self.n_g;
        for j in 0..g {
            self.b[j] = -self.cost_linear[j];
            self.b[g + j] = 0.0;
            self.b[2 * g + j] = t5[j];
        }
        self.t5 = t5;
    }

    /// `T̃5 = −T5`.
    pub fn t5_tilde(&self) -> DVector<f64> {
        -&self.t5
    }

    pub fn split(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let g = self.n_g;
        (
            x.rows(0, g).iter().copied().collect(),
            x.rows(g, g).iter().copied().collect(),
            x.rows(2 * g, g).iter().copied().collect(),
        )
    }

    /// Residuals of generation stationarity, angle stationarity and the
    /// reduced flow constraint, each evaluated entry by entry from the
    /// Lagrangian rather than through `W`.
    pub fn kkt_residuals(&self, x: &DVector<f64>) -> KktResiduals {
        let g = self.n_g;
        let d = self.t2.ncols();
        let (p, mu, theta) = self.split(x);
        let mut stationarity_p = 0.0_f64;
        let mut stationarity_theta = 0.0_f64;
        let mut constraint = 0.0_f64;
        for j in 0..g {
            // ∂L/∂Pⱼ = aⱼPⱼ + bⱼ − μⱼ − Σᵢ (μᵀT2(:,i))·s_{i,gⱼ}/sᵢᵢ
            let mut coupling_term = 0.0;
            for i in 0..d {
                let mu_t2: f64 = (0..g).map(|k| mu[k] * self.t2[(k, i)]).sum();
                coupling_term += mu_t2 * self.coupling[(i, j)];
            }
            let r = self.a1[j] * p[j] + self.cost_linear[j] - mu[j] - coupling_term;
            stationarity_p = stationarity_p.max(r.abs());

            // ∂L/∂θⱼ = αⱼθⱼ + μᵀT1(:,j)
            let mu_t1: f64 = (0..g).map(|k| mu[k] * self.t1[(k, j)]).sum();
            stationarity_theta = stationarity_theta.max((self.a2[j] * theta[j] + mu_t1).abs());

            // T1θ + T2q − P with T2q = T̃5 − T2·K·P
            let t1_theta: f64 = (0..g).map(|k| self.t1[(j, k)] * theta[k]).sum();
            let mut t2_lambda = 0.0;
            for i in 0..d {
                let lambda_i: f64 = (0..g).map(|k| self.coupling[(i, k)] * p[k]).sum();
                t2_lambda += self.t2[(j, i)] * lambda_i;
            }
            let r = t1_theta + (-self.t5[j]) - t2_lambda - p[j];
            constraint = constraint.max(r.abs());
        }
        KktResiduals {
            stationarity_p,
            stationarity_theta,
            constraint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity_p: f64,
    pub stationarity_theta: f64,
    pub constraint: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity_p
            .max(self.stationarity_theta)
            .max(self.constraint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderSolution {
    pub p_g: Vec<f64>,
    pub mu: Vec<f64>,
    pub theta_g: Vec<f64>,
    /// Per generator: `0 ≤ Pⱼ ≤ capⱼ`.
    pub within_caps: Vec<bool>,
}

impl LeaderSolution {
    fn from_x(system: &LeaderSystem, x: &DVector<f64>) -> Self {
        let (p_g, mu, theta_g) = system.split(x);
        let within_caps = p_g
            .iter()
            .zip(&system.caps)
            .map(|(&p, &cap)| (0.0..=cap).contains(&p))
            .collect();
        Self {
            p_g,
            mu,
            theta_g,
            within_caps,
        }
    }

    pub fn caps_ok(&self) -> bool {
        self.within_caps.iter().all(|&ok| ok)
    }
}

/// `X = W⁻¹b`. Cap violations are reported, never projected.
pub fn direct_solve(system: &LeaderSystem) -> Result<(LeaderSolution, DVector<f64>)> {
    let x = linalg::checked_solve(&system.w, &system.b, "leader KKT matrix W")?;
    Ok((LeaderSolution::from_x(system, &x), x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub rho: f64,
    pub converges: bool,
}

pub fn spectral_radius_check(system: &LeaderSystem) -> SpectralReport {
    let rho = linalg::spectral_radius(&system.m);
    SpectralReport {
        rho,
        converges: rho < 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderSweep {
    pub sweep: usize,
    pub p_g: Vec<f64>,
    pub mu: Vec<f64>,
    pub theta_g: Vec<f64>,
    /// `‖WX − b‖∞` after the sweep.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct GaussSeidelRun {
    pub x: DVector<f64>,
    pub solution: LeaderSolution,
    pub sweeps: usize,
    pub converged: bool,
    pub trace: Vec<LeaderSweep>,
}

/// In-place Gauss-Seidel sweeps over `W·X = b`. Stops when the generation
/// block moves by at most `eps` in the ∞-norm on two consecutive sweeps, or
/// on one sweep whose residual `‖WX − b‖∞` is also within `eps`.
pub fn gauss_seidel_solve(
    system: &LeaderSystem,
    x0: &DVector<f64>,
    eps: f64,
    max_iters: usize,
) -> Result<GaussSeidelRun> {
    let n = system.w.nrows();
    if x0.len() != n {
        return Err(Error::Dimension {
            what: "Gauss-Seidel start vector",
            expected: n,
            got: x0.len(),
        });
    }
    if let Some(i) = (0..n).find(|&i| system.w[(i, i)] == 0.0) {
        return Err(Error::Structural(format!(
            "W diagonal entry {i} is zero; Gauss-Seidel is undefined"
        )));
    }
    let g = system.n_g;
    let record = |sweep: usize, x: &DVector<f64>| {
        let (p_g, mu, theta_g) = system.split(x);
        LeaderSweep {
            sweep,
            p_g,
            mu,
            theta_g,
            residual: linalg::inf_norm(&(&system.w * x - &system.b)),
        }
    };
    let mut x = x0.clone();
    let mut trace = vec![record(0, &x)];
    let mut quiet = 0;
    for sweep in 1..=max_iters {
        let previous: Vec<f64> = x.rows(0, g).iter().copied().collect();
        gauss_seidel_sweep(&system.w, &system.b, &mut x);
        trace.push(record(sweep, &x));
        let moved = linalg::max_abs_diff(&previous, &x.as_slice()[..g]);
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
        // From a cold start the generation block is frozen for one sweep
        // while the multipliers catch up, so a single quiet sweep only counts
        // when the system residual agrees.
        quiet = if moved <= eps { quiet + 1 } else { 0 };
        if quiet >= 2 || (quiet == 1 && trace[sweep].residual <= eps) {
            return Ok(GaussSeidelRun {
                solution: LeaderSolution::from_x(system, &x),
                x,
                sweeps: sweep,
                converged: true,
                trace,
            });
        }
    }
    Ok(GaussSeidelRun {
        solution: LeaderSolution::from_x(system, &x),
        x,
        sweeps: trace.len() - 1,
        converged: false,
        trace,
    })
}

/// One sweep `Xᵢ ← (bᵢ − Σ_{k<i} WᵢₖXₖ⁽ᵗ⁺¹⁾ − Σ_{k>i} WᵢₖXₖ⁽ᵗ⁾)/Wᵢᵢ`.
pub fn gauss_seidel_sweep(w: &DMatrix<f64>, b: &DVector<f64>, x: &mut DVector<f64>) {
    let n = w.nrows();
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..n {
            if k != i {
                acc -= w[(i, k)] * x[k];
            }
        }
        x[i] = acc / w[(i, i)];
    }
}

/// KPP: γ straight from disclosed parameters.
pub fn kpp_acquire(
    params: &[crate::follower::MicrogridParams],
    market: &crate::follower::MarketParams,
    net: &PowerNetwork,
) -> Vec<f64> {
    params
        .iter()
        .enumerate()
        .map(|(i, p)| crate::follower::gamma_of(p, market, net.s_at(i, i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgdEstimate {
    pub gamma: Vec<f64>,
    /// Components whose reported response sits on a bound; their recovered
    /// γ is not valid.
    pub clamped: Vec<bool>,
}

/// KGD: recover γ from the followers' response to an announced generation,
/// via `q = H·P_d` and `γᵢ = sᵢᵢ(qᵢ + Λᵢ)`. `bounds` are the followers'
/// feasible net-injection intervals, used only to flag clamped components.
pub fn kgd_acquire(
    net: &PowerNetwork,
    p_g_announced: &[f64],
    p_d_response: &[f64],
    bounds: Option<(&[f64], &[f64])>,
) -> Result<KgdEstimate> {
    let (d, g) = (net.n_d(), net.n_g());
    if p_g_announced.len() != g {
        return Err(Error::Dimension {
            what: "announced generation",
            expected: g,
            got: p_g_announced.len(),
        });
    }
    if p_d_response.len() != d {
        return Err(Error::Dimension {
            what: "microgrid response",
            expected: d,
            got: p_d_response.len(),
        });
    }
    let q = h_matrix(net) * DVector::from_column_slice(p_d_response);
    let lambda = generator_coupling(net) * DVector::from_column_slice(p_g_announced);
    let gamma = (0..d).map(|i| net.s_at(i, i) * (q[i] + lambda[i])).collect();
    let clamped = match bounds {
        Some((lo, hi)) => p_d_response
            .iter()
            .enumerate()
            .map(|(i, &p)| p <= lo[i] || p >= hi[i])
            .collect(),
        None => vec![false; d],
    };
    if clamped.iter().any(|&c| c) {
        log::warn!("KGD: clamped follower response, recovered gamma invalid for {clamped:?}");
    }
    Ok(KgdEstimate { gamma, clamped })
}

/// KBA: `T̃5 = P_g − T1·θ_g + T2·Λ`, with `Λ = K·P_g`, from generator-bus
/// angles measured after the followers settled.
pub fn kba_infer(
    net: &PowerNetwork,
    t: &TMatrices,
    p_g_announced: &[f64],
    theta_g_measured: &[f64],
) -> Result<DVector<f64>> {
    let g = net.n_g();
    for (what, len) in [
        ("announced generation", p_g_announced.len()),
        ("measured generator angles", theta_g_measured.len()),
    ] {
        if len != g {
            return Err(Error::Dimension {
                what,
                expected: g,
                got: len,
            });
        }
    }
    let p_g = DVector::from_column_slice(p_g_announced);
    let lambda = generator_coupling(net) * &p_g;
    Ok(&p_g - &t.t1 * DVector::from_column_slice(theta_g_measured) + &t.t2 * lambda)
}

/// Residual of the reduced flow constraint for a fresh measurement under a
/// previously inferred `T̃5`; large values mean the angles were read before
/// the followers settled or at a non-interior response.
pub fn kba_consistency(
    net: &PowerNetwork,
    t: &TMatrices,
    t5_tilde: &DVector<f64>,
    p_g: &[f64],
    theta_g: &[f64],
) -> Result<f64> {
    let fresh = kba_infer(net, t, p_g, theta_g)?;
    Ok(linalg::inf_norm(&(fresh - t5_tilde)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::BusIndexing;

    fn scalar_network() -> PowerNetwork {
        // microgrid bus 1, generator bus 2, both tied to the slack and each other
        let b = DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, 1.0, -4.0]);
        PowerNetwork::from_susceptance(b, BusIndexing::new(1, 1, vec![1, 2], 0).unwrap()).unwrap()
    }

    fn gen(a: f64, b: f64, alpha: f64) -> GeneratorParams {
        GeneratorParams {
            a,
            b,
            c: 0.0,
            alpha,
            gen_cap_mw: 1e6,
        }
    }

    #[test]
    fn scalar_t_blocks() {
        let net = scalar_network();
        let t = build_t(&net).unwrap();
        let (b1, b2, b3, b4) = (-3.0, 1.0, 1.0, -4.0);
        assert!((t.t1[(0, 0)] - (b3 * b2 / b1 - b4)).abs() < 1e-14);
        // H = [1] for one microgrid
        assert!((t.t2[(0, 0)] - b3 / b1).abs() < 1e-14);
    }

    #[test]
    fn homogeneous_system_gives_zero() {
        let net = scalar_network();
        let t = build_t(&net).unwrap();
        let sys = build_w_b(&net, &[gen(1.0, 0.0, 1.0)], &t, DVector::zeros(1)).unwrap();
        let (sol, x) = direct_solve(&sys).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(sol.p_g, vec![0.0]);
    }

    #[test]
    fn gauss_seidel_from_solution_stops_immediately() {
        let net = scalar_network();
        let t = build_t(&net).unwrap();
        let sys = build_w_b(&net, &[gen(0.5, 2.0, 3.0)], &t, DVector::from_element(1, 4.0))
            .unwrap();
        let (_, x) = direct_solve(&sys).unwrap();
        let run = gauss_seidel_solve(&sys, &x, 1e-9, 100).unwrap();
        assert!(run.converged);
        assert_eq!(run.sweeps, 1);
        assert!((&run.x - &x).amax() < 1e-9);
    }

    #[test]
    fn gauss_seidel_on_diagonal_system_is_exact_in_one_sweep() {
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0, 5.0]));
        let b = DVector::from_vec(vec![1.0, 2.0, 10.0]);
        let mut x = DVector::zeros(3);
        gauss_seidel_sweep(&w, &b, &mut x);
        assert_eq!(x.as_slice(), &[0.5, 0.5, 2.0]);
    }

    #[test]
    fn matrix_form_matches_elementwise_sweep() {
        let net = scalar_network();
        let t = build_t(&net).unwrap();
        let sys = build_w_b(&net, &[gen(0.5, 2.0, 3.0)], &t, DVector::from_element(1, 4.0))
            .unwrap();
        let d_inv_b = sys.d.clone().solve_lower_triangular(&sys.b).unwrap();
        let mut x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        for _ in 0..5 {
            let expected = &sys.m * &x + &d_inv_b;
            gauss_seidel_sweep(&sys.w, &sys.b, &mut x);
            assert!((&expected - &x).amax() < 1e-10);
        }
    }

    #[test]
    fn zero_iteration_matrix_has_zero_radius() {
        let net = scalar_network();
        let t = build_t(&net).unwrap();
        let mut sys = build_w_b(&net, &[gen(1.0, 0.0, 1.0)], &t, DVector::zeros(1)).unwrap();
        sys.m = DMatrix::zeros(3, 3);
        assert_eq!(spectral_radius_check(&sys).rho, 0.0);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [LeaderScheme::Kpp, LeaderScheme::Kgd, LeaderScheme::Kba] {
            assert_eq!(s.to_string().parse::<LeaderScheme>().unwrap(), s);
        }
    }

    #[test]
    fn invalid_generator_params_are_rejected() {
        let net = scalar_network();
        let t = build_t(&net).unwrap();
        let mut g = gen(1.0, 0.0, 1.0);
        g.a = 0.0;
        assert!(matches!(
            build_w_b(&net, &[g], &t, DVector::zeros(1)),
            Err(Error::Validation(_))
        ));
    }
}
