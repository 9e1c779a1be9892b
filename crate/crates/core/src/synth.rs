//! Random networks and game instances for property tests and batch
//! experiments.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::follower::{check_pda_convergence, FollowerGame, MarketParams};
use crate::leader::{
    build_t, build_w_b, direct_solve, kpp_acquire, spectral_radius_check, t5_from_gamma,
    GeneratorParams,
};
use crate::linalg;
use crate::network::{
    load_network, BranchSpec, BusId, BusRole, BusSpec, NetworkSpec, PowerNetwork,
};
use crate::scenario::{GeneratorEntry, MicrogridEntry, ScenarioConfig, ScenarioFile, SolverConfig};

#[derive(Debug, Clone)]
pub struct NetworkShape {
    pub n_d: usize,
    pub n_g: usize,
    /// Probability of each extra (non-tree) branch.
    pub extra_branch_prob: f64,
    pub reactance_pu: RangeInclusive<f64>,
    /// When set, every microgrid also gets a direct tie to the slack with a
    /// reactance from this range, which keeps microgrid coupling weak.
    pub slack_tie_pu: Option<RangeInclusive<f64>>,
    pub base_mva: f64,
}

impl NetworkShape {
    /// `n_buses` non-slack buses split at random into the two roles.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_buses: usize) -> Self {
        assert!(n_buses >= 2, "need at least two non-slack buses");
        let n_d = rng.random_range(1..n_buses);
        Self {
            n_d,
            n_g: n_buses - n_d,
            extra_branch_prob: rng.random_range(0.0..0.3),
            reactance_pu: 0.01..=1.0,
            slack_tie_pu: None,
            base_mva: 100.0,
        }
    }
}

/// Random connected network: a random spanning tree over all buses plus
/// independent extra branches. Bus ids are shuffled so that roles do not
/// follow id order; microgrid loads are drawn from `load_mw`.
pub fn random_network<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &NetworkShape,
    load_mw: RangeInclusive<f64>,
) -> NetworkSpec {
    let n = shape.n_d + shape.n_g + 1;
    let mut ids: Vec<BusId> = (1..=n as BusId).collect();
    ids.shuffle(rng);
    let slack = ids[0];
    let mut roles = vec![BusRole::Slack];
    roles.extend(std::iter::repeat_n(BusRole::Microgrid, shape.n_d));
    roles.extend(std::iter::repeat_n(BusRole::Generator, shape.n_g));
    let buses: Vec<BusSpec> = ids
        .iter()
        .zip(&roles)
        .map(|(&id, &role)| BusSpec {
            id,
            role,
            load_mw: if role == BusRole::Microgrid {
                rng.random_range(load_mw.clone())
            } else {
                0.0
            },
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut branches = Vec::new();
    let mut linked = vec![vec![false; n]; n];
    let add = |a: usize,
               b: usize,
               x: f64,
               branches: &mut Vec<BranchSpec>,
               linked: &mut Vec<Vec<bool>>| {
        linked[a][b] = true;
        linked[b][a] = true;
        branches.push(BranchSpec {
            from: ids[a],
            to: ids[b],
            reactance_pu: x,
        });
    };
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let x = rng.random_range(shape.reactance_pu.clone());
        add(order[k], parent, x, &mut branches, &mut linked);
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if !linked[a][b] && rng.random::<f64>() < shape.extra_branch_prob {
                let x = rng.random_range(shape.reactance_pu.clone());
                add(a, b, x, &mut branches, &mut linked);
            }
        }
    }
    if let Some(tie) = &shape.slack_tie_pu {
        for (k, role) in roles.iter().enumerate() {
            if *role == BusRole::Microgrid {
                let x = rng.random_range(tie.clone());
                add(k, 0, x, &mut branches, &mut linked);
            }
        }
    }
    NetworkSpec {
        base_mva: shape.base_mva,
        slack_id: Some(slack),
        buses,
        branches,
    }
}

#[derive(Debug, Clone)]
pub struct GameShape {
    pub network: NetworkShape,
    pub load_mw: RangeInclusive<f64>,
    pub gen_cap_mw: RangeInclusive<f64>,
    /// Equilibrium generation as a fraction of capacity, for the target
    /// follower profile.
    pub target_fraction: RangeInclusive<f64>,
    pub eta: RangeInclusive<f64>,
    pub tau: RangeInclusive<f64>,
    pub generator_cap_mw: f64,
    pub a: RangeInclusive<f64>,
    pub b: RangeInclusive<f64>,
    pub alpha: RangeInclusive<f64>,
}

impl GameShape {
    pub fn new(network: NetworkShape) -> Self {
        Self {
            network,
            load_mw: 50.0..=200.0,
            gen_cap_mw: 100.0..=400.0,
            target_fraction: 0.3..=0.7,
            eta: 0.5..=2.0,
            tau: 0.6..=0.95,
            generator_cap_mw: 800.0,
            a: 0.01..=0.1,
            b: 1.0..=10.0,
            alpha: 1e2..=1e4,
        }
    }
}

impl GameShape {
    /// Weakly coupled microgrids, each tied to the slack, so the PDA step
    /// condition usually holds and the follower equilibrium is interior.
    pub fn follower_interior(n_d: usize, n_g: usize) -> Self {
        Self::new(NetworkShape {
            n_d,
            n_g,
            extra_branch_prob: 0.2,
            reactance_pu: 0.05..=0.5,
            slack_tie_pu: Some(0.01..=0.05),
            base_mva: 100.0,
        })
    }

    /// Parameters for which a sizeable share of targeted instances meets
    /// every standing assumption (see [`regime`]): heavy loads, small
    /// generator boxes and strong angle penalties.
    pub fn in_regime(n_d: usize) -> Self {
        let mut shape = Self::new(NetworkShape {
            n_d,
            n_g: 2,
            extra_branch_prob: 0.2,
            reactance_pu: 0.05..=0.5,
            slack_tie_pu: Some(0.05..=0.2),
            base_mva: 100.0,
        });
        shape.load_mw = 600.0..=1200.0;
        shape.gen_cap_mw = 600.0..=1200.0;
        shape.target_fraction = 0.4..=0.6;
        shape.generator_cap_mw = 300.0;
        shape.a = 0.05..=0.1;
        shape.b = 0.5..=3.0;
        shape.alpha = 1e4..=1e5;
        shape
    }
}

/// A random scenario whose follower game, at the generation `p_g_target`,
/// has its equilibrium strictly inside every microgrid's box.
///
/// The construction picks the target profile first and backs out the
/// unit costs: at an interior equilibrium `θ_d = γ`, so
/// `ψᵢ = ζ − θᵢηᵢ²sᵢᵢ` with ζ chosen to keep every ψ positive.
pub struct InteriorInstance {
    pub file: ScenarioFile,
    /// Target generation at the microgrid buses, internal order.
    pub p_dg_target: Vec<f64>,
    pub p_g_target: Vec<f64>,
}

pub fn interior_instance<R: Rng + ?Sized>(rng: &mut R, shape: &GameShape) -> Result<InteriorInstance> {
    let spec = random_network(rng, &shape.network, shape.load_mw.clone());
    let net = load_network(&spec)?;
    let (d, g) = (net.n_d(), net.n_g());
    let caps: Vec<f64> = (0..d).map(|_| rng.random_range(shape.gen_cap_mw.clone())).collect();
    let p_dg: Vec<f64> = caps
        .iter()
        .map(|c| c * rng.random_range(shape.target_fraction.clone()))
        .collect();
    let p_g: Vec<f64> = (0..g)
        .map(|_| rng.random_range(0.0..shape.generator_cap_mw))
        .collect();
    let mut p: Vec<f64> = p_dg
        .iter()
        .zip(net.loads_mw())
        .map(|(x, l)| x - l)
        .collect();
    p.extend_from_slice(&p_g);
    let theta = net.angles_from_injections(&p)?;
    let etas: Vec<f64> = (0..d).map(|_| rng.random_range(shape.eta.clone())).collect();
    let pivot: Vec<f64> = (0..d)
        .map(|i| theta[i] * etas[i] * etas[i] * net.s_at(i, i))
        .collect();
    let zeta = pivot.iter().copied().fold(0.0_f64, f64::max) + rng.random_range(1.0..20.0);
    let labels = net.indexing().labels.clone();
    let microgrids = (0..d)
        .map(|i| MicrogridEntry {
            bus: labels[i],
            psi: zeta - pivot[i],
            eta: etas[i],
            gen_cap_mw: caps[i],
            tau: rng.random_range(shape.tau.clone()),
        })
        .collect();
    let generators = (0..g)
        .map(|j| GeneratorEntry {
            bus: labels[d + j],
            a: rng.random_range(shape.a.clone()),
            b: rng.random_range(shape.b.clone()),
            c: 0.0,
            alpha: rng.random_range(shape.alpha.clone()),
            gen_cap_mw: shape.generator_cap_mw,
        })
        .collect();
    Ok(InteriorInstance {
        file: ScenarioFile {
            name: None,
            network: spec,
            market: MarketParams { zeta },
            microgrids,
            generators,
            solver: SolverConfig::default(),
        },
        p_dg_target: p_dg,
        p_g_target: p_g,
    })
}

/// Pivot values γ for which the Stackelberg equilibrium has the microgrids
/// at `p_d_target` (net injections), with the matching generator outputs.
///
/// The leader solution is affine in γ, `P_g = c₀ + C·γ`, and at an interior
/// follower equilibrium `γ = S₁·P_d + S_dg·P_g`; the pair is solved jointly.
pub fn gamma_for_target(
    net: &PowerNetwork,
    gens: &[GeneratorParams],
    p_d_target: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (d, g) = (net.n_d(), net.n_g());
    if p_d_target.len() != d {
        return Err(Error::Dimension {
            what: "target microgrid injections",
            expected: d,
            got: p_d_target.len(),
        });
    }
    let t = build_t(net)?;
    let mut system = build_w_b(net, gens, &t, DVector::zeros(g))?;
    let mut leader_at = |gamma: &[f64]| -> Result<DVector<f64>> {
        system.set_t5(t5_from_gamma(net, &t, gamma)?);
        Ok(DVector::from_vec(direct_solve(&system)?.0.p_g))
    };
    let c0 = leader_at(&vec![0.0; d])?;
    let mut c = DMatrix::zeros(g, d);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        c.set_column(i, &(leader_at(&e)? - &c0));
    }
    let s = net.s();
    let s1 = s.view((0, 0), (d, d)).into_owned();
    let s_dg = s.view((0, d), (d, g)).into_owned();
    let p_d = DVector::from_column_slice(p_d_target);
    let lhs = DMatrix::identity(g, g) - &c * &s_dg;
    let rhs = &c0 + &c * (&s1 * &p_d);
    let p_g = linalg::checked_solve(&lhs, &rhs, "targeted leader system")?;
    let gamma = s1 * p_d + s_dg * &p_g;
    Ok((gamma.iter().copied().collect(), p_g.iter().copied().collect()))
}

/// Like [`interior_instance`], but the unit costs are chosen so that the
/// target profile is the followers' part of the Stackelberg equilibrium;
/// `p_g_target` is then the leader solution.
pub fn targeted_instance<R: Rng + ?Sized>(rng: &mut R, shape: &GameShape) -> Result<InteriorInstance> {
    let mut inst = interior_instance(rng, shape)?;
    let cfg = ScenarioConfig::from_file(inst.file.clone())?;
    let net = &cfg.network;
    let p_d: Vec<f64> = inst
        .p_dg_target
        .iter()
        .zip(net.loads_mw())
        .map(|(x, l)| x - l)
        .collect();
    let (gamma, p_g) = gamma_for_target(net, &cfg.generators, &p_d)?;
    let pivot: Vec<f64> = cfg
        .microgrids
        .iter()
        .enumerate()
        .map(|(i, m)| gamma[i] * m.eta * m.eta * net.s_at(i, i))
        .collect();
    let zeta = pivot.iter().copied().fold(0.0_f64, f64::max) + rng.random_range(1.0..20.0);
    inst.file.market.zeta = zeta;
    for (entry, pv) in inst.file.microgrids.iter_mut().zip(&pivot) {
        entry.psi = zeta - pv;
    }
    inst.p_g_target = p_g;
    Ok(inst)
}

/// Which of the standing assumptions of the equilibrium search an instance
/// meets.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub pda_condition: bool,
    pub rho_m: f64,
    /// Leader solution within `[0, cap]` for every generator.
    pub caps_ok: bool,
    /// Follower equilibrium interior for every generator output in the
    /// generator box. The response is affine in `P_g`, so the corners decide.
    pub interior_over_box: bool,
}

impl RegimeReport {
    pub fn all(&self) -> bool {
        self.pda_condition && self.rho_m < 1.0 && self.caps_ok && self.interior_over_box
    }
}

pub fn regime(cfg: &ScenarioConfig) -> Result<RegimeReport> {
    let net = &cfg.network;
    let g = net.n_g();
    let game = FollowerGame::new(net, cfg.microgrids.clone(), cfg.market)?;
    let t = build_t(net)?;
    let gamma = kpp_acquire(&cfg.microgrids, &cfg.market, net);
    let system = build_w_b(net, &cfg.generators, &t, t5_from_gamma(net, &t, &gamma)?)?;
    let (solution, _) = direct_solve(&system)?;
    let mut interior_over_box = true;
    for corner in 0..(1usize << g) {
        let p_g: Vec<f64> = (0..g)
            .map(|j| {
                if corner >> j & 1 == 1 {
                    cfg.generators[j].gen_cap_mw
                } else {
                    0.0
                }
            })
            .collect();
        let red = game.reduction(&p_g)?;
        let p = linalg::checked_solve(&red.h, &red.q, "H")?;
        interior_over_box &= p
            .iter()
            .enumerate()
            .all(|(i, &x)| x > game.lower(i) && x < game.upper(i));
    }
    Ok(RegimeReport {
        pda_condition: check_pda_convergence(net, &cfg.microgrids).satisfied,
        rho_m: spectral_radius_check(&system).rho,
        caps_ok: solution.caps_ok(),
        interior_over_box,
    })
}

/// Draws interior instances until one satisfies the PDA sufficient
/// condition. Returns `None` after `max_tries` rejections.
pub fn interior_instance_with_pda_condition<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &GameShape,
    max_tries: usize,
) -> Result<Option<InteriorInstance>> {
    for _ in 0..max_tries {
        let inst = interior_instance(rng, shape)?;
        let cfg = ScenarioConfig::from_file(inst.file.clone())?;
        if check_pda_convergence(&cfg.network, &cfg.microgrids).satisfied {
            return Ok(Some(inst));
        }
    }
    Ok(None)
}

/// Draws targeted instances until one meets every standing assumption.
/// Returns `None` after `max_tries` rejections.
pub fn in_regime_instance<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &GameShape,
    max_tries: usize,
) -> Result<Option<ScenarioConfig>> {
    for _ in 0..max_tries {
        let Ok(inst) = targeted_instance(rng, shape) else {
            continue;
        };
        let cfg = ScenarioConfig::from_file(inst.file)?;
        if regime(&cfg).is_ok_and(|r| r.all()) {
            return Ok(Some(cfg));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_networks_load() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..12 {
            let shape = NetworkShape::random(&mut rng, n);
            let spec = random_network(&mut rng, &shape, 0.0..=10.0);
            let net = load_network(&spec).unwrap();
            assert_eq!(net.n(), n);
        }
    }

    #[test]
    fn in_regime_preset_yields_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = in_regime_instance(&mut rng, &GameShape::in_regime(3), 200)
            .unwrap()
            .expect("no in-regime instance in 200 draws");
        assert!(regime(&cfg).unwrap().all());
    }

    #[test]
    fn interior_instance_hits_its_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shape = GameShape::new(NetworkShape {
            n_d: 3,
            n_g: 2,
            extra_branch_prob: 0.2,
            reactance_pu: 0.05..=0.5,
            slack_tie_pu: None,
            base_mva: 100.0,
        });
        let inst = interior_instance(&mut rng, &shape).unwrap();
        let cfg = ScenarioConfig::from_file(inst.file).unwrap();
        let game = crate::follower::FollowerGame::new(&cfg.network, cfg.microgrids.clone(), cfg.market)
            .unwrap();
        let sol = game.solve_direct(&inst.p_g_target).unwrap();
        assert!(sol.interior);
        for (i, m) in cfg.microgrids.iter().enumerate() {
            assert!((sol.p_d[i] + m.load_mw - inst.p_dg_target[i]).abs() < 1e-8);
            assert!(m.psi > 0.0);
        }
    }
}
