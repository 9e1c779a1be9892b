//! End-to-end runs on small instances whose equilibrium is known in closed form.

use segrid::engine::{run_algorithm1, verify_se, RunStatus};
use segrid::follower::FollowerScheme;
use segrid::leader::LeaderScheme;
use segrid::scenario::ScenarioConfig;

// Slack 0, microgrid 1, generator 2 on a line, unit base.
// S = [[0.5, 0.5], [0.5, 1.5]] rad/MW, so the microgrid angle pivot is
// (3 - 8) / 0.5 = -10 rad, its net injection is -20 - P_g, the generator
// angle is P_g - 10, and the leader cost P²/2 + P/2 + (P - 10)² is smallest
// at P_g = 6.5, giving P_dg = 30 - 26.5 = 3.5.
const TOY: &str = r#"
name = "toy"

[network]
base_mva = 1.0
slack_id = 0
buses = [
  { id = 0, role = "slack", load_mw = 0.0 },
  { id = 1, role = "microgrid", load_mw = 30.0 },
  { id = 2, role = "generator", load_mw = 0.0 },
]
branches = [
  { from = 0, to = 1, reactance_pu = 0.5 },
  { from = 1, to = 2, reactance_pu = 1.0 },
]

[market]
zeta = 3.0

[[microgrids]]
bus = 1
psi = 8.0
eta = 1.0
gen_cap_mw = 10.0
tau = 0.5

[[generators]]
bus = 2
a = 1.0
b = 0.5
alpha = 2.0
gen_cap_mw = 10.0

[solver]
eps1 = 1e-10
eps2 = 1e-10
seed = 3
"#;

fn synthetic() -> ScenarioConfig {
    ScenarioConfig::from_path(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/synthetic_in_regime.toml"
    ))
    .unwrap()
}

#[test]
fn toy_line_matches_hand_algebra() {
    let mut cfg = ScenarioConfig::from_toml_str(TOY).unwrap();
    for follower in [FollowerScheme::Iua, FollowerScheme::Rua, FollowerScheme::Pda] {
        for leader in [LeaderScheme::Kpp, LeaderScheme::Kgd, LeaderScheme::Kba] {
            cfg.solver.follower_scheme = follower;
            cfg.solver.leader_scheme = leader;
            let rep = run_algorithm1(&cfg).unwrap();
            assert_eq!(rep.status, RunStatus::Converged, "{follower}/{leader}");
            assert!((rep.p_g_star[0] - 6.5).abs() < 1e-8, "{:?}", rep.p_g_star);
            assert!((rep.p_dg_star[0] - 3.5).abs() < 1e-8, "{:?}", rep.p_dg_star);
            assert!((rep.p_d_star[0] + 26.5).abs() < 1e-8);
            assert!((rep.theta_star[0] + 10.0).abs() < 1e-8);
            assert!((rep.theta_star[1] + 3.5).abs() < 1e-8);
            assert_eq!(rep.microgrids[0].direction, "buys");
        }
    }
}

#[test]
fn opposite_scheme_pairs_agree() {
    let mut a = synthetic();
    a.solver.eps1 = 1e-10;
    a.solver.eps2 = 1e-10;
    let mut b = a.clone();
    a.solver.follower_scheme = FollowerScheme::Iua;
    a.solver.leader_scheme = LeaderScheme::Kpp;
    b.solver.follower_scheme = FollowerScheme::Pda;
    b.solver.leader_scheme = LeaderScheme::Kba;
    let ra = run_algorithm1(&a).unwrap();
    let rb = run_algorithm1(&b).unwrap();
    assert!(ra.is_converged() && rb.is_converged());
    for (x, y) in ra.p_g_star.iter().zip(&rb.p_g_star).chain(ra.p_dg_star.iter().zip(&rb.p_dg_star)) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn synthetic_scenario_is_a_verified_equilibrium() {
    let cfg = synthetic();
    let rep = run_algorithm1(&cfg).unwrap();
    assert_eq!(rep.status, RunStatus::Converged);
    assert!(rep.diagnostics.pda_condition.satisfied);
    assert!(rep.diagnostics.rho_m < 1.0);
    assert!(rep.diagnostics.followers_interior);
    let check = verify_se(&rep, &cfg, 200).unwrap();
    assert!(check.passed());
}

#[test]
fn same_seed_same_report() {
    let mut cfg = synthetic();
    cfg.solver.noise_std = 1e-4;
    let a = serde_json::to_string(&run_algorithm1(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run_algorithm1(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    cfg.solver.seed += 1;
    let c = serde_json::to_string(&run_algorithm1(&cfg).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn sixbus_runs_to_a_reported_status() {
    let cfg = ScenarioConfig::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/sixbus.toml")).unwrap();
    let rep = run_algorithm1(&cfg).unwrap();
    assert!(!rep.diagnostics.pda_condition.satisfied);
    assert!(rep.diagnostics.rho_m > 1.0);
    assert_ne!(rep.status, RunStatus::Converged);
    assert!(rep.p_g_star.iter().all(|p| p.is_finite()));
}
