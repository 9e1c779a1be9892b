//! DC power-flow model: reduced susceptance matrix, its inverse and the
//! injection/angle maps.
//!
//! Buses are reordered internally so that microgrid buses come first and
//! generator buses follow; the slack bus is removed from every matrix. The
//! original bus ids are kept in [`BusIndexing::labels`].
//!
//! Units: branch reactances are per-unit on `base_mva`; injections are in MW
//! and angles in radians. The stored `B` is therefore in MW/rad and
//! `S = −B⁻¹` in rad/MW.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub type BusId = u32;

/// Absolute-relative tolerance used by the structural validation checks.
pub const STRUCTURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusRole {
    Microgrid,
    Generator,
    Slack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub id: BusId,
    pub role: BusRole,
    #[serde(default)]
    pub load_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub from: BusId,
    pub to: BusId,
    pub reactance_pu: f64,
}

fn default_base_mva() -> f64 {
    100.0
}

/// Network description as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    #[serde(default)]
    pub slack_id: Option<BusId>,
    pub buses: Vec<BusSpec>,
    pub branches: Vec<BranchSpec>,
}

/// Bookkeeping for the reduced bus ordering (microgrids first, then
/// generators, slack excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusIndexing {
    pub n_d: usize,
    pub n_g: usize,
    /// Original bus id of each reduced index.
    pub labels: Vec<BusId>,
    pub slack_id: BusId,
}

impl BusIndexing {
    pub fn new(n_d: usize, n_g: usize, labels: Vec<BusId>, slack_id: BusId) -> Result<Self> {
        if n_d + n_g == 0 {
            return Err(Error::Validation("network has no non-slack bus".into()));
        }
        if labels.len() != n_d + n_g {
            return Err(Error::Dimension {
                what: "bus labels",
                expected: n_d + n_g,
                got: labels.len(),
            });
        }
        let unique: BTreeSet<_> = labels.iter().collect();
        if unique.len() != labels.len() || unique.contains(&slack_id) {
            return Err(Error::Validation("bus labels must be distinct".into()));
        }
        Ok(Self {
            n_d,
            n_g,
            labels,
            slack_id,
        })
    }

    pub fn n(&self) -> usize {
        self.n_d + self.n_g
    }

    /// The game needs both players present; a bare network does not.
    pub fn require_game_roles(&self) -> Result<()> {
        if self.n_d == 0 || self.n_g == 0 {
            return Err(Error::Validation(format!(
                "need at least one microgrid and one generator bus (got {} and {})",
                self.n_d, self.n_g
            )));
        }
        Ok(())
    }

    pub fn microgrid_labels(&self) -> &[BusId] {
        &self.labels[..self.n_d]
    }

    pub fn generator_labels(&self) -> &[BusId] {
        &self.labels[self.n_d..]
    }

    pub fn index_of(&self, id: BusId) -> Option<usize> {
        self.labels.iter().position(|&l| l == id)
    }
}

/// Reduced DC network. Immutable after construction.
#[derive(Debug, Clone)]
pub struct PowerNetwork {
    b: DMatrix<f64>,
    s: DMatrix<f64>,
    indexing: BusIndexing,
    base_mva: f64,
    /// Load per reduced bus in MW, as given in the description file.
    loads_mw: Vec<f64>,
    /// Symmetry residual of the raw inverse before symmetrization.
    raw_inverse_asymmetry: f64,
}

/// Builds a [`PowerNetwork`] from a file-level description.
pub fn load_network(spec: &NetworkSpec) -> Result<PowerNetwork> {
    if !(spec.base_mva > 0.0 && spec.base_mva.is_finite()) {
        return Err(Error::schema("base_mva", "must be a positive number"));
    }
    let mut roles: BTreeMap<BusId, &BusSpec> = BTreeMap::new();
    for bus in &spec.buses {
        if roles.insert(bus.id, bus).is_some() {
            return Err(Error::schema("buses.id", format!("duplicate bus id {}", bus.id)));
        }
        if !bus.load_mw.is_finite() || bus.load_mw < 0.0 {
            return Err(Error::schema(
                "buses.load_mw",
                format!("bus {}: load must be a finite non-negative number", bus.id),
            ));
        }
    }
    let declared_slack: Vec<BusId> = spec
        .buses
        .iter()
        .filter(|b| b.role == BusRole::Slack)
        .map(|b| b.id)
        .collect();
    let slack_id = match (spec.slack_id, declared_slack.as_slice()) {
        (Some(id), [only]) if *only == id => id,
        (Some(id), []) => {
            return Err(Error::Validation(match roles.get(&id) {
                Some(_) => format!("bus {id} is named slack_id but its role is not slack"),
                None => format!("slack_id {id} does not name a bus"),
            }))
        }
        (None, [only]) => *only,
        (_, []) => return Err(Error::Validation("no slack bus designated".into())),
        _ => {
            return Err(Error::Validation(format!(
                "exactly one slack bus expected, found {declared_slack:?} (slack_id {:?})",
                spec.slack_id
            )))
        }
    };

    // Reduced ordering: microgrids then generators, each in file order.
    let mut labels: Vec<BusId> = Vec::new();
    labels.extend(
        spec.buses
            .iter()
            .filter(|b| b.role == BusRole::Microgrid)
            .map(|b| b.id),
    );
    let n_d = labels.len();
    labels.extend(
        spec.buses
            .iter()
            .filter(|b| b.role == BusRole::Generator)
            .map(|b| b.id),
    );
    let n_g = labels.len() - n_d;
    let indexing = BusIndexing::new(n_d, n_g, labels, slack_id)?;
    for &id in indexing.generator_labels() {
        if roles[&id].load_mw != 0.0 {
            return Err(Error::Validation(format!(
                "generator bus {id} carries a load; generator buses must have zero load"
            )));
        }
    }

    let position: HashMap<BusId, usize> = indexing
        .labels
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let n = indexing.n();
    let mut b = DMatrix::<f64>::zeros(n, n);
    let mut adjacency: HashMap<BusId, Vec<BusId>> = HashMap::new();
    for (k, br) in spec.branches.iter().enumerate() {
        for end in [br.from, br.to] {
            if !roles.contains_key(&end) {
                return Err(Error::schema(
                    format!("branches[{k}]"),
                    format!("unknown bus id {end}"),
                ));
            }
        }
        if br.from == br.to {
            return Err(Error::Validation(format!(
                "branch {k} connects bus {} to itself",
                br.from
            )));
        }
        if !(br.reactance_pu > 0.0 && br.reactance_pu.is_finite()) {
            return Err(Error::Validation(format!(
                "Laplacian property violated: branch {k} ({}-{}) has non-positive reactance {}",
                br.from, br.to, br.reactance_pu
            )));
        }
        let y = spec.base_mva / br.reactance_pu;
        let from = position.get(&br.from).copied();
        let to = position.get(&br.to).copied();
        if let Some(i) = from {
            b[(i, i)] -= y;
        }
        if let Some(j) = to {
            b[(j, j)] -= y;
        }
        if let (Some(i), Some(j)) = (from, to) {
            b[(i, j)] += y;
            b[(j, i)] += y;
        }
        adjacency.entry(br.from).or_default().push(br.to);
        adjacency.entry(br.to).or_default().push(br.from);
    }

    let mut seen = BTreeSet::from([slack_id]);
    let mut queue = VecDeque::from([slack_id]);
    while let Some(bus) = queue.pop_front() {
        for &next in adjacency.get(&bus).into_iter().flatten() {
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    let unreachable: Vec<String> = roles
        .keys()
        .filter(|id| !seen.contains(id))
        .map(|id| id.to_string())
        .collect();
    if !unreachable.is_empty() {
        return Err(Error::DisconnectedNetwork { unreachable });
    }

    let loads_mw = indexing.labels.iter().map(|id| roles[id].load_mw).collect();
    PowerNetwork::build(b, indexing, spec.base_mva, loads_mw)
}

impl PowerNetwork {
    /// Builds a network directly from a reduced susceptance matrix in MW/rad,
    /// already in microgrids-first order.
    pub fn from_susceptance(b: DMatrix<f64>, indexing: BusIndexing) -> Result<Self> {
        let n = indexing.n();
        let loads = vec![0.0; n];
        Self::build(b, indexing, 1.0, loads)
    }

    fn build(
        b: DMatrix<f64>,
        indexing: BusIndexing,
        base_mva: f64,
        loads_mw: Vec<f64>,
    ) -> Result<Self> {
        let n = indexing.n();
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::Dimension {
                what: "susceptance matrix",
                expected: n,
                got: b.nrows(),
            });
        }
        let scale = b.amax().max(f64::MIN_POSITIVE);
        if linalg::asymmetry(&b) > STRUCTURE_TOL * scale {
            return Err(Error::Validation("susceptance matrix is not symmetric".into()));
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| b[(i, j)]).sum();
            if (0..n).any(|j| j != i && b[(i, j)] < 0.0) || b[(i, i)] + off > STRUCTURE_TOL * scale
            {
                return Err(Error::Validation(format!(
                    "Laplacian property violated at reduced bus {}: −B must have non-positive off-diagonals and non-negative row sums",
                    indexing.labels[i]
                )));
            }
        }
        let inv = linalg::checked_inverse(&b, "reduced susceptance matrix B").map_err(|e| match e {
            Error::Singular { condition, .. } => Error::Singular {
                what: "reduced Laplacian (is every bus connected to the slack?)".into(),
                condition,
            },
            other => other,
        })?;
        let raw = -inv;
        let raw_inverse_asymmetry = linalg::asymmetry(&raw);
        let s = (&raw + raw.transpose()) * 0.5;
        let net = Self {
            b,
            s,
            indexing,
            base_mva,
            loads_mw,
            raw_inverse_asymmetry,
        };
        let report = net.validate();
        if let Some(failed) = report.checks.iter().find(|c| !c.passed) {
            return Err(Error::Structural(format!(
                "{} failed (residual {:.3e})",
                failed.name, failed.residual
            )));
        }
        Ok(net)
    }

    pub fn indexing(&self) -> &BusIndexing {
        &self.indexing
    }

    pub fn n(&self) -> usize {
        self.indexing.n()
    }

    pub fn n_d(&self) -> usize {
        self.indexing.n_d
    }

    pub fn n_g(&self) -> usize {
        self.indexing.n_g
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Reduced susceptance matrix in MW/rad.
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Injection-to-angle sensitivity `S = −B⁻¹` in rad/MW.
    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn s_at(&self, i: usize, j: usize) -> f64 {
        self.s[(i, j)]
    }

    /// Load per reduced bus, MW.
    pub fn loads_mw(&self) -> &[f64] {
        &self.loads_mw
    }

    pub fn b1(&self) -> DMatrix<f64> {
        let d = self.n_d();
        self.b.view((0, 0), (d, d)).into_owned()
    }

    pub fn b2(&self) -> DMatrix<f64> {
        let (d, g) = (self.n_d(), self.n_g());
        self.b.view((0, d), (d, g)).into_owned()
    }

    pub fn b3(&self) -> DMatrix<f64> {
        let (d, g) = (self.n_d(), self.n_g());
        self.b.view((d, 0), (g, d)).into_owned()
    }

    pub fn b4(&self) -> DMatrix<f64> {
        let (d, g) = (self.n_d(), self.n_g());
        self.b.view((d, d), (g, g)).into_owned()
    }

    /// Upper-left microgrid block of `S`.
    pub fn s1(&self) -> DMatrix<f64> {
        let d = self.n_d();
        self.s.view((0, 0), (d, d)).into_owned()
    }

    /// `θ = S·P`.
    pub fn angles_from_injections(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_len(p.len(), "injection vector")?;
        let theta = &self.s * DVector::from_column_slice(p);
        Ok(theta.as_slice().to_vec())
    }

    /// `P = −B·θ`.
    pub fn injections_from_angles(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_len(theta.len(), "angle vector")?;
        let p = -(&self.b * DVector::from_column_slice(theta));
        Ok(p.as_slice().to_vec())
    }

    /// Largest off-diagonal ratio `sᵢⱼ/sᵢᵢ` over the microgrid block; zero when
    /// there is a single microgrid.
    pub fn max_microgrid_coupling_ratio(&self) -> f64 {
        let d = self.n_d();
        let mut best = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    best = best.max(self.s[(i, j)] / self.s[(i, i)]);
                }
            }
        }
        best
    }

    fn check_len(&self, got: usize, what: &'static str) -> Result<()> {
        if got != self.n() {
            return Err(Error::Dimension {
                what,
                expected: self.n(),
                got,
            });
        }
        Ok(())
    }

    /// Structural checks on `B` and `S`: symmetry, Laplacian sign pattern,
    /// inverse residual and the sign properties of `S`.
    pub fn validate(&self) -> ValidationReport {
        let n = self.n();
        let s_scale = self.s.amax().max(f64::MIN_POSITIVE);
        let b_scale = self.b.amax().max(f64::MIN_POSITIVE);
        let mut report = ValidationReport::default();
        report.push(
            "B symmetric",
            linalg::asymmetry(&self.b) / b_scale,
            STRUCTURE_TOL,
        );
        let identity_residual =
            (&(-&self.b * &self.s) - DMatrix::<f64>::identity(n, n)).amax();
        report.push("S = -B^-1 (‖−BS − I‖max)", identity_residual, 1e-8);
        report.push(
            "S symmetric",
            self.raw_inverse_asymmetry / s_scale,
            STRUCTURE_TOL,
        );
        let most_negative = self.s.iter().fold(0.0_f64, |m, &x| m.max(-x));
        report.push("S entrywise non-negative", most_negative / s_scale, STRUCTURE_TOL);
        let min_diag = (0..n).map(|i| self.s[(i, i)]).fold(f64::INFINITY, f64::min);
        report.push_bool(
            "S diagonal strictly positive",
            min_diag,
            min_diag > 0.0,
        );
        report.push(
            "B3 = B2^T",
            (&(self.b3() - self.b2().transpose())).amax() / b_scale,
            STRUCTURE_TOL,
        );
        report
    }
}

/// One named structural check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn push(&mut self, name: &str, residual: f64, tolerance: f64) {
        self.checks.push(InvariantCheck {
            name: name.to_string(),
            residual,
            tolerance,
            passed: residual.is_finite() && residual <= tolerance,
        });
    }

    /// Records a check whose pass condition is not a residual bound; the
    /// residual column then carries the measured quantity.
    pub fn push_bool(&mut self, name: &str, value: f64, passed: bool) {
        self.checks.push(InvariantCheck {
            name: name.to_string(),
            residual: value,
            tolerance: f64::NAN,
            passed,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.checks.extend(other.checks);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            if c.tolerance.is_nan() {
                writeln!(f, "{verdict}  {:<44} value={:.6e}", c.name, c.residual)?;
            } else {
                writeln!(
                    f,
                    "{verdict}  {:<44} residual={:.3e} tol={:.1e}",
                    c.name, c.residual, c.tolerance
                )?;
            }
        }
        Ok(())
    }
}
