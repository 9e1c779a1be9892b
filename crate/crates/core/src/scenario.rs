//! Scenario files (TOML): network, market, per-player parameters and solver
//! settings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::follower::{FollowerScheme, MarketParams, MicrogridParams};
use crate::leader::{GeneratorParams, LeaderScheme};
use crate::network::{load_network, BusId, NetworkSpec, PowerNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrogridEntry {
    pub bus: BusId,
    pub psi: f64,
    pub eta: f64,
    pub gen_cap_mw: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorEntry {
    pub bus: BusId,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    pub alpha: f64,
    pub gen_cap_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub follower_scheme: FollowerScheme,
    pub leader_scheme: LeaderScheme,
    /// Follower stopping threshold, MW.
    pub eps1: f64,
    /// Leader stopping threshold, MW.
    pub eps2: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    pub seed: u64,
    /// Std. dev. of Gaussian noise on angle measurements, rad.
    pub noise_std: f64,
    /// Deviations sampled per player when verifying the equilibrium.
    pub verify_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            follower_scheme: FollowerScheme::Pda,
            leader_scheme: LeaderScheme::Kba,
            eps1: 1e-3,
            eps2: 1e-3,
            max_inner_iters: 10_000,
            max_outer_iters: 10_000,
            seed: 0,
            noise_std: 0.0,
            verify_samples: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("solver.eps1", self.eps1), ("solver.eps2", self.eps2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::schema(field, "must be a positive number"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::schema("solver.noise_std", "must be non-negative"));
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 {
            return Err(Error::schema("solver.max_*_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// On-disk layout of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub network: NetworkSpec,
    pub market: MarketParams,
    pub microgrids: Vec<MicrogridEntry>,
    pub generators: Vec<GeneratorEntry>,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ScenarioFile {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::schema("scenario", e.to_string()))
    }
}

/// A validated scenario with parameters in internal bus order.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub file: ScenarioFile,
    pub network: PowerNetwork,
    pub microgrids: Vec<MicrogridParams>,
    pub generators: Vec<GeneratorParams>,
    pub market: MarketParams,
    pub solver: SolverConfig,
}

impl ScenarioConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml_str_named(&text, &path.display().to_string())?;
        if config.file.name.is_none() {
            if let Some(stem) = path.file_stem() {
                config.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_named(text, "<scenario>")
    }

    fn from_toml_str_named(text: &str, origin: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    format!("{origin}:{line}:{col}")
                }
                None => origin.to_string(),
            };
            Error::Schema {
                field: location,
                message: e.message().to_string(),
            }
        })?;
        Self::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        file.solver.validate()?;
        file.market.validate()?;
        let network = load_network(&file.network)?;
        network.indexing().require_game_roles()?;

        let mut mg: BTreeMap<BusId, &MicrogridEntry> = BTreeMap::new();
        for e in &file.microgrids {
            if mg.insert(e.bus, e).is_some() {
                return Err(Error::schema(
                    "microgrids.bus",
                    format!("bus {} listed twice", e.bus),
                ));
            }
        }
        let mut gens: BTreeMap<BusId, &GeneratorEntry> = BTreeMap::new();
        for e in &file.generators {
            if gens.insert(e.bus, e).is_some() {
                return Err(Error::schema(
                    "generators.bus",
                    format!("bus {} listed twice", e.bus),
                ));
            }
        }

        let idx = network.indexing();
        let microgrids = idx
            .microgrid_labels()
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let e = mg.remove(id).ok_or_else(|| {
                    Error::schema("microgrids", format!("no entry for microgrid bus {id}"))
                })?;
                let p = MicrogridParams {
                    psi: e.psi,
                    eta: e.eta,
                    load_mw: network.loads_mw()[i],
                    gen_cap_mw: e.gen_cap_mw,
                    tau: e.tau,
                };
                p.validate(&id.to_string())?;
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(id) = mg.keys().next() {
            return Err(Error::schema(
                "microgrids.bus",
                format!("bus {id} is not a microgrid bus"),
            ));
        }
        let generators = idx
            .generator_labels()
            .iter()
            .map(|id| {
                let e = gens.remove(id).ok_or_else(|| {
                    Error::schema("generators", format!("no entry for generator bus {id}"))
                })?;
                let p = GeneratorParams {
                    a: e.a,
                    b: e.b,
                    c: e.c,
                    alpha: e.alpha,
                    gen_cap_mw: e.gen_cap_mw,
                };
                p.validate(&id.to_string())?;
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(id) = gens.keys().next() {
            return Err(Error::schema(
                "generators.bus",
                format!("bus {id} is not a generator bus"),
            ));
        }

        Ok(Self {
            name: file.name.clone().unwrap_or_else(|| "scenario".into()),
            market: file.market,
            solver: file.solver.clone(),
            file,
            network,
            microgrids,
            generators,
        })
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}
