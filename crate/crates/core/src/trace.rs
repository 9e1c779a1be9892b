//! Trace, report and plot-data files, plus step-by-step trace replay.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a trace
//! read back parses to the exact bits that were recorded.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::engine::{run_algorithm1, EquilibriumReport, FollowerPhase};
use crate::error::{Error, Result};
use crate::follower::{FollowerGame, FollowerScheme};
use crate::network::BusId;
use crate::scenario::ScenarioConfig;

pub const REPORT_FILE: &str = "report.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const FOLLOWER_TRACE_FILE: &str = "follower_trace.csv";
pub const LEADER_TRACE_FILE: &str = "leader_trace.csv";
pub const PLOT_GENERATOR_FILE: &str = "plot_generator_strategy.csv";
pub const PLOT_MICROGRID_FILE: &str = "plot_microgrid_generation.csv";
pub const PLOT_ANGLE_FILE: &str = "plot_bus_angles.csv";

fn num(v: f64) -> String {
    format!("{v}")
}

fn headers<'a>(prefix: &str, labels: &'a [BusId]) -> impl Iterator<Item = String> + 'a {
    let prefix = prefix.to_string();
    labels.iter().map(move |b| format!("{prefix}_{b}"))
}

fn split_labels(report: &EquilibriumReport) -> (&[BusId], &[BusId]) {
    report.bus_labels.split_at(report.p_d_star.len())
}

/// `phase, step, scheme, P_g_<gen>…, P_d_<mg>…, theta_d_<mg>…,
/// updated_<mg>…, residual`
pub fn write_follower_trace<W: Write>(out: W, report: &EquilibriumReport) -> Result<()> {
    let (mg, gen) = split_labels(report);
    let mut w = csv::Writer::from_writer(out);
    let mut head: Vec<String> = vec!["phase".into(), "step".into(), "scheme".into()];
    head.extend(headers("P_g", gen));
    head.extend(headers("P_d", mg));
    head.extend(headers("theta_d", mg));
    head.extend(headers("updated", mg));
    head.push("residual".into());
    w.write_record(&head)?;
    for row in &report.follower_trace {
        let p_g = match row.phase {
            FollowerPhase::Initial => &report.initial_generation,
            FollowerPhase::Final => &report.p_g_star,
        };
        let s = &row.step;
        let mut rec = vec![
            row.phase.as_str().to_string(),
            s.step.to_string(),
            report.follower_scheme.to_string(),
        ];
        rec.extend(p_g.iter().map(|&v| num(v)));
        rec.extend(s.p_d.iter().map(|&v| num(v)));
        rec.extend(s.theta_d.iter().map(|&v| num(v)));
        rec.extend(s.updated.iter().map(|&u| u8::from(u).to_string()));
        rec.push(num(s.residual));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `sweep, P_g_<gen>…, mu_<gen>…, theta_g_<gen>…, residual`
pub fn write_leader_trace<W: Write>(out: W, report: &EquilibriumReport) -> Result<()> {
    let (_, gen) = split_labels(report);
    let mut w = csv::Writer::from_writer(out);
    let mut head: Vec<String> = vec!["sweep".into()];
    head.extend(headers("P_g", gen));
    head.extend(headers("mu", gen));
    head.extend(headers("theta_g", gen));
    head.push("residual".into());
    w.write_record(&head)?;
    for s in &report.leader_trace {
        let mut rec = vec![s.sweep.to_string()];
        rec.extend(s.p_g.iter().map(|&v| num(v)));
        rec.extend(s.mu.iter().map(|&v| num(v)));
        rec.extend(s.theta_g.iter().map(|&v| num(v)));
        rec.push(num(s.residual));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Generator strategy per leader sweep: `sweep, P_g_<gen>…`.
pub fn write_plot_generator_strategy<W: Write>(out: W, report: &EquilibriumReport) -> Result<()> {
    let (_, gen) = split_labels(report);
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["sweep".to_string()];
    head.extend(headers("P_g", gen));
    w.write_record(&head)?;
    for s in &report.leader_trace {
        let mut rec = vec![s.sweep.to_string()];
        rec.extend(s.p_g.iter().map(|&v| num(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Microgrid generation per follower step: `phase, step, P_dg_<mg>…`.
pub fn write_plot_microgrid_generation<W: Write>(
    out: W,
    report: &EquilibriumReport,
    loads_mw: &[f64],
) -> Result<()> {
    let (mg, _) = split_labels(report);
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["phase".to_string(), "step".to_string()];
    head.extend(headers("P_dg", mg));
    w.write_record(&head)?;
    for row in &report.follower_trace {
        let mut rec = vec![row.phase.as_str().to_string(), row.step.step.to_string()];
        rec.extend(row.step.p_d.iter().zip(loads_mw).map(|(&p, &l)| num(p + l)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Every non-slack bus angle per follower step: `phase, step, theta_<bus>…`.
pub fn write_plot_bus_angles<W: Write>(
    out: W,
    report: &EquilibriumReport,
    config: &ScenarioConfig,
) -> Result<()> {
    let net = &config.network;
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["phase".to_string(), "step".to_string()];
    head.extend(headers("theta", &report.bus_labels));
    w.write_record(&head)?;
    for row in &report.follower_trace {
        let p_g = match row.phase {
            FollowerPhase::Initial => &report.initial_generation,
            FollowerPhase::Final => &report.p_g_star,
        };
        let mut p = row.step.p_d.clone();
        p.extend_from_slice(p_g);
        let theta = net.angles_from_injections(&p)?;
        let mut rec = vec![row.phase.as_str().to_string(), row.step.step.to_string()];
        rec.extend(theta.iter().map(|&v| num(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Which artifact groups to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitFlags {
    pub traces: bool,
    pub diagnostics: bool,
    pub plots: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            traces: true,
            diagnostics: true,
            plots: true,
        }
    }
}

/// Writes the report and the selected artifacts into `dir`, creating it if
/// needed. Returns the paths written.
pub fn write_artifacts(
    dir: &Path,
    report: &EquilibriumReport,
    config: &ScenarioConfig,
    emit: EmitFlags,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut create = |name: &str| -> Result<(fs::File, PathBuf)> {
        let path = dir.join(name);
        written.push(path.clone());
        Ok((fs::File::create(&path)?, path))
    };
    let (f, _) = create(REPORT_FILE)?;
    write_json(f, report)?;
    if emit.diagnostics {
        let (f, _) = create(DIAGNOSTICS_FILE)?;
        write_json(f, &report.diagnostics)?;
    }
    if emit.traces {
        write_follower_trace(create(FOLLOWER_TRACE_FILE)?.0, report)?;
        write_leader_trace(create(LEADER_TRACE_FILE)?.0, report)?;
    }
    if emit.plots {
        write_plot_generator_strategy(create(PLOT_GENERATOR_FILE)?.0, report)?;
        write_plot_microgrid_generation(
            create(PLOT_MICROGRID_FILE)?.0,
            report,
            config.network.loads_mw(),
        )?;
        write_plot_bus_angles(create(PLOT_ANGLE_FILE)?.0, report, config)?;
    }
    Ok(written)
}

fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// One row of a follower trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerTraceRow {
    pub phase: FollowerPhase,
    pub step: usize,
    pub scheme: FollowerScheme,
    pub p_g: Vec<f64>,
    pub p_d: Vec<f64>,
    pub theta_d: Vec<f64>,
    pub updated: Vec<bool>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerTrace {
    pub microgrid_buses: Vec<BusId>,
    pub generator_buses: Vec<BusId>,
    pub rows: Vec<FollowerTraceRow>,
}

fn bus_columns(head: &csv::StringRecord, prefix: &str) -> Result<Vec<BusId>> {
    let tag = format!("{prefix}_");
    head.iter()
        .filter_map(|h| h.strip_prefix(&tag))
        .map(|b| {
            b.parse()
                .map_err(|_| Error::Trace(format!("bad bus label in column `{prefix}_{b}`")))
        })
        .collect()
}

pub fn read_follower_trace<R: Read>(input: R) -> Result<FollowerTrace> {
    let mut r = csv::Reader::from_reader(input);
    let head = r.headers()?.clone();
    let gen = bus_columns(&head, "P_g")?;
    let mg = bus_columns(&head, "P_d")?;
    let (d, g) = (mg.len(), gen.len());
    let width = 3 + g + 3 * d + 1;
    if head.len() != width
        || head.get(0) != Some("phase")
        || head.get(width - 1) != Some("residual")
    {
        return Err(Error::Trace("unexpected follower trace header".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let at = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |what: &str| Error::Trace(format!("row {}: bad {what}", line + 1));
        let floats = |from: usize, n: usize| -> Result<Vec<f64>> {
            (from..from + n)
                .map(|i| at(i).parse::<f64>().map_err(|_| bad("number")))
                .collect()
        };
        let phase = match at(0) {
            "initial" => FollowerPhase::Initial,
            "final" => FollowerPhase::Final,
            _ => return Err(bad("phase")),
        };
        rows.push(FollowerTraceRow {
            phase,
            step: at(1).parse().map_err(|_| bad("step"))?,
            scheme: at(2).parse().map_err(|_| bad("scheme"))?,
            p_g: floats(3, g)?,
            p_d: floats(3 + g, d)?,
            theta_d: floats(3 + g + d, d)?,
            updated: (3 + g + 2 * d..3 + g + 3 * d)
                .map(|i| match at(i) {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    _ => Err(bad("update flag")),
                })
                .collect::<Result<_>>()?,
            residual: at(width - 1).parse().map_err(|_| bad("residual"))?,
        });
    }
    Ok(FollowerTrace {
        microgrid_buses: mg,
        generator_buses: gen,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayMismatch {
    pub phase: &'static str,
    pub step: usize,
    pub field: String,
    pub recorded: f64,
    pub recomputed: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ReplayReport {
    pub rows: usize,
    /// Steps whose update was recomputed from the preceding recorded state.
    pub steps_checked: usize,
    /// Steps that depend on noisy angle measurements, which the file does
    /// not record; these are covered by the full re-run comparison only.
    pub steps_skipped: usize,
    pub mismatches: Vec<ReplayMismatch>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Validates every recorded step against a fresh computation from the
/// previous recorded state and the recorded update mask. Comparisons are
/// bit-exact.
pub fn replay_follower_trace(config: &ScenarioConfig, trace: &FollowerTrace) -> Result<ReplayReport> {
    let net = &config.network;
    let idx = net.indexing();
    if trace.microgrid_buses != idx.microgrid_labels() || trace.generator_buses != idx.generator_labels()
    {
        return Err(Error::Trace(
            "trace bus columns do not match the scenario".into(),
        ));
    }
    let game = FollowerGame::new(net, config.microgrids.clone(), config.market)?;
    let noisy = config.solver.noise_std > 0.0;
    let mut report = ReplayReport {
        rows: trace.rows.len(),
        ..Default::default()
    };
    let mut push = |row: &FollowerTraceRow, field: String, recorded: f64, recomputed: f64| {
        if recorded.to_bits() != recomputed.to_bits() {
            report.mismatches.push(ReplayMismatch {
                phase: row.phase.as_str(),
                step: row.step,
                field,
                recorded,
                recomputed,
            });
        }
    };
    let mut prev: Option<&FollowerTraceRow> = None;
    let mut checked = 0;
    let mut skipped = 0;
    for row in &trace.rows {
        let theta = game.theta_d(&row.p_d, &row.p_g)?;
        for (i, (&a, &b)) in row.theta_d.iter().zip(&theta).enumerate() {
            push(row, format!("theta_d_{}", trace.microgrid_buses[i]), a, b);
        }
        let before = prev.filter(|p| p.phase == row.phase && p.step + 1 == row.step);
        if row.step > 0 {
            let Some(before) = before else {
                return Err(Error::Trace(format!(
                    "{} step {} does not follow its predecessor",
                    row.phase.as_str(),
                    row.step
                )));
            };
            let next = match row.scheme {
                FollowerScheme::Iua => Some(game.iua_step(&before.p_d, &row.p_g)),
                FollowerScheme::Rua => Some(game.rua_step_masked(&before.p_d, &row.p_g, &row.updated)),
                FollowerScheme::Pda if !noisy => Some(game.pda_step_masked(
                    &before.p_d,
                    &before.theta_d,
                    &row.updated,
                )?),
                FollowerScheme::Pda => None,
            };
            match next {
                Some(next) => {
                    checked += 1;
                    for (i, (&a, &b)) in row.p_d.iter().zip(&next).enumerate() {
                        push(row, format!("P_d_{}", trace.microgrid_buses[i]), a, b);
                    }
                    let residual = crate::linalg::max_abs_diff(&next, &before.p_d);
                    push(row, "residual".into(), row.residual, residual);
                }
                None => skipped += 1,
            }
        }
        prev = Some(row);
    }
    report.steps_checked = checked;
    report.steps_skipped = skipped;
    Ok(report)
}

/// Re-runs the scenario and renders its follower trace to bytes.
pub fn rerun_follower_trace(config: &ScenarioConfig) -> Result<Vec<u8>> {
    let report = run_algorithm1(config)?;
    let mut buf = Vec::new();
    write_follower_trace(&mut buf, &report)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ScenarioConfig {
        ScenarioConfig::from_path(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../scenarios/synthetic_in_regime.toml"
        ))
        .unwrap()
    }

    #[test]
    fn follower_trace_round_trips_bit_exactly() {
        let cfg = toy();
        let report = run_algorithm1(&cfg).unwrap();
        let mut buf = Vec::new();
        write_follower_trace(&mut buf, &report).unwrap();
        let trace = read_follower_trace(buf.as_slice()).unwrap();
        assert_eq!(trace.rows.len(), report.follower_trace.len());
        for (row, rec) in trace.rows.iter().zip(&report.follower_trace) {
            assert_eq!(row.step, rec.step.step);
            for (a, b) in row.p_d.iter().zip(&rec.step.p_d) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(row.residual.to_bits(), rec.step.residual.to_bits());
        }
    }

    #[test]
    fn replay_accepts_every_scheme() {
        for scheme in [FollowerScheme::Iua, FollowerScheme::Rua, FollowerScheme::Pda] {
            let mut cfg = toy();
            cfg.solver.follower_scheme = scheme;
            let report = run_algorithm1(&cfg).unwrap();
            let mut buf = Vec::new();
            write_follower_trace(&mut buf, &report).unwrap();
            let trace = read_follower_trace(buf.as_slice()).unwrap();
            let replay = replay_follower_trace(&cfg, &trace).unwrap();
            assert!(replay.passed(), "{scheme}: {:?}", replay.mismatches);
            assert_eq!(replay.steps_checked + 2, replay.rows);
        }
    }

    #[test]
    fn replay_flags_a_tampered_step() {
        let cfg = toy();
        let report = run_algorithm1(&cfg).unwrap();
        let mut buf = Vec::new();
        write_follower_trace(&mut buf, &report).unwrap();
        let mut trace = read_follower_trace(buf.as_slice()).unwrap();
        trace.rows[2].p_d[1] += 1e-9;
        let replay = replay_follower_trace(&cfg, &trace).unwrap();
        assert!(!replay.passed());
        assert!(replay.mismatches.iter().any(|m| m.step == 2));
    }

    #[test]
    fn leader_trace_header_order() {
        let report = run_algorithm1(&toy()).unwrap();
        let mut buf = Vec::new();
        write_leader_trace(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "sweep,P_g_1,P_g_5,mu_1,mu_5,theta_g_1,theta_g_5,residual"
        );
        assert_eq!(text.lines().count(), report.leader_trace.len() + 1);
    }

    #[test]
    fn artifacts_are_written() {
        let cfg = toy();
        let report = run_algorithm1(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_artifacts(dir.path(), &report, &cfg, EmitFlags::default()).unwrap();
        assert_eq!(files.len(), 7);
        let diag: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join(DIAGNOSTICS_FILE)).unwrap()).unwrap();
        assert!(diag.get("rho_m").is_some());
    }
}
