//! `optimize`, `simulate` and `sweep` drivers.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use formation_core::optimizer::{build_formation, theoretical_lower_bound, FormationGeometry};
use formation_core::sensing::{weight, SensingParams, TargetEstimate};
use formation_core::sim::{
    crlb_of_positions, run_episode, EpisodeSummary, EpisodeTrace, SafetyViolation, StepRecord, StopRule, World,
};
use formation_core::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BenchmarkFormation, RunConfig};
use crate::error::{io_err, CliError};

pub const OPTIMIZE_FILE: &str = "optimize.json";
pub const TRACE_JSONL_FILE: &str = "trace.jsonl";
pub const TRACE_CSV_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeReport {
    pub config_hash: String,
    pub seed: u64,
    pub agent_count: usize,
    pub altitude_m: f64,
    pub target_estimate: [f64; 2],
    pub elevation_deg: f64,
    pub elevation_rad: f64,
    pub ring_radius_m: f64,
    pub initial_rotation_rad: f64,
    pub azimuths_deg: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub weight: f64,
    pub bound: f64,
    pub crlb_at_formation: f64,
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn to_pretty_json(value: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

/// Solves for the optimal formation and reports it.
pub fn optimize(cfg: &RunConfig) -> Result<OptimizeReport, CliError> {
    let params = cfg.sensing_params()?;
    let estimate = cfg.target_estimate()?;
    let formation = cfg.formation_geometry()?;
    let positions = formation.planar_positions();
    let world = World {
        target: estimate,
        obstacles: Vec::new(),
        motion_noise_std: 0.0,
        dt: cfg.world.dt,
        rng_seed: cfg.seed(),
        guidance: formation_core::Guidance::Constant,
    };
    Ok(OptimizeReport {
        config_hash: cfg.hash(),
        seed: cfg.seed(),
        agent_count: formation.agent_count(),
        altitude_m: params.altitude_m(),
        target_estimate: [estimate.position.x, estimate.position.y],
        elevation_deg: formation.elevation_rad().to_degrees(),
        elevation_rad: formation.elevation_rad(),
        ring_radius_m: formation.ring_radius_m(),
        initial_rotation_rad: formation.initial_rotation_rad(),
        azimuths_deg: formation.azimuths_rad().iter().map(|a| a.to_degrees()).collect(),
        positions: positions.iter().map(|q| [q.x, q.y]).collect(),
        weight: weight(formation.elevation_rad(), &params)?,
        bound: theoretical_lower_bound(&params, formation.agent_count())?,
        crlb_at_formation: crlb_of_positions(positions, &world, &params)?,
    })
}

/// Writes `optimize.json` into `out_dir`.
pub fn cmd_optimize(cfg: &RunConfig, out_dir: &Path) -> Result<OptimizeReport, CliError> {
    let report = optimize(cfg)?;
    ensure_dir(out_dir)?;
    write_file(&out_dir.join(OPTIMIZE_FILE), &to_pretty_json(&report))?;
    Ok(report)
}

#[derive(Serialize)]
struct TraceLine<'a> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    record: &'a StepRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub episode: EpisodeSummary,
    pub violations: Vec<SafetyViolation>,
}

/// Runs the configured episode.
pub fn simulate(cfg: &RunConfig) -> Result<EpisodeTrace, CliError> {
    let sc = cfg.scenario()?;
    let stop = StopRule { displacement_tolerance: cfg.simulation.stop_tolerance, ..StopRule::default() };
    Ok(run_episode(&sc.initial, &sc.world, &sc.graph, &sc.disp, &sc.gains, &sc.params, cfg.simulation.max_steps, &stop))
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

/// Header and rows of the per-step plotting CSV.
pub fn trace_csv(trace: &EpisodeTrace, config_hash: &str, seed: u64) -> String {
    let mut out = String::from("t,crlb,cost,eta,min_clearance,min_pairwise,config_hash,seed\n");
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{config_hash},{seed}",
            r.time_s,
            fmt_opt(r.crlb),
            r.cost,
            r.eta,
            r.min_clearance,
            r.min_pairwise
        );
    }
    out
}

/// Runs the episode and writes `trace.jsonl`, `trace.csv` and `summary.json`.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<SimulationSummary, CliError> {
    let trace = simulate(cfg)?;
    let hash = cfg.hash();
    let seed = cfg.seed();
    ensure_dir(out_dir)?;

    let jsonl_path = out_dir.join(TRACE_JSONL_FILE);
    let file = fs::File::create(&jsonl_path).map_err(io_err(&jsonl_path))?;
    let mut writer = BufWriter::new(file);
    for record in &trace.records {
        let line = serde_json::to_string(&TraceLine { config_hash: &hash, seed, record }).expect("record serializes");
        writeln!(writer, "{line}").map_err(io_err(&jsonl_path))?;
    }
    writer.flush().map_err(io_err(&jsonl_path))?;

    write_file(&out_dir.join(TRACE_CSV_FILE), &trace_csv(&trace, &hash, seed))?;

    let summary = SimulationSummary {
        config_hash: hash,
        seed,
        episode: trace.summary.clone(),
        violations: trace.violations.clone(),
    };
    write_file(&out_dir.join(SUMMARY_FILE), &to_pretty_json(&summary))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub altitude_m: f64,
    pub formation: String,
    /// `inf` when the geometry is singular.
    pub crlb: f64,
    pub bound: f64,
    /// Number of geometries averaged into `crlb`.
    pub samples: usize,
}

fn crlb_or_inf(positions: &[Vec2], world: &World, params: &SensingParams) -> Result<f64, CliError> {
    match crlb_of_positions(positions, world, params) {
        Ok(v) => Ok(v),
        Err(formation_core::Error::SingularGeometry { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e.into()),
    }
}

/// Planar positions of a (deterministic) benchmark formation.
pub fn benchmark_positions(
    kind: &BenchmarkFormation,
    params: &SensingParams,
    target: &TargetEstimate,
    agent_count: usize,
    initial_rotation: f64,
) -> Result<Vec<Vec2>, CliError> {
    let h = params.altitude_m();
    let s = target.position;
    let optimal = build_formation(params, target, agent_count, initial_rotation)?;
    Ok(match *kind {
        BenchmarkFormation::Optimal => optimal.planar_positions().to_vec(),
        BenchmarkFormation::Line { length_m, offset_m } => (0..agent_count)
            .map(|m| {
                let frac = if agent_count > 1 { m as f64 / (agent_count - 1) as f64 } else { 0.5 };
                Vec2::new(s.x - 0.5 * length_m + frac * length_m, s.y + offset_m)
            })
            .collect(),
        BenchmarkFormation::ClusteredPolygon { radius_factor } => {
            let radius = radius_factor * optimal.ring_radius_m();
            FormationGeometry::regular(s, h, h.atan2(radius), agent_count, initial_rotation)?
                .planar_positions()
                .to_vec()
        }
        BenchmarkFormation::PolygonFixedElevation { elevation_deg } => {
            FormationGeometry::regular(s, h, elevation_deg.to_radians(), agent_count, initial_rotation)?
                .planar_positions()
                .to_vec()
        }
        BenchmarkFormation::RandomCloud { .. } => {
            return Err(CliError::Config("random-cloud has no single deterministic geometry".into()))
        }
    })
}

fn sweep_point(
    cfg: &RunConfig,
    altitude_index: usize,
    altitude: f64,
    kind: &BenchmarkFormation,
) -> Result<SweepRow, CliError> {
    let params = cfg.sensing_params()?.with_altitude(altitude)?;
    let target = cfg.target()?;
    let m = cfg.formation.agent_count;
    let world = World {
        target,
        obstacles: Vec::new(),
        motion_noise_std: 0.0,
        dt: cfg.world.dt,
        rng_seed: cfg.seed(),
        guidance: formation_core::Guidance::Constant,
    };
    let bound = theoretical_lower_bound(&params, m)?;
    let (crlb, samples) = match *kind {
        BenchmarkFormation::RandomCloud { extent_m, samples } => {
            // one stream per altitude, independent of scheduling
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed().wrapping_add(altitude_index as u64 * 0x9e37_79b9));
            let half = 0.5 * extent_m;
            let (mut sum, mut count) = (0.0, 0usize);
            for _ in 0..samples {
                let positions: Vec<Vec2> = (0..m)
                    .map(|_| {
                        target.position + Vec2::new(rng.random_range(-half..=half), rng.random_range(-half..=half))
                    })
                    .collect();
                let v = crlb_or_inf(&positions, &world, &params)?;
                if v.is_finite() {
                    sum += v;
                    count += 1;
                }
            }
            (if count > 0 { sum / count as f64 } else { f64::INFINITY }, count)
        }
        _ => {
            let positions = benchmark_positions(kind, &params, &target, m, cfg.formation.initial_rotation_rad)?;
            (crlb_or_inf(&positions, &world, &params)?, 1)
        }
    };
    Ok(SweepRow { altitude_m: altitude, formation: kind.label(), crlb, bound, samples })
}

/// CRLB of every formation at every altitude, in input order.
pub fn sweep(cfg: &RunConfig, altitudes: &[f64], formations: &[BenchmarkFormation]) -> Result<Vec<SweepRow>, CliError> {
    if altitudes.is_empty() {
        return Err(CliError::Config("sweep needs at least one altitude".into()));
    }
    let points: Vec<(usize, f64, &BenchmarkFormation)> =
        altitudes.iter().enumerate().flat_map(|(i, &h)| formations.iter().map(move |f| (i, h, f))).collect();
    points.par_iter().map(|&(i, h, f)| sweep_point(cfg, i, h, f)).collect()
}

pub fn sweep_csv(rows: &[SweepRow], config_hash: &str, seed: u64) -> String {
    let mut out = String::from("altitude_m,formation,crlb,bound,samples,config_hash,seed\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{config_hash},{seed}",
            r.altitude_m,
            r.formation,
            if r.crlb.is_finite() { r.crlb.to_string() } else { "inf".into() },
            r.bound,
            r.samples
        );
    }
    out
}

/// Runs the sweep and writes `sweep.csv`.
pub fn cmd_sweep(
    cfg: &RunConfig,
    altitudes: &[f64],
    formations: &[BenchmarkFormation],
    out_dir: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    let rows = sweep(cfg, altitudes, formations)?;
    ensure_dir(out_dir)?;
    write_file(&out_dir.join(SWEEP_FILE), &sweep_csv(&rows, &cfg.hash(), cfg.seed()))?;
    Ok(rows)
}

/// Environment variable that overrides the output directory of the config
/// file (but not `--out`).
pub const OUT_DIR_ENV: &str = "FORMATION_OUT_DIR";

pub fn resolve_out_dir(cli: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(dir) = cli {
        return dir.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
        return PathBuf::from(dir);
    }
    cfg.output.dir.as_deref().map_or_else(|| PathBuf::from("out"), PathBuf::from)
}
