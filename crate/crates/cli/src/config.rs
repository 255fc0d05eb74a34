//! Run configuration: TOML in, validated module types out.
//!
//! The receiver noise floor may be given either in dBm (`noise_floor_dbm`)
//! or in watts (`noise_floor_w`); the canonical form always stores watts.
//! [`RunConfig::canonical`] is the stable text that gets hashed into every
//! output file.

use formation_core::control::{CommGraph, ControlGains, SwarmState};
use formation_core::optimizer::{build_formation, displacement_set, DisplacementSet, FormationGeometry};
use formation_core::sensing::{SensingParams, TargetEstimate};
use formation_core::sim::{corridor_obstacles, random_deployment, Guidance, RectObstacle, World};
use formation_core::Vec2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Converts dBm to watts. Integer powers of ten are produced exactly
/// (`-90 dBm` is exactly `1e-12 W`).
pub fn dbm_to_watts(dbm: f64) -> f64 {
    let exponent = (dbm - 30.0) / 10.0;
    if exponent.fract() == 0.0 && exponent.abs() < 300.0 {
        format!("1e{}", exponent as i64).parse().expect("power of ten literal")
    } else {
        10f64.powf(exponent)
    }
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingSection {
    #[serde(default = "d::transmit_power_w")]
    pub transmit_power_w: f64,
    #[serde(default = "d::processing_gain")]
    pub processing_gain: f64,
    #[serde(default = "d::ref_channel_power")]
    pub ref_channel_power: f64,
    #[serde(default = "d::kappa")]
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_floor_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_floor_w: Option<f64>,
    #[serde(default = "d::altitude_m")]
    pub altitude_m: f64,
}

impl Default for SensingSection {
    fn default() -> Self {
        Self {
            transmit_power_w: d::transmit_power_w(),
            processing_gain: d::processing_gain(),
            ref_channel_power: d::ref_channel_power(),
            kappa: d::kappa(),
            noise_floor_dbm: None,
            noise_floor_w: Some(SensingParams::DEFAULT_NOISE_FLOOR_W),
            altitude_m: d::altitude_m(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSection {
    #[serde(default = "d::agent_count")]
    pub agent_count: usize,
    #[serde(default)]
    pub initial_rotation_rad: f64,
}

impl Default for FormationSection {
    fn default() -> Self {
        Self { agent_count: d::agent_count(), initial_rotation_rad: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    #[serde(default = "d::epsilon")]
    pub epsilon: f64,
    #[serde(default = "d::consensus_gain")]
    pub consensus_gain: f64,
    #[serde(default = "d::repulsion_gain")]
    pub repulsion_gain: f64,
    #[serde(default = "d::safety_radius_m")]
    pub safety_radius_m: f64,
    #[serde(default = "d::repulsion_cap")]
    pub repulsion_cap: f64,
    #[serde(default = "d::eta_min")]
    pub eta_min: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        let g = ControlGains::default();
        Self {
            epsilon: g.epsilon,
            consensus_gain: g.consensus_gain,
            repulsion_gain: g.repulsion_gain,
            safety_radius_m: g.safety_radius_m,
            repulsion_cap: g.repulsion_cap,
            eta_min: g.eta_min,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSection {
    /// Ring through all agents plus chords from the leader (agent 0).
    #[default]
    RingLeaderChords,
    Complete,
    Custom {
        adjacency: Vec<Vec<u8>>,
        #[serde(default)]
        leader: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    #[serde(default = "d::target")]
    pub target: [f64; 2],
    /// Error of the prior target estimate used to design the formation; the
    /// CRLB is always evaluated at the true target.
    #[serde(default)]
    pub estimate_offset: [f64; 2],
    #[serde(default = "d::dt")]
    pub dt: f64,
    #[serde(default = "d::motion_noise_std")]
    pub motion_noise_std: f64,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
}

impl Default for WorldSection {
    fn default() -> Self {
        Self {
            target: d::target(),
            estimate_offset: [0.0, 0.0],
            dt: d::dt(),
            motion_noise_std: d::motion_noise_std(),
            obstacles: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GuidanceSection {
    /// The leader flies to its slot of the optimal formation.
    Homing {
        #[serde(default = "d::max_speed")]
        max_speed: f64,
        #[serde(default = "d::homing_gain")]
        gain: f64,
        #[serde(default = "d::arrival_tolerance")]
        arrival_tolerance: f64,
    },
    Constant {
        velocity: [f64; 2],
    },
}

impl Default for GuidanceSection {
    fn default() -> Self {
        GuidanceSection::Homing {
            max_speed: d::max_speed(),
            gain: d::homing_gain(),
            arrival_tolerance: d::arrival_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeploymentSection {
    /// Uniform in the box `[min, max]`, drawn from the run seed.
    RandomBox {
        min: [f64; 2],
        max: [f64; 2],
    },
    Explicit {
        positions: Vec<[f64; 2]>,
    },
}

impl Default for DeploymentSection {
    fn default() -> Self {
        DeploymentSection::RandomBox { min: [-25.0, -25.0], max: [25.0, 25.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "d::seed")]
    pub seed: u64,
    #[serde(default = "d::max_steps")]
    pub max_steps: u64,
    #[serde(default = "d::stop_tolerance")]
    pub stop_tolerance: f64,
    #[serde(default)]
    pub noise_free: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { seed: d::seed(), max_steps: d::max_steps(), stop_tolerance: d::stop_tolerance(), noise_free: false }
    }
}

/// Benchmark formations for the altitude sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenchmarkFormation {
    Optimal,
    /// Agents uniform in a square of side `extent_m` centered on the
    /// target, CRLB averaged over `samples` draws.
    RandomCloud {
        #[serde(default = "d::cloud_extent")]
        extent_m: f64,
        #[serde(default = "d::cloud_samples")]
        samples: usize,
    },
    /// Agents evenly spaced on a segment of `length_m` parallel to the x axis,
    /// passing `offset_m` from the target's projection.
    Line {
        #[serde(default = "d::line_length")]
        length_m: f64,
        #[serde(default = "d::line_offset")]
        offset_m: f64,
    },
    /// Regular polygon with `radius_factor` times the optimal ring radius.
    ClusteredPolygon {
        #[serde(default = "d::radius_factor")]
        radius_factor: f64,
    },
    PolygonFixedElevation {
        elevation_deg: f64,
    },
}

impl BenchmarkFormation {
    pub fn label(&self) -> String {
        match self {
            BenchmarkFormation::Optimal => "optimal".into(),
            BenchmarkFormation::RandomCloud { .. } => "random-cloud".into(),
            BenchmarkFormation::Line { .. } => "line".into(),
            BenchmarkFormation::ClusteredPolygon { .. } => "clustered-polygon".into(),
            BenchmarkFormation::PolygonFixedElevation { elevation_deg } => {
                format!("polygon-fixed-elevation({elevation_deg})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "d::altitudes")]
    pub altitudes_m: Vec<f64>,
    #[serde(default = "d::formations")]
    pub formations: Vec<BenchmarkFormation>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { altitudes_m: d::altitudes(), formations: d::formations() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub sensing: SensingSection,
    #[serde(default)]
    pub formation: FormationSection,
    #[serde(default)]
    pub gains: GainsSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub world: WorldSection,
    #[serde(default)]
    pub guidance: GuidanceSection,
    #[serde(default)]
    pub deployment: DeploymentSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Module-level values built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: SensingParams,
    pub formation: FormationGeometry,
    pub disp: DisplacementSet,
    pub graph: CommGraph,
    pub gains: ControlGains,
    pub world: World,
    pub initial: SwarmState,
}

fn config_err(field: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {err}"))
}

fn vec2(v: [f64; 2]) -> Vec2 {
    Vec2::new(v[0], v[1])
}

impl RunConfig {
    /// Parses TOML text and normalizes it to canonical form.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.normalize()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Resolves the noise floor to watts.
    fn normalize(&mut self) -> Result<(), CliError> {
        let s = &mut self.sensing;
        let watts = match (s.noise_floor_dbm, s.noise_floor_w) {
            (Some(_), Some(_)) => {
                return Err(config_err("sensing", "give only one of noise_floor_dbm and noise_floor_w"))
            }
            (Some(dbm), None) => dbm_to_watts(dbm),
            (None, Some(w)) => w,
            (None, None) => SensingParams::DEFAULT_NOISE_FLOOR_W,
        };
        s.noise_floor_dbm = None;
        s.noise_floor_w = Some(watts);
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        self.scenario().map(|_| ())?;
        if self.sweep.altitudes_m.is_empty() {
            return Err(config_err("sweep.altitudes_m", "must not be empty"));
        }
        for (i, h) in self.sweep.altitudes_m.iter().enumerate() {
            self.sensing_params()?.with_altitude(*h).map_err(|e| config_err(&format!("sweep.altitudes_m[{i}]"), e))?;
        }
        for (i, f) in self.sweep.formations.iter().enumerate() {
            let field = format!("sweep.formations[{i}]");
            match *f {
                BenchmarkFormation::RandomCloud { extent_m, samples } if !(extent_m > 0.0) || samples == 0 => {
                    return Err(config_err(&field, "extent_m must be > 0 and samples >= 1"))
                }
                BenchmarkFormation::Line { length_m, .. } if !(length_m > 0.0) => {
                    return Err(config_err(&field, "length_m must be > 0"))
                }
                BenchmarkFormation::ClusteredPolygon { radius_factor } if !(radius_factor > 0.0) => {
                    return Err(config_err(&field, "radius_factor must be > 0"))
                }
                BenchmarkFormation::PolygonFixedElevation { elevation_deg }
                    if !(elevation_deg > 0.0 && elevation_deg < 90.0) =>
                {
                    return Err(config_err(&field, "elevation_deg must lie in (0, 90)"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Canonical TOML text (watts only, every field explicit).
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical text, ignoring
    /// the output directory.
    pub fn hash(&self) -> String {
        let mut experiment = self.clone();
        experiment.output = OutputSection::default();
        let digest = Sha256::digest(experiment.canonical().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn seed(&self) -> u64 {
        self.simulation.seed
    }

    pub fn sensing_params(&self) -> Result<SensingParams, CliError> {
        let s = &self.sensing;
        SensingParams::new(
            s.transmit_power_w,
            s.processing_gain,
            s.ref_channel_power,
            s.kappa,
            s.noise_floor_w.unwrap_or(SensingParams::DEFAULT_NOISE_FLOOR_W),
            s.altitude_m,
        )
        .map_err(|e| config_err("sensing", e))
    }

    pub fn target(&self) -> Result<TargetEstimate, CliError> {
        TargetEstimate::new(self.world.target[0], self.world.target[1]).map_err(|e| config_err("world.target", e))
    }

    /// Target estimate the formation is designed around.
    pub fn target_estimate(&self) -> Result<TargetEstimate, CliError> {
        let t = self.target()?;
        let o = self.world.estimate_offset;
        TargetEstimate::new(t.position.x + o[0], t.position.y + o[1])
            .map_err(|e| config_err("world.estimate_offset", e))
    }

    pub fn formation_geometry(&self) -> Result<FormationGeometry, CliError> {
        build_formation(
            &self.sensing_params()?,
            &self.target_estimate()?,
            self.formation.agent_count,
            self.formation.initial_rotation_rad,
        )
        .map_err(|e| config_err("formation", e))
    }

    pub fn gains(&self) -> ControlGains {
        let g = &self.gains;
        ControlGains {
            epsilon: g.epsilon,
            consensus_gain: g.consensus_gain,
            repulsion_gain: g.repulsion_gain,
            safety_radius_m: g.safety_radius_m,
            repulsion_cap: g.repulsion_cap,
            eta_min: g.eta_min,
        }
    }

    pub fn graph(&self) -> Result<CommGraph, CliError> {
        let m = self.formation.agent_count;
        let graph = match &self.graph {
            GraphSection::RingLeaderChords => CommGraph::ring_with_leader_chords(m),
            GraphSection::Complete => CommGraph::complete(m),
            GraphSection::Custom { adjacency, leader } => CommGraph::from_adjacency(adjacency, *leader),
        }
        .map_err(|e| config_err("graph", e))?;
        if graph.agent_count() != m {
            return Err(config_err("graph", format!("adjacency has {} agents, expected {m}", graph.agent_count())));
        }
        if graph.leader_index() != 0 {
            return Err(config_err("graph.leader", "the leader must be agent 0 (it owns azimuth theta0)"));
        }
        Ok(graph)
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let params = self.sensing_params()?;
        let formation = self.formation_geometry()?;
        let graph = self.graph()?;
        let gains = self.gains();
        gains.check_stability(&graph).map_err(|e| config_err("gains", e))?;

        let obstacles = self
            .world
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| {
                RectObstacle::new(o.x_min, o.x_max, o.y_min, o.y_max)
                    .map_err(|e| config_err(&format!("world.obstacles[{i}]"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let (guidance, velocity) = match self.guidance {
            GuidanceSection::Homing { max_speed, gain, arrival_tolerance } => {
                let goal = formation.planar_positions()[0];
                (Guidance::Homing { goal: [goal.x, goal.y], max_speed, gain, arrival_tolerance }, Vec2::zeros())
            }
            GuidanceSection::Constant { velocity } => (Guidance::Constant, vec2(velocity)),
        };
        let disp = displacement_set(&formation, velocity);
        let world = World {
            target: self.target()?,
            obstacles,
            motion_noise_std: if self.simulation.noise_free { 0.0 } else { self.world.motion_noise_std },
            dt: self.world.dt,
            rng_seed: self.simulation.seed,
            guidance,
        };
        world.validate().map_err(|e| config_err("world", e))?;
        if !(self.simulation.stop_tolerance > 0.0) {
            return Err(config_err("simulation.stop_tolerance", "must be > 0"));
        }

        let m = self.formation.agent_count;
        let positions = match &self.deployment {
            DeploymentSection::RandomBox { min, max } => {
                if !(min[0] <= max[0] && min[1] <= max[1]) {
                    return Err(config_err("deployment", "min must not exceed max"));
                }
                // separate stream from the motion noise
                let mut rng = ChaCha8Rng::seed_from_u64(self.simulation.seed ^ 0x5eed_de91_0e00_0001);
                random_deployment(m, vec2(*min), vec2(*max), &mut rng)
            }
            DeploymentSection::Explicit { positions } => {
                if positions.len() != m {
                    return Err(config_err(
                        "deployment.positions",
                        format!("{} positions given for {m} agents", positions.len()),
                    ));
                }
                positions.iter().map(|p| vec2(*p)).collect()
            }
        };

        Ok(Scenario { params, formation, disp, graph, gains, world, initial: SwarmState::at_rest(positions) })
    }

    /// Default experiment with the canonical two-block corridor between the
    /// origin and the target.
    pub fn corridor() -> Self {
        let mut cfg = RunConfig::default();
        let target = vec2(cfg.world.target);
        let blocks = corridor_obstacles(Vec2::zeros(), target, 0.6, 28.0, 6.0, 40.0).expect("valid corridor");
        cfg.world.obstacles = blocks
            .iter()
            .map(|b| ObstacleSpec { x_min: b.x_min, x_max: b.x_max, y_min: b.y_min, y_max: b.y_max })
            .collect();
        cfg
    }
}

/// Field defaults.
mod d {
    use super::BenchmarkFormation;
    use formation_core::sensing::SensingParams;

    pub fn transmit_power_w() -> f64 {
        SensingParams::DEFAULT_TRANSMIT_POWER_W
    }
    pub fn processing_gain() -> f64 {
        SensingParams::DEFAULT_PROCESSING_GAIN
    }
    pub fn ref_channel_power() -> f64 {
        SensingParams::DEFAULT_REF_CHANNEL_POWER
    }
    pub fn kappa() -> f64 {
        SensingParams::DEFAULT_KAPPA
    }
    pub fn altitude_m() -> f64 {
        SensingParams::DEFAULT_ALTITUDE_M
    }
    pub fn agent_count() -> usize {
        6
    }
    pub fn epsilon() -> f64 {
        0.01
    }
    pub fn consensus_gain() -> f64 {
        0.2
    }
    pub fn repulsion_gain() -> f64 {
        20.0
    }
    pub fn safety_radius_m() -> f64 {
        5.0
    }
    pub fn repulsion_cap() -> f64 {
        5.0
    }
    pub fn eta_min() -> f64 {
        0.2
    }
    pub fn target() -> [f64; 2] {
        [80.0, 90.0]
    }
    pub fn dt() -> f64 {
        0.1
    }
    pub fn motion_noise_std() -> f64 {
        0.01
    }
    pub fn max_speed() -> f64 {
        1.5
    }
    pub fn homing_gain() -> f64 {
        0.5
    }
    pub fn arrival_tolerance() -> f64 {
        1e-3
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn max_steps() -> u64 {
        20_000
    }
    pub fn stop_tolerance() -> f64 {
        1e-3
    }
    pub fn cloud_extent() -> f64 {
        50.0
    }
    pub fn cloud_samples() -> usize {
        200
    }
    pub fn line_length() -> f64 {
        40.0
    }
    pub fn line_offset() -> f64 {
        10.0
    }
    pub fn radius_factor() -> f64 {
        0.25
    }
    pub fn altitudes() -> Vec<f64> {
        (1..=6).map(|i| 10.0 * i as f64).collect()
    }
    pub fn formations() -> Vec<BenchmarkFormation> {
        vec![
            BenchmarkFormation::Optimal,
            BenchmarkFormation::RandomCloud { extent_m: cloud_extent(), samples: cloud_samples() },
            BenchmarkFormation::Line { length_m: line_length(), offset_m: line_offset() },
            BenchmarkFormation::ClusteredPolygon { radius_factor: radius_factor() },
            BenchmarkFormation::PolygonFixedElevation { elevation_deg: 30.0 },
        ]
    }
}
