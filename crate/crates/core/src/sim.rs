//! Environment, discrete-time swarm dynamics and episode recording.
//!
//! Agents follow the first-order model
//!
//! ```text
//! q_{m,k+1} = q_{m,k} + u_{m,k} + g_{m,k} dT + n_{m,k}
//! ```
//!
//! with `g_{m,k}` the agent's consensus velocity estimate, `u_{m,k}` the
//! formation control and `n_{m,k} ~ N(0, sigma^2 I)` motion noise drawn from a
//! seeded generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::control::{
    consensus_velocity_step, control_input, edge_displacement_error, scale_factor, total_cost, CommGraph, ControlGains,
    ObstacleField, Proximity, SwarmState,
};
use crate::error::{invalid, Result};
use crate::optimizer::{theoretical_lower_bound, DisplacementSet};
use crate::sensing::{crlb_trace, target_fim, AgentPose, SensingParams, TargetEstimate};
use crate::Vec2;

/// Axis-aligned rectangular obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RectObstacle {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl RectObstacle {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return invalid(format!("degenerate rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"));
        }
        if ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return invalid("rectangle bounds must be finite");
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    /// Outward normal of the face closest to `p`.
    fn nearest_face_normal(&self, p: Vec2) -> Vec2 {
        let faces = [
            (p.x - self.x_min, Vec2::new(-1.0, 0.0)),
            (self.x_max - p.x, Vec2::new(1.0, 0.0)),
            (p.y - self.y_min, Vec2::new(0.0, -1.0)),
            (self.y_max - p.y, Vec2::new(0.0, 1.0)),
        ];
        faces.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)).map(|(_, n)| n).unwrap_or(Vec2::new(1.0, 0.0))
    }
}

/// Closest point of the rectangle to `position` (componentwise clamp).
pub fn nearest_point_on_obstacle(position: Vec2, obstacle: &RectObstacle) -> Vec2 {
    Vec2::new(position.x.clamp(obstacle.x_min, obstacle.x_max), position.y.clamp(obstacle.y_min, obstacle.y_max))
}

/// Source of the leader's reference velocity `v*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Guidance {
    /// `v*` is the displacement set's global velocity.
    Constant,
    /// The leader steers toward `goal` (its slot in the target formation):
    /// `v* = gain (goal - q_leader)`, saturated at `max_speed`.
    Homing { goal: [f64; 2], max_speed: f64, gain: f64, arrival_tolerance: f64 },
}

impl Guidance {
    pub fn reference_velocity(&self, leader_position: Vec2, disp: &DisplacementSet) -> Vec2 {
        match *self {
            Guidance::Constant => disp.global_velocity,
            Guidance::Homing { goal, max_speed, gain, .. } => {
                let v = gain * (Vec2::new(goal[0], goal[1]) - leader_position);
                let speed = v.norm();
                if speed > max_speed {
                    v * (max_speed / speed)
                } else {
                    v
                }
            }
        }
    }

    fn arrived(&self, leader_position: Vec2) -> bool {
        match *self {
            Guidance::Constant => true,
            Guidance::Homing { goal, arrival_tolerance, .. } => {
                (Vec2::new(goal[0], goal[1]) - leader_position).norm() < arrival_tolerance
            }
        }
    }
}

/// Target, obstacles and motion-noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub target: TargetEstimate,
    pub obstacles: Vec<RectObstacle>,
    /// Per-axis standard deviation of the motion disturbance, meters.
    pub motion_noise_std: f64,
    /// Sampling interval, seconds.
    pub dt: f64,
    pub rng_seed: u64,
    pub guidance: Guidance,
}

impl World {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.motion_noise_std >= 0.0 && self.motion_noise_std.is_finite()) {
            return invalid(format!("motion noise std must be >= 0, got {}", self.motion_noise_std));
        }
        if let Guidance::Homing { max_speed, gain, arrival_tolerance, .. } = self.guidance {
            if !(max_speed > 0.0 && gain > 0.0 && arrival_tolerance > 0.0) {
                return invalid("homing guidance needs positive speed, gain and tolerance");
            }
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }
}

/// Smallest distance from `position` to any obstacle together with the
/// closest point; `(inf, None)` when the world has no obstacles.
pub fn min_clearance(position: Vec2, world: &World) -> (f64, Option<Vec2>) {
    world
        .obstacles
        .iter()
        .map(|o| {
            let p = nearest_point_on_obstacle(position, o);
            ((position - p).norm(), Some(p))
        })
        .fold((f64::INFINITY, None), |best, cand| if cand.0 < best.0 { cand } else { best })
}

impl ObstacleField for World {
    fn nearest(&self, position: Vec2) -> Option<Proximity> {
        let (distance, index) = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| ((position - nearest_point_on_obstacle(position, o)).norm(), i))
            .min_by(|a, b| a.0.total_cmp(&b.0))?;
        let obstacle = &self.obstacles[index];
        let point = nearest_point_on_obstacle(position, obstacle);
        let escape_direction =
            if distance > 0.0 { (position - point) / distance } else { obstacle.nearest_face_normal(position) };
        Some(Proximity { distance, point, escape_direction })
    }
}

/// Two axis-aligned blocks leaving a gap of `gap_width` centered on the
/// straight segment from `start` to `goal`.
///
/// The blocks form a wall of thickness `thickness` across the dominant axis
/// of travel, placed at fraction `position` of the way; each block extends
/// `span` meters away from the gap.
pub fn corridor_obstacles(
    start: Vec2,
    goal: Vec2,
    position: f64,
    gap_width: f64,
    thickness: f64,
    span: f64,
) -> Result<[RectObstacle; 2]> {
    let center = start + position * (goal - start);
    let travel = goal - start;
    let (half_gap, half_thick) = (0.5 * gap_width, 0.5 * thickness);
    if travel.x.abs() >= travel.y.abs() {
        // wall across x: blocks above and below the gap
        Ok([
            RectObstacle::new(
                center.x - half_thick,
                center.x + half_thick,
                center.y + half_gap,
                center.y + half_gap + span,
            )?,
            RectObstacle::new(
                center.x - half_thick,
                center.x + half_thick,
                center.y - half_gap - span,
                center.y - half_gap,
            )?,
        ])
    } else {
        Ok([
            RectObstacle::new(
                center.x + half_gap,
                center.x + half_gap + span,
                center.y - half_thick,
                center.y + half_thick,
            )?,
            RectObstacle::new(
                center.x - half_gap - span,
                center.x - half_gap,
                center.y - half_thick,
                center.y + half_thick,
            )?,
        ])
    }
}

/// Uniform random positions in the box `[lo, hi]`.
pub fn random_deployment(agent_count: usize, lo: Vec2, hi: Vec2, rng: &mut impl Rng) -> Vec<Vec2> {
    (0..agent_count).map(|_| Vec2::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y))).collect()
}

/// `tr(J^-1)` for agents hovering at altitude `H` above `positions`.
pub fn crlb_of_positions(positions: &[Vec2], world: &World, params: &SensingParams) -> Result<f64> {
    if positions.is_empty() {
        return invalid("no agent positions");
    }
    let poses =
        positions.iter().map(|q| AgentPose::from_planar(*q, &world.target, params)).collect::<Result<Vec<_>>>()?;
    crlb_trace(&target_fim(&poses, params))
}

/// Smallest distance between any two agents (`inf` for a single agent).
pub fn min_pairwise_distance(positions: &[Vec2]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            best = best.min((a - b).norm());
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyViolation {
    pub step: u64,
    pub agent: usize,
    pub position: [f64; 2],
}

/// Metrics of one transition `k -> k + 1`, evaluated at the state of step `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub time_s: f64,
    pub positions: Vec<[f64; 2]>,
    pub eta: f64,
    pub reference_velocity: [f64; 2],
    pub control_norms: Vec<f64>,
    /// `None` when the instantaneous geometry is singular.
    pub crlb: Option<f64>,
    pub cost: f64,
    pub displacement_error: f64,
    pub velocity_error: f64,
    pub min_clearance: f64,
    pub min_pairwise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub converged: bool,
    pub steps: u64,
    pub final_crlb: Option<f64>,
    pub bound: Option<f64>,
    pub final_displacement_error: f64,
    pub final_eta: f64,
    pub safety_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeTrace {
    pub records: Vec<StepRecord>,
    pub violations: Vec<SafetyViolation>,
    pub summary: EpisodeSummary,
    #[serde(skip)]
    pub final_state: Option<SwarmState>,
}

/// Everything produced by a single [`step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: SwarmState,
    pub reference_velocity: Vec2,
    pub controls: Vec<Vec2>,
    pub contacts: Vec<usize>,
}

/// Largest disagreement between an agent's velocity estimate and `v*`.
pub fn velocity_error(state: &SwarmState, reference: Vec2) -> f64 {
    state.velocity_estimates.iter().map(|v| (v - reference).norm()).fold(0.0, f64::max)
}

/// Advances the swarm by one sampling interval.
pub fn step(
    state: &SwarmState,
    world: &World,
    graph: &CommGraph,
    disp: &DisplacementSet,
    gains: &ControlGains,
    rng: &mut impl Rng,
) -> StepOutcome {
    let leader = graph.leader_index();
    let reference = world.guidance.reference_velocity(state.positions[leader], disp);
    let control = control_input(state, graph, disp, gains, world);

    let noise = Normal::new(0.0, world.motion_noise_std).ok().filter(|_| world.motion_noise_std > 0.0);
    let positions: Vec<Vec2> = state
        .positions
        .iter()
        .enumerate()
        .map(|(m, q)| {
            // the leader knows v* exactly
            let g = if m == leader { reference } else { state.velocity_estimates[m] };
            let mut next = q + control.inputs[m] + g * world.dt;
            if let Some(n) = &noise {
                next += Vec2::new(n.sample(rng), n.sample(rng));
            }
            next
        })
        .collect();

    let velocity_estimates = consensus_velocity_step(state, graph, reference, gains);
    let mut last_outward = state.last_outward.clone();
    for (slot, seen) in last_outward.iter_mut().zip(&control.outward) {
        if seen.is_some() {
            *slot = *seen;
        }
    }
    let mut next = SwarmState {
        positions,
        velocity_estimates,
        scale: state.scale,
        step_index: state.step_index + 1,
        last_outward,
    };
    let centroid = next.centroid();
    next.scale = scale_factor(centroid, disp.nominal_diameter(), world.clearance(centroid), gains, state.scale);

    StepOutcome { next, reference_velocity: reference, controls: control.inputs, contacts: control.contacts }
}

/// Episode stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// Bound on the edge-summed shape error, m^2.
    pub displacement_tolerance: f64,
    pub min_eta: f64,
    /// Bound on `max_m |v_m - v*|`, m/s.
    pub velocity_tolerance: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { displacement_tolerance: 1e-3, min_eta: 0.999, velocity_tolerance: 1e-6 }
    }
}

/// Runs [`step`] until the stop rule holds or `max_steps` transitions have
/// been taken. Non-convergence is reported in the summary.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    initial: &SwarmState,
    world: &World,
    graph: &CommGraph,
    disp: &DisplacementSet,
    gains: &ControlGains,
    params: &SensingParams,
    max_steps: u64,
    stop: &StopRule,
) -> EpisodeTrace {
    let mut rng = world.rng();
    let mut state = initial.clone();
    let mut records = Vec::new();
    let mut violations = Vec::new();
    let mut converged = false;
    let leader = graph.leader_index();

    for _ in 0..max_steps {
        let outcome = step(&state, world, graph, disp, gains, &mut rng);
        let cost = total_cost(&state, graph, disp, world.dt, &outcome.next.positions, outcome.reference_velocity)
            .unwrap_or(f64::NAN);
        let min_clear = state.positions.iter().map(|q| world.clearance(*q)).fold(f64::INFINITY, f64::min);
        for &agent in &outcome.contacts {
            let q = state.positions[agent];
            violations.push(SafetyViolation { step: state.step_index, agent, position: [q.x, q.y] });
        }
        let mut vel_state = state.clone();
        vel_state.velocity_estimates[leader] = outcome.reference_velocity;
        records.push(StepRecord {
            step: state.step_index,
            time_s: state.step_index as f64 * world.dt,
            positions: state.positions.iter().map(|q| [q.x, q.y]).collect(),
            eta: state.scale,
            reference_velocity: [outcome.reference_velocity.x, outcome.reference_velocity.y],
            control_norms: outcome.controls.iter().map(|u| u.norm()).collect(),
            crlb: crlb_of_positions(&state.positions, world, params).ok(),
            cost,
            displacement_error: edge_displacement_error(&state, graph, disp, 1.0),
            velocity_error: velocity_error(&vel_state, outcome.reference_velocity),
            min_clearance: min_clear,
            min_pairwise: min_pairwise_distance(&state.positions),
        });
        state = outcome.next;

        let reference = world.guidance.reference_velocity(state.positions[leader], disp);
        let mut settled = state.clone();
        settled.velocity_estimates[leader] = reference;
        if edge_displacement_error(&state, graph, disp, 1.0) < stop.displacement_tolerance
            && state.scale >= stop.min_eta
            && velocity_error(&settled, reference) < stop.velocity_tolerance
            && world.guidance.arrived(state.positions[leader])
        {
            converged = true;
            break;
        }
    }

    let summary = EpisodeSummary {
        converged,
        steps: records.len() as u64,
        final_crlb: crlb_of_positions(&state.positions, world, params).ok(),
        bound: theoretical_lower_bound(params, state.agent_count()).ok(),
        final_displacement_error: edge_displacement_error(&state, graph, disp, 1.0),
        final_eta: state.scale,
        safety_violations: violations.len(),
    };
    EpisodeTrace { records, violations, summary, final_state: Some(state) }
}
