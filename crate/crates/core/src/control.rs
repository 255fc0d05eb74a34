//! Distributed formation control: leader-pinned velocity consensus,
//! displacement-based shape control, obstacle repulsion and adaptive
//! formation scaling.
//!
//! All functions here are pure: they read a [`SwarmState`] and return the
//! quantities for the next step. State is advanced by the simulator.

use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};
use crate::optimizer::DisplacementSet;
use crate::Vec2;

/// Undirected communication graph with a designated leader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    agent_count: usize,
    adjacency: Vec<bool>,
    leader_index: usize,
}

impl CommGraph {
    /// Builds a graph from a dense 0/1 adjacency matrix.
    pub fn from_adjacency(adjacency: &[Vec<u8>], leader_index: usize) -> Result<Self> {
        let n = adjacency.len();
        let mut flat = vec![false; n * n];
        for (m, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidGraph(format!("row {m} has {} entries, expected {n}", row.len())));
            }
            for (p, &a) in row.iter().enumerate() {
                match a {
                    0 => {}
                    1 => flat[m * n + p] = true,
                    other => return Err(Error::InvalidGraph(format!("entry ({m}, {p}) = {other} is not binary"))),
                }
            }
        }
        Self::from_flat(n, flat, leader_index)
    }

    pub fn from_edges(agent_count: usize, edges: &[(usize, usize)], leader_index: usize) -> Result<Self> {
        let mut flat = vec![false; agent_count * agent_count];
        for &(m, p) in edges {
            if m >= agent_count || p >= agent_count {
                return Err(Error::InvalidGraph(format!("edge ({m}, {p}) out of range for {agent_count} agents")));
            }
            if m == p {
                return Err(Error::InvalidGraph(format!("self loop at {m}")));
            }
            flat[m * agent_count + p] = true;
            flat[p * agent_count + m] = true;
        }
        Self::from_flat(agent_count, flat, leader_index)
    }

    /// Ring `0 - 1 - ... - (M-1) - 0` plus chords from the leader (agent 0)
    /// to every other agent.
    pub fn ring_with_leader_chords(agent_count: usize) -> Result<Self> {
        let mut edges = Vec::new();
        if agent_count >= 2 {
            for m in 0..agent_count {
                let next = (m + 1) % agent_count;
                if next != m {
                    edges.push((m, next));
                }
            }
            for m in 1..agent_count {
                edges.push((0, m));
            }
        }
        Self::from_edges(agent_count, &edges, 0)
    }

    pub fn complete(agent_count: usize) -> Result<Self> {
        let edges: Vec<_> = (0..agent_count).flat_map(|m| (m + 1..agent_count).map(move |p| (m, p))).collect();
        Self::from_edges(agent_count, &edges, 0)
    }

    fn from_flat(agent_count: usize, adjacency: Vec<bool>, leader_index: usize) -> Result<Self> {
        if agent_count == 0 {
            return Err(Error::InvalidGraph("graph has no agents".into()));
        }
        if leader_index >= agent_count {
            return Err(Error::InvalidGraph(format!("leader {leader_index} out of range")));
        }
        for m in 0..agent_count {
            if adjacency[m * agent_count + m] {
                return Err(Error::InvalidGraph(format!("nonzero diagonal at {m}")));
            }
            for p in 0..m {
                if adjacency[m * agent_count + p] != adjacency[p * agent_count + m] {
                    return Err(Error::InvalidGraph(format!("asymmetric entry ({m}, {p})")));
                }
            }
        }
        let graph = Self { agent_count, adjacency, leader_index };
        if !graph.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(graph)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.agent_count];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(m) = queue.pop_front() {
            for p in self.neighbors(m) {
                if !seen[p] {
                    seen[p] = true;
                    queue.push_back(p);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn leader_index(&self) -> usize {
        self.leader_index
    }

    pub fn is_adjacent(&self, m: usize, p: usize) -> bool {
        self.adjacency[m * self.agent_count + p]
    }

    pub fn neighbors(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.agent_count).filter(move |&p| self.is_adjacent(m, p))
    }

    pub fn degree(&self, m: usize) -> usize {
        self.neighbors(m).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.agent_count).map(|m| self.degree(m)).max().unwrap_or(0)
    }

    /// Largest degree among agents that run the consensus update.
    pub fn max_follower_degree(&self) -> usize {
        (0..self.agent_count).filter(|&m| m != self.leader_index).map(|m| self.degree(m)).max().unwrap_or(0)
    }

    /// Undirected edges `(m, p)` with `m < p`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.agent_count)
            .flat_map(move |m| (m + 1..self.agent_count).filter(move |&p| self.is_adjacent(m, p)).map(move |p| (m, p)))
    }

    /// Dense 0/1 adjacency rows.
    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        (0..self.agent_count).map(|m| (0..self.agent_count).map(|p| self.is_adjacent(m, p) as u8).collect()).collect()
    }
}

/// Positions and velocity estimates of the swarm at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub positions: Vec<Vec2>,
    pub velocity_estimates: Vec<Vec2>,
    /// Global formation scaling factor `eta_k`.
    pub scale: f64,
    pub step_index: u64,
    /// Last observed outward direction (obstacle to agent) per agent, used
    /// when an agent ends up touching an obstacle.
    pub last_outward: Vec<Option<Vec2>>,
}

impl SwarmState {
    /// Agents at rest with unit scale.
    pub fn at_rest(positions: Vec<Vec2>) -> Self {
        let n = positions.len();
        Self {
            positions,
            velocity_estimates: vec![Vec2::zeros(); n],
            scale: 1.0,
            step_index: 0,
            last_outward: vec![None; n],
        }
    }

    pub fn agent_count(&self) -> usize {
        self.positions.len()
    }

    pub fn centroid(&self) -> Vec2 {
        self.positions.iter().sum::<Vec2>() / self.positions.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGains {
    /// Displacement-control step gain.
    pub epsilon: f64,
    /// Velocity-consensus gain.
    pub consensus_gain: f64,
    pub repulsion_gain: f64,
    pub safety_radius_m: f64,
    /// Maximum repulsion magnitude, meters per step.
    pub repulsion_cap: f64,
    pub eta_min: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            consensus_gain: 0.2,
            repulsion_gain: 20.0,
            safety_radius_m: 5.0,
            repulsion_cap: 5.0,
            eta_min: 0.2,
        }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("consensus_gain", self.consensus_gain),
            ("safety_radius_m", self.safety_radius_m),
            ("repulsion_cap", self.repulsion_cap),
            ("eta_min", self.eta_min),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return invalid(format!("{name} must be finite and > 0, got {value}"));
            }
        }
        if !(self.repulsion_gain.is_finite() && self.repulsion_gain >= 0.0) {
            return invalid(format!("repulsion_gain must be >= 0, got {}", self.repulsion_gain));
        }
        if self.eta_min > 1.0 {
            return invalid(format!("eta_min must be <= 1, got {}", self.eta_min));
        }
        Ok(())
    }

    /// Sufficient conditions for both linear update laws to be contractions
    /// on `graph`: `gamma (d_f + 1) < 1` over the followers and
    /// `2 epsilon d_max < 1`.
    pub fn check_stability(&self, graph: &CommGraph) -> Result<()> {
        self.validate()?;
        let consensus = self.consensus_gain * (graph.max_follower_degree() + 1) as f64;
        if consensus >= 1.0 {
            return invalid(format!(
                "consensus gain {} too large for follower degree {} (gamma (d + 1) = {consensus})",
                self.consensus_gain,
                graph.max_follower_degree()
            ));
        }
        let shape = 2.0 * self.epsilon * graph.max_degree() as f64;
        if shape >= 1.0 {
            return invalid(format!(
                "epsilon {} too large for max degree {} (2 epsilon d = {shape})",
                self.epsilon,
                graph.max_degree()
            ));
        }
        Ok(())
    }
}

/// One leader-pinned consensus iteration of the velocity estimates.
///
/// Followers apply
/// `v_m <- v_m - gamma [ sum_{p in N_m \ leader} (v_m - v_p) + a_{m,leader} (v_m - v*) ]`;
/// the leader outputs `v*`.
pub fn consensus_velocity_step(
    state: &SwarmState,
    graph: &CommGraph,
    target_velocity: Vec2,
    gains: &ControlGains,
) -> Vec<Vec2> {
    let leader = graph.leader_index();
    let v = &state.velocity_estimates;
    (0..graph.agent_count())
        .map(|m| {
            if m == leader {
                return target_velocity;
            }
            let disagreement = graph
                .neighbors(m)
                .map(|p| if p == leader { v[m] - target_velocity } else { v[m] - v[p] })
                .sum::<Vec2>();
            v[m] - gains.consensus_gain * disagreement
        })
        .collect()
}

/// Pairwise shape error of agent `m`: `sum_p a_mp ||q_m - q_p - scale delta_pm||^2`.
pub fn displacement_error_of(
    state: &SwarmState,
    graph: &CommGraph,
    disp: &DisplacementSet,
    m: usize,
    scale: f64,
) -> f64 {
    let q = &state.positions;
    graph.neighbors(m).map(|p| (q[m] - q[p] - scale * disp.offset(p, m)).norm_squared()).sum()
}

/// Shape error summed once per undirected edge.
pub fn edge_displacement_error(state: &SwarmState, graph: &CommGraph, disp: &DisplacementSet, scale: f64) -> f64 {
    let q = &state.positions;
    graph.edges().map(|(m, p)| (q[m] - q[p] - scale * disp.offset(p, m)).norm_squared()).sum()
}

/// Local cost of agent `m`: pairwise shape error plus the squared mismatch
/// between its realized velocity and the reference velocity.
pub fn local_cost(
    state: &SwarmState,
    graph: &CommGraph,
    disp: &DisplacementSet,
    agent: usize,
    dt: f64,
    next_position: Vec2,
    reference_velocity: Vec2,
) -> Result<f64> {
    if !(dt > 0.0) {
        return invalid(format!("dt must be > 0, got {dt}"));
    }
    let shape = displacement_error_of(state, graph, disp, agent, 1.0);
    let velocity = (next_position - state.positions[agent]) / dt - reference_velocity;
    Ok(shape + velocity.norm_squared())
}

/// Sum of [`local_cost`] over all agents.
pub fn total_cost(
    state: &SwarmState,
    graph: &CommGraph,
    disp: &DisplacementSet,
    dt: f64,
    next_positions: &[Vec2],
    reference_velocity: Vec2,
) -> Result<f64> {
    (0..state.agent_count()).map(|m| local_cost(state, graph, disp, m, dt, next_positions[m], reference_velocity)).sum()
}

/// `u_m = -epsilon sum_p a_mp (q_m - q_p - scale delta_pm)`.
///
/// This is `-(epsilon / 2)` times the gradient of agent `m`'s shape error;
/// the factor one half is absorbed into `epsilon`.
pub fn displacement_control(
    state: &SwarmState,
    graph: &CommGraph,
    disp: &DisplacementSet,
    gains: &ControlGains,
    scale: f64,
) -> Vec<Vec2> {
    let q = &state.positions;
    (0..graph.agent_count())
        .map(|m| {
            let error: Vec2 = graph.neighbors(m).map(|p| q[m] - q[p] - scale * disp.offset(p, m)).sum();
            -gains.epsilon * error
        })
        .collect()
}

/// Repulsive potential `U = E/2 (1/l - 1/l_safe)^2` inside the safety radius.
pub fn repulsive_potential(distance: f64, gains: &ControlGains) -> f64 {
    if distance >= gains.safety_radius_m {
        return 0.0;
    }
    let gap = 1.0 / distance - 1.0 / gains.safety_radius_m;
    0.5 * gains.repulsion_gain * gap * gap
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Repulsion {
    pub vector: Vec2,
    /// Agent touches or penetrates the obstacle.
    pub contact: bool,
}

/// Negative gradient of the repulsive potential, pointing from the nearest
/// obstacle point toward the agent and capped at `repulsion_cap`.
///
/// When the agent sits on the obstacle (`l = 0`) the direction is undefined;
/// the capped push is applied along `fallback_direction` and the contact is
/// flagged.
pub fn repulsion(
    position: Vec2,
    nearest_obstacle_point: Vec2,
    gains: &ControlGains,
    fallback_direction: Vec2,
) -> Repulsion {
    let offset = position - nearest_obstacle_point;
    let l = offset.norm();
    if l >= gains.safety_radius_m {
        return Repulsion { vector: Vec2::zeros(), contact: false };
    }
    if l == 0.0 {
        let dir = fallback_direction.try_normalize(0.0).unwrap_or_else(|| Vec2::new(1.0, 0.0));
        return Repulsion { vector: gains.repulsion_cap * dir, contact: true };
    }
    let magnitude = gains.repulsion_gain * (1.0 / l - 1.0 / gains.safety_radius_m) / (l * l);
    let magnitude = magnitude.min(gains.repulsion_cap);
    Repulsion { vector: magnitude * offset / l, contact: false }
}

/// Adaptive scaling of the desired offsets near bottlenecks.
///
/// `raw = clamp(2 (clearance - l_safe) / diameter, eta_min, 1)` is the scale at
/// which the formation fits inside the clearance with `l_safe` to spare; the
/// output is low-pass filtered as `0.9 previous + 0.1 raw`.
pub fn scale_factor(
    _formation_center: Vec2,
    nominal_diameter_m: f64,
    world_clearance_m: f64,
    gains: &ControlGains,
    previous_scale: f64,
) -> f64 {
    let raw = if nominal_diameter_m > 0.0 {
        (2.0 * (world_clearance_m - gains.safety_radius_m) / nominal_diameter_m).clamp(gains.eta_min, 1.0)
    } else {
        1.0
    };
    let raw = if raw.is_nan() { 1.0 } else { raw };
    (0.9 * previous_scale + 0.1 * raw).clamp(gains.eta_min, 1.0)
}

/// Nearest obstacle surface point seen from a position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proximity {
    pub distance: f64,
    pub point: Vec2,
    /// Unit direction out of the obstacle, defined even for interior points.
    pub escape_direction: Vec2,
}

/// Source of obstacle geometry for the controller.
pub trait ObstacleField {
    /// Closest obstacle to `position`, or `None` when there are no obstacles.
    fn nearest(&self, position: Vec2) -> Option<Proximity>;

    /// Distance from `position` to the closest obstacle surface.
    fn clearance(&self, position: Vec2) -> f64 {
        self.nearest(position).map_or(f64::INFINITY, |p| p.distance)
    }
}

/// An empty world.
pub struct FreeSpace;

impl ObstacleField for FreeSpace {
    fn nearest(&self, _position: Vec2) -> Option<Proximity> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput {
    pub inputs: Vec<Vec2>,
    pub shape: Vec<Vec2>,
    pub repulsion: Vec<Vec2>,
    /// Agents touching an obstacle this step.
    pub contacts: Vec<usize>,
    /// Outward direction observed per agent (only within the safety radius).
    pub outward: Vec<Option<Vec2>>,
}

/// Total control `u_m = shape_m(eta_k) + repulsion_m`, each agent repelled by
/// its own nearest obstacle point.
pub fn control_input(
    state: &SwarmState,
    graph: &CommGraph,
    disp: &DisplacementSet,
    gains: &ControlGains,
    field: &dyn ObstacleField,
) -> ControlInput {
    let shape = displacement_control(state, graph, disp, gains, state.scale);
    let mut repulsion_terms = Vec::with_capacity(shape.len());
    let mut contacts = Vec::new();
    let mut outward = Vec::with_capacity(shape.len());
    for (m, &q) in state.positions.iter().enumerate() {
        let Some(near) = field.nearest(q) else {
            repulsion_terms.push(Vec2::zeros());
            outward.push(None);
            continue;
        };
        let fallback = state.last_outward.get(m).copied().flatten().unwrap_or(near.escape_direction);
        let r = repulsion(q, near.point, gains, fallback);
        if r.contact {
            contacts.push(m);
        }
        outward.push(if near.distance > 0.0 && near.distance < gains.safety_radius_m {
            Some((q - near.point) / near.distance)
        } else {
            None
        });
        repulsion_terms.push(r.vector);
    }
    let inputs = shape.iter().zip(&repulsion_terms).map(|(s, r)| s + r).collect();
    ControlInput { inputs, shape, repulsion: repulsion_terms, contacts, outward }
}
