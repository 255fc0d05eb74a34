//! CRLB-optimal formation synthesis.
//!
//! The bound `tr(J^-1) >= 4 / sum(w_m)` decouples the design: every agent
//! maximizes its own weight `w(phi)` (a common optimal elevation), and the
//! azimuths are then chosen so that `sum e^{j 2 theta_m} = 0`, which makes the
//! FIM a scalar matrix and turns the inequality into an equality. The regular
//! polygon is used for the azimuths.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::sensing::{normalize_angle, weight_unchecked, SensingParams, TargetEstimate};
use crate::Vec2;

pub const MIN_AGENTS: usize = 3;

/// Ratio of the two weight coefficients beyond which the closed-form root
/// is cross-checked by bisection.
const CONDITIONING_LIMIT: f64 = 1e12;

fn require_agents(agent_count: usize) -> Result<()> {
    if agent_count < MIN_AGENTS {
        Err(Error::InsufficientAgents { required: MIN_AGENTS, got: agent_count })
    } else {
        Ok(())
    }
}

/// Stationarity residual of the weight, `dw/dphi = sin(2 phi) * D(phi)`;
/// returns `D(phi)`.
fn stationarity(phi: f64, a: f64, b: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    let (s2, c2) = (s * s, c * c);
    a * (2.0 * s2 * c2 - s2 * s2) + b * (c2 - s2)
}

fn bisect_elevation(a: f64, b: f64) -> f64 {
    let mut lo = 0.01f64.to_radians();
    let mut hi = 89.99f64.to_radians();
    // D > 0 below the optimum and < 0 above it
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if stationarity(mid, a, b) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Elevation angle maximizing the per-agent weight.
///
/// Substituting `t = tan^2(phi)` in the stationarity condition gives
/// `(A + B) t^2 - 2 A t - B = 0` with `A = C / H^4` and `B = 8 / H^2`, whose
/// positive root is `t = (A + sqrt(A^2 + AB + B^2)) / (A + B)`. The result lies
/// in `(45 deg, atan(sqrt 2))`.
pub fn optimal_elevation(params: &SensingParams) -> f64 {
    let a = params.snr_coefficient();
    let b = params.geometric_coefficient();
    let ratio = a / b;
    if !(1.0 / CONDITIONING_LIMIT..=CONDITIONING_LIMIT).contains(&ratio) {
        return bisect_elevation(a, b);
    }
    let t = (a + (a * a + a * b + b * b).sqrt()) / (a + b);
    t.sqrt().atan()
}

/// Regular-polygon azimuths `theta0 + 2 pi (m - 1) / M`, wrapped into `[0, 2pi)`.
pub fn optimal_azimuths(agent_count: usize, initial_rotation: f64) -> Result<Vec<f64>> {
    require_agents(agent_count)?;
    if !initial_rotation.is_finite() {
        return invalid("initial rotation must be finite");
    }
    Ok((0..agent_count).map(|m| normalize_angle(initial_rotation + TAU * m as f64 / agent_count as f64)).collect())
}

/// `|sum_m e^{j 2 theta_m}|`; zero for azimuth sets that make the FIM isotropic
/// under equal weights.
pub fn isotropy_residual(azimuths: &[f64]) -> f64 {
    let (re, im) = azimuths.iter().fold((0.0, 0.0), |(re, im), &t| (re + (2.0 * t).cos(), im + (2.0 * t).sin()));
    re.hypot(im)
}

/// Agents evenly spread on a horizontal circle around the target's
/// projection, all seen at the same elevation. Agent 0 (the leader) sits at
/// the initial rotation angle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormationGeometry {
    agent_count: usize,
    center: [f64; 2],
    ring_radius_m: f64,
    elevation_rad: f64,
    initial_rotation_rad: f64,
    azimuths_rad: Vec<f64>,
    #[serde(skip)]
    planar_positions: Vec<Vec2>,
}

impl FormationGeometry {
    /// Regular polygon at an arbitrary common elevation.
    pub fn regular(
        center: Vec2,
        altitude_m: f64,
        elevation_rad: f64,
        agent_count: usize,
        initial_rotation: f64,
    ) -> Result<Self> {
        if !(elevation_rad > 0.0 && elevation_rad < FRAC_PI_2) {
            return invalid(format!("elevation must lie in (0, pi/2), got {elevation_rad}"));
        }
        if !(altitude_m > 0.0 && altitude_m.is_finite()) {
            return invalid(format!("altitude must be > 0, got {altitude_m}"));
        }
        let azimuths_rad = optimal_azimuths(agent_count, initial_rotation)?;
        let ring_radius_m = altitude_m / elevation_rad.tan();
        let planar_positions =
            azimuths_rad.iter().map(|&t| center + ring_radius_m * Vec2::new(t.cos(), t.sin())).collect();
        Ok(Self {
            agent_count,
            center: [center.x, center.y],
            ring_radius_m,
            elevation_rad,
            initial_rotation_rad: normalize_angle(initial_rotation),
            azimuths_rad,
            planar_positions,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }
    pub fn center(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }
    pub fn ring_radius_m(&self) -> f64 {
        self.ring_radius_m
    }
    pub fn elevation_rad(&self) -> f64 {
        self.elevation_rad
    }
    pub fn initial_rotation_rad(&self) -> f64 {
        self.initial_rotation_rad
    }
    pub fn azimuths_rad(&self) -> &[f64] {
        &self.azimuths_rad
    }
    pub fn planar_positions(&self) -> &[Vec2] {
        &self.planar_positions
    }
}

/// The CRLB-optimal formation: a ring over the target at the optimal elevation.
pub fn build_formation(
    params: &SensingParams,
    target: &TargetEstimate,
    agent_count: usize,
    initial_rotation: f64,
) -> Result<FormationGeometry> {
    require_agents(agent_count)?;
    FormationGeometry::regular(
        target.position,
        params.altitude_m(),
        optimal_elevation(params),
        agent_count,
        initial_rotation,
    )
}

/// `4 / (M w(phi*))`, the smallest attainable `tr(J^-1)` for `M` agents.
pub fn theoretical_lower_bound(params: &SensingParams, agent_count: usize) -> Result<f64> {
    require_agents(agent_count)?;
    let w = weight_unchecked(optimal_elevation(params), params);
    Ok(4.0 / (agent_count as f64 * w))
}

/// Desired pairwise offsets `delta_pm = q_m - q_p` plus the common velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementSet {
    agent_count: usize,
    // row-major: offsets[p * M + m] = delta_pm
    offsets: Vec<Vec2>,
    pub global_velocity: Vec2,
}

impl DisplacementSet {
    /// Offsets derived from a single embedding, hence antisymmetric and
    /// chain-consistent by construction.
    pub fn from_positions(positions: &[Vec2], global_velocity: Vec2) -> Self {
        let agent_count = positions.len();
        let mut offsets = Vec::with_capacity(agent_count * agent_count);
        for p in positions {
            for m in positions {
                offsets.push(m - p);
            }
        }
        Self { agent_count, offsets, global_velocity }
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    /// Desired displacement of agent `m` relative to agent `p`.
    pub fn offset(&self, p: usize, m: usize) -> Vec2 {
        self.offsets[p * self.agent_count + m]
    }

    /// Largest desired pairwise separation.
    pub fn nominal_diameter(&self) -> f64 {
        self.offsets.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }
}

pub fn displacement_set(formation: &FormationGeometry, global_velocity: Vec2) -> DisplacementSet {
    DisplacementSet::from_positions(formation.planar_positions(), global_velocity)
}
