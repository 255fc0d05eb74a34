//! Cooperative range-only target sensing with a UAV formation.
//!
//! * [`sensing`]: range noise model, Fisher information of the target
//!   position and the A-optimality (trace of the CRLB) criterion.
//! * [`optimizer`]: closed-form CRLB-optimal formation, a cone
//!   of agents on a circle over the target at the optimal elevation.
//! * [`control`]: distributed control that steers agents into the formation:
//!   leader-pinned velocity consensus, displacement-based shape control,
//!   obstacle repulsion and adaptive scaling.
//! * [`sim`]: rectangular-obstacle worlds, seeded discrete-time dynamics and
//!   episode traces.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod optimizer;
pub mod sensing;
pub mod sim;

/// Planar vector in meters (or m/s).
pub type Vec2 = nalgebra::Vector2<f64>;

pub use control::{CommGraph, ControlGains, SwarmState};
pub use error::{Error, Result};
pub use optimizer::{
    build_formation, displacement_set, optimal_elevation, theoretical_lower_bound, DisplacementSet, FormationGeometry,
};
pub use sensing::{crlb_trace, target_fim, AgentPose, Fim2, SensingParams, TargetEstimate};
pub use sim::{run_episode, EpisodeTrace, Guidance, RectObstacle, StopRule, World};
