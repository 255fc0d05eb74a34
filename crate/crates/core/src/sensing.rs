//! Range measurement model and Fisher information of the target position.
//!
//! Every agent flies at the common altitude `H` and measures the slant range
//! to a ground target from a round-trip delay. Range noise follows a two-way
//! (quartic) path-loss law, so the variance carries information about the
//! range as well as the mean. All the physical constants collapse into a
//! single composite SNR constant
//!
//! ```text
//! C = p * G_p * beta_0 / (kappa * sigma_0^2)     [m^4]
//! ```
//!
//! which is cached on [`SensingParams`].

use nalgebra::{Dyn, OMatrix, U2};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::Vec2;

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Relative determinant threshold below which a FIM is treated as singular.
pub const SINGULARITY_TOLERANCE: f64 = 1e-12;

/// Physical constants of the range measurement model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensingParams {
    transmit_power_w: f64,
    processing_gain: f64,
    ref_channel_power: f64,
    kappa: f64,
    noise_floor_w: f64,
    altitude_m: f64,
    speed_of_light: f64,
    #[serde(skip)]
    composite: f64,
}

impl SensingParams {
    pub const DEFAULT_TRANSMIT_POWER_W: f64 = 0.1;
    pub const DEFAULT_PROCESSING_GAIN: f64 = 1e3;
    pub const DEFAULT_REF_CHANNEL_POWER: f64 = 1e-5;
    pub const DEFAULT_KAPPA: f64 = 1.0;
    /// -90 dBm.
    pub const DEFAULT_NOISE_FLOOR_W: f64 = 1e-12;
    pub const DEFAULT_ALTITUDE_M: f64 = 20.0;

    pub fn new(
        transmit_power_w: f64,
        processing_gain: f64,
        ref_channel_power: f64,
        kappa: f64,
        noise_floor_w: f64,
        altitude_m: f64,
    ) -> Result<Self> {
        let fields = [
            ("transmit_power_w", transmit_power_w),
            ("processing_gain", processing_gain),
            ("ref_channel_power", ref_channel_power),
            ("kappa", kappa),
            ("noise_floor_w", noise_floor_w),
            ("altitude_m", altitude_m),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return invalid(format!("{name} must be finite and > 0, got {value}"));
            }
        }
        let composite = transmit_power_w * processing_gain * ref_channel_power / (kappa * noise_floor_w);
        if !(composite.is_finite() && composite > 0.0) {
            return invalid(format!("composite SNR constant is not representable: {composite}"));
        }
        Ok(Self {
            transmit_power_w,
            processing_gain,
            ref_channel_power,
            kappa,
            noise_floor_w,
            altitude_m,
            speed_of_light: SPEED_OF_LIGHT,
            composite,
        })
    }

    /// Parameters whose composite constant equals `composite` exactly
    /// (all other constants set to one). Handy for synthetic studies.
    pub fn from_composite(composite: f64, altitude_m: f64) -> Result<Self> {
        Self::new(composite, 1.0, 1.0, 1.0, 1.0, altitude_m)
    }

    pub fn with_altitude(&self, altitude_m: f64) -> Result<Self> {
        Self::new(
            self.transmit_power_w,
            self.processing_gain,
            self.ref_channel_power,
            self.kappa,
            self.noise_floor_w,
            altitude_m,
        )
    }

    pub fn with_transmit_power(&self, transmit_power_w: f64) -> Result<Self> {
        Self::new(
            transmit_power_w,
            self.processing_gain,
            self.ref_channel_power,
            self.kappa,
            self.noise_floor_w,
            self.altitude_m,
        )
    }

    pub fn transmit_power_w(&self) -> f64 {
        self.transmit_power_w
    }
    pub fn processing_gain(&self) -> f64 {
        self.processing_gain
    }
    pub fn ref_channel_power(&self) -> f64 {
        self.ref_channel_power
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn noise_floor_w(&self) -> f64 {
        self.noise_floor_w
    }
    pub fn altitude_m(&self) -> f64 {
        self.altitude_m
    }
    pub fn speed_of_light(&self) -> f64 {
        self.speed_of_light
    }

    /// `p * G_p * beta_0 / (kappa * sigma_0^2)`, in m^4.
    pub fn composite(&self) -> f64 {
        self.composite
    }

    /// Coefficient of the SNR term of the elevation weight, `C / H^4`.
    pub fn snr_coefficient(&self) -> f64 {
        self.composite / self.altitude_m.powi(4)
    }

    /// Coefficient of the variance-information term, `8 / H^2`.
    pub fn geometric_coefficient(&self) -> f64 {
        8.0 / (self.altitude_m * self.altitude_m)
    }
}

impl Default for SensingParams {
    fn default() -> Self {
        Self::new(
            Self::DEFAULT_TRANSMIT_POWER_W,
            Self::DEFAULT_PROCESSING_GAIN,
            Self::DEFAULT_REF_CHANNEL_POWER,
            Self::DEFAULT_KAPPA,
            Self::DEFAULT_NOISE_FLOOR_W,
            Self::DEFAULT_ALTITUDE_M,
        )
        .expect("default sensing parameters are valid")
    }
}

/// Prior estimate of the ground target's planar location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEstimate {
    pub position: Vec2,
}

impl TargetEstimate {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return invalid(format!("target coordinates must be finite, got ({x}, {y})"));
        }
        Ok(Self { position: Vec2::new(x, y) })
    }
}

/// Planar position of an agent together with its elevation and azimuth as
/// seen from the target.
///
/// The planar position is authoritative; the angles are derived from it.
/// The azimuth is the bearing of the agent from the target, normalized to
/// `[0, 2pi)`. The elevation lies in `(0, pi/2]`, where `pi/2` marks an
/// agent hovering directly over the target (azimuth then reported as 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentPose {
    planar_position: Vec2,
    elevation_rad: f64,
    azimuth_rad: f64,
}

impl AgentPose {
    pub fn from_planar(planar_position: Vec2, target: &TargetEstimate, params: &SensingParams) -> Result<Self> {
        if !(planar_position.x.is_finite() && planar_position.y.is_finite()) {
            return invalid("agent position must be finite");
        }
        let offset = planar_position - target.position;
        let horizontal = offset.norm();
        let elevation_rad = params.altitude_m().atan2(horizontal);
        let azimuth_rad = if horizontal == 0.0 { 0.0 } else { normalize_angle(offset.y.atan2(offset.x)) };
        Ok(Self { planar_position, elevation_rad, azimuth_rad })
    }

    /// Builds a pose from angles; the planar position is placed on the
    /// circle of radius `H / tan(elevation)` around the target.
    pub fn from_angles(
        elevation_rad: f64,
        azimuth_rad: f64,
        target: &TargetEstimate,
        params: &SensingParams,
    ) -> Result<Self> {
        if !(elevation_rad > 0.0 && elevation_rad <= std::f64::consts::FRAC_PI_2) {
            return invalid(format!("elevation must lie in (0, pi/2], got {elevation_rad}"));
        }
        if !azimuth_rad.is_finite() {
            return invalid("azimuth must be finite");
        }
        let azimuth_rad = normalize_angle(azimuth_rad);
        let radius = params.altitude_m() * elevation_rad.cos() / elevation_rad.sin();
        let planar_position = target.position + radius * Vec2::new(azimuth_rad.cos(), azimuth_rad.sin());
        Ok(Self { planar_position, elevation_rad, azimuth_rad })
    }

    pub fn planar_position(&self) -> Vec2 {
        self.planar_position
    }
    pub fn elevation_rad(&self) -> f64 {
        self.elevation_rad
    }
    pub fn azimuth_rad(&self) -> f64 {
        self.azimuth_rad
    }
}

/// Wraps an angle into `[0, 2pi)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let wrapped = angle.rem_euclid(tau);
    // rem_euclid can round up to exactly tau for tiny negative inputs
    if wrapped >= tau {
        0.0
    } else {
        wrapped
    }
}

/// Symmetric 2x2 Fisher information matrix of the target coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Fim2 {
    pub j_xx: f64,
    pub j_yy: f64,
    pub j_xy: f64,
}

impl Fim2 {
    pub fn new(j_xx: f64, j_yy: f64, j_xy: f64) -> Self {
        Self { j_xx, j_yy, j_xy }
    }

    pub fn trace(&self) -> f64 {
        self.j_xx + self.j_yy
    }

    pub fn det(&self) -> f64 {
        self.j_xx * self.j_yy - self.j_xy * self.j_xy
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * self.trace();
        let half_diff = 0.5 * (self.j_xx - self.j_yy);
        let radius = half_diff.hypot(self.j_xy);
        (mean - radius, mean + radius)
    }

    /// Positive semidefiniteness up to `tol` (absolute, scaled by trace^2 for the determinant).
    pub fn is_psd(&self, tol: f64) -> bool {
        let scale = self.trace().abs().max(1.0);
        self.j_xx >= -tol && self.j_yy >= -tol && self.det() >= -tol * scale * scale
    }

    /// Anisotropy `|J e^{j2theta}|`-style residual: `hypot(J_xx - J_yy, 2 J_xy)`,
    /// which is zero exactly for scalar matrices.
    pub fn anisotropy(&self) -> f64 {
        (self.j_xx - self.j_yy).hypot(2.0 * self.j_xy)
    }
}

/// Slant range from an agent at altitude `H` to the target.
pub fn range(agent_planar: Vec2, target: &TargetEstimate, params: &SensingParams) -> f64 {
    (agent_planar - target.position).norm().hypot(params.altitude_m())
}

/// Converts a round-trip delay in seconds to a one-way range in meters.
pub fn delay_to_range(delay_s: f64, params: &SensingParams) -> Result<f64> {
    if !(delay_s >= 0.0 && delay_s.is_finite()) {
        return invalid(format!("round-trip delay must be finite and >= 0, got {delay_s}"));
    }
    Ok(delay_s * params.speed_of_light() / 2.0)
}

fn check_distance(distance_m: f64) -> Result<()> {
    if distance_m > 0.0 && distance_m.is_finite() {
        Ok(())
    } else {
        invalid(format!("distance must be finite and > 0, got {distance_m}"))
    }
}

/// Range noise variance `d^4 / C` (quartic two-way path loss).
pub fn noise_variance(distance_m: f64, params: &SensingParams) -> Result<f64> {
    check_distance(distance_m)?;
    Ok(distance_m.powi(4) / params.composite())
}

/// Diagonal entry of the range FIM: `C / d^4 + 8 / d^2`.
///
/// The first term is the information in the mean, the second the information
/// carried by the range dependence of the variance.
pub fn range_fim_element(distance_m: f64, params: &SensingParams) -> Result<f64> {
    check_distance(distance_m)?;
    let d2 = distance_m * distance_m;
    Ok(params.composite() / (d2 * d2) + 8.0 / d2)
}

/// Planar information weight of an agent seen at elevation `phi`:
/// `(C sin^4 phi / H^4 + 8 sin^2 phi / H^2) cos^2 phi`.
pub fn weight(elevation_rad: f64, params: &SensingParams) -> Result<f64> {
    if !(elevation_rad > 0.0 && elevation_rad < std::f64::consts::FRAC_PI_2) {
        return invalid(format!("elevation must lie in (0, pi/2), got {elevation_rad}"));
    }
    Ok(weight_unchecked(elevation_rad, params))
}

/// Closed form of [`weight`] without the domain check; evaluates to 0 at
/// `pi/2`.
pub(crate) fn weight_unchecked(elevation_rad: f64, params: &SensingParams) -> f64 {
    let (s, c) = elevation_rad.sin_cos();
    let s2 = s * s;
    (params.snr_coefficient() * s2 * s2 + params.geometric_coefficient() * s2) * c * c
}

/// Jacobian of the ranges with respect to the target coordinates,
/// row `m = [cos phi_m cos theta_m, cos phi_m sin theta_m]`.
///
/// With azimuths measured from the target to the agent this is the negated
/// derivative; the sign drops out of every quadratic form built from it.
pub fn jacobian(poses: &[AgentPose]) -> OMatrix<f64, Dyn, U2> {
    OMatrix::<f64, Dyn, U2>::from_fn(poses.len(), |row, col| {
        let pose = &poses[row];
        let (s, c) = pose.azimuth_rad.sin_cos();
        pose.elevation_rad.cos() * if col == 0 { c } else { s }
    })
}

/// Fisher information of the target coordinates for a set of agents.
pub fn target_fim(poses: &[AgentPose], params: &SensingParams) -> Fim2 {
    poses.iter().fold(Fim2::default(), |acc, pose| {
        let w = weight_unchecked(pose.elevation_rad, params);
        let (s, c) = pose.azimuth_rad.sin_cos();
        Fim2 { j_xx: acc.j_xx + w * c * c, j_yy: acc.j_yy + w * s * s, j_xy: acc.j_xy + w * s * c }
    })
}

/// A-optimality criterion `tr(J^-1) = (J_xx + J_yy) / det J`, in m^2.
pub fn crlb_trace(fim: &Fim2) -> Result<f64> {
    let trace = fim.trace();
    let det = fim.det();
    if !(trace > 0.0) || det <= SINGULARITY_TOLERANCE * trace * trace {
        return Err(Error::SingularGeometry { det, trace });
    }
    Ok(trace / det)
}
