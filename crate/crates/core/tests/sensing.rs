use approx::assert_relative_eq;
use formation_core::sensing::{noise_variance, range, range_fim_element, weight, Fim2};
use formation_core::{crlb_trace, target_fim, AgentPose, SensingParams, TargetEstimate, Vec2};
use nalgebra::{DMatrix, Matrix2};
use proptest::prelude::*;

fn target() -> TargetEstimate {
    TargetEstimate::new(80.0, 90.0).unwrap()
}

fn poses(angles: &[(f64, f64)], params: &SensingParams) -> Vec<AgentPose> {
    angles.iter().map(|&(e, a)| AgentPose::from_angles(e, a, &target(), params).unwrap()).collect()
}

fn angle_set() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.05f64..1.5, -7.0f64..7.0), 3..10)
}

proptest! {
    #[test]
    fn fim_trace_is_sum_of_weights(angles in angle_set()) {
        let params = SensingParams::default();
        let fim = target_fim(&poses(&angles, &params), &params);
        let total: f64 = angles.iter().map(|&(e, _)| weight(e, &params).unwrap()).sum();
        prop_assert!((fim.trace() - total).abs() <= 1e-12 * total);
        prop_assert!(fim.is_psd(1e-9 * total));
    }

    #[test]
    fn crlb_never_beats_isotropic_value(angles in angle_set()) {
        let params = SensingParams::default();
        let fim = target_fim(&poses(&angles, &params), &params);
        if let Ok(crlb) = crlb_trace(&fim) {
            let iso = 4.0 / fim.trace();
            prop_assert!(crlb >= iso * (1.0 - 1e-12));
            // equality exactly when the matrix is a scalar multiple of I
            if fim.anisotropy() > 1e-6 * fim.trace() {
                prop_assert!(crlb > iso);
            }
        }
    }

    #[test]
    fn crlb_is_permutation_invariant(angles in angle_set(), seed in any::<u64>()) {
        let params = SensingParams::default();
        let mut shuffled = angles.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        let a = target_fim(&poses(&angles, &params), &params);
        let b = target_fim(&poses(&shuffled, &params), &params);
        prop_assert!((a.j_xx - b.j_xx).abs() <= 1e-12 * a.trace());
        prop_assert!((a.j_yy - b.j_yy).abs() <= 1e-12 * a.trace());
        prop_assert!((a.j_xy - b.j_xy).abs() <= 1e-12 * a.trace());
    }

    #[test]
    fn crlb_is_rotation_invariant(angles in angle_set(), rot in -3.2f64..3.2) {
        let params = SensingParams::default();
        let rotated: Vec<_> = angles.iter().map(|&(e, a)| (e, a + rot)).collect();
        let a = crlb_trace(&target_fim(&poses(&angles, &params), &params));
        let b = crlb_trace(&target_fim(&poses(&rotated, &params), &params));
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }
    }

    #[test]
    fn range_information_decreases_with_distance(d in 1.0f64..1e4, extra in 1e-6f64..1e3) {
        let params = SensingParams::default();
        prop_assert!(range_fim_element(d + extra, &params).unwrap() < range_fim_element(d, &params).unwrap());
    }

    #[test]
    fn weight_matches_range_information_at_slant_range(phi in 0.01f64..1.56, h in 1.0f64..500.0) {
        let params = SensingParams::default().with_altitude(h).unwrap();
        let via_range = range_fim_element(h / phi.sin(), &params).unwrap() * phi.cos().powi(2);
        let w = weight(phi, &params).unwrap();
        prop_assert!((w - via_range).abs() <= 1e-10 * via_range);
    }
}

#[test]
fn range_information_matches_measurement_model() {
    // J = (d ln p / d d)^2 expectation for a Gaussian with variance d^4 / C:
    // mean term 1/sigma^2 plus variance term (d sigma^2/d d)^2 / (2 sigma^4) = 8 / d^2
    let mut state = 0x2545_f491_4f6c_dd1d_u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..100 {
        let composite = 10f64.powf(3.0 + 12.0 * next());
        let d = 1.0 + 999.0 * next();
        let params = SensingParams::from_composite(composite, 20.0).unwrap();
        let var = noise_variance(d, &params).unwrap();
        let dvar = 4.0 * d.powi(3) / composite;
        let chain = 1.0 / var + dvar * dvar / (2.0 * var * var);
        assert_relative_eq!(range_fim_element(d, &params).unwrap(), chain, max_relative = 1e-12);
    }
}

#[test]
fn fim_matches_jacobian_quadratic_form() {
    let params = SensingParams::default();
    let angles = [(0.7, 0.1), (0.9, 2.0), (1.1, 4.0), (0.5, 5.5)];
    let p = poses(&angles, &params);
    let fim = target_fim(&p, &params);
    // rows of Q are the unit vectors from the target toward each agent
    let q = DMatrix::from_fn(angles.len(), 2, |i, j| if j == 0 { angles[i].1.cos() } else { angles[i].1.sin() });
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        angles.len(),
        angles.iter().map(|&(e, _)| weight(e, &params).unwrap()),
    ));
    let dense = q.transpose() * diag * q;
    let expected = Matrix2::new(fim.j_xx, fim.j_xy, fim.j_xy, fim.j_yy);
    for i in 0..2 {
        for j in 0..2 {
            assert_relative_eq!(dense[(i, j)], expected[(i, j)], max_relative = 1e-12, epsilon = 1e-6);
        }
    }
}

#[test]
fn planar_and_angular_poses_agree() {
    let params = SensingParams::default();
    let t = target();
    let q = Vec2::new(95.0, 70.0);
    let pose = AgentPose::from_planar(q, &t, &params).unwrap();
    let d = range(q, &t, &params);
    assert_relative_eq!(pose.elevation_rad().sin(), params.altitude_m() / d, max_relative = 1e-12);
    let back = AgentPose::from_angles(pose.elevation_rad(), pose.azimuth_rad(), &t, &params).unwrap();
    assert_relative_eq!(back.planar_position(), q, max_relative = 1e-12);
}

#[test]
fn singular_geometry_is_rejected() {
    let params = SensingParams::default();
    let fim = target_fim(&poses(&[(0.9, 0.3), (0.8, 0.3), (1.0, 0.3 + std::f64::consts::PI)], &params), &params);
    assert!(crlb_trace(&fim).is_err());
    assert!(crlb_trace(&Fim2::new(0.0, 0.0, 0.0)).is_err());
}
