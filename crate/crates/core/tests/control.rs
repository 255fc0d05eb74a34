use approx::assert_relative_eq;
use formation_core::control::{
    consensus_velocity_step, control_input, displacement_control, edge_displacement_error, repulsion, scale_factor,
    total_cost, FreeSpace, ObstacleField, Proximity,
};
use formation_core::{CommGraph, ControlGains, DisplacementSet, SwarmState, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(m: usize, rng: &mut ChaCha8Rng) -> CommGraph {
    let mut edges: Vec<(usize, usize)> = (1..m).map(|p| (rng.random_range(0..p), p)).collect();
    for a in 0..m {
        for b in a + 1..m {
            if rng.random_bool(0.35) && !edges.contains(&(a, b)) {
                edges.push((a, b));
            }
        }
    }
    CommGraph::from_edges(m, &edges, 0).unwrap()
}

fn random_points(m: usize, extent: f64, rng: &mut ChaCha8Rng) -> Vec<Vec2> {
    (0..m).map(|_| Vec2::new(rng.random_range(-extent..extent), rng.random_range(-extent..extent))).collect()
}

#[test]
fn shape_controls_sum_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gains = ControlGains::default();
    for _ in 0..200 {
        let m = rng.random_range(2..=9);
        let graph = random_graph(m, &mut rng);
        let disp = DisplacementSet::from_positions(&random_points(m, 20.0, &mut rng), Vec2::zeros());
        let state = SwarmState::at_rest(random_points(m, 50.0, &mut rng));
        let u = displacement_control(&state, &graph, &disp, &gains, rng.random_range(0.2..1.0));
        assert!(u.iter().sum::<Vec2>().norm() < 1e-10);
    }
}

#[test]
fn shape_error_never_grows_under_stable_gains() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let m = rng.random_range(3..=8);
        let graph = random_graph(m, &mut rng);
        let d = graph.max_degree() as f64;
        let gains = ControlGains { epsilon: 0.45 / d, consensus_gain: 0.9 / (d + 1.0), ..ControlGains::default() };
        gains.check_stability(&graph).unwrap();
        let disp = DisplacementSet::from_positions(&random_points(m, 20.0, &mut rng), Vec2::zeros());
        let mut state = SwarmState::at_rest(random_points(m, 50.0, &mut rng));
        let mut prev = edge_displacement_error(&state, &graph, &disp, 1.0);
        for _ in 0..300 {
            let u = displacement_control(&state, &graph, &disp, &gains, 1.0);
            for (q, du) in state.positions.iter_mut().zip(&u) {
                *q += du;
            }
            let err = edge_displacement_error(&state, &graph, &disp, 1.0);
            assert!(err <= prev * (1.0 + 1e-12) + 1e-18);
            prev = err;
        }
    }
}

#[test]
fn leader_pinned_consensus_contracts_on_ring() {
    let graph = CommGraph::ring_with_leader_chords(6).unwrap();
    let gains = ControlGains::default();
    gains.check_stability(&graph).unwrap();
    let target = Vec2::new(1.5, -0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = SwarmState::at_rest(vec![Vec2::zeros(); 6]);
    state.velocity_estimates = random_points(6, 10.0, &mut rng);
    let mut converged_at = None;
    for k in 0..500 {
        state.velocity_estimates = consensus_velocity_step(&state, &graph, target, &gains);
        let err = state.velocity_estimates.iter().map(|v| (v - target).norm()).fold(0.0, f64::max);
        if err < 1e-6 {
            converged_at = Some(k);
            break;
        }
    }
    assert!(converged_at.is_some());
}

#[test]
fn repulsion_is_bounded_and_points_away() {
    let gains = ControlGains::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let obstacle = Vec2::new(3.0, -1.0);
    for _ in 0..1000 {
        let q = obstacle + Vec2::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
        let r = repulsion(q, obstacle, &gains, Vec2::new(0.0, 1.0));
        assert!(r.vector.norm() <= gains.repulsion_cap + 1e-12);
        let l = (q - obstacle).norm();
        if l >= gains.safety_radius_m {
            assert_eq!(r.vector, Vec2::zeros());
        } else {
            assert!(r.vector.dot(&(q - obstacle)) > 0.0);
        }
    }
    let contact = repulsion(obstacle, obstacle, &gains, Vec2::new(0.0, 2.0));
    assert!(contact.contact);
    assert_relative_eq!(contact.vector, Vec2::new(0.0, gains.repulsion_cap));
}

proptest! {
    #[test]
    fn scale_factor_stays_in_range_and_follows_clearance(
        diameter in 1.0f64..100.0,
        c1 in 0.0f64..200.0,
        dc in 0.0f64..50.0,
        prev in 0.2f64..=1.0,
    ) {
        let gains = ControlGains::default();
        let a = scale_factor(Vec2::zeros(), diameter, c1, &gains, prev);
        let b = scale_factor(Vec2::zeros(), diameter, c1 + dc, &gains, prev);
        prop_assert!(a >= gains.eta_min && a <= 1.0);
        prop_assert!(b >= a);
    }
}

struct Wall;

impl ObstacleField for Wall {
    fn nearest(&self, p: Vec2) -> Option<Proximity> {
        let point = Vec2::new(p.x, 0.0);
        Some(Proximity { distance: p.y.abs(), point, escape_direction: Vec2::new(0.0, 1.0) })
    }
}

#[test]
fn control_is_shape_plus_repulsion() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gains = ControlGains::default();
    for _ in 0..100 {
        let m = rng.random_range(3..=7);
        let graph = random_graph(m, &mut rng);
        let disp = DisplacementSet::from_positions(&random_points(m, 10.0, &mut rng), Vec2::zeros());
        let positions: Vec<Vec2> =
            (0..m).map(|_| Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(0.5..8.0))).collect();
        let mut state = SwarmState::at_rest(positions);
        state.scale = rng.random_range(0.2..1.0);
        let ctl = control_input(&state, &graph, &disp, &gains, &Wall);
        let shape = displacement_control(&state, &graph, &disp, &gains, state.scale);
        for (a, &q) in state.positions.iter().enumerate() {
            let rep = repulsion(q, Vec2::new(q.x, 0.0), &gains, Vec2::new(0.0, 1.0)).vector;
            assert_relative_eq!(ctl.inputs[a], shape[a] + rep, epsilon = 1e-12);
        }
        let free = control_input(&state, &graph, &disp, &gains, &FreeSpace);
        assert_eq!(free.inputs, shape);
    }
}

#[test]
fn total_cost_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let m = rng.random_range(3..=8);
        let graph = random_graph(m, &mut rng);
        let disp = DisplacementSet::from_positions(&random_points(m, 10.0, &mut rng), Vec2::zeros());
        let state = SwarmState::at_rest(random_points(m, 30.0, &mut rng));
        let next = random_points(m, 30.0, &mut rng);
        let v_ref = Vec2::new(0.3, -1.0);
        let dt = 0.1;
        let adj = graph.adjacency_rows();
        let mut expected = 0.0;
        for a in 0..m {
            for b in 0..m {
                if adj[a][b] == 1 {
                    let q = &state.positions;
                    expected += (q[a] - q[b] - disp.offset(b, a)).norm_squared();
                }
            }
            expected += ((next[a] - state.positions[a]) / dt - v_ref).norm_squared();
        }
        let got = total_cost(&state, &graph, &disp, dt, &next, v_ref).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }
}
