use formation_core::control::edge_displacement_error;
use formation_core::sim::{corridor_obstacles, crlb_of_positions, min_clearance, random_deployment, step};
use formation_core::{
    build_formation, displacement_set, run_episode, theoretical_lower_bound, CommGraph, ControlGains, Guidance,
    RectObstacle, SensingParams, StopRule, SwarmState, TargetEstimate, Vec2, World,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn world(obstacles: Vec<RectObstacle>, guidance: Guidance) -> World {
    World {
        target: TargetEstimate::new(80.0, 90.0).unwrap(),
        obstacles,
        motion_noise_std: 0.0,
        dt: 0.1,
        rng_seed: 3,
        guidance,
    }
}

/// Distance to the boundary by dense sampling of the rectangle perimeter.
fn sampled_clearance(p: Vec2, obstacles: &[RectObstacle]) -> f64 {
    let n = 10_000;
    let mut best = f64::INFINITY;
    for o in obstacles {
        if o.contains(p) {
            return 0.0;
        }
        let corners = [
            Vec2::new(o.x_min, o.y_min),
            Vec2::new(o.x_max, o.y_min),
            Vec2::new(o.x_max, o.y_max),
            Vec2::new(o.x_min, o.y_max),
        ];
        for side in 0..4 {
            let (a, b) = (corners[side], corners[(side + 1) % 4]);
            for i in 0..=n / 4 {
                let s = a + (b - a) * (i as f64 / (n / 4) as f64);
                best = best.min((p - s).norm());
            }
        }
    }
    best
}

#[test]
fn clearance_matches_boundary_sampling() {
    let obstacles =
        vec![RectObstacle::new(0.0, 10.0, 0.0, 4.0).unwrap(), RectObstacle::new(20.0, 22.0, -5.0, 15.0).unwrap()];
    let w = world(obstacles.clone(), Guidance::Constant);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let p = Vec2::new(rng.random_range(-10.0..35.0), rng.random_range(-15.0..25.0));
        let (got, _) = min_clearance(p, &w);
        assert!((got - sampled_clearance(p, &obstacles)).abs() < 1e-3, "at {p:?}");
    }
}

#[test]
fn shape_cost_settles_once_velocities_agree() {
    let params = SensingParams::default();
    let w = world(Vec::new(), Guidance::Constant);
    let formation = build_formation(&params, &w.target, 6, 0.0).unwrap();
    let disp = displacement_set(&formation, Vec2::new(0.8, 0.2));
    let graph = CommGraph::ring_with_leader_chords(6).unwrap();
    let gains = ControlGains::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let positions = random_deployment(6, Vec2::new(-25.0, -25.0), Vec2::new(25.0, 25.0), &mut rng);
    let mut state = SwarmState::at_rest(positions);
    state.velocity_estimates = vec![disp.global_velocity; 6];
    let mut prev = edge_displacement_error(&state, &graph, &disp, 1.0);
    for _ in 0..2000 {
        state = step(&state, &w, &graph, &disp, &gains, &mut rng).next;
        let err = edge_displacement_error(&state, &graph, &disp, 1.0);
        assert!(err <= prev * (1.0 + 1e-12) + 1e-15);
        prev = err;
    }
    assert!(prev < 1e-6);
}

#[test]
fn random_clouds_never_beat_the_bound() {
    let params = SensingParams::default();
    let w = world(Vec::new(), Guidance::Constant);
    let bound = theoretical_lower_bound(&params, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = w.target.position;
    for _ in 0..500 {
        let cloud = random_deployment(6, t - Vec2::new(40.0, 40.0), t + Vec2::new(40.0, 40.0), &mut rng);
        if let Ok(crlb) = crlb_of_positions(&cloud, &w, &params) {
            assert!(crlb >= bound);
        }
    }
}

#[test]
fn violations_are_reported_exactly_at_contact() {
    let params = SensingParams::default();
    // a block right on the leader's start position
    let w = world(vec![RectObstacle::new(-1.0, 1.0, -1.0, 1.0).unwrap()], Guidance::Constant);
    let formation = build_formation(&params, &w.target, 3, 0.0).unwrap();
    let disp = displacement_set(&formation, Vec2::zeros());
    let graph = CommGraph::complete(3).unwrap();
    let gains = ControlGains::default();
    let initial = SwarmState::at_rest(vec![Vec2::zeros(), Vec2::new(30.0, 0.0), Vec2::new(0.0, 30.0)]);
    let trace = run_episode(&initial, &w, &graph, &disp, &gains, &params, 50, &StopRule::default());
    assert!(!trace.violations.is_empty());
    for v in &trace.violations {
        let rec = &trace.records[v.step as usize];
        assert_eq!(rec.min_clearance, 0.0);
    }
    let clear_steps = trace.records.iter().filter(|r| r.min_clearance > 0.0).count();
    let flagged_steps = {
        let mut steps: Vec<u64> = trace.violations.iter().map(|v| v.step).collect();
        steps.dedup();
        steps.len()
    };
    assert_eq!(clear_steps + flagged_steps, trace.records.len());
}

#[test]
fn corridor_gap_is_centered_on_the_path() {
    let start = Vec2::zeros();
    let goal = Vec2::new(80.0, 90.0);
    let blocks = corridor_obstacles(start, goal, 0.6, 28.0, 6.0, 40.0).unwrap();
    let w = world(blocks.to_vec(), Guidance::Constant);
    let mid = start + 0.6 * (goal - start);
    assert!((min_clearance(mid, &w).0 - 14.0).abs() < 1e-12);
    // straight line start -> goal does not cross either block
    for i in 0..=1000 {
        let p = start + (goal - start) * (i as f64 / 1000.0);
        assert!(blocks.iter().all(|b| !b.contains(p)));
    }
}
