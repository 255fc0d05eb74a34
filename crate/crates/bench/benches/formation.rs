use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use formation_bench::corridor_scenario;
use formation_cli::commands::sweep;
use formation_core::sim::step;
use formation_core::{build_formation, optimal_elevation, run_episode, target_fim, AgentPose, SensingParams, StopRule};

fn design(c: &mut Criterion) {
    let params = SensingParams::default();
    c.bench_function("optimal_elevation", |b| b.iter(|| optimal_elevation(black_box(&params))));

    let (_, sc) = corridor_scenario();
    let f = build_formation(&params, &sc.world.target, 6, 0.0).unwrap();
    let poses: Vec<AgentPose> =
        f.planar_positions().iter().map(|q| AgentPose::from_planar(*q, &sc.world.target, &params).unwrap()).collect();
    c.bench_function("target_fim_m6", |b| b.iter(|| target_fim(black_box(&poses), &params)));
}

fn control(c: &mut Criterion) {
    let (cfg, sc) = corridor_scenario();
    c.bench_function("step_m6_corridor", |b| {
        let mut rng = sc.world.rng();
        b.iter(|| step(black_box(&sc.initial), &sc.world, &sc.graph, &sc.disp, &sc.gains, &mut rng))
    });
    c.bench_function("episode_corridor", |b| {
        b.iter(|| {
            run_episode(
                &sc.initial,
                &sc.world,
                &sc.graph,
                &sc.disp,
                &sc.gains,
                &sc.params,
                cfg.simulation.max_steps,
                &StopRule::default(),
            )
        })
    });
}

fn altitude_sweep(c: &mut Criterion) {
    let (cfg, _) = corridor_scenario();
    c.bench_function("sweep_default", |b| {
        b.iter(|| sweep(&cfg, &cfg.sweep.altitudes_m, &cfg.sweep.formations).unwrap())
    });
}

criterion_group!(benches, design, control, altitude_sweep);
criterion_main!(benches);
