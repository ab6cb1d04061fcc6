use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::Vector3;

use itnav_core::fusion::{forward_pass, giekf_run, rts_smooth, FusionConfig};
use itnav_core::ins::{dynamics_jacobians, propagate, STANDARD_GRAVITY};
use itnav_core::metrics::{default_scales, sarmse, Trajectory};
use itnav_core::simulate::{gen_trajectory, synth_gnss, synth_imu, true_initial_state};
use itnav_core::{ImuSample, Measurement, NavState, ScenarioSpec, Shape};

fn scenario(duration: f64) -> (FusionConfig, Vec<ImuSample>, Vec<Measurement>, Trajectory) {
    let spec = ScenarioSpec {
        shape: Shape::CityBlockLoop,
        duration,
        rng_seed: 1,
        ..ScenarioSpec::default()
    };
    let truth = gen_trajectory(&spec).unwrap();
    let imu = synth_imu(&truth, &spec).unwrap();
    let fixes = synth_gnss(&truth, &spec).unwrap();
    let cfg = FusionConfig::default().with_prior_mean(&true_initial_state(&spec).unwrap());
    (cfg, imu, fixes, truth)
}

fn ins_step(c: &mut Criterion) {
    let state = NavState::default();
    let sample = ImuSample::new(0.0, Vector3::new(0.3, -0.1, 9.9), Vector3::new(0.01, 0.02, 0.3));
    let g = Vector3::new(0.0, 0.0, STANDARD_GRAVITY);
    c.bench_function("propagate", |b| b.iter(|| propagate(black_box(&state), &sample, 0.01, &g)));
    c.bench_function("dynamics_jacobians", |b| {
        b.iter(|| dynamics_jacobians(black_box(&state), &sample, 0.01))
    });
}

fn passes(c: &mut Criterion) {
    let (cfg, imu, fixes, _) = scenario(60.0);
    let mut group = c.benchmark_group("60 s at 100 Hz");
    group.sample_size(10);
    group.bench_function("forward", |b| b.iter(|| forward_pass(&imu, &fixes, &cfg.prior, &cfg).unwrap()));
    group.bench_function("smooth", |b| {
        b.iter_batched(
            || forward_pass(&imu, &fixes, &cfg.prior, &cfg).unwrap(),
            |hist| rts_smooth(&hist).unwrap(),
            BatchSize::LargeInput,
        )
    });
    let three = FusionConfig { max_iterations: 3, ..cfg.clone() };
    group.bench_function("giekf 3 passes", |b| b.iter(|| giekf_run(&imu, &fixes, &three).unwrap()));
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let (cfg, imu, fixes, truth) = scenario(60.0);
    let est = giekf_run(&imu, &fixes, &cfg).unwrap();
    let track = est.last().smoothed.clone();
    let scales = default_scales(truth.duration(), 10);
    c.bench_function("sarmse 10 scales", |b| b.iter(|| sarmse(&truth, black_box(&track), &scales, 0.25).unwrap()));
}

criterion_group!(benches, ins_step, passes, metrics);
criterion_main!(benches);
