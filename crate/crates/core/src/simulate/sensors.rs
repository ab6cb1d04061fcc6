use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::fusion::Measurement;
use crate::ins::{ImuSample, NavState, STANDARD_GRAVITY};
use crate::metrics::Trajectory;
use crate::simulate::motion::Motion;
use crate::simulate::ScenarioSpec;

/// Floor for the variance of noise-free synthetic measurements.
const MIN_VARIANCE: f64 = 1e-12;

const IMU_STREAM: u64 = 1;
const GNSS_STREAM: u64 = 2;
const BARO_STREAM: u64 = 3;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("non-negative finite std")
}

fn noise3(rng: &mut ChaCha8Rng, d: &Normal<f64>) -> Vector3<f64> {
    Vector3::new(d.sample(rng), d.sample(rng), d.sample(rng))
}

/// State whose noise-free mechanization through [`synth_imu`] follows the
/// scenario: position and orientation at the first sample, velocity at the
/// middle of the first interval (position advances with the previous
/// velocity), and the true calibration parameters.
pub fn true_initial_state(spec: &ScenarioSpec) -> Result<NavState> {
    let motion = Motion::new(spec)?;
    let start = motion.at(0.0);
    Ok(NavState {
        position: start.position,
        velocity: motion.at(0.5 * spec.imu_period()).velocity,
        orientation: start.orientation,
        accel_bias: spec.accel_bias,
        gyro_bias: spec.gyro_bias,
        accel_scale: spec.accel_scale,
    })
}

/// Raw IMU readings at the trajectory times.
///
/// The rate at sample `k` is the constant body rate carrying `q(t_{k−1})`
/// to `q(t_k)`, and the specific force is evaluated at `t_k`, so that the
/// calibrated mechanization inverts the synthesis exactly up to the
/// position/velocity quadrature. Readings are
/// `a = (f + b_a + n_a) / t_a` and `ω = ω_true + b_ω + n_ω` with
/// `n ~ N(0, σ² Δt)` per axis.
pub fn synth_imu(traj: &Trajectory, spec: &ScenarioSpec) -> Result<Vec<ImuSample>> {
    let motion = Motion::new(spec)?;
    let dt = spec.imu_period();
    let mut r = rng(spec.rng_seed, IMU_STREAM);
    let acc_noise = normal(spec.accel_noise * dt.sqrt());
    let gyro_noise = normal(spec.gyro_noise * dt.sqrt());
    let gravity = Vector3::new(0.0, 0.0, STANDARD_GRAVITY);

    let mut out = Vec::with_capacity(traj.len());
    for (k, s) in traj.samples.iter().enumerate() {
        let m = motion.at(s.t);
        let q = s
            .orientation
            .ok_or_else(|| invalid("IMU synthesis needs trajectory orientations"))?;
        let rate = if k == 0 {
            m.angular_rate
        } else {
            let prev = &traj.samples[k - 1];
            let q_prev = prev.orientation.unwrap_or(q);
            (q_prev.conjugate() * q).log() / (s.t - prev.t)
        };
        let force = q.conjugate().rotate(&(m.acceleration + gravity));
        let accel = (force + spec.accel_bias + noise3(&mut r, &acc_noise))
            .component_div(&spec.accel_scale);
        let gyro = rate + spec.gyro_bias + noise3(&mut r, &gyro_noise);
        out.push(ImuSample::new(s.t, accel, gyro));
    }
    Ok(out)
}

/// 3D position fixes at the scenario's GNSS rate with i.i.d. jitter of
/// std `gnss_sigma` and `R = gnss_sigma² I`. Fixes outside the trajectory
/// span are omitted.
pub fn synth_gnss(traj: &Trajectory, spec: &ScenarioSpec) -> Result<Vec<Measurement>> {
    let motion = Motion::new(spec)?;
    let mut r = rng(spec.rng_seed, GNSS_STREAM);
    let d = normal(spec.gnss_sigma);
    let var = (spec.gnss_sigma * spec.gnss_sigma).max(MIN_VARIANCE);
    spec.gnss_times()
        .into_iter()
        .filter(|&t| t >= traj.start() && t <= traj.end())
        .map(|t| {
            let p = motion.at(t).position + noise3(&mut r, &d);
            Measurement::position3d(t, p, Matrix3::identity() * var)
        })
        .collect()
}

/// Height observations at the GNSS times with std `baro_sigma`.
pub fn synth_barometer(traj: &Trajectory, spec: &ScenarioSpec) -> Result<Vec<Measurement>> {
    let motion = Motion::new(spec)?;
    let mut r = rng(spec.rng_seed, BARO_STREAM);
    let d = normal(spec.baro_sigma);
    let var = (spec.baro_sigma * spec.baro_sigma).max(MIN_VARIANCE);
    spec.gnss_times()
        .into_iter()
        .filter(|&t| t >= traj.start() && t <= traj.end())
        .map(|t| Measurement::height(t, motion.at(t).position.z + d.sample(&mut r), var))
        .collect()
}
