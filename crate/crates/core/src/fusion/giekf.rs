use log::{debug, info, warn};
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fusion::{
    forward_pass, rts_smooth, FilterHistory, FusionConfig, GaussianEstimate, Measurement,
    SmoothedTrack,
};
use crate::ins::{ImuSample, NavState, StateVector};
use crate::metrics::{Trajectory, TrajectorySample};

/// Compact per-pass result: smoothed and filtered tracks without the full
/// 19×19 histories.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationResult {
    pub index: usize,
    /// Initial mean `m_0` used for this pass.
    pub initial_mean: StateVector,
    pub smoothed: Trajectory,
    pub filtered: Trajectory,
    /// Largest smoothed-position change from the previous pass (m).
    pub max_position_change: Option<f64>,
    pub regularized_steps: usize,
}

impl IterationResult {
    /// `EKF` for the first pass, `GIEKF-i` afterwards.
    pub fn label(&self) -> String {
        if self.index == 0 {
            "EKF".to_string()
        } else {
            format!("GIEKF-{}", self.index)
        }
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.smoothed
    }
}

#[derive(Clone, Debug)]
pub struct GiekfOutput {
    pub iterations: Vec<IterationResult>,
    /// Forward history and smoothed track of the last accepted pass.
    pub history: FilterHistory,
    pub smoothed: SmoothedTrack,
    pub converged: bool,
    pub diverged: bool,
}

impl GiekfOutput {
    pub fn last(&self) -> &IterationResult {
        self.iterations.last().expect("at least one iteration")
    }

    /// Result of pass `i`, or the last one when fewer passes ran.
    pub fn iteration_or_last(&self, i: usize) -> &IterationResult {
        self.iterations.get(i).unwrap_or_else(|| self.last())
    }
}

fn filtered_trajectory(hist: &FilterHistory) -> Result<Trajectory> {
    Trajectory::new(
        hist.records
            .iter()
            .map(|r| TrajectorySample {
                t: r.t,
                position: r.filtered.position(),
                orientation: Some(r.filtered.orientation()),
                position_cov: Some(r.filtered.position_cov()),
            })
            .collect(),
    )
}

/// Magnitude beyond which a pass counts as diverged: ten times the extent of
/// the position measurements, with the extent floored at 1 m.
fn divergence_bound(meas: &[Measurement]) -> Option<f64> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for m in meas.iter().filter(|m| m.kind.is_position()) {
        let p = m.position_or(&Vector3::zeros())?;
        lo = lo.inf(&p);
        hi = hi.sup(&p);
        any = true;
    }
    any.then(|| 10.0 * (hi - lo).norm().max(1.0))
}

fn run_pass(
    imu: &[ImuSample],
    meas: &[Measurement],
    prior: &GaussianEstimate,
    config: &FusionConfig,
) -> Result<(FilterHistory, SmoothedTrack)> {
    let hist = forward_pass(imu, meas, prior, config)?;
    let smoothed = rts_smooth(&hist)?;
    Ok((hist, smoothed))
}

/// Global iterated EKF: forward filter plus RTS smoother, repeated with the
/// initial mean replaced by the previous smoothed initial mean and the
/// initial covariance kept fixed.
///
/// Stops after `config.max_iterations` passes, when no smoothed position
/// moves more than `config.convergence_tol`, or when a pass diverges (in
/// which case the last good pass is returned and `diverged` is set).
pub fn giekf_run(
    imu: &[ImuSample],
    meas: &[Measurement],
    config: &FusionConfig,
) -> Result<GiekfOutput> {
    config.validate()?;
    let bound = divergence_bound(meas);
    let mut prior = config.prior;
    let (mut history, mut smoothed) = run_pass(imu, meas, &prior, config)?;
    let exceeds = |s: &SmoothedTrack| {
        bound.is_some_and(|b| s.estimates.iter().any(|e| !(e.position().norm() <= b)))
    };
    if exceeds(&smoothed) {
        return Err(Error::InvalidInput(
            "the first pass diverged beyond the measurement extent".into(),
        ));
    }
    let mut iterations = vec![IterationResult {
        index: 0,
        initial_mean: prior.mean,
        smoothed: smoothed.trajectory()?,
        filtered: filtered_trajectory(&history)?,
        max_position_change: None,
        regularized_steps: smoothed.regularized_steps,
    }];
    let mut converged = false;
    let mut diverged = false;

    for index in 1..config.max_iterations {
        prior.mean = smoothed.initial_mean();
        let m0 = NavState::from_vector(&prior.mean);
        debug!(
            "pass {index}: m0 p {:.3?} v {:.3?} q {:.4?} b_a {:.4?} b_w {:.5?} t_a {:.4?}",
            m0.position.as_slice(),
            m0.velocity.as_slice(),
            m0.orientation.to_vector().as_slice(),
            m0.accel_bias.as_slice(),
            m0.gyro_bias.as_slice(),
            m0.accel_scale.as_slice()
        );
        let (h, s) = match run_pass(imu, meas, &prior, config) {
            Ok(pass) => pass,
            Err(e @ (Error::NonFiniteCovariance { .. } | Error::SingularInnovation { .. })) => {
                warn!("pass {index} failed numerically ({e}); keeping pass {}", index - 1);
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if exceeds(&s) {
            warn!("pass {index} diverged; keeping pass {}", index - 1);
            diverged = true;
            break;
        }
        let change = smoothed
            .estimates
            .iter()
            .zip(&s.estimates)
            .map(|(a, b)| (a.position() - b.position()).norm())
            .fold(0.0, f64::max);
        iterations.push(IterationResult {
            index,
            initial_mean: prior.mean,
            smoothed: s.trajectory()?,
            filtered: filtered_trajectory(&h)?,
            max_position_change: Some(change),
            regularized_steps: s.regularized_steps,
        });
        history = h;
        smoothed = s;
        info!("pass {index}: max position change {change:.4} m");
        if change < config.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(GiekfOutput {
        iterations,
        history,
        smoothed,
        converged,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ins::{propagate, NavState};

    fn turning_imu(n: usize) -> Vec<ImuSample> {
        (0..n)
            .map(|i| {
                ImuSample::new(
                    i as f64 * 0.01,
                    Vector3::new(0.2, 0.05, 9.9),
                    Vector3::new(0.0, 0.0, 0.1),
                )
            })
            .collect()
    }

    #[test]
    fn single_pass_equals_forward_and_smoother() {
        let imu = turning_imu(200);
        let meas = vec![
            Measurement::position3d(0.5, Vector3::new(1.0, 0.0, 0.0), nalgebra::Matrix3::identity())
                .unwrap(),
        ];
        let config = FusionConfig {
            max_iterations: 1,
            ..FusionConfig::default()
        };
        let out = giekf_run(&imu, &meas, &config).unwrap();
        let hist = forward_pass(&imu, &meas, &config.prior, &config).unwrap();
        let sm = rts_smooth(&hist).unwrap();
        assert_eq!(out.iterations.len(), 1);
        assert_eq!(out.history, hist);
        assert_eq!(out.smoothed, sm);
        assert_eq!(out.iterations[0].label(), "EKF");
    }

    #[test]
    fn reseeding_with_a_fixed_point_is_bit_identical() {
        let imu = turning_imu(150);
        let meas = vec![
            Measurement::position3d(0.3, Vector3::new(0.5, 0.2, 0.0), nalgebra::Matrix3::identity())
                .unwrap(),
            Measurement::position3d(1.2, Vector3::new(1.5, 0.4, 0.1), nalgebra::Matrix3::identity())
                .unwrap(),
        ];
        let config = FusionConfig {
            max_iterations: 2,
            convergence_tol: 1e-12,
            ..FusionConfig::default()
        };
        let first = giekf_run(&imu, &meas, &config).unwrap();
        let mut reseeded = config.clone();
        reseeded.prior.mean = first.iterations[1].initial_mean;
        reseeded.max_iterations = 1;
        let again = giekf_run(&imu, &meas, &reseeded).unwrap();
        assert_eq!(again.iterations[0].smoothed, first.iterations[1].smoothed);
        assert_eq!(first.iterations[1].label(), "GIEKF-1");
    }

    #[test]
    fn without_measurements_pass_zero_is_dead_reckoning() {
        let imu = turning_imu(300);
        let config = FusionConfig {
            speed_limit: None,
            max_iterations: 1,
            ..FusionConfig::default()
        };
        let out = giekf_run(&imu, &[], &config).unwrap();
        let mut state = NavState::default();
        for (k, r) in out.history.records.iter().enumerate() {
            if k > 0 {
                state = propagate(&state, &imu[k], imu[k].t - imu[k - 1].t, &config.constants.gravity)
                    .unwrap();
            }
            assert!((r.filtered.position() - state.position).norm() < 1e-9);
            assert!((out.iterations[0].smoothed.samples[k].position - state.position).norm() < 1e-9);
        }
    }
}
