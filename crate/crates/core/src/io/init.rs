use log::warn;
use nalgebra::Vector3;

use crate::fusion::{FusionConfig, GaussianEstimate};
use crate::geodesy::Quaternion;
use crate::ins::{idx, ImuSample, NavState};
use crate::io::config::PriorSection;

/// Shortest usable stationary window, s.
pub const MIN_STATIONARY: f64 = 1.0;

/// Prior for the first IMU sample together with how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub prior: GaussianEstimate,
    pub from_stationary: bool,
    /// Samples averaged over the stationary window.
    pub samples: usize,
}

/// Nominal prior at `position`: level, zero velocity, identity calibration.
pub fn default_prior(position: Vector3<f64>, sigmas: &PriorSection) -> GaussianEstimate {
    let state = NavState {
        position,
        ..NavState::default()
    };
    GaussianEstimate::from_state(&state, FusionConfig::diagonal_prior(sigmas.sigmas()))
}

/// Prior from a stationary window `[from, to]`.
///
/// Roll and pitch align the mean accelerometer reading with gravity, the
/// gyroscope bias is the mean rate, the heading is zero with std
/// `unknown_yaw` on the z quaternion component, and the velocity is zero.
/// Windows shorter than [`MIN_STATIONARY`] fall back to [`default_prior`]
/// with a warning.
pub fn init_from_stationary(
    imu: &[ImuSample],
    window: Option<(f64, f64)>,
    position: Vector3<f64>,
    sigmas: &PriorSection,
) -> Initialization {
    let fallback = |reason: &str| {
        warn!("{reason}; using the configured default prior");
        Initialization {
            prior: default_prior(position, sigmas),
            from_stationary: false,
            samples: 0,
        }
    };
    let Some((from, to)) = window else {
        return fallback("no stationary window");
    };
    if !(to - from >= MIN_STATIONARY) {
        return fallback(&format!("stationary window of {:.3} s is shorter than {MIN_STATIONARY} s", to - from));
    }
    let inside: Vec<&ImuSample> = imu.iter().filter(|s| s.t >= from && s.t <= to).collect();
    if inside.len() < 2 {
        return fallback("stationary window holds fewer than two IMU samples");
    }
    let n = inside.len() as f64;
    let acc = inside.iter().map(|s| s.accel).sum::<Vector3<f64>>() / n;
    let gyro = inside.iter().map(|s| s.gyro).sum::<Vector3<f64>>() / n;
    let roll = acc.y.atan2(acc.z);
    let pitch = (-acc.x).atan2(acc.y.hypot(acc.z));
    let state = NavState {
        position,
        orientation: Quaternion::from_euler(roll, pitch, 0.0),
        gyro_bias: gyro,
        ..NavState::default()
    };
    let mut cov = FusionConfig::diagonal_prior(sigmas.sigmas());
    cov[(idx::QUAT + 3, idx::QUAT + 3)] = sigmas.unknown_yaw * sigmas.unknown_yaw;
    Initialization {
        prior: GaussianEstimate::from_state(&state, cov),
        from_stationary: true,
        samples: inside.len(),
    }
}
