use crate::error::{invalid, Result};
use crate::fusion::GaussianEstimate;
use crate::ins::{idx, InsConstants, NavState, StateMatrix, STATE_DIM};

/// One-sided speed constraint: applied as a pseudo-measurement
/// `‖v‖ = max_speed` only when the predicted speed exceeds `max_speed`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedLimit {
    pub max_speed: f64,
    pub sigma: f64,
    /// Minimum time between two checks, s. Zero checks after every
    /// prediction.
    pub interval: f64,
}

impl Default for SpeedLimit {
    fn default() -> Self {
        Self {
            max_speed: 3.5,
            sigma: 0.5,
            interval: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionConfig {
    /// Prior `N(m_0, P_0)` at the first IMU timestamp.
    pub prior: GaussianEstimate,
    pub constants: InsConstants,
    /// Total number of forward/backward passes, counting the plain EKF pass.
    pub max_iterations: usize,
    /// Stop once no smoothed position moves more than this between passes (m).
    pub convergence_tol: f64,
    /// Off by default.
    pub speed_limit: Option<SpeedLimit>,
    /// Maps a platform accuracy radius `r` to a per-axis sigma `factor · r`.
    pub accuracy_to_sigma: f64,
    /// Measurements within this fraction of the nominal IMU period of a sample
    /// are applied at that sample; others get a dedicated propagation step.
    pub snap_fraction: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            prior: GaussianEstimate::from_state(
                &NavState::default(),
                Self::default_prior_covariance(),
            ),
            constants: InsConstants::default(),
            max_iterations: 21,
            convergence_tol: 0.01,
            speed_limit: None,
            accuracy_to_sigma: 0.5,
            snap_fraction: 0.5,
        }
    }
}

impl FusionConfig {
    /// Diagonal prior: position (10 m)², velocity (1 m/s)², quaternion
    /// components (1e-2)², accelerometer bias (0.1 m/s²)², gyroscope bias
    /// (0.01 rad/s)², accelerometer scale (0.05)².
    pub fn default_prior_covariance() -> StateMatrix {
        Self::diagonal_prior([10.0, 1.0, 1e-2, 0.1, 0.01, 0.05])
    }

    /// Diagonal prior from per-block standard deviations in state order.
    pub fn diagonal_prior(sigmas: [f64; 6]) -> StateMatrix {
        let blocks = [
            (idx::POS, 3),
            (idx::VEL, 3),
            (idx::QUAT, 4),
            (idx::ACC_BIAS, 3),
            (idx::GYRO_BIAS, 3),
            (idx::ACC_SCALE, 3),
        ];
        let mut p = StateMatrix::zeros();
        for ((start, len), s) in blocks.into_iter().zip(sigmas) {
            for i in start..start + len {
                p[(i, i)] = s * s;
            }
        }
        p
    }

    pub fn with_prior_mean(mut self, state: &NavState) -> Self {
        self.prior.mean = state.to_vector();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(invalid("convergence_tol must be positive"));
        }
        if let Some(s) = self.speed_limit {
            if !(s.max_speed > 0.0 && s.sigma > 0.0) {
                return Err(invalid("speed limit and its sigma must be positive"));
            }
        }
        if !(self.accuracy_to_sigma > 0.0) {
            return Err(invalid("accuracy_to_sigma must be positive"));
        }
        self.constants.validate()?;
        let p = &self.prior.cov;
        if (p - p.transpose()).abs().max() > 1e-9 {
            return Err(invalid("prior covariance is not symmetric"));
        }
        if (0..STATE_DIM).any(|i| p[(i, i)] < 0.0) || !self.prior.is_finite() {
            return Err(invalid("prior covariance has negative or non-finite entries"));
        }
        Ok(())
    }

    /// Per-axis measurement variance for an accuracy radius in meters.
    pub fn accuracy_variance(&self, radius: f64) -> f64 {
        let s = self.accuracy_to_sigma * radius;
        s * s
    }
}
