//! Strapdown INS state, IMU calibration and mechanization.
//!
//! State layout (19 components): position (ENU, m), velocity (m/s),
//! orientation quaternion `w, x, y, z`, additive accelerometer bias (m/s²),
//! additive gyroscope bias (rad/s) and the diagonal accelerometer scale.
//!
//! One mechanization step, for a sample arriving at `t_k` with
//! `Δt = t_k - t_{k-1}`:
//!
//! ```text
//! ã   = diag(t_a) a − b_a          ω̃ = ω − b_ω
//! q_k = normalize(q ⊗ exp(ω̃ Δt))
//! v_k = v + (q_k ⊗ ã ⊗ q_k* − g) Δt
//! p_k = p + v Δt                   (previous velocity)
//! ```

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geodesy::{rotation_increment, rotation_increment_jacobian, Quaternion};

pub const STATE_DIM: usize = 19;
pub const NOISE_DIM: usize = 6;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type NoiseJacobian = SMatrix<f64, STATE_DIM, NOISE_DIM>;

/// Offsets of each sub-state in the flattened vector.
pub mod idx {
    pub const POS: usize = 0;
    pub const VEL: usize = 3;
    pub const QUAT: usize = 6;
    pub const ACC_BIAS: usize = 10;
    pub const GYRO_BIAS: usize = 13;
    pub const ACC_SCALE: usize = 16;
}

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.806_65;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub orientation: Quaternion,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_scale: Vector3<f64>,
}

impl Default for NavState {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            orientation: Quaternion::IDENTITY,
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            accel_scale: Vector3::repeat(1.0),
        }
    }
}

impl NavState {
    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(idx::POS).copy_from(&self.position);
        x.fixed_rows_mut::<3>(idx::VEL).copy_from(&self.velocity);
        x.fixed_rows_mut::<4>(idx::QUAT)
            .copy_from(&self.orientation.to_vector());
        x.fixed_rows_mut::<3>(idx::ACC_BIAS)
            .copy_from(&self.accel_bias);
        x.fixed_rows_mut::<3>(idx::GYRO_BIAS)
            .copy_from(&self.gyro_bias);
        x.fixed_rows_mut::<3>(idx::ACC_SCALE)
            .copy_from(&self.accel_scale);
        x
    }

    /// Unflattens without renormalizing the quaternion.
    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            position: x.fixed_rows::<3>(idx::POS).into(),
            velocity: x.fixed_rows::<3>(idx::VEL).into(),
            orientation: Quaternion::from_vector(&x.fixed_rows::<4>(idx::QUAT).into()),
            accel_bias: x.fixed_rows::<3>(idx::ACC_BIAS).into(),
            gyro_bias: x.fixed_rows::<3>(idx::GYRO_BIAS).into(),
            accel_scale: x.fixed_rows::<3>(idx::ACC_SCALE).into(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    /// Checks the unit-quaternion and scale sanity bounds.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(invalid("navigation state has non-finite components"));
        }
        if (self.orientation.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid("orientation quaternion is not unit norm"));
        }
        if self.accel_scale.iter().any(|s| !(0.5..1.5).contains(s) || *s == 0.5) {
            return Err(invalid("accelerometer scale outside (0.5, 1.5)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Seconds.
    pub t: f64,
    /// Raw specific force, m/s².
    pub accel: Vector3<f64>,
    /// Raw angular rate, rad/s.
    pub gyro: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, accel: Vector3<f64>, gyro: Vector3<f64>) -> Self {
        Self { t, accel, gyro }
    }
}

/// Checks the stream-level timing contract: strictly increasing timestamps
/// with steps no longer than one second.
pub fn validate_stream(samples: &[ImuSample]) -> Result<()> {
    for (i, w) in samples.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0 && dt <= 1.0) {
            return Err(invalid(format!(
                "IMU step {} has Δt = {dt} (must be in (0, 1] s)",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Physical constants and white-noise parameters of the mechanization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InsConstants {
    pub gravity: Vector3<f64>,
    /// Accelerometer noise covariance Σ_a; the per-step covariance is Σ_a Δt.
    pub accel_noise: Matrix3<f64>,
    /// Gyroscope noise covariance Σ_ω; the per-step covariance is Σ_ω Δt.
    pub gyro_noise: Matrix3<f64>,
    /// Optional random-walk variance rate for the accelerometer bias (zero by default).
    pub accel_bias_walk: f64,
    /// Optional random-walk variance rate for the gyroscope bias (zero by default).
    pub gyro_bias_walk: f64,
}

impl Default for InsConstants {
    fn default() -> Self {
        Self::isotropic(0.07, 0.01)
    }
}

impl InsConstants {
    pub fn isotropic(accel_sigma: f64, gyro_sigma: f64) -> Self {
        Self {
            gravity: Vector3::new(0.0, 0.0, STANDARD_GRAVITY),
            accel_noise: Matrix3::identity() * accel_sigma * accel_sigma,
            gyro_noise: Matrix3::identity() * gyro_sigma * gyro_sigma,
            accel_bias_walk: 0.0,
            gyro_bias_walk: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("accel", &self.accel_noise), ("gyro", &self.gyro_noise)] {
            if (m - m.transpose()).abs().max() > 1e-12 || m.cholesky().is_none() {
                return Err(invalid(format!(
                    "{name} noise covariance must be symmetric positive definite"
                )));
            }
        }
        if self.accel_bias_walk < 0.0 || self.gyro_bias_walk < 0.0 {
            return Err(invalid("bias random-walk rates must be non-negative"));
        }
        Ok(())
    }

    /// `Q_k = blkdiag(Σ_a Δt, Σ_ω Δt)`.
    pub fn process_noise(&self, dt: f64) -> SMatrix<f64, NOISE_DIM, NOISE_DIM> {
        let mut q = SMatrix::<f64, NOISE_DIM, NOISE_DIM>::zeros();
        q.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.accel_noise * dt));
        q.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(self.gyro_noise * dt));
        q
    }
}

/// Applies the IMU calibration model: `(diag(t_a) a − b_a, ω − b_ω)`.
pub fn calibrate_imu(sample: &ImuSample, state: &NavState) -> (Vector3<f64>, Vector3<f64>) {
    (
        state.accel_scale.component_mul(&sample.accel) - state.accel_bias,
        sample.gyro - state.gyro_bias,
    )
}

/// One mechanization step with zero process noise.
pub fn propagate(
    state: &NavState,
    sample: &ImuSample,
    dt: f64,
    gravity: &Vector3<f64>,
) -> Result<NavState> {
    mechanize(state, sample, dt, gravity, &Vector3::zeros(), &Vector3::zeros())
}

/// Mechanization with explicit accelerometer and gyroscope noise terms added
/// to the calibrated readings.
pub fn mechanize(
    state: &NavState,
    sample: &ImuSample,
    dt: f64,
    gravity: &Vector3<f64>,
    accel_noise: &Vector3<f64>,
    gyro_noise: &Vector3<f64>,
) -> Result<NavState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("propagation step Δt = {dt} must be positive")));
    }
    let (acc, rate) = calibrate_imu(sample, state);
    let orientation = (state.orientation
        * rotation_increment(&((rate + gyro_noise) * dt)))
    .normalized();
    let accel_world = orientation.rotate(&(acc + accel_noise)) - gravity;
    Ok(NavState {
        position: state.position + state.velocity * dt,
        velocity: state.velocity + accel_world * dt,
        orientation,
        ..*state
    })
}

/// Jacobians of one mechanization step, kept in block form.
///
/// `F_x = I + (sparse blocks)`; only the blocks that differ from the identity
/// are stored. The dense forms are available through [`Self::state_matrix`]
/// and [`Self::noise_matrix`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicsJacobian {
    pub dt: f64,
    /// ∂v/∂q
    pub vel_quat: SMatrix<f64, 3, 4>,
    /// ∂v/∂b_a
    pub vel_accel_bias: Matrix3<f64>,
    /// ∂v/∂b_ω
    pub vel_gyro_bias: Matrix3<f64>,
    /// ∂v/∂t_a
    pub vel_accel_scale: Matrix3<f64>,
    /// ∂q/∂q
    pub quat_quat: Matrix4<f64>,
    /// ∂q/∂b_ω
    pub quat_gyro_bias: SMatrix<f64, 4, 3>,
    /// ∂v/∂ε_a
    pub vel_accel_noise: Matrix3<f64>,
}

impl DynamicsJacobian {
    /// Dense `F_x`.
    pub fn state_matrix(&self) -> StateMatrix {
        let mut f = StateMatrix::identity();
        f.fixed_view_mut::<3, 3>(idx::POS, idx::VEL)
            .copy_from(&(Matrix3::identity() * self.dt));
        f.fixed_view_mut::<3, 4>(idx::VEL, idx::QUAT)
            .copy_from(&self.vel_quat);
        f.fixed_view_mut::<3, 3>(idx::VEL, idx::ACC_BIAS)
            .copy_from(&self.vel_accel_bias);
        f.fixed_view_mut::<3, 3>(idx::VEL, idx::GYRO_BIAS)
            .copy_from(&self.vel_gyro_bias);
        f.fixed_view_mut::<3, 3>(idx::VEL, idx::ACC_SCALE)
            .copy_from(&self.vel_accel_scale);
        f.fixed_view_mut::<4, 4>(idx::QUAT, idx::QUAT)
            .copy_from(&self.quat_quat);
        f.fixed_view_mut::<4, 3>(idx::QUAT, idx::GYRO_BIAS)
            .copy_from(&self.quat_gyro_bias);
        f
    }

    /// Dense `F_ε` (columns: accelerometer noise, gyroscope noise).
    pub fn noise_matrix(&self) -> NoiseJacobian {
        let mut g = NoiseJacobian::zeros();
        g.fixed_view_mut::<3, 3>(idx::VEL, 0)
            .copy_from(&self.vel_accel_noise);
        // Gyro noise enters exactly where the gyro bias does, with opposite sign.
        g.fixed_view_mut::<3, 3>(idx::VEL, 3)
            .copy_from(&(-self.vel_gyro_bias));
        g.fixed_view_mut::<4, 3>(idx::QUAT, 3)
            .copy_from(&(-self.quat_gyro_bias));
        g
    }

    /// Computes `F_x M` using the block structure.
    pub fn apply(&self, m: &StateMatrix) -> StateMatrix {
        let mut out = *m;
        let vel_rows = m.fixed_rows::<3>(idx::VEL);
        let quat_rows = m.fixed_rows::<4>(idx::QUAT);
        let ba_rows = m.fixed_rows::<3>(idx::ACC_BIAS);
        let bw_rows = m.fixed_rows::<3>(idx::GYRO_BIAS);
        let ta_rows = m.fixed_rows::<3>(idx::ACC_SCALE);

        let pos = m.fixed_rows::<3>(idx::POS) + vel_rows * self.dt;
        let vel = vel_rows
            + self.vel_quat * quat_rows
            + self.vel_accel_bias * ba_rows
            + self.vel_gyro_bias * bw_rows
            + self.vel_accel_scale * ta_rows;
        let quat = self.quat_quat * quat_rows + self.quat_gyro_bias * bw_rows;

        out.fixed_rows_mut::<3>(idx::POS).copy_from(&pos);
        out.fixed_rows_mut::<3>(idx::VEL).copy_from(&vel);
        out.fixed_rows_mut::<4>(idx::QUAT).copy_from(&quat);
        out
    }

    /// `F_x P F_xᵀ + F_ε Q F_εᵀ` plus any configured bias random walk.
    pub fn propagate_covariance(&self, p: &StateMatrix, constants: &InsConstants) -> StateMatrix {
        let fp = self.apply(p);
        let mut out = self.apply(&fp.transpose());
        let g = self.noise_matrix();
        out += g * constants.process_noise(self.dt) * g.transpose();
        for i in 0..3 {
            out[(idx::ACC_BIAS + i, idx::ACC_BIAS + i)] += constants.accel_bias_walk * self.dt;
            out[(idx::GYRO_BIAS + i, idx::GYRO_BIAS + i)] += constants.gyro_bias_walk * self.dt;
        }
        out
    }
}

/// `F_x = ∂f/∂x` and `F_ε = ∂f/∂ε` of [`propagate`], evaluated at zero noise.
///
/// Includes the derivative of the quaternion renormalization, so the
/// quaternion rows map into the tangent space of the propagated orientation.
pub fn dynamics_jacobians(
    state: &NavState,
    sample: &ImuSample,
    dt: f64,
) -> Result<(StateMatrix, NoiseJacobian)> {
    let j = linearize(state, sample, dt)?;
    Ok((j.state_matrix(), j.noise_matrix()))
}

/// Block-form Jacobians; see [`dynamics_jacobians`].
pub fn linearize(state: &NavState, sample: &ImuSample, dt: f64) -> Result<DynamicsJacobian> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("propagation step Δt = {dt} must be positive")));
    }
    let (acc, rate) = calibrate_imu(sample, state);
    let theta = rate * dt;
    let increment = rotation_increment(&theta);
    let raw = state.orientation * increment;
    let norm = raw.norm();
    let q_next = Quaternion::from_vector(&(raw.to_vector() / norm));
    let qn: Vector4<f64> = q_next.to_vector();
    let renorm = (Matrix4::identity() - qn * qn.transpose()) / norm;

    let quat_quat = renorm * increment.right_matrix();
    let quat_gyro_bias =
        renorm * state.orientation.left_matrix() * rotation_increment_jacobian(&theta) * (-dt);

    let rot = q_next.rotation_matrix();
    let d_rot = q_next.rotation_jacobian(&acc) * dt;

    Ok(DynamicsJacobian {
        dt,
        vel_quat: d_rot * quat_quat,
        vel_accel_bias: -rot * dt,
        vel_gyro_bias: d_rot * quat_gyro_bias,
        vel_accel_scale: rot * Matrix3::from_diagonal(&sample.accel) * dt,
        quat_quat,
        quat_gyro_bias,
        vel_accel_noise: rot * dt,
    })
}
