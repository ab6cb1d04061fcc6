use nalgebra::{Matrix3, Vector3};

use crate::geodesy::Quaternion;
use crate::ins::{idx, NavState, StateMatrix, StateVector};

/// Gaussian belief over the flattened navigation state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianEstimate {
    pub mean: StateVector,
    pub cov: StateMatrix,
}

impl GaussianEstimate {
    pub fn new(mean: StateVector, cov: StateMatrix) -> Self {
        Self { mean, cov }
    }

    pub fn from_state(state: &NavState, cov: StateMatrix) -> Self {
        Self::new(state.to_vector(), cov)
    }

    pub fn nav_state(&self) -> NavState {
        NavState::from_vector(&self.mean)
    }

    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(idx::POS).into()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(idx::VEL).into()
    }

    pub fn orientation(&self) -> Quaternion {
        Quaternion::from_vector(&self.mean.fixed_rows::<4>(idx::QUAT).into())
    }

    pub fn position_cov(&self) -> Matrix3<f64> {
        self.cov.fixed_view::<3, 3>(idx::POS, idx::POS).into()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && self.cov.iter().all(|v| v.is_finite())
    }

    pub(crate) fn symmetrize(&mut self) {
        self.cov = (self.cov + self.cov.transpose()) * 0.5;
    }

    pub(crate) fn normalize_orientation(&mut self) {
        let mut q = self.mean.fixed_rows_mut::<4>(idx::QUAT);
        let n = q.norm();
        if n > 0.0 {
            q /= n;
        }
    }
}
