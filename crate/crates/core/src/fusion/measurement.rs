use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fusion::GaussianEstimate;
use crate::ins::{idx, STATE_DIM};

/// Below this speed the norm gradient is undefined and speed updates are skipped.
const MIN_SPEED: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    /// Full ENU position.
    Position3d,
    /// East and north only.
    Position2d,
    /// Up component only (barometer).
    Height,
    /// Zero-velocity pseudo-measurement.
    Zupt,
    /// Observation of the speed `‖v‖`.
    SpeedLimit,
}

impl MeasurementKind {
    pub fn dim(self) -> usize {
        match self {
            Self::Position3d | Self::Zupt => 3,
            Self::Position2d => 2,
            Self::Height | Self::SpeedLimit => 1,
        }
    }

    pub fn is_position(self) -> bool {
        matches!(self, Self::Position3d | Self::Position2d | Self::Height)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub t: f64,
    pub kind: MeasurementKind,
    pub y: DVector<f64>,
    pub r: DMatrix<f64>,
}

impl Measurement {
    pub fn new(t: f64, kind: MeasurementKind, y: DVector<f64>, r: DMatrix<f64>) -> Result<Self> {
        let m = Self { t, kind, y, r };
        m.validate()?;
        Ok(m)
    }

    pub fn position3d(t: f64, p: Vector3<f64>, r: Matrix3<f64>) -> Result<Self> {
        Self::new(
            t,
            MeasurementKind::Position3d,
            DVector::from_column_slice(p.as_slice()),
            DMatrix::from_column_slice(3, 3, r.as_slice()),
        )
    }

    pub fn position2d(t: f64, p: Vector2<f64>, r: Matrix2<f64>) -> Result<Self> {
        Self::new(
            t,
            MeasurementKind::Position2d,
            DVector::from_column_slice(p.as_slice()),
            DMatrix::from_column_slice(2, 2, r.as_slice()),
        )
    }

    pub fn height(t: f64, up: f64, variance: f64) -> Result<Self> {
        Self::new(
            t,
            MeasurementKind::Height,
            DVector::from_element(1, up),
            DMatrix::from_element(1, 1, variance),
        )
    }

    pub fn zupt(t: f64, variance: f64) -> Result<Self> {
        Self::new(
            t,
            MeasurementKind::Zupt,
            DVector::zeros(3),
            DMatrix::identity(3, 3) * variance,
        )
    }

    pub fn speed_limit(t: f64, max_speed: f64, variance: f64) -> Result<Self> {
        Self::new(
            t,
            MeasurementKind::SpeedLimit,
            DVector::from_element(1, max_speed),
            DMatrix::from_element(1, 1, variance),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.kind.dim();
        if !self.t.is_finite() {
            return Err(invalid("measurement time is not finite"));
        }
        if self.y.len() != d || self.r.nrows() != d || self.r.ncols() != d {
            return Err(invalid(format!(
                "{:?} measurement needs a {d}-vector and {d}x{d} covariance",
                self.kind
            )));
        }
        if !self.y.iter().all(|v| v.is_finite()) {
            return Err(invalid("measurement value is not finite"));
        }
        if (&self.r - self.r.transpose()).abs().max() > 1e-12
            || self.r.clone().cholesky().is_none()
        {
            return Err(invalid(format!(
                "{:?} measurement covariance is not symmetric positive definite",
                self.kind
            )));
        }
        Ok(())
    }

    /// Position part of a position-type fix, padded with `fill` for the
    /// components the kind does not observe.
    pub fn position_or(&self, fill: &Vector3<f64>) -> Option<Vector3<f64>> {
        match self.kind {
            MeasurementKind::Position3d => Some(Vector3::new(self.y[0], self.y[1], self.y[2])),
            MeasurementKind::Position2d => Some(Vector3::new(self.y[0], self.y[1], fill.z)),
            MeasurementKind::Height => Some(Vector3::new(fill.x, fill.y, self.y[0])),
            _ => None,
        }
    }
}

/// Predicted observation `ŷ = h(m)` and Jacobian `H = ∂h/∂x` (dim × 19).
///
/// Returns `None` for a speed observation at (near) zero speed, where the
/// gradient of the norm is undefined.
pub fn measurement_model(
    kind: MeasurementKind,
    est: &GaussianEstimate,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let m = &est.mean;
    let d = kind.dim();
    let mut h = DMatrix::zeros(d, STATE_DIM);
    let select = |h: &mut DMatrix<f64>, offset: usize, n: usize| {
        for i in 0..n {
            h[(i, offset + i)] = 1.0;
        }
    };
    let y = match kind {
        MeasurementKind::Position3d => {
            select(&mut h, idx::POS, 3);
            DVector::from_column_slice(&m.as_slice()[idx::POS..idx::POS + 3])
        }
        MeasurementKind::Position2d => {
            select(&mut h, idx::POS, 2);
            DVector::from_column_slice(&m.as_slice()[idx::POS..idx::POS + 2])
        }
        MeasurementKind::Height => {
            h[(0, idx::POS + 2)] = 1.0;
            DVector::from_element(1, m[idx::POS + 2])
        }
        MeasurementKind::Zupt => {
            select(&mut h, idx::VEL, 3);
            DVector::from_column_slice(&m.as_slice()[idx::VEL..idx::VEL + 3])
        }
        MeasurementKind::SpeedLimit => {
            let v = est.velocity();
            let speed = v.norm();
            if speed < MIN_SPEED {
                return None;
            }
            for i in 0..3 {
                h[(0, idx::VEL + i)] = v[i] / speed;
            }
            DVector::from_element(1, speed)
        }
    };
    Some((y, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ins::NavState;
    use crate::ins::StateMatrix;

    fn est_with_velocity(v: Vector3<f64>) -> GaussianEstimate {
        let s = NavState {
            position: Vector3::new(4.0, -2.0, 1.5),
            velocity: v,
            ..NavState::default()
        };
        GaussianEstimate::from_state(&s, StateMatrix::identity())
    }

    #[test]
    fn selectors() {
        let e = est_with_velocity(Vector3::new(0.3, 0.4, 0.0));
        let (y, h) = measurement_model(MeasurementKind::Position3d, &e).unwrap();
        assert_eq!(y.as_slice(), &[4.0, -2.0, 1.5]);
        assert_eq!(&h * e.mean.clone_owned(), y);
        let (y, _) = measurement_model(MeasurementKind::Position2d, &e).unwrap();
        assert_eq!(y.as_slice(), &[4.0, -2.0]);
        let (y, _) = measurement_model(MeasurementKind::Height, &e).unwrap();
        assert_eq!(y.as_slice(), &[1.5]);
        let (y, _) = measurement_model(MeasurementKind::Zupt, &e).unwrap();
        assert_eq!(y.as_slice(), &[0.3, 0.4, 0.0]);
    }

    #[test]
    fn speed_gradient_matches_finite_differences() {
        let e = est_with_velocity(Vector3::new(3.0, 4.0, 0.0));
        let (y, h) = measurement_model(MeasurementKind::SpeedLimit, &e).unwrap();
        assert!((y[0] - 5.0).abs() < 1e-15);
        assert!((h[(0, idx::VEL)] - 0.6).abs() < 1e-15);
        assert!((h[(0, idx::VEL + 1)] - 0.8).abs() < 1e-15);
        for c in 0..STATE_DIM {
            let mut p = e;
            let mut m = e;
            p.mean[c] += 1e-6;
            m.mean[c] -= 1e-6;
            let fd = (p.velocity().norm() - m.velocity().norm()) / 2e-6;
            assert!((fd - h[(0, c)]).abs() < 1e-6);
        }
        assert!(measurement_model(MeasurementKind::SpeedLimit, &est_with_velocity(Vector3::zeros())).is_none());
    }

    #[test]
    fn rejects_bad_covariances() {
        assert!(Measurement::height(0.0, 1.0, 0.0).is_err());
        assert!(Measurement::height(0.0, 1.0, -1.0).is_err());
        assert!(Measurement::zupt(0.0, 1e-4).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Measurement::new(0.0, MeasurementKind::Position2d, DVector::zeros(2), asym).is_err());
        assert!(Measurement::new(0.0, MeasurementKind::Position2d, DVector::zeros(3), DMatrix::identity(3, 3)).is_err());
    }
}
