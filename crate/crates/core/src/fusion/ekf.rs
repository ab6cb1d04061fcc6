use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::fusion::{measurement_model, GaussianEstimate, Measurement, MeasurementKind};
use crate::ins::{linearize, propagate, DynamicsJacobian, ImuSample, InsConstants, STATE_DIM};

/// EKF prediction through one IMU sample.
pub fn ekf_predict(
    est: &GaussianEstimate,
    sample: &ImuSample,
    dt: f64,
    constants: &InsConstants,
) -> Result<GaussianEstimate> {
    predict_with_jacobian(est, sample, dt, constants).map(|(e, _)| e)
}

/// EKF prediction that also returns the linearization used, which the
/// smoother needs for its gain.
pub fn predict_with_jacobian(
    est: &GaussianEstimate,
    sample: &ImuSample,
    dt: f64,
    constants: &InsConstants,
) -> Result<(GaussianEstimate, DynamicsJacobian)> {
    let state = est.nav_state();
    let jac = linearize(&state, sample, dt)?;
    let next = propagate(&state, sample, dt, &constants.gravity)?;
    let mut out = GaussianEstimate::from_state(&next, jac.propagate_covariance(&est.cov, constants));
    out.normalize_orientation();
    out.symmetrize();
    if !out.is_finite() {
        return Err(Error::NonFiniteCovariance { step: 0 });
    }
    Ok((out, jac))
}

/// Kalman update with the Joseph-form covariance:
///
/// ```text
/// S = H P Hᵀ + R,  K = P Hᵀ S⁻¹,  m' = m + K v
/// P' = (I − K H) P (I − K H)ᵀ + K R Kᵀ
/// ```
///
/// Returns `None` when `S` is not positive definite.
#[allow(clippy::type_complexity)]
pub fn joseph_update<const N: usize, const M: usize>(
    mean: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
    innovation: &SVector<f64, M>,
    h: &SMatrix<f64, M, N>,
    r: &SMatrix<f64, M, M>,
) -> Option<(SVector<f64, N>, SMatrix<f64, N, N>, SMatrix<f64, M, M>)> {
    let pht = cov * h.transpose();
    let s = h * pht + r;
    let s = (s + s.transpose()) * 0.5;
    let s_inv = s.cholesky()?.inverse();
    let k = pht * s_inv;
    let ikh = SMatrix::<f64, N, N>::identity() - k * h;
    let p = ikh * cov * ikh.transpose() + k * r * k.transpose();
    Some((mean + k * innovation, (p + p.transpose()) * 0.5, s))
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub estimate: GaussianEstimate,
    /// `y − h(m)`; empty when the update was skipped.
    pub innovation: DVector<f64>,
    /// `H P Hᵀ + R`; empty when the update was skipped.
    pub innovation_cov: DMatrix<f64>,
    pub applied: bool,
}

impl UpdateOutcome {
    fn skipped(est: &GaussianEstimate) -> Self {
        Self {
            estimate: *est,
            innovation: DVector::zeros(0),
            innovation_cov: DMatrix::zeros(0, 0),
            applied: false,
        }
    }
}

/// EKF measurement update.
///
/// Speed observations are one-sided: they only act when the predicted speed
/// exceeds the observed limit, and are skipped at zero speed.
pub fn ekf_update(est: &GaussianEstimate, meas: &Measurement) -> Result<UpdateOutcome> {
    let Some((y_hat, h)) = measurement_model(meas.kind, est) else {
        return Ok(UpdateOutcome::skipped(est));
    };
    if meas.kind == MeasurementKind::SpeedLimit && y_hat[0] <= meas.y[0] {
        return Ok(UpdateOutcome::skipped(est));
    }
    let innovation = &meas.y - &y_hat;
    let result = match meas.kind.dim() {
        1 => update_dim::<1>(est, &innovation, &h, &meas.r),
        2 => update_dim::<2>(est, &innovation, &h, &meas.r),
        3 => update_dim::<3>(est, &innovation, &h, &meas.r),
        d => unreachable!("measurement dimension {d}"),
    };
    let Some((mut estimate, s)) = result else {
        return Err(Error::SingularInnovation { t: meas.t });
    };
    estimate.normalize_orientation();
    if !estimate.is_finite() {
        return Err(Error::SingularInnovation { t: meas.t });
    }
    Ok(UpdateOutcome {
        estimate,
        innovation,
        innovation_cov: s,
        applied: true,
    })
}

fn update_dim<const M: usize>(
    est: &GaussianEstimate,
    innovation: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Option<(GaussianEstimate, DMatrix<f64>)> {
    let v = SVector::<f64, M>::from_column_slice(innovation.as_slice());
    let h = SMatrix::<f64, M, STATE_DIM>::from_column_slice(h.as_slice());
    let r = SMatrix::<f64, M, M>::from_column_slice(r.as_slice());
    let (mean, cov, s) = joseph_update(&est.mean, &est.cov, &v, &h, &r)?;
    Some((
        GaussianEstimate::new(mean, cov),
        DMatrix::from_column_slice(M, M, s.as_slice()),
    ))
}
