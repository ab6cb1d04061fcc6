use log::debug;
use nalgebra::{SMatrix, SVector, Vector4};

use crate::error::{invalid, Result};
use crate::fusion::{FilterHistory, GaussianEstimate};
use crate::ins::{idx, StateVector, STATE_DIM};
use crate::metrics::{Trajectory, TrajectorySample};

/// Fixed-interval smoothed estimates `m_{k|n}, P_{k|n}`, aligned with the
/// records of the filter history they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedTrack {
    pub times: Vec<f64>,
    pub imu_index: Vec<Option<usize>>,
    pub estimates: Vec<GaussianEstimate>,
    /// Steps where `P_{k+1|k}` needed the `1e-12 I` fallback regularization.
    pub regularized_steps: usize,
}

impl SmoothedTrack {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn initial_mean(&self) -> StateVector {
        self.estimates[0].mean
    }

    /// Positions, orientations and position covariances as a trajectory.
    pub fn trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(
            self.times
                .iter()
                .zip(&self.estimates)
                .map(|(&t, e)| TrajectorySample {
                    t,
                    position: e.position(),
                    orientation: Some(e.orientation()),
                    position_cov: Some(e.position_cov()),
                })
                .collect(),
        )
    }
}

/// One backward RTS step:
///
/// ```text
/// G = P_{k|k} Fᵀ P_{k+1|k}⁻¹
/// m_{k|n} = m_{k|k} + G (m_{k+1|n} − m_{k+1|k})
/// P_{k|n} = P_{k|k} + G (P_{k+1|n} − P_{k+1|k}) Gᵀ
/// ```
///
/// `fp` is `F P_{k|k}`. `null_direction`, when given, is a unit vector known
/// to be in the null space of `P_{k+1|k}` and of `F P_{k|k}`; it is filled
/// in before factorizing so the inverse stays well defined on the remaining
/// subspace. Returns the smoothed moments and whether the `1e-12 I`
/// fallback was needed.
#[allow(clippy::type_complexity, clippy::too_many_arguments)]
pub fn rts_step<const N: usize>(
    filtered_mean: &SVector<f64, N>,
    filtered_cov: &SMatrix<f64, N, N>,
    fp: &SMatrix<f64, N, N>,
    predicted_mean: &SVector<f64, N>,
    predicted_cov: &SMatrix<f64, N, N>,
    next_mean: &SVector<f64, N>,
    next_cov: &SMatrix<f64, N, N>,
    null_direction: Option<&SVector<f64, N>>,
) -> Result<(SVector<f64, N>, SMatrix<f64, N, N>, bool)> {
    let mut pp = *predicted_cov;
    if let Some(u) = null_direction {
        let scale = pp.trace() / N as f64;
        pp += u * u.transpose() * scale;
    }
    let mut regularized = false;
    let chol = match pp.cholesky() {
        Some(c) => c,
        None => {
            regularized = true;
            (pp + SMatrix::<f64, N, N>::identity() * 1e-12)
                .cholesky()
                .ok_or_else(|| invalid("predicted covariance is not positive semi-definite"))?
        }
    };
    let gain = chol.solve(fp).transpose();
    let mean = filtered_mean + gain * (next_mean - predicted_mean);
    let cov = filtered_cov + gain * (next_cov - predicted_cov) * gain.transpose();
    Ok((mean, (cov + cov.transpose()) * 0.5, regularized))
}

/// Replaces the unit quaternion in `mean` by its central projection onto the
/// tangent plane at `u`, `q / ⟨u, q⟩`. The difference to `u` is then the
/// tangent vector that renormalization maps back onto `q` exactly, so large
/// attitude corrections survive the backward recursion undamped.
fn lift_to_tangent_plane(mean: &mut StateVector, u: &Vector4<f64>) -> Result<()> {
    let mut q: Vector4<f64> = mean.fixed_rows::<4>(idx::QUAT).into();
    let mut c = u.dot(&q);
    if c < 0.0 {
        q = -q;
        c = -c;
    }
    if c < 1e-6 {
        return Err(invalid("smoothed and predicted orientations are a half turn apart"));
    }
    mean.fixed_rows_mut::<4>(idx::QUAT).copy_from(&(q / c));
    Ok(())
}

/// Extended RTS smoother over a complete forward history.
///
/// The full-state quaternion makes every `P_{k+1|k}` singular along the
/// predicted quaternion itself (the renormalization Jacobian removes that
/// direction); the smoother fills that direction in before inverting.
pub fn rts_smooth(hist: &FilterHistory) -> Result<SmoothedTrack> {
    let n = hist.records.len();
    if n == 0 {
        return Err(invalid("cannot smooth an empty history"));
    }
    let mut estimates = vec![hist.records[n - 1].filtered; n];
    let mut regularized_steps = 0;
    for k in (0..n - 1).rev() {
        let cur = &hist.records[k];
        let next = &hist.records[k + 1];
        let transition = next
            .transition
            .as_ref()
            .ok_or_else(|| invalid(format!("history record {} has no transition", k + 1)))?;
        let fp = transition.apply(&cur.filtered.cov);
        let q: Vector4<f64> = next.predicted.mean.fixed_rows::<4>(idx::QUAT).into();
        let mut gauge = StateVector::zeros();
        gauge.fixed_rows_mut::<4>(idx::QUAT).copy_from(&q.normalize());
        let mut smoothed_next = estimates[k + 1];
        lift_to_tangent_plane(&mut smoothed_next.mean, &q.normalize())?;
        let (mean, cov, reg) = rts_step::<STATE_DIM>(
            &cur.filtered.mean,
            &cur.filtered.cov,
            &fp,
            &next.predicted.mean,
            &next.predicted.cov,
            &smoothed_next.mean,
            &smoothed_next.cov,
            Some(&gauge),
        )?;
        if reg {
            regularized_steps += 1;
            debug!("regularized predicted covariance at step {}", k + 1);
        }
        let mut est = GaussianEstimate::new(mean, cov);
        est.normalize_orientation();
        estimates[k] = est;
    }
    Ok(SmoothedTrack {
        times: hist.records.iter().map(|r| r.t).collect(),
        imu_index: hist.records.iter().map(|r| r.imu_index).collect(),
        estimates,
        regularized_steps,
    })
}
