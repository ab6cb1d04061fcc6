use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::fusion::Measurement;
use crate::metrics::Trajectory;

/// `−log N(y | μ, S)`.
pub fn gaussian_nlpd(y: &DVector<f64>, mu: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let d = y.len();
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| invalid("predictive covariance is not positive definite"))?;
    let r = y - mu;
    let maha = r.dot(&chol.solve(&r));
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * (maha + log_det + d as f64 * (2.0 * std::f64::consts::PI).ln()))
}

/// Mean negative log predictive density of held-out position fixes,
/// evaluated at the nearest-in-time sample of `track`, which must carry
/// position covariances.
pub fn nlpd_score(track: &Trajectory, heldout: &[Measurement]) -> Result<f64> {
    let fixes: Vec<&Measurement> = heldout.iter().filter(|m| m.kind.is_position()).collect();
    if fixes.is_empty() {
        return Err(invalid("NLPD needs at least one held-out position fix"));
    }
    let mut total = 0.0;
    for m in &fixes {
        let s = track.nearest(m.t);
        let cov = s
            .position_cov
            .ok_or_else(|| invalid("NLPD needs a track with position covariances"))?;
        let axes: &[usize] = match m.kind.dim() {
            3 => &[0, 1, 2],
            2 => &[0, 1],
            _ => &[2],
        };
        let mu = DVector::from_iterator(axes.len(), axes.iter().map(|&i| s.position[i]));
        let s_mat = DMatrix::from_fn(axes.len(), axes.len(), |i, j| cov[(axes[i], axes[j])])
            + &m.r;
        total += gaussian_nlpd(&m.y, &mu, &s_mat)?;
    }
    Ok(total / fixes.len() as f64)
}
