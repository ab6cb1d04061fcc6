use nalgebra::Vector3;

use crate::error::{invalid, Result};
use crate::fusion::{Measurement, MeasurementKind};
use crate::metrics::Trajectory;

/// Pointwise position RMSE and MAE of `test` against `gt`, evaluated at the
/// ground-truth times inside the test span. No alignment.
pub fn rmse_mae(gt: &Trajectory, test: &Trajectory) -> Result<(f64, f64)> {
    let (mut sq, mut abs, mut n) = (0.0, 0.0, 0usize);
    for s in gt
        .samples
        .iter()
        .filter(|s| s.t >= test.start() && s.t <= test.end())
    {
        let e = (test.interpolate(s.t)?.position - s.position).norm();
        sq += e * e;
        abs += e;
        n += 1;
    }
    if n == 0 {
        return Err(invalid("tracks do not overlap in time"));
    }
    Ok(((sq / n as f64).sqrt(), abs / n as f64))
}

/// Distance between `track` (interpolated) and each position-type fix,
/// on the axes the fix observes. Fixes outside the track span are skipped.
pub fn heldout_errors(track: &Trajectory, fixes: &[Measurement]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for m in fixes.iter().filter(|m| m.kind.is_position()) {
        if m.t < track.start() || m.t > track.end() {
            continue;
        }
        let p = track.interpolate(m.t)?.position;
        let e = match m.kind {
            MeasurementKind::Position3d => (Vector3::new(m.y[0], m.y[1], m.y[2]) - p).norm(),
            MeasurementKind::Position2d => ((m.y[0] - p.x).powi(2) + (m.y[1] - p.y).powi(2)).sqrt(),
            _ => (m.y[0] - p.z).abs(),
        };
        out.push(e);
    }
    Ok(out)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
