use nalgebra::Vector3;

use crate::error::{invalid, Result};
use crate::fusion::{Measurement, MeasurementKind};
use crate::metrics::{Trajectory, TrajectorySample};

/// Line-interpolation reference track.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline {
    pub trajectory: Trajectory,
    /// Evaluation times that fell outside the fix span and were clamped.
    pub clamped: usize,
}

/// Piecewise-linear interpolation of a scalar series, clamped at the ends.
fn interp(series: &[(f64, f64)], t: f64) -> f64 {
    let k = series.partition_point(|s| s.0 < t);
    if k == 0 {
        return series[0].1;
    }
    if k == series.len() {
        return series[k - 1].1;
    }
    let (a, b) = (series[k - 1], series[k]);
    if b.0 == t {
        return b.1;
    }
    a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
}

/// Piecewise-linear positions between fixes, evaluated at `eval_times`.
///
/// Horizontal components come from 3D and 2D fixes, the vertical component
/// from 3D fixes and height observations (zero when there are none).
pub fn line_interpolation_baseline(fixes: &[Measurement], eval_times: &[f64]) -> Result<Baseline> {
    let mut horizontal: Vec<(f64, f64, f64)> = Vec::new();
    let mut vertical: Vec<(f64, f64)> = Vec::new();
    for m in fixes {
        match m.kind {
            MeasurementKind::Position3d => {
                horizontal.push((m.t, m.y[0], m.y[1]));
                vertical.push((m.t, m.y[2]));
            }
            MeasurementKind::Position2d => horizontal.push((m.t, m.y[0], m.y[1])),
            MeasurementKind::Height => vertical.push((m.t, m.y[0])),
            _ => {}
        }
    }
    if horizontal.len() < 2 {
        return Err(invalid("line interpolation needs at least two position fixes"));
    }
    horizontal.sort_by(|a, b| a.0.total_cmp(&b.0));
    vertical.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<(f64, f64)> = horizontal.iter().map(|h| (h.0, h.1)).collect();
    let ys: Vec<(f64, f64)> = horizontal.iter().map(|h| (h.0, h.2)).collect();
    let (first, last) = (xs[0].0, xs[xs.len() - 1].0);
    let mut clamped = 0;
    let samples = eval_times
        .iter()
        .map(|&t| {
            if t < first || t > last {
                clamped += 1;
            }
            let z = if vertical.is_empty() { 0.0 } else { interp(&vertical, t) };
            TrajectorySample::at(t, Vector3::new(interp(&xs, t), interp(&ys, t), z))
        })
        .collect();
    Ok(Baseline {
        trajectory: Trajectory::new(samples)?,
        clamped,
    })
}
