use nalgebra::{Matrix2, Vector2};

use crate::error::{invalid, Result};
use crate::fusion::{Measurement, MeasurementKind};

/// Horizontal position fixes (3D or 2D); the only measurements that gap
/// and subsampling ablations remove.
pub fn is_fix(m: &Measurement) -> bool {
    matches!(m.kind, MeasurementKind::Position3d | MeasurementKind::Position2d)
}

fn fix_span(meas: &[Measurement]) -> Option<(f64, f64)> {
    let mut it = meas.iter().filter(|m| is_fix(m)).map(|m| m.t);
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
}

/// Closed time window `[t0 + s T, t0 + (s + g) T]` over the fix span
/// `[t0, t0 + T]`.
pub fn gap_window(meas: &[Measurement], start_fraction: f64, gap_fraction: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&start_fraction) || !(0.0..=1.0).contains(&gap_fraction) {
        return Err(invalid("gap fractions must satisfy 0 ≤ start < 1 and 0 ≤ gap ≤ 1"));
    }
    if start_fraction + gap_fraction > 1.0 + 1e-12 {
        return Err(invalid("gap window extends past the end of the stream"));
    }
    let (t0, t1) = fix_span(meas).ok_or_else(|| invalid("no position fixes to ablate"))?;
    let span = t1 - t0;
    Ok((t0 + start_fraction * span, t0 + (start_fraction + gap_fraction) * span))
}

/// Removes the fixes inside the gap window; other measurements are kept.
/// A zero gap returns the stream unchanged.
pub fn ablate_gap(meas: &[Measurement], start_fraction: f64, gap_fraction: f64) -> Result<Vec<Measurement>> {
    let (from, to) = gap_window(meas, start_fraction, gap_fraction)?;
    if gap_fraction == 0.0 {
        return Ok(meas.to_vec());
    }
    Ok(meas
        .iter()
        .filter(|m| !(is_fix(m) && m.t >= from && m.t <= to))
        .cloned()
        .collect())
}

/// Splits the stream into kept measurements (every `keep_one_in`-th fix
/// starting from the first, plus all non-fix measurements) and the
/// held-out fixes.
pub fn subsample_split(meas: &[Measurement], keep_one_in: usize) -> Result<(Vec<Measurement>, Vec<Measurement>)> {
    if keep_one_in < 1 {
        return Err(invalid("keep_one_in must be at least 1"));
    }
    let mut kept = Vec::new();
    let mut held = Vec::new();
    let mut i = 0;
    for m in meas {
        if !is_fix(m) {
            kept.push(m.clone());
            continue;
        }
        if i % keep_one_in == 0 {
            kept.push(m.clone());
        } else {
            held.push(m.clone());
        }
        i += 1;
    }
    Ok((kept, held))
}

/// Keeps every `keep_one_in`-th fix; see [`subsample_split`].
pub fn subsample(meas: &[Measurement], keep_one_in: usize) -> Result<Vec<Measurement>> {
    Ok(subsample_split(meas, keep_one_in)?.0)
}

/// Replaces 3D fixes by their horizontal part with the horizontal block of
/// their covariance.
pub fn planar_fixes(meas: &[Measurement]) -> Result<Vec<Measurement>> {
    meas.iter()
        .map(|m| {
            if m.kind == MeasurementKind::Position3d {
                let r = Matrix2::new(m.r[(0, 0)], m.r[(0, 1)], m.r[(1, 0)], m.r[(1, 1)]);
                Measurement::position2d(m.t, Vector2::new(m.y[0], m.y[1]), r)
            } else {
                Ok(m.clone())
            }
        })
        .collect()
}
