use std::fmt::Write as _;

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::{alignment_rmse, planar_alignment_rmse, Trajectory};

/// Window stride as a fraction of the window duration.
pub const DEFAULT_STRIDE_FRACTION: f64 = 0.25;

/// Degrees of freedom of the per-window alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignmentSpace {
    /// Full 3D rotation and translation.
    #[default]
    #[serde(rename = "3d")]
    Spatial,
    /// Rotation about the vertical and horizontal translation, scored on
    /// horizontal errors only.
    #[serde(rename = "planar")]
    Planar,
}

/// Scaled aligned RMSE per timescale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SarmseCurve {
    pub scales: Vec<f64>,
    pub errors: Vec<f64>,
    pub segments: Vec<usize>,
    /// Requested scales that did not fit in the overlap.
    pub skipped: Vec<f64>,
}

impl SarmseCurve {
    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Error at the longest evaluated scale.
    pub fn largest_scale_error(&self) -> Option<f64> {
        self.errors.last().copied()
    }

    /// `scale_seconds,error_meters,n_segments` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale_seconds,error_meters,n_segments\n");
        for ((s, e), n) in self.scales.iter().zip(&self.errors).zip(&self.segments) {
            let _ = writeln!(out, "{s},{e},{n}");
        }
        out
    }
}

/// `count` logarithmically spaced scales from 1 s to `duration`.
pub fn default_scales(duration: f64, count: usize) -> Vec<f64> {
    let lo: f64 = 1.0;
    if count < 2 || duration <= lo {
        return vec![duration];
    }
    let ratio = (duration / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (ratio * i as f64).exp()).collect()
}

fn median_spacing(tr: &Trajectory) -> f64 {
    let mut d: Vec<f64> = tr.samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Mean post-alignment RMSE over windows of `w` intervals starting at
/// `offset, offset + stride, …`.
fn mean_segment_error(
    gt: &[Vector3<f64>],
    test: &[Vector3<f64>],
    w: usize,
    stride: usize,
    offset: usize,
    count: usize,
    space: AlignmentSpace,
) -> Result<f64> {
    let align = match space {
        AlignmentSpace::Spatial => alignment_rmse,
        AlignmentSpace::Planar => planar_alignment_rmse,
    };
    let mut sum = 0.0;
    for j in 0..count {
        let a = offset + j * stride;
        sum += align(&test[a..=a + w], &gt[a..=a + w])?;
    }
    Ok(sum / count as f64)
}

/// Scaled aligned RMSE of `test` against `gt`.
///
/// Both tracks are resampled onto a uniform grid centered in their common
/// time span, with the finer of their median sample spacings. For each scale
/// `τ`, windows of duration `τ` slide with stride `stride_fraction · τ`; the
/// window set is centered in the grid, and when it cannot be centered
/// exactly the two nearest placements are averaged. Each test window is
/// rigidly aligned to its ground-truth window; the per-window RMSE after
/// alignment is averaged over windows.
pub fn sarmse(gt: &Trajectory, test: &Trajectory, scales: &[f64], stride_fraction: f64) -> Result<SarmseCurve> {
    sarmse_in(gt, test, scales, stride_fraction, AlignmentSpace::Spatial)
}

/// [`sarmse`] with a choice of alignment.
pub fn sarmse_in(
    gt: &Trajectory,
    test: &Trajectory,
    scales: &[f64],
    stride_fraction: f64,
    space: AlignmentSpace,
) -> Result<SarmseCurve> {
    if !(stride_fraction > 0.0 && stride_fraction <= 1.0) {
        return Err(invalid("stride fraction must be in (0, 1]"));
    }
    let from = gt.start().max(test.start());
    let to = gt.end().min(test.end());
    if !(to > from) {
        return Err(invalid("tracks do not overlap in time"));
    }
    let h = median_spacing(gt).min(median_spacing(test));
    let span = to - from;
    let n = (span / h + 1e-9).floor() as usize + 1;
    let pad = 0.5 * (span - (n - 1) as f64 * h);
    let times: Vec<f64> = (0..n).map(|i| from + pad + i as f64 * h).collect();
    let g = gt.resample(&times)?.positions();
    let t = test.resample(&times)?.positions();

    let mut curve = SarmseCurve {
        scales: Vec::new(),
        errors: Vec::new(),
        segments: Vec::new(),
        skipped: Vec::new(),
    };
    let mut sorted: Vec<f64> = scales.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for &scale in &sorted {
        let w = ((scale / h).round() as usize).min(n - 1);
        if !(scale > 0.0) || w < 2 || scale > span * (1.0 + 1e-9) {
            warn!("SARMSE scale {scale} s does not fit the {span:.3} s overlap; skipped");
            curve.skipped.push(scale);
            continue;
        }
        let stride = ((stride_fraction * scale / h).round() as usize).max(1);
        let count = (n - 1 - w) / stride + 1;
        let leftover = (n - 1 - w) - (count - 1) * stride;
        let lo = leftover / 2;
        let hi = leftover - lo;
        let mut e = mean_segment_error(&g, &t, w, stride, lo, count, space)?;
        if hi != lo {
            e = 0.5 * (e + mean_segment_error(&g, &t, w, stride, hi, count, space)?);
        }
        curve.scales.push(scale);
        curve.errors.push(e);
        curve.segments.push(count);
    }
    Ok(curve)
}
