//! Trajectory evaluation: resampling, rigid alignment, the scaled aligned
//! RMSE curve, pointwise aggregates and the line-interpolation baseline.

mod align;
mod baseline;
mod errors;
mod sarmse;
mod trajectory;

pub use align::{alignment_rmse, planar_alignment_rmse, rigid_align, RigidAlignment};
pub use baseline::{line_interpolation_baseline, Baseline};
pub use errors::{heldout_errors, median, rmse_mae};
pub use sarmse::{default_scales, sarmse, sarmse_in, AlignmentSpace, SarmseCurve, DEFAULT_STRIDE_FRACTION};
pub use trajectory::{Trajectory, TrajectorySample};
