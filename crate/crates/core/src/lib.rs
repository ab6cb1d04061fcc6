//! Iterated inertial path reconstruction for low-grade IMU streams fused with
//! sparse GNSS fixes.
//!
//! The crate is organized bottom-up:
//!
//! - [`geodesy`]: quaternion algebra and WGS84 to local East-North-Up conversion.
//! - [`ins`]: the 19-dimensional strapdown state, mechanization and its Jacobians.
//! - [`fusion`]: EKF predict/update, the RTS smoother and the global iteration
//!   driver that re-seeds the initial mean from the previous smoothed pass.
//! - [`metrics`]: trajectories, rigid alignment, the scaled aligned RMSE curve
//!   and pointwise error aggregates.
//! - [`simulate`]: closed-form ground-truth scenarios and sensor synthesis.
//! - [`io`]: sensor-log formats, configuration, initialization and the
//!   end-to-end pipeline used by the command-line tool.
//!
//! Conventions used throughout: quaternions are Hamilton, scalar-first and
//! rotate body vectors into the world frame; the world frame is ENU with
//! gravity `(0, 0, 9.80665)` subtracted from the rotated specific force.

// Comparisons are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fusion;
pub mod geodesy;
pub mod ins;
pub mod io;
pub mod metrics;
pub mod simulate;

pub use error::{Error, Result};
pub use fusion::{
    FilterHistory, FusionConfig, GaussianEstimate, GiekfOutput, Measurement, MeasurementKind,
    SmoothedTrack,
};
pub use geodesy::{EnuFrame, GeoPoint, Quaternion};
pub use ins::{ImuSample, InsConstants, NavState};
pub use metrics::{SarmseCurve, Trajectory, TrajectorySample};
pub use simulate::{ScenarioSpec, Shape};
