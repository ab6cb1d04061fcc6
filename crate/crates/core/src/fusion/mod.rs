//! Extended Kalman filtering, RTS smoothing and the global iteration driver.

mod config;
mod ekf;
mod estimate;
mod forward;
mod giekf;
mod measurement;
mod nlpd;
mod smoother;

pub use config::{FusionConfig, SpeedLimit};
pub use ekf::{ekf_predict, ekf_update, joseph_update, predict_with_jacobian, UpdateOutcome};
pub use estimate::GaussianEstimate;
pub use forward::{forward_pass, FilterHistory, StepRecord};
pub use giekf::{giekf_run, GiekfOutput, IterationResult};
pub use measurement::{measurement_model, Measurement, MeasurementKind};
pub use nlpd::{gaussian_nlpd, nlpd_score};
pub use smoother::{rts_smooth, rts_step, SmoothedTrack};
