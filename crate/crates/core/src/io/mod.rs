//! Sensor logs, configuration, initialization, the end-to-end pipeline and
//! result export.
//!
//! # Sensor-log schema
//!
//! CSV with the header
//! `t,type,ax,ay,az,wx,wy,wz,lat,lon,alt,accuracy,sigma,label`, or JSON lines
//! with the same keys (absent keys for unused fields). `t` is in seconds.
//!
//! | type         | fields                                                    |
//! |--------------|-----------------------------------------------------------|
//! | `imu`        | `ax ay az` specific force m/s², `wx wy wz` rate rad/s      |
//! | `location`   | `lat lon` degrees, `alt` m, `accuracy` radius m           |
//! | `barometer`  | `alt` m, optional `sigma` m                               |
//! | `annotation` | `label`: `stationary_start` or `stationary_end`            |

pub mod config;
pub mod export;
pub mod init;
pub mod log;
pub mod pipeline;

pub use config::{Belief, Mode, RunConfig};
pub use export::{read_track, ReferenceTrack};
pub use init::{init_from_stationary, Initialization};
pub use log::{ingest, write_log, IngestReport, LogFormat, SensorLog};
pub use pipeline::{
    compare_methods, run_pipeline, simulate_log, write_outputs, MethodScore, PipelineOptions,
    RunReport,
};
