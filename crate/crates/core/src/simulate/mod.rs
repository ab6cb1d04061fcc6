//! Closed-form ground-truth scenarios, sensor synthesis and measurement
//! ablation.

mod ablation;
mod motion;
mod sensors;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geodesy::GeoPoint;

pub use ablation::{ablate_gap, gap_window, is_fix, planar_fixes, subsample, subsample_split};
pub use motion::{gen_trajectory, motion_at, MotionPoint};
pub use sensors::{synth_barometer, synth_gnss, synth_imu, true_initial_state};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Rounded rectangle (aspect about 1.6, 4 m corner radius) whose
    /// perimeter is covered once over the scenario.
    CityBlockLoop,
    /// One full counter-clockwise lap.
    Circle,
    /// Constant heading east; zero speed gives a stationary device.
    Straight,
    /// `x = A sin Ωu`, `y = B sin 2Ωu`, one period over the scenario.
    FigureEight,
}

impl std::str::FromStr for Shape {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "city_block_loop" | "city_block" => Ok(Self::CityBlockLoop),
            "circle" => Ok(Self::Circle),
            "straight" => Ok(Self::Straight),
            "figure_eight" => Ok(Self::FigureEight),
            other => Err(invalid(format!("unknown shape `{other}`"))),
        }
    }
}

/// Synthetic capture description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub shape: Shape,
    /// Seconds.
    pub duration: f64,
    /// Cruise speed along the path, m/s.
    pub speed: f64,
    /// Hz, within [10, 500].
    pub imu_rate: f64,
    /// Hz; 1/3 gives one fix every three seconds.
    pub gnss_rate: f64,
    /// Per-axis GNSS jitter, m.
    pub gnss_sigma: f64,
    /// Barometric height noise, m.
    pub baro_sigma: f64,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_scale: Vector3<f64>,
    /// Accelerometer noise density σ_a (per-sample variance σ_a² Δt).
    pub accel_noise: f64,
    /// Gyroscope noise density σ_ω (per-sample variance σ_ω² Δt).
    pub gyro_noise: f64,
    pub rng_seed: u64,
    /// Geodetic anchor of the local ENU frame.
    pub origin: GeoPoint,
    /// Rest period at the start, s. Motion then ramps up smoothly over one
    /// second.
    pub stationary: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            shape: Shape::CityBlockLoop,
            duration: 300.0,
            speed: 1.2,
            imu_rate: 100.0,
            gnss_rate: 1.0,
            gnss_sigma: 1.0,
            baro_sigma: 0.2,
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            accel_scale: Vector3::repeat(1.0),
            accel_noise: 0.07,
            gyro_noise: 0.01,
            rng_seed: 0,
            origin: GeoPoint {
                latitude: 60.1699,
                longitude: 24.9384,
                altitude: 20.0,
            },
            stationary: 0.0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(10.0..=500.0).contains(&self.imu_rate) {
            return Err(invalid(format!("imu_rate {} Hz outside [10, 500]", self.imu_rate)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration must be positive"));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(invalid("speed must be non-negative"));
        }
        if self.speed == 0.0 && self.shape != Shape::Straight {
            return Err(invalid("only the straight shape may have zero speed"));
        }
        if !(self.gnss_rate > 0.0) {
            return Err(invalid("gnss_rate must be positive"));
        }
        if !(self.stationary >= 0.0)
            || (self.stationary > 0.0 && self.stationary + motion::RAMP >= self.duration)
        {
            return Err(invalid("stationary period must leave time for motion"));
        }
        for (name, v) in [
            ("gnss_sigma", self.gnss_sigma),
            ("baro_sigma", self.baro_sigma),
            ("accel_noise", self.accel_noise),
            ("gyro_noise", self.gyro_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be non-negative")));
            }
        }
        if self.accel_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(invalid("accel_scale components must be positive"));
        }
        self.origin.validate()
    }

    pub fn imu_period(&self) -> f64 {
        1.0 / self.imu_rate
    }

    /// IMU sample times `k / imu_rate` for `k = 0..=round(duration · rate)`.
    pub fn imu_times(&self) -> Vec<f64> {
        let n = (self.duration * self.imu_rate).round() as usize;
        (0..=n).map(|k| k as f64 / self.imu_rate).collect()
    }

    /// Fix times `k / gnss_rate` within the scenario, rounded to the
    /// nanosecond so that e.g. 1/3 Hz lands on whole seconds.
    pub fn gnss_times(&self) -> Vec<f64> {
        let n = (self.duration * self.gnss_rate + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| (k as f64 / self.gnss_rate * 1e9).round() / 1e9)
            .collect()
    }
}
