use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, SpeedLimit};
use crate::geodesy::GeoPoint;
use crate::ins::InsConstants;
use crate::metrics::AlignmentSpace;
use crate::simulate::ScenarioSpec;

/// Which position observations the pipeline feeds to the filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Full 3D fixes; barometer rows are ignored.
    #[default]
    #[serde(rename = "3d")]
    ThreeD,
    /// Horizontal fixes plus barometric heights.
    #[serde(rename = "planar-baro")]
    PlanarBaro,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3d" => Ok(Self::ThreeD),
            "planar-baro" => Ok(Self::PlanarBaro),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected 3d or planar-baro)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    /// Total passes including the plain EKF pass.
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub accuracy_to_sigma: f64,
    pub snap_fraction: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        let f = FusionConfig::default();
        Self {
            max_iterations: f.max_iterations,
            convergence_tol: f.convergence_tol,
            accuracy_to_sigma: f.accuracy_to_sigma,
            snap_fraction: f.snap_fraction,
        }
    }
}

/// Prior standard deviations per state block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub position: f64,
    pub velocity: f64,
    pub quaternion: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
    pub accel_scale: f64,
    /// Std of the z quaternion component when the heading is unknown
    /// (stationary initialization).
    pub unknown_yaw: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            position: 10.0,
            velocity: 1.0,
            quaternion: 1e-2,
            accel_bias: 0.1,
            gyro_bias: 0.01,
            accel_scale: 0.05,
            unknown_yaw: 0.5,
        }
    }
}

impl PriorSection {
    pub fn sigmas(&self) -> [f64; 6] {
        [
            self.position,
            self.velocity,
            self.quaternion,
            self.accel_bias,
            self.gyro_bias,
            self.accel_scale,
        ]
    }
}

/// White-noise densities and optional bias random walks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub accel: f64,
    pub gyro: f64,
    pub accel_bias_walk: f64,
    pub gyro_bias_walk: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            accel: 0.07,
            gyro: 0.01,
            accel_bias_walk: 0.0,
            gyro_bias_walk: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedLimitSection {
    pub max_speed: f64,
    pub sigma: f64,
    pub interval: f64,
}

impl Default for SpeedLimitSection {
    fn default() -> Self {
        let s = SpeedLimit::default();
        Self {
            max_speed: s.max_speed,
            sigma: s.sigma,
            interval: s.interval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSection {
    pub mode: Mode,
    /// Barometer std for rows without their own sigma, m.
    pub barometer_sigma: f64,
    /// Zero-velocity pseudo-measurement std, m/s.
    pub zupt_sigma: f64,
    /// Zero-velocity updates per second inside stationary windows.
    pub zupt_rate: f64,
    /// Treat the first seconds as stationary when the log has no
    /// annotation. Zero disables.
    pub stationary_window: f64,
    /// Start of the GNSS gap as a fraction of the fix span.
    pub gap_start: f64,
    /// ENU anchor; the first location fix when absent.
    pub origin: Option<GeoPoint>,
}

impl Default for MeasurementSection {
    fn default() -> Self {
        Self {
            mode: Mode::ThreeD,
            barometer_sigma: 0.2,
            zupt_sigma: 0.01,
            zupt_rate: 10.0,
            stationary_window: 0.0,
            gap_start: 0.3,
            origin: None,
        }
    }
}

/// Which belief of each pass scores the held-out fixes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Belief {
    #[default]
    Smoothed,
    Filtered,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// `3d` or `planar`.
    pub sarmse_alignment: AlignmentSpace,
    /// Belief used for the held-out NLPD.
    pub nlpd_belief: Belief,
}

/// Configuration file of the command-line tool. Unknown keys are errors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub filter: FilterSection,
    pub prior: PriorSection,
    pub noise: NoiseSection,
    /// Enables the one-sided speed constraint.
    pub speed_limit: Option<SpeedLimitSection>,
    pub measurements: MeasurementSection,
    pub metrics: MetricsSection,
    pub scenario: ScenarioSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(one_line(&e.to_string())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.measurements;
        let positive = [
            ("measurements.barometer_sigma", m.barometer_sigma),
            ("measurements.zupt_sigma", m.zupt_sigma),
            ("measurements.zupt_rate", m.zupt_rate),
            ("prior.unknown_yaw", self.prior.unknown_yaw),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(m.stationary_window >= 0.0) {
            return Err(Error::Config("measurements.stationary_window must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&m.gap_start) {
            return Err(Error::Config("measurements.gap_start must be in [0, 1)".into()));
        }
        if self.prior.sigmas().iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("prior sigmas must be non-negative".into()));
        }
        if let Some(s) = &self.speed_limit {
            if !(s.interval >= 0.0) {
                return Err(Error::Config("speed_limit.interval must be non-negative".into()));
            }
        }
        self.fusion_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.scenario.validate().map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    pub fn constants(&self) -> InsConstants {
        InsConstants {
            accel_bias_walk: self.noise.accel_bias_walk,
            gyro_bias_walk: self.noise.gyro_bias_walk,
            ..InsConstants::isotropic(self.noise.accel, self.noise.gyro)
        }
    }

    /// Filter configuration with a default-mean prior; the pipeline sets the
    /// mean from the data.
    pub fn fusion_config(&self) -> FusionConfig {
        let mut f = FusionConfig {
            constants: self.constants(),
            max_iterations: self.filter.max_iterations,
            convergence_tol: self.filter.convergence_tol,
            speed_limit: self.speed_limit.as_ref().map(|s| SpeedLimit {
                max_speed: s.max_speed,
                sigma: s.sigma,
                interval: s.interval,
            }),
            accuracy_to_sigma: self.filter.accuracy_to_sigma,
            snap_fraction: self.filter.snap_fraction,
            ..FusionConfig::default()
        };
        f.prior.cov = FusionConfig::diagonal_prior(self.prior.sigmas());
        f
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let f = cfg.fusion_config();
        assert_eq!(f.prior.cov, FusionConfig::default_prior_covariance());
        assert_eq!(f.max_iterations, 21);
        assert!(f.speed_limit.is_none());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml(
            r#"
            [filter]
            max_iterations = 5
            [speed_limit]
            max_speed = 2.0
            [measurements]
            mode = "planar-baro"
            origin = { latitude = 60.0, longitude = 25.0, altitude = 10.0 }
            [scenario]
            shape = "circle"
            duration = 60.0
            gyro_bias = [0.0, 0.0, 0.01]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.filter.max_iterations, 5);
        assert_eq!(cfg.measurements.mode, Mode::PlanarBaro);
        let f = cfg.fusion_config();
        assert_eq!(f.speed_limit.unwrap().max_speed, 2.0);
        assert_eq!(f.speed_limit.unwrap().sigma, 0.5);
        assert_eq!(cfg.scenario.gyro_bias.z, 0.01);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["[filter]\nmax_iteration = 3\n", "[fliter]\n", "typo = 1\n"] {
            let e = RunConfig::from_toml(text).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{e}");
            assert!(!e.to_string().contains('\n'));
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml("[filter]\nmax_iterations = 0\n").is_err());
        assert!(RunConfig::from_toml("[measurements]\ngap_start = 1.5\n").is_err());
        assert!(RunConfig::from_toml("[scenario]\nimu_rate = 5.0\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig { speed_limit: Some(SpeedLimitSection::default()), ..RunConfig::default() };
        cfg.measurements.origin = Some(GeoPoint { latitude: 1.0, longitude: 2.0, altitude: 3.0 });
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn metrics_section_parses() {
        let cfg = RunConfig::from_toml("[metrics]\nsarmse_alignment = \"planar\"\nnlpd_belief = \"filtered\"\n").unwrap();
        assert_eq!(cfg.metrics.sarmse_alignment, AlignmentSpace::Planar);
        assert_eq!(cfg.metrics.nlpd_belief, Belief::Filtered);
        assert!(RunConfig::from_toml("[metrics]\nnlpd_belief = \"both\"\n").is_err());
    }
}
