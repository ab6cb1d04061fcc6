use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geodesy::Quaternion;

/// Slack allowed when a requested time sits on a track endpoint.
const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub orientation: Option<Quaternion>,
    pub position_cov: Option<Matrix3<f64>>,
}

impl TrajectorySample {
    pub fn at(t: f64, position: Vector3<f64>) -> Self {
        Self {
            t,
            position,
            orientation: None,
            position_cov: None,
        }
    }
}

/// Timestamped positions with optional orientation and position covariance.
/// Times are strictly increasing and there are at least two samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(invalid("a trajectory needs at least two samples"));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() || !s.position.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("trajectory sample {i} is not finite")));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(invalid(format!("trajectory times not increasing at sample {i}")));
            }
        }
        Ok(Self { samples })
    }

    pub fn from_positions(times: &[f64], positions: &[Vector3<f64>]) -> Result<Self> {
        if times.len() != positions.len() {
            return Err(invalid("times and positions differ in length"));
        }
        Self::new(
            times
                .iter()
                .zip(positions)
                .map(|(&t, &p)| TrajectorySample::at(t, p))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(|s| s.position).collect()
    }

    /// Total distance travelled along the samples.
    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }

    /// Sample closest in time to `t`.
    pub fn nearest(&self, t: f64) -> &TrajectorySample {
        let k = self.samples.partition_point(|s| s.t < t);
        if k == 0 {
            &self.samples[0]
        } else if k == self.samples.len() || t - self.samples[k - 1].t <= self.samples[k].t - t {
            &self.samples[k - 1]
        } else {
            &self.samples[k]
        }
    }

    /// Linear interpolation of position (and covariance), normalized linear
    /// interpolation of orientation. `t` must lie within the track span.
    pub fn interpolate(&self, t: f64) -> Result<TrajectorySample> {
        if !(t >= self.start() - TIME_EPS && t <= self.end() + TIME_EPS) {
            return Err(invalid(format!(
                "time {t} outside trajectory span [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        let k = self.samples.partition_point(|s| s.t < t);
        if k < self.samples.len() && self.samples[k].t == t {
            return Ok(self.samples[k]);
        }
        let k = k.clamp(1, self.samples.len() - 1);
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let orientation = match (a.orientation, b.orientation) {
            (Some(qa), Some(qb)) => {
                let (va, mut vb) = (qa.to_vector(), qb.to_vector());
                if va.dot(&vb) < 0.0 {
                    vb = -vb;
                }
                Some(Quaternion::from_vector(&(va * (1.0 - w) + vb * w)).normalized())
            }
            _ => None,
        };
        let position_cov = match (a.position_cov, b.position_cov) {
            (Some(pa), Some(pb)) => Some(pa * (1.0 - w) + pb * w),
            _ => None,
        };
        Ok(TrajectorySample {
            t,
            position: a.position * (1.0 - w) + b.position * w,
            orientation,
            position_cov,
        })
    }

    /// Track evaluated at `times`; extrapolation is rejected.
    pub fn resample(&self, times: &[f64]) -> Result<Trajectory> {
        Trajectory::new(
            times
                .iter()
                .map(|&t| self.interpolate(t))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// Applies `p ↦ R p + t` to every position (orientations and
    /// covariances are rotated too).
    pub fn transformed(&self, rotation: &Rotation3<f64>, translation: &Vector3<f64>) -> Trajectory {
        let r = rotation.matrix();
        let q = Quaternion::from_rotation_matrix(r);
        Trajectory {
            samples: self
                .samples
                .iter()
                .map(|s| TrajectorySample {
                    t: s.t,
                    position: r * s.position + translation,
                    orientation: s.orientation.map(|o| q * o),
                    position_cov: s.position_cov.map(|p| r * p * r.transpose()),
                })
                .collect(),
        }
    }

    /// Samples with `from ≤ t ≤ to`.
    pub fn window(&self, from: f64, to: f64) -> Vec<&TrajectorySample> {
        self.samples.iter().filter(|s| s.t >= from && s.t <= to).collect()
    }
}
