use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Vector2, Vector3};

use crate::error::Result;
use crate::geodesy::Quaternion;
use crate::metrics::{Trajectory, TrajectorySample};
use crate::simulate::{ScenarioSpec, Shape};

/// Duration of the smooth start after a stationary period, s.
pub(crate) const RAMP: f64 = 1.0;

/// Analytic kinematic state at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionPoint {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    /// Level attitude with yaw equal to the direction of travel.
    pub orientation: Quaternion,
    /// Body-frame angular rate.
    pub angular_rate: Vector3<f64>,
}

#[derive(Clone, Copy, Debug)]
enum Segment {
    Line { start: Vector2<f64>, dir: Vector2<f64>, len: f64 },
    Arc { center: Vector2<f64>, radius: f64, phase: f64, len: f64 },
}

#[derive(Clone, Debug)]
enum Curve {
    Straight { speed: f64 },
    Circle { radius: f64, rate: f64 },
    Loop { speed: f64, perimeter: f64, segments: Vec<Segment> },
    FigureEight { scale: f64, freq: f64 },
}

/// `(C(u), C'(u), C''(u))` in the plane.
type Jet = (Vector2<f64>, Vector2<f64>, Vector2<f64>);

impl Curve {
    fn eval(&self, u: f64) -> Jet {
        match self {
            Curve::Straight { speed } => (
                Vector2::new(speed * u, 0.0),
                Vector2::new(*speed, 0.0),
                Vector2::zeros(),
            ),
            Curve::Circle { radius, rate } => {
                let (s, c) = (rate * u).sin_cos();
                (
                    Vector2::new(radius * s, radius * (1.0 - c)),
                    Vector2::new(c, s) * (radius * rate),
                    Vector2::new(-s, c) * (radius * rate * rate),
                )
            }
            Curve::FigureEight { scale, freq } => {
                let w = *freq;
                let (s1, c1) = (w * u).sin_cos();
                let (s2, c2) = (2.0 * w * u).sin_cos();
                (
                    Vector2::new(2.0 * s1, s2) * *scale,
                    Vector2::new(2.0 * w * c1, 2.0 * w * c2) * *scale,
                    Vector2::new(-2.0 * w * w * s1, -4.0 * w * w * s2) * *scale,
                )
            }
            Curve::Loop {
                speed,
                perimeter,
                segments,
            } => {
                let mut s = (speed * u).rem_euclid(*perimeter);
                for seg in segments {
                    match *seg {
                        Segment::Line { start, dir, len } => {
                            if s <= len {
                                return (start + dir * s, dir * *speed, Vector2::zeros());
                            }
                            s -= len;
                        }
                        Segment::Arc {
                            center,
                            radius,
                            phase,
                            len,
                        } => {
                            if s <= len {
                                let (sn, cs) = (phase + s / radius).sin_cos();
                                let radial = Vector2::new(cs, sn);
                                return (
                                    center + radial * radius,
                                    Vector2::new(-sn, cs) * *speed,
                                    -radial * (speed * speed / radius),
                                );
                            }
                            s -= len;
                        }
                    }
                }
                let first = self.eval(0.0);
                (first.0, first.1, first.2)
            }
        }
    }
}

fn city_block(speed: f64, perimeter: f64) -> Curve {
    let r = (0.1 * perimeter).min(4.0);
    let h = (perimeter - TAU * r + 8.0 * r) / 5.2;
    let w = 1.6 * h;
    let quarter = FRAC_PI_2 * r;
    let o = Vector2::new(r, 0.0);
    let segments = vec![
        Segment::Line { start: Vector2::new(r, 0.0) - o, dir: Vector2::x(), len: w - 2.0 * r },
        Segment::Arc { center: Vector2::new(w - r, r) - o, radius: r, phase: -FRAC_PI_2, len: quarter },
        Segment::Line { start: Vector2::new(w, r) - o, dir: Vector2::y(), len: h - 2.0 * r },
        Segment::Arc { center: Vector2::new(w - r, h - r) - o, radius: r, phase: 0.0, len: quarter },
        Segment::Line { start: Vector2::new(w - r, h) - o, dir: -Vector2::x(), len: w - 2.0 * r },
        Segment::Arc { center: Vector2::new(r, h - r) - o, radius: r, phase: FRAC_PI_2, len: quarter },
        Segment::Line { start: Vector2::new(0.0, h - r) - o, dir: -Vector2::y(), len: h - 2.0 * r },
        Segment::Arc { center: Vector2::new(r, r) - o, radius: r, phase: PI, len: quarter },
    ];
    Curve::Loop {
        speed,
        perimeter,
        segments,
    }
}

/// Closed-form motion of a scenario, with the curve parameters precomputed.
#[derive(Clone, Debug)]
pub struct Motion {
    curve: Curve,
    stationary: f64,
}

impl Motion {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let stationary = spec.stationary;
        let u_end = if stationary > 0.0 {
            spec.duration - stationary - 0.5 * RAMP
        } else {
            spec.duration
        };
        let length = spec.speed * u_end;
        let curve = match spec.shape {
            Shape::Straight => Curve::Straight { speed: spec.speed },
            Shape::Circle => Curve::Circle {
                radius: length / TAU,
                rate: TAU / u_end,
            },
            Shape::CityBlockLoop => city_block(spec.speed, length),
            Shape::FigureEight => {
                let unit = Curve::FigureEight {
                    scale: 1.0,
                    freq: TAU / u_end,
                };
                // Composite Simpson over one period.
                let n = 20_000;
                let h = u_end / n as f64;
                let unit_length: f64 = (0..=n)
                    .map(|i| {
                        let wgt = if i == 0 || i == n {
                            1.0
                        } else if i % 2 == 1 {
                            4.0
                        } else {
                            2.0
                        };
                        wgt * unit.eval(i as f64 * h).1.norm()
                    })
                    .sum::<f64>()
                    * h
                    / 3.0;
                Curve::FigureEight {
                    scale: length / unit_length,
                    freq: TAU / u_end,
                }
            }
        };
        Ok(Self { curve, stationary })
    }

    /// Time warp `u = g(t)` with its first two derivatives.
    fn warp(&self, t: f64) -> (f64, f64, f64) {
        if self.stationary <= 0.0 {
            return (t, 1.0, 0.0);
        }
        let x = (t - self.stationary) / RAMP;
        if x <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if x < 1.0 {
            (
                RAMP * (x * x * x - 0.5 * x * x * x * x),
                3.0 * x * x - 2.0 * x * x * x,
                (6.0 * x - 6.0 * x * x) / RAMP,
            )
        } else {
            (0.5 * RAMP + (t - self.stationary - RAMP), 1.0, 0.0)
        }
    }

    pub fn at(&self, t: f64) -> MotionPoint {
        let (u, du, ddu) = self.warp(t);
        let (c, d1, d2) = self.curve.eval(u);
        let vel = d1 * du;
        let acc = d2 * du * du + d1 * ddu;
        let n2 = d1.norm_squared();
        let (heading, yaw_rate) = if n2 > 0.0 {
            (d1.y.atan2(d1.x), (d1.x * d2.y - d1.y * d2.x) / n2 * du)
        } else {
            (0.0, 0.0)
        };
        MotionPoint {
            t,
            position: Vector3::new(c.x, c.y, 0.0),
            velocity: Vector3::new(vel.x, vel.y, 0.0),
            acceleration: Vector3::new(acc.x, acc.y, 0.0),
            orientation: Quaternion::from_yaw(heading),
            angular_rate: Vector3::new(0.0, 0.0, yaw_rate),
        }
    }
}

/// Motion of `spec` at time `t`.
pub fn motion_at(spec: &ScenarioSpec, t: f64) -> Result<MotionPoint> {
    Ok(Motion::new(spec)?.at(t))
}

/// Ground-truth trajectory sampled at the IMU times, with orientation.
pub fn gen_trajectory(spec: &ScenarioSpec) -> Result<Trajectory> {
    let motion = Motion::new(spec)?;
    Trajectory::new(
        spec.imu_times()
            .into_iter()
            .map(|t| {
                let m = motion.at(t);
                TrajectorySample {
                    t,
                    position: m.position,
                    orientation: Some(m.orientation),
                    position_cov: None,
                }
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(shape: Shape, duration: f64, speed: f64) -> ScenarioSpec {
        ScenarioSpec {
            shape,
            duration,
            speed,
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn straight_endpoints() {
        let tr = gen_trajectory(&spec(Shape::Straight, 10.0, 1.0)).unwrap();
        let p = tr.positions();
        assert!(((p[p.len() - 1] - p[0]).norm() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn circle_is_periodic() {
        let s = spec(Shape::Circle, 10.0, 1.0);
        let m = Motion::new(&s).unwrap();
        assert!((m.at(10.0).position - m.at(0.0).position).norm() < 1e-9);
        assert!((m.at(10.0).velocity - m.at(0.0).velocity).norm() < 1e-9);
    }

    #[test]
    fn default_city_block_length_and_duration() {
        let s = ScenarioSpec::default();
        let tr = gen_trajectory(&s).unwrap();
        assert!((tr.duration() - 300.0).abs() < 1e-9);
        assert!((tr.path_length() - 360.0).abs() < 5.0);
        // Closed loop.
        assert!(tr.positions()[0].norm() < 1e-9);
        assert!(tr.positions()[tr.len() - 1].norm() < 1e-6);
    }

    #[test]
    fn figure_eight_length() {
        let tr = gen_trajectory(&spec(Shape::FigureEight, 120.0, 1.5)).unwrap();
        assert!((tr.path_length() - 180.0).abs() < 0.1);
    }

    /// Central differences of position and velocity against the analytic
    /// derivatives, away from the curvature jumps of the loop.
    #[test]
    fn derivatives_match_finite_differences() {
        for shape in [Shape::Circle, Shape::FigureEight, Shape::CityBlockLoop] {
            let mut s = spec(shape, 60.0, 1.3);
            s.stationary = 5.0;
            let m = Motion::new(&s).unwrap();
            let h = 1e-5;
            for &t in &[2.0, 5.3, 5.9, 7.77, 33.3, 51.0] {
                let (a, b, c) = (m.at(t - h), m.at(t), m.at(t + h));
                let v_fd = (c.position - a.position) / (2.0 * h);
                let a_fd = (c.velocity - a.velocity) / (2.0 * h);
                let yaw = |q: Quaternion| {
                    let x = q.rotate(&Vector3::x());
                    x.y.atan2(x.x)
                };
                let mut dyaw = yaw(c.orientation) - yaw(a.orientation);
                dyaw = (dyaw + PI).rem_euclid(TAU) - PI;
                assert!((v_fd - b.velocity).norm() < 1e-6, "{shape:?} {t}");
                assert!((a_fd - b.acceleration).norm() < 1e-4, "{shape:?} {t}");
                if b.velocity.norm() > 0.0 {
                    assert!((dyaw / (2.0 * h) - b.angular_rate.z).abs() < 1e-4, "{shape:?} {t}");
                }
            }
        }
    }

    #[test]
    fn stationary_start_is_at_rest() {
        let mut s = spec(Shape::CityBlockLoop, 60.0, 1.2);
        s.stationary = 3.0;
        let m = Motion::new(&s).unwrap();
        for t in [0.0, 1.0, 2.999] {
            let p = m.at(t);
            assert_eq!(p.velocity, Vector3::zeros());
            assert_eq!(p.acceleration, Vector3::zeros());
        }
        assert!((m.at(10.0).velocity.norm() - 1.2).abs() < 1e-12);
    }
}
