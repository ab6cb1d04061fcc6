//! Quaternion algebra and WGS84 / local-tangent-plane conversions.
//!
//! Quaternions are Hamilton, scalar-first. A navigation orientation `q`
//! rotates body-frame vectors into the world (ENU) frame: `v_w = q ⊗ v_b ⊗ q*`.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, SMatrix, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Below this angle the exponential map switches to its Taylor expansion.
const SMALL_ANGLE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Unit quaternion rotating by `angle` radians about `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        rotation_increment(&(axis.normalize() * angle))
    }

    /// Rotation about the world z axis (heading, counter-clockwise from east).
    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = (0.5 * yaw).sin_cos();
        Self::new(c, 0.0, 0.0, s)
    }

    /// Z-Y-X Euler composition `Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::from_yaw(yaw)
            * Self::from_axis_angle(&Vector3::y(), pitch)
            * Self::from_axis_angle(&Vector3::x(), roll)
    }

    /// Unit quaternion of a proper rotation matrix.
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let u = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
        Self::new(u.w, u.i, u.j, u.k)
    }

    /// Pure quaternion `(0, v)`.
    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn vector_part(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn rotate(self, v: &Vector3<f64>) -> Vector3<f64> {
        quat_rotate(self, v)
    }

    /// Rotation matrix equivalent of `rotate` for a unit quaternion.
    pub fn rotation_matrix(self) -> Matrix3<f64> {
        let Quaternion { w, x, y, z } = self;
        Matrix3::new(
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        )
    }

    /// Rotation vector (axis times angle); inverse of [`rotation_increment`]
    /// for angles in `[0, π]`.
    pub fn log(self) -> Vector3<f64> {
        let q = if self.w < 0.0 {
            Self::new(-self.w, -self.x, -self.y, -self.z)
        } else {
            self
        };
        let u = q.vector_part();
        let s = u.norm();
        if s < SMALL_ANGLE {
            return u * (2.0 / q.w);
        }
        u * (2.0 * s.atan2(q.w) / s)
    }

    /// `L(q)` with `q ⊗ r = L(q) r` on the 4-vector form.
    pub fn left_matrix(self) -> Matrix4<f64> {
        let Quaternion { w, x, y, z } = self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, -z, y, //
            y, z, w, -x, //
            z, -y, x, w,
        )
    }

    /// `R(r)` with `q ⊗ r = R(r) q` on the 4-vector form.
    pub fn right_matrix(self) -> Matrix4<f64> {
        let Quaternion { w, x, y, z } = self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, z, -y, //
            y, -z, w, x, //
            z, y, -x, w,
        )
    }

    /// Derivative of `q ⊗ v ⊗ q*` with respect to the four components of `q`,
    /// evaluated at `self`.
    pub fn rotation_jacobian(self, v: &Vector3<f64>) -> SMatrix<f64, 3, 4> {
        let w = self.w;
        let u = self.vector_part();
        let d_w = 2.0 * w * v + 2.0 * u.cross(v);
        let d_u = -2.0 * v * u.transpose() + 2.0 * u.dot(v) * Matrix3::identity()
            + 2.0 * u * v.transpose()
            - 2.0 * w * v.cross_matrix();
        let mut j = SMatrix::<f64, 3, 4>::zeros();
        j.set_column(0, &d_w);
        j.fixed_view_mut::<3, 3>(0, 1).copy_from(&d_u);
        j
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        quat_mul(self, rhs)
    }
}

/// Hamilton product `a ⊗ b`.
pub fn quat_mul(a: Quaternion, b: Quaternion) -> Quaternion {
    Quaternion::new(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )
}

/// `q ⊗ (0, v) ⊗ q*`, expanded.
pub fn quat_rotate(q: Quaternion, v: &Vector3<f64>) -> Vector3<f64> {
    let u = q.vector_part();
    (q.w * q.w - u.dot(&u)) * v + 2.0 * u.dot(v) * u + 2.0 * q.w * u.cross(v)
}

/// Exponential map: the unit quaternion rotating by `|θ|` about `θ / |θ|`.
pub fn rotation_increment(theta: &Vector3<f64>) -> Quaternion {
    let angle = theta.norm();
    if angle < SMALL_ANGLE {
        let a2 = angle * angle;
        let s = 0.5 - a2 / 48.0;
        return Quaternion::new(1.0 - a2 / 8.0, theta.x * s, theta.y * s, theta.z * s);
    }
    let (sin_half, cos_half) = (0.5 * angle).sin_cos();
    let s = sin_half / angle;
    Quaternion::new(cos_half, theta.x * s, theta.y * s, theta.z * s)
}

/// Jacobian of [`rotation_increment`] with respect to `θ` (4×3).
pub fn rotation_increment_jacobian(theta: &Vector3<f64>) -> SMatrix<f64, 4, 3> {
    let angle = theta.norm();
    let mut j = SMatrix::<f64, 4, 3>::zeros();
    if angle < SMALL_ANGLE {
        j.fixed_view_mut::<1, 3>(0, 0)
            .copy_from(&(-0.25 * theta.transpose()));
        j.fixed_view_mut::<3, 3>(1, 0)
            .copy_from(&(0.5 * Matrix3::identity()));
        return j;
    }
    let axis = theta / angle;
    let (sin_half, cos_half) = (0.5 * angle).sin_cos();
    let outer = axis * axis.transpose();
    j.fixed_view_mut::<1, 3>(0, 0)
        .copy_from(&(-0.5 * sin_half * axis.transpose()));
    j.fixed_view_mut::<3, 3>(1, 0).copy_from(
        &((sin_half / angle) * (Matrix3::identity() - outer) + 0.5 * cos_half * outer),
    );
    j
}

// WGS84 defining constants.
pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// Geodetic position on the WGS84 ellipsoid. Altitude is ellipsoidal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    /// Degrees.
    pub latitude: f64,
    /// Degrees.
    pub longitude: f64,
    /// Meters above the ellipsoid.
    pub altitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64, altitude: f64) -> Result<Self> {
        let p = Self {
            latitude,
            longitude,
            altitude,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.latitude.is_finite() && self.longitude.is_finite() && self.altitude.is_finite())
        {
            return Err(invalid("non-finite geodetic coordinate"));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(invalid(format!("latitude {} out of range", self.latitude)));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(invalid(format!("longitude {} out of range", self.longitude)));
        }
        Ok(())
    }

    pub fn to_ecef(&self) -> Vector3<f64> {
        let lat = self.latitude.to_radians();
        let lon = self.longitude.to_radians();
        let (sl, cl) = lat.sin_cos();
        let n = WGS84_A / (1.0 - WGS84_E2 * sl * sl).sqrt();
        Vector3::new(
            (n + self.altitude) * cl * lon.cos(),
            (n + self.altitude) * cl * lon.sin(),
            (n * (1.0 - WGS84_E2) + self.altitude) * sl,
        )
    }

    /// Iterative ECEF to geodetic inversion (converges to sub-nanometer
    /// height in a handful of iterations for terrestrial points).
    pub fn from_ecef(ecef: &Vector3<f64>) -> Self {
        let p = ecef.x.hypot(ecef.y);
        let lon = ecef.y.atan2(ecef.x);
        let mut lat = ecef.z.atan2(p * (1.0 - WGS84_E2));
        let mut alt = 0.0;
        for _ in 0..10 {
            let sl = lat.sin();
            let n = WGS84_A / (1.0 - WGS84_E2 * sl * sl).sqrt();
            alt = if lat.cos().abs() > 1e-10 {
                p / lat.cos() - n
            } else {
                ecef.z.abs() - n * (1.0 - WGS84_E2)
            };
            let next = ecef.z.atan2(p * (1.0 - WGS84_E2 * n / (n + alt)));
            let done = (next - lat).abs() < 1e-15;
            lat = next;
            if done {
                break;
            }
        }
        Self {
            latitude: lat.to_degrees(),
            longitude: lon.to_degrees(),
            altitude: alt,
        }
    }
}

/// Local East-North-Up tangent frame anchored at `origin`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnuFrame {
    pub origin: GeoPoint,
    #[serde(skip, default = "Vector3::zeros")]
    origin_ecef: Vector3<f64>,
    /// Rows are the east, north and up unit vectors in ECEF.
    #[serde(skip, default = "Matrix3::identity")]
    ecef_to_enu: Matrix3<f64>,
}

impl EnuFrame {
    pub fn new(origin: GeoPoint) -> Result<Self> {
        origin.validate()?;
        let lat = origin.latitude.to_radians();
        let lon = origin.longitude.to_radians();
        let (sl, cl) = lat.sin_cos();
        let (so, co) = lon.sin_cos();
        let ecef_to_enu = Matrix3::new(
            -so,
            co,
            0.0, //
            -sl * co,
            -sl * so,
            cl, //
            cl * co,
            cl * so,
            sl,
        );
        Ok(Self {
            origin,
            origin_ecef: origin.to_ecef(),
            ecef_to_enu,
        })
    }
}

/// Converts a geodetic point into meters east, north and up of the frame origin.
pub fn wgs84_to_enu(p: &GeoPoint, frame: &EnuFrame) -> Result<Vector3<f64>> {
    p.validate()?;
    Ok(frame.ecef_to_enu * (p.to_ecef() - frame.origin_ecef))
}

pub fn enu_to_wgs84(enu: &Vector3<f64>, frame: &EnuFrame) -> Result<GeoPoint> {
    if !enu.iter().all(|c| c.is_finite()) {
        return Err(invalid("non-finite ENU coordinate"));
    }
    let ecef = frame.origin_ecef + frame.ecef_to_enu.transpose() * enu;
    Ok(GeoPoint::from_ecef(&ecef))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Rodrigues' formula; shares nothing with the quaternion code.
    fn axis_angle_matrix(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
        let k = axis.normalize();
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Matrix3::identity() + angle.sin() * kx + (1.0 - angle.cos()) * kx * kx
    }

    fn unit_quat() -> impl Strategy<Value = (Vector3<f64>, f64)> {
        (
            (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
                .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-3),
            -PI..PI,
        )
            .prop_map(|((x, y, z), a)| (Vector3::new(x, y, z), a))
    }

    #[test]
    fn identity_and_basis_products() {
        let q = Quaternion::new(0.5, -0.5, 0.5, 0.5);
        assert_eq!(Quaternion::IDENTITY * q, q);
        let i = Quaternion::new(0.0, 1.0, 0.0, 0.0);
        let j = Quaternion::new(0.0, 0.0, 1.0, 0.0);
        assert_eq!(i * j, Quaternion::new(0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn rotate_examples() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(quat_rotate(Quaternion::IDENTITY, &v), v);
        let qz = Quaternion::from_axis_angle(&Vector3::z(), FRAC_PI_2);
        let r = quat_rotate(qz, &Vector3::x());
        assert!((r - Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn increment_examples() {
        assert_eq!(
            rotation_increment(&Vector3::zeros()),
            Quaternion::IDENTITY
        );
        let q = rotation_increment(&Vector3::new(0.0, 0.0, PI));
        assert!((q.to_vector() - Vector4::new(0.0, 0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn increment_composition_converges() {
        let theta = Vector3::new(0.3, -0.7, 1.1);
        let exact = rotation_increment(&theta);
        let mut prev_err = f64::INFINITY;
        for n in [10usize, 100, 1000] {
            // First-order composition: each piece is the truncated (1, θ/2N) map.
            let step = theta / n as f64;
            let piece = Quaternion::new(1.0, 0.5 * step.x, 0.5 * step.y, 0.5 * step.z);
            let mut q = Quaternion::IDENTITY;
            for _ in 0..n {
                q = (q * piece).normalized();
            }
            let err = (q.to_vector() - exact.to_vector()).norm();
            assert!(err < prev_err);
            assert!(err * n as f64 <= 1.0, "error {err} is not O(1/N) at N={n}");
            prev_err = err;
        }
        // Exact pieces compose exactly for a fixed axis.
        let mut q = Quaternion::IDENTITY;
        for _ in 0..64 {
            q = q * rotation_increment(&(theta / 64.0));
        }
        assert!((q.to_vector() - exact.to_vector()).norm() < 1e-12);
    }

    #[test]
    fn log_inverts_increment() {
        let theta = Vector3::new(0.2, 0.1, -2.5);
        assert!((rotation_increment(&theta).log() - theta).norm() < 1e-12);
        let tiny = Vector3::new(1e-10, 0.0, -2e-10);
        assert!((rotation_increment(&tiny).log() - tiny).norm() < 1e-20);
    }

    #[test]
    fn increment_jacobian_matches_finite_differences() {
        for theta in [
            Vector3::new(0.3, -0.2, 0.9),
            Vector3::new(1e-3, 2e-3, -1e-3),
            Vector3::zeros(),
        ] {
            let j = rotation_increment_jacobian(&theta);
            for c in 0..3 {
                let mut d = Vector3::zeros();
                d[c] = 1e-6;
                let fd = (rotation_increment(&(theta + d)).to_vector()
                    - rotation_increment(&(theta - d)).to_vector())
                    / 2e-6;
                assert!((fd - j.column(c)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn rotation_jacobian_matches_finite_differences() {
        let q = Quaternion::from_euler(0.1, -0.3, 2.0);
        let v = Vector3::new(0.3, -9.0, 1.5);
        let j = q.rotation_jacobian(&v);
        for c in 0..4 {
            let mut d = Vector4::zeros();
            d[c] = 1e-6;
            let fd = (quat_rotate(Quaternion::from_vector(&(q.to_vector() + d)), &v)
                - quat_rotate(Quaternion::from_vector(&(q.to_vector() - d)), &v))
                / 2e-6;
            assert!((fd - j.column(c)).norm() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn product_matches_matrix_composition((a_axis, a_ang) in unit_quat(), (b_axis, b_ang) in unit_quat()) {
            let a = Quaternion::from_axis_angle(&a_axis, a_ang);
            let b = Quaternion::from_axis_angle(&b_axis, b_ang);
            let ab = a * b;
            prop_assert!((ab.norm() - 1.0).abs() < 1e-9);
            let oracle = axis_angle_matrix(&a_axis, a_ang) * axis_angle_matrix(&b_axis, b_ang);
            prop_assert!((ab.rotation_matrix() - oracle).abs().max() < 1e-9);
        }

        #[test]
        fn rotate_matches_matrix((axis, ang) in unit_quat(), x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0) {
            let q = Quaternion::from_axis_angle(&axis, ang);
            let v = Vector3::new(x, y, z);
            let r = quat_rotate(q, &v);
            prop_assert!((r - axis_angle_matrix(&axis, ang) * v).norm() < 1e-9 * (1.0 + v.norm()));
            prop_assert!((r.norm() - v.norm()).abs() <= 1e-9 * v.norm().max(1e-300));
        }

        #[test]
        fn increment_of_negation_is_conjugate(x in -4.0f64..4.0, y in -4.0f64..4.0, z in -4.0f64..4.0) {
            let t = Vector3::new(x, y, z);
            let a = rotation_increment(&(-t));
            let b = rotation_increment(&t).conjugate();
            prop_assert!((a.to_vector() - b.to_vector()).norm() < 1e-12);
            prop_assert!((rotation_increment(&t).norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn enu_round_trip(lat in -80.0f64..80.0, lon in -179.0f64..179.0, e in -50.0f64..50.0, n in -50.0f64..50.0, u in -50.0f64..50.0) {
            let frame = EnuFrame::new(GeoPoint::new(lat, lon, 30.0).unwrap()).unwrap();
            let enu = Vector3::new(e, n, u);
            let back = wgs84_to_enu(&enu_to_wgs84(&enu, &frame).unwrap(), &frame).unwrap();
            prop_assert!((back - enu).norm() <= 1e-6);
        }
    }

    #[test]
    fn enu_examples() {
        let origin = GeoPoint::new(60.1699, 24.9384, 15.0).unwrap();
        let frame = EnuFrame::new(origin).unwrap();
        assert!(wgs84_to_enu(&origin, &frame).unwrap().norm() < 1e-9);
        let up = GeoPoint::new(60.1699, 24.9384, 25.0).unwrap();
        assert!((wgs84_to_enu(&up, &frame).unwrap() - Vector3::new(0.0, 0.0, 10.0)).norm() < 1e-6);
        let bad = GeoPoint {
            latitude: f64::NAN,
            longitude: 0.0,
            altitude: 0.0,
        };
        assert!(wgs84_to_enu(&bad, &frame).is_err());
    }

    #[test]
    fn enu_north_offset_matches_ecef_differencing() {
        // Independent spherical-ellipsoid ECEF evaluation.
        fn ecef(lat_deg: f64, lon_deg: f64, h: f64) -> [f64; 3] {
            let a = 6378137.0f64;
            let f = 1.0 / 298.257223563;
            let e2 = 2.0 * f - f * f;
            let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
            let n = a / (1.0 - e2 * lat.sin().powi(2)).sqrt();
            [
                (n + h) * lat.cos() * lon.cos(),
                (n + h) * lat.cos() * lon.sin(),
                (n * (1.0 - e2) + h) * lat.sin(),
            ]
        }
        let frame = EnuFrame::new(GeoPoint::new(0.0, 10.0, 0.0).unwrap()).unwrap();
        let p = GeoPoint::new(1e-5, 10.0, 0.0).unwrap();
        let enu = wgs84_to_enu(&p, &frame).unwrap();
        let (a, b) = (ecef(0.0, 10.0, 0.0), ecef(1e-5, 10.0, 0.0));
        let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        // North at the equator is the ECEF z axis; east is (-sin λ, cos λ, 0).
        let lon = 10f64.to_radians();
        let north = d[2];
        let east = -lon.sin() * d[0] + lon.cos() * d[1];
        assert!((enu.y - north).abs() < 1e-3);
        assert!((enu.x - east).abs() < 1e-3);
        assert!((enu.y - 1.105).abs() < 1e-3);
        assert!(enu.x.abs() < 1e-6);
    }
}
