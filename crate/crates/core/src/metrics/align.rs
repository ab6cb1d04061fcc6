use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{invalid, Result};
use crate::geodesy::Quaternion;

/// Least-squares rigid transform `dst ≈ R src + t` (no scale).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidAlignment {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Points are (nearly) collinear or coincident, so the rotation about
    /// their common line is not determined.
    pub degenerate: bool,
}

impl RigidAlignment {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Root mean square of `‖R src_i + t − dst_i‖`.
    pub fn rmse(&self, src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> f64 {
        let sum: f64 = src
            .iter()
            .zip(dst)
            .map(|(s, d)| (self.apply(s) - d).norm_squared())
            .sum();
        (sum / src.len() as f64).sqrt()
    }
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Least-squares proper rotation and translation, by Horn's closed-form
/// quaternion method: the rotation is the unit eigenvector of the largest
/// eigenvalue of a symmetric 4×4 matrix built from the cross-covariance.
/// Unlike an SVD of the cross-covariance, this stays accurate when two of
/// its singular values are tiny and nearly equal (short, almost straight
/// segments).
pub fn rigid_align(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<RigidAlignment> {
    if src.len() != dst.len() {
        return Err(invalid("alignment point sets differ in length"));
    }
    if src.len() < 3 {
        return Err(invalid("alignment needs at least three points"));
    }
    let (cs, cd) = (centroid(src), centroid(dst));
    let h: Matrix3<f64> = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (s - cs) * (d - cd).transpose())
        .sum();
    let sv = h.singular_values();
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    let degenerate = sorted[1] <= 1e-12 * sorted[0].max(f64::MIN_POSITIVE);

    let s = |i: usize, j: usize| h[(i, j)];
    let n = Matrix4::new(
        s(0, 0) + s(1, 1) + s(2, 2), s(1, 2) - s(2, 1), s(2, 0) - s(0, 2), s(0, 1) - s(1, 0),
        s(1, 2) - s(2, 1), s(0, 0) - s(1, 1) - s(2, 2), s(0, 1) + s(1, 0), s(2, 0) + s(0, 2),
        s(2, 0) - s(0, 2), s(0, 1) + s(1, 0), -s(0, 0) + s(1, 1) - s(2, 2), s(1, 2) + s(2, 1),
        s(0, 1) - s(1, 0), s(2, 0) + s(0, 2), s(1, 2) + s(2, 1), -s(0, 0) - s(1, 1) + s(2, 2),
    );
    let eig = n.symmetric_eigen();
    let q: Vector4<f64> = eig.eigenvectors.column(eig.eigenvalues.imax()).into();
    let rotation = Quaternion::from_vector(&q).normalized().rotation_matrix();
    Ok(RigidAlignment {
        rotation,
        translation: cd - rotation * cs,
        degenerate,
    })
}

/// RMSE remaining after rigidly aligning `src` onto `dst`.
pub fn alignment_rmse(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<f64> {
    Ok(rigid_align(src, dst)?.rmse(src, dst))
}

/// RMSE remaining after aligning `src` onto `dst` in the horizontal plane:
/// a rotation about the vertical axis and a horizontal translation, with
/// errors measured on the horizontal components only.
pub fn planar_alignment_rmse(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<f64> {
    if src.len() != dst.len() {
        return Err(invalid("alignment point sets differ in length"));
    }
    if src.len() < 2 {
        return Err(invalid("planar alignment needs at least two points"));
    }
    let (cs, cd) = (centroid(src), centroid(dst));
    let (mut dot, mut cross) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (s - cs, d - cd);
        dot += a.x * b.x + a.y * b.y;
        cross += a.x * b.y - a.y * b.x;
    }
    let (sin, cos) = cross.atan2(dot).sin_cos();
    let sum: f64 = src
        .iter()
        .zip(dst)
        .map(|(s, d)| {
            let (a, b) = (s - cs, d - cd);
            let ex = cos * a.x - sin * a.y - b.x;
            let ey = sin * a.x + cos * a.y - b.y;
            ex * ex + ey * ey
        })
        .sum();
    Ok((sum / src.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::rotation_increment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)))
            .collect()
    }

    #[test]
    fn identity_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = cloud(&mut rng, 10);
        let a = rigid_align(&pts, &pts).unwrap();
        assert!((a.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(a.translation.norm() < 1e-12);
        assert!(!a.degenerate);
    }

    #[test]
    fn exact_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let pts = cloud(&mut rng, 8);
            let r = rotation_increment(&Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0)))
                .rotation_matrix();
            let t = Vector3::new(3.0, -1.0, 7.5);
            let dst: Vec<_> = pts.iter().map(|p| r * p + t).collect();
            let a = rigid_align(&pts, &dst).unwrap();
            assert!((a.rotation - r).abs().max() < 1e-9);
            assert!((a.translation - t).norm() < 1e-9);
            assert!((a.rotation.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_is_not_returned() {
        let pts = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(1.0, 1.0, 0.5),
        ];
        let mirrored: Vec<_> = pts.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let a = rigid_align(&pts, &mirrored).unwrap();
        assert!((a.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearly_straight_identical_segment_aligns_exactly() {
        let pts: Vec<_> = (0..11)
            .map(|i| {
                let t = 109.5 + 0.1 * i as f64;
                Vector3::new(8.0 * (0.1 * t).cos(), 5.0 * (0.2 * t).sin(), 0.3 * (0.05 * t).sin())
            })
            .collect();
        let a = rigid_align(&pts, &pts).unwrap();
        assert!(a.rmse(&pts, &pts) < 1e-12);
        assert!((a.rotation - Matrix3::identity()).abs().max() < 1e-6);
    }

    #[test]
    fn collinear_points_are_flagged() {
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        let shifted: Vec<_> = pts.iter().map(|p| p + Vector3::new(1.0, 0.0, 0.0)).collect();
        let a = rigid_align(&pts, &shifted).unwrap();
        assert!(a.degenerate);
        assert!(a.rmse(&pts, &shifted) < 1e-9);
        assert!(rigid_align(&pts[..2], &shifted[..2]).is_err());
    }

    /// Residual for a given rotation vector with the optimal translation.
    fn residual(theta: &Vector3<f64>, src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> f64 {
        let r = rotation_increment(theta).rotation_matrix();
        let t = centroid(dst) - r * centroid(src);
        let sum: f64 = src.iter().zip(dst).map(|(s, d)| (r * s + t - d).norm_squared()).sum();
        (sum / src.len() as f64).sqrt()
    }

    #[test]
    fn noisy_residual_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let src = cloud(&mut rng, 12);
            let r = rotation_increment(&Vector3::from_fn(|_, _| rng.random_range(-1.5..1.5)))
                .rotation_matrix();
            let dst: Vec<_> = src
                .iter()
                .map(|p| r * p + Vector3::new(1.0, 2.0, 3.0) + Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3)))
                .collect();
            // Dense grid over the rotation-vector ball, then pattern search.
            let n = 24;
            let mut best = (f64::INFINITY, Vector3::zeros());
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let g = |v: usize| -std::f64::consts::PI + (v as f64 + 0.5) * 2.0 * std::f64::consts::PI / n as f64;
                        let th = Vector3::new(g(i), g(j), g(k));
                        if th.norm() > std::f64::consts::PI {
                            continue;
                        }
                        let f = residual(&th, &src, &dst);
                        if f < best.0 {
                            best = (f, th);
                        }
                    }
                }
            }
            let mut step = 0.2;
            while step > 1e-10 {
                let mut improved = false;
                for axis in 0..3 {
                    for sign in [-1.0, 1.0] {
                        let mut th = best.1;
                        th[axis] += sign * step;
                        let f = residual(&th, &src, &dst);
                        if f < best.0 {
                            best = (f, th);
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            let closed_form = alignment_rmse(&src, &dst).unwrap();
            assert!((closed_form - best.0).abs() < 1e-6, "{closed_form} vs {}", best.0);
        }
    }

    #[test]
    fn subset_residual_with_superset_transform_is_not_better_than_its_own() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = cloud(&mut rng, 20);
        let dst: Vec<_> = src
            .iter()
            .map(|p| p + Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)))
            .collect();
        let full = rigid_align(&src, &dst).unwrap();
        let own = alignment_rmse(&src[..10], &dst[..10]).unwrap();
        assert!(own <= full.rmse(&src[..10], &dst[..10]) + 1e-12);
    }

    #[test]
    fn planar_alignment_ignores_heading_and_height() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = cloud(&mut rng, 12);
        let yaw = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 2.1);
        let dst: Vec<_> = src.iter().map(|p| yaw * p + Vector3::new(3.0, -1.0, 7.0)).collect();
        assert!(planar_alignment_rmse(&src, &dst).unwrap() < 1e-12);
        // A tilt cannot be undone in the plane.
        let tilt = nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), 0.5);
        let tilted: Vec<_> = src.iter().map(|p| tilt * p).collect();
        assert!(planar_alignment_rmse(&src, &tilted).unwrap() > 0.1);
    }

    #[test]
    fn planar_error_never_exceeds_unaligned_horizontal_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let src = cloud(&mut rng, 20);
        let dst = cloud(&mut rng, 20);
        let raw = (src.iter().zip(&dst).map(|(a, b)| (a - b).xy().norm_squared()).sum::<f64>() / 20.0).sqrt();
        assert!(planar_alignment_rmse(&src, &dst).unwrap() <= raw + 1e-12);
    }
}
