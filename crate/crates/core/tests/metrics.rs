use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

use itnav_core::metrics::{alignment_rmse, default_scales, rigid_align, rmse_mae, sarmse, Trajectory};

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Rotation3<f64>> {
    vec3(std::f64::consts::PI).prop_map(Rotation3::new)
}

/// Smooth random walk sampled at 10 Hz.
fn track(n: usize) -> impl Strategy<Value = Trajectory> {
    proptest::collection::vec(vec3(1.0), n).prop_map(|steps| {
        let mut p = Vector3::zeros();
        let mut v = Vector3::new(1.0, 0.0, 0.0);
        let mut positions = Vec::with_capacity(steps.len());
        for a in steps {
            v += a * 0.1;
            p += v * 0.1;
            positions.push(p);
        }
        let times: Vec<f64> = (0..positions.len()).map(|i| i as f64 * 0.1).collect();
        Trajectory::from_positions(&times, &positions).unwrap()
    })
}

fn perturbed(tr: &Trajectory, noise: &[Vector3<f64>]) -> Trajectory {
    let positions: Vec<_> = tr.positions().iter().zip(noise).map(|(p, e)| p + e).collect();
    Trajectory::from_positions(&tr.times(), &positions).unwrap()
}

fn reversed(tr: &Trajectory) -> Trajectory {
    let times: Vec<f64> = tr.times().iter().rev().map(|t| -t).collect();
    let positions: Vec<_> = tr.positions().into_iter().rev().collect();
    Trajectory::from_positions(&times, &positions).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sarmse_ignores_a_rigid_motion_of_the_test_track(
        gt in track(120),
        noise in proptest::collection::vec(vec3(0.5), 120),
        rot in rotation(),
        shift in vec3(100.0),
    ) {
        let test = perturbed(&gt, &noise);
        let moved = test.transformed(&rot, &shift);
        let scales = default_scales(gt.duration(), 5);
        let a = sarmse(&gt, &test, &scales, 0.25).unwrap();
        let b = sarmse(&gt, &moved, &scales, 0.25).unwrap();
        prop_assert_eq!(&a.scales, &b.scales);
        for (x, y) in a.errors.iter().zip(&b.errors) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x));
        }
    }

    #[test]
    fn sarmse_is_symmetric_under_time_reversal(
        gt in track(97),
        noise in proptest::collection::vec(vec3(0.5), 97),
    ) {
        let test = perturbed(&gt, &noise);
        let scales = default_scales(gt.duration(), 6);
        let a = sarmse(&gt, &test, &scales, 0.25).unwrap();
        let b = sarmse(&reversed(&gt), &reversed(&test), &scales, 0.25).unwrap();
        prop_assert_eq!(&a.segments, &b.segments);
        for (x, y) in a.errors.iter().zip(&b.errors) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x));
        }
    }

    #[test]
    fn errors_are_non_negative_and_bounded_by_the_worst_point(
        gt in track(60),
        noise in proptest::collection::vec(vec3(2.0), 60),
    ) {
        let test = perturbed(&gt, &noise);
        let (rmse, mae) = rmse_mae(&gt, &test).unwrap();
        prop_assert!(mae >= 0.0 && mae <= rmse + 1e-12);
        let worst = noise.iter().map(|e| e.norm()).fold(0.0, f64::max);
        let curve = sarmse(&gt, &test, &default_scales(gt.duration(), 4), 0.25).unwrap();
        for e in &curve.errors {
            prop_assert!(*e >= 0.0 && *e <= worst + 1e-9);
        }
    }

    #[test]
    fn alignment_beats_any_other_rigid_motion(
        src in proptest::collection::vec(vec3(10.0), 4..30),
        noise in proptest::collection::vec(vec3(1.0), 30),
        rot in rotation(),
        shift in vec3(20.0),
        other_rot in rotation(),
        other_shift in vec3(20.0),
    ) {
        let dst: Vec<_> = src.iter().zip(&noise).map(|(p, e)| rot * p + shift + e).collect();
        let best = alignment_rmse(&src, &dst).unwrap();
        let other = rigid_align(&src, &dst).unwrap();
        let candidate: f64 = src
            .iter()
            .zip(&dst)
            .map(|(p, q)| (other_rot * p + other_shift - q).norm_squared())
            .sum::<f64>()
            / src.len() as f64;
        prop_assert!(best <= candidate.sqrt() + 1e-9);
        prop_assert!((other.rmse(&src, &dst) - best).abs() <= 1e-12);
    }
}

#[test]
fn identical_tracks_score_zero() {
    let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
    let positions: Vec<_> = times.iter().map(|t| Vector3::new(t.cos() * 10.0, t.sin() * 10.0, 0.1 * t)).collect();
    let tr = Trajectory::from_positions(&times, &positions).unwrap();
    let curve = sarmse(&tr, &tr, &default_scales(tr.duration(), 8), 0.25).unwrap();
    assert!(curve.errors.iter().all(|e| *e <= 1e-12), "{:?}", curve.errors);
    assert_eq!(rmse_mae(&tr, &tr).unwrap(), (0.0, 0.0));
}
