use holofill::motion::{
    build_velocity_field, extend_motion, r0_sweep, HolomorphicMotionSpec, MotionConfig,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn scaling_pair() -> HolomorphicMotionSpec {
    HolomorphicMotionSpec::scaling(&[c(0.5, 0.0), c(0.0, 1.5)], &[c(0.2, 0.0)], 0.9)
}

#[test]
fn augmented_motion_reproduces_extended_points() {
    let cfg = MotionConfig::default();
    let spec = scaling_pair();
    let first = extend_motion(&spec, c(1.0, 0.0), &cfg).unwrap();
    let probe = extend_motion(&spec, c(-0.8, 0.3), &cfg).unwrap();

    let mut augmented = spec.clone();
    augmented.points.push(c(1.0, 0.0));
    augmented.trajectories.push(first.as_trajectory(1e-13));
    let again = extend_motion(&augmented, c(-0.8, 0.3), &cfg).unwrap();
    let diff = again
        .trajectory
        .iter()
        .zip(&probe.trajectory)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff:e}");
}

#[test]
fn radius_sweep_is_consistent_for_scaling() {
    let cfg = MotionConfig::default();
    let rep = r0_sweep(&scaling_pair(), c(1.0, 0.0), &[0.8, 0.9, 0.95], &cfg).unwrap();
    assert_eq!(rep.entries.len(), 3);
    assert!(rep.spread < 1e-8, "{}", rep.spread);
    for (l, v) in rep.probes.iter().zip(&rep.entries[0].probe_values) {
        assert!((v - (1.0 + 0.2 * l)).norm() < 1e-8);
    }
}

#[test]
fn extension_evaluates_inside_the_disk_only() {
    let ext = extend_motion(&scaling_pair(), c(1.0, 0.0), &MotionConfig::default()).unwrap();
    let inner = c(0.3, -0.4);
    assert!((ext.eval(inner).unwrap() - (1.0 + 0.2 * inner)).norm() < 1e-8);
    assert!(ext.eval(c(0.95, 0.0)).is_err());
    let coeffs = ext.as_trajectory(1e-13);
    assert!((coeffs[0] - c(0.2, 0.0)).norm() < 1e-10);
    assert!(coeffs[1..].iter().all(|z| z.norm() < 1e-10));
    assert!(ext.to_csv().lines().count() == ext.trajectory.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn field_interpolates_site_velocities(
        raw in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -0.5f64..0.5, -0.5f64..0.5), 1..6),
        r in 0.0f64..0.9,
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let mut points = vec![c(0.0, 0.0)];
        let mut trajectories = vec![vec![]];
        for &(x, y, a, b) in &raw {
            points.push(c(x, y));
            trajectories.push(vec![c(a, b)]);
        }
        let spec = HolomorphicMotionSpec { points, trajectories, r0: 0.9 };
        let lambda = Complex64::from_polar(r, theta);
        let pos: Vec<Complex64> = (0..spec.len()).map(|i| spec.position(i, lambda)).collect();
        let mut min_dist = f64::INFINITY;
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                min_dist = min_dist.min((pos[i] - pos[j]).norm());
            }
        }
        prop_assume!(min_dist > 0.05);
        let field = build_velocity_field(&spec, r, theta).unwrap();
        prop_assert_eq!(field.eval(c(0.0, 0.0)), c(0.0, 0.0));
        let scale = field.coeffs.iter().map(|z| z.norm()).sum::<f64>() + 1.0;
        for i in 1..spec.len() {
            let exact = Complex64::from_polar(1.0, theta) * spec.lambda_derivative(i, lambda);
            prop_assert!((field.eval(pos[i]) - exact).norm() < 1e-9 * scale);
        }
        prop_assert!(field.lipschitz().is_finite());
    }
}
