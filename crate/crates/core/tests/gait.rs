use husky_core::gait::{bezier_eval, make_swing_curve, GaitSchedule};
use husky_core::kinematics::LegId;
use nalgebra::Vector3;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Vector3<f64>> {
    (-0.3..0.3f64, -0.3..0.3f64, -0.05..0.05f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

proptest! {
    #[test]
    fn endpoint_velocities_vanish(a in point(), b in point(), h in 0.01..0.2f64) {
        let c = make_swing_curve(a, b, h).unwrap();
        prop_assert_eq!(bezier_eval(&c, 0.0).unwrap().1, Vector3::zeros());
        prop_assert_eq!(bezier_eval(&c, 1.0).unwrap().1, Vector3::zeros());
        prop_assert_eq!(bezier_eval(&c, 0.0).unwrap().0, a);
        prop_assert_eq!(bezier_eval(&c, 1.0).unwrap().0, b);
    }

    #[test]
    fn midpoint_apex(a in point(), b in point(), h in 0.01..0.2f64) {
        let c = make_swing_curve(a, b, h).unwrap();
        let mid = bezier_eval(&c, 0.5).unwrap().0;
        // Bernstein weights at s = 1/2 are (1, 4, 6, 4, 1) / 16, so the middle
        // control point contributes 6/16 of its lift.
        let lift = mid.z - 0.5 * (a.z + b.z);
        prop_assert!((lift - 0.375 * h).abs() < 1e-12);
    }

    #[test]
    fn convex_hull_containment(a in point(), b in point(), h in 0.01..0.2f64) {
        let c = make_swing_curve(a, b, h).unwrap();
        let pts = c.control_points();
        let lo = pts.iter().fold(Vector3::repeat(f64::INFINITY), |m, p| m.inf(p));
        let hi = pts.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |m, p| m.sup(p));
        for k in 0..=100 {
            let p = bezier_eval(&c, k as f64 / 100.0).unwrap().0;
            prop_assert!((p - lo).min() >= -1e-12 && (hi - p).min() >= -1e-12);
        }
    }

    #[test]
    fn trot_pairs_alternate(t in 0.0..100.0f64) {
        let g = GaitSchedule::default();
        let fl = g.phase(t, LegId::FL).mode;
        prop_assert_eq!(fl, g.phase(t, LegId::BR).mode);
        prop_assert_eq!(g.phase(t, LegId::FR).mode, g.phase(t, LegId::BL).mode);
        prop_assert_ne!(fl, g.phase(t, LegId::FR).mode);
    }
}
