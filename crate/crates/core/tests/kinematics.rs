use husky_core::kinematics::{
    forward_kinematics, inverse_kinematics, jacobian, JointAngles, LegGeometry, LegId, Side,
};
use nalgebra::{Matrix4, Vector3, Vector4};
use proptest::prelude::*;

fn rx(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(1.0, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0)
}

fn ry(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(c, 0.0, s, 0.0, 0.0, 1.0, 0.0, 0.0, -s, 0.0, c, 0.0, 0.0, 0.0, 0.0, 1.0)
}

fn down(l: f64) -> Matrix4<f64> {
    Matrix4::new_translation(&Vector3::new(0.0, 0.0, -l))
}

/// Foot position by composing one transform per joint and link.
fn chain_fk(g: &LegGeometry, q: &JointAngles) -> Vector3<f64> {
    let t = rx(q.q_frontal) * ry(q.q_sagittal) * down(g.femur_m) * ry(q.q_knee) * down(g.tibia_m);
    (t * Vector4::new(0.0, 0.0, 0.0, 1.0)).xyz()
}

fn template() -> LegGeometry {
    LegGeometry::default()
}

/// Joint samples inside the limits, restricted to the branch IK returns: knee
/// bent forward and the foot below the hip in the leg plane.
fn ik_domain() -> impl Strategy<Value = JointAngles> {
    let l = template().joint_limits;
    (l.frontal.min..l.frontal.max, l.sagittal.min..l.sagittal.max, 0.05..l.knee.max)
        .prop_map(|(a, b, c)| JointAngles::new(a, b, c))
        .prop_filter("foot above the hip in the leg plane", |q| {
            let g = template();
            let planar_z = -g.femur_m * q.q_sagittal.cos() - g.tibia_m * (q.q_sagittal + q.q_knee).cos();
            planar_z < -1e-3
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fk_matches_transform_chain(q in ik_domain()) {
        let g = template();
        prop_assert!((forward_kinematics(&g, &q) - chain_fk(&g, &q)).norm() < 1e-12);
    }

    #[test]
    fn ik_round_trip(q in ik_domain()) {
        let g = template();
        let back = inverse_kinematics(&g, &forward_kinematics(&g, &q)).unwrap();
        prop_assert!(back.max_abs_diff(&q) < 1e-9, "{q:?} -> {back:?}");
    }

    #[test]
    fn jacobian_matches_finite_differences(q in ik_domain()) {
        let g = template();
        let j = jacobian(&g, &q);
        let h = 1e-7;
        for k in 0..3 {
            let mut a = q.as_array();
            let mut b = q.as_array();
            a[k] += h;
            b[k] -= h;
            let fd = (forward_kinematics(&g, &JointAngles::from_array(a))
                - forward_kinematics(&g, &JointAngles::from_array(b)))
                / (2.0 * h);
            prop_assert!((j.column(k) - fd).amax() < 1e-6);
        }
    }

    #[test]
    fn mirror_symmetry(q in ik_domain()) {
        let fl = LegGeometry::for_leg(&template(), LegId::FL);
        let fr = LegGeometry::for_leg(&template(), LegId::FR);
        prop_assert_eq!(fr.side, Side::Right);
        let mirrored = JointAngles::new(-q.q_frontal, q.q_sagittal, q.q_knee);
        let a = forward_kinematics(&fl, &q);
        let b = forward_kinematics(&fr, &mirrored);
        prop_assert_eq!(a.x, b.x);
        prop_assert_eq!(a.y, -b.y);
        prop_assert_eq!(a.z, b.z);
        prop_assert_eq!(fl.hip_offset_m[1], -fr.hip_offset_m[1]);
        prop_assert!(fr.check_limits(&mirrored).is_ok());
    }
}
