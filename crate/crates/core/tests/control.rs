use husky_core::control::Mixer;
use husky_core::kinematics::{splay_configuration, LegId};
use husky_core::sim::{RobotModel, RotorLayout};
use nalgebra::Vector3;
use proptest::prelude::*;

fn aerial_layout() -> RotorLayout {
    let m = RobotModel::default();
    let joints = LegId::ALL.map(|id| splay_configuration(m.leg(id)).unwrap());
    RotorLayout::for_pose(&m, &joints)
}

proptest! {
    #[test]
    fn mixer_round_trip(
        thrusts in proptest::array::uniform4(5.0..25.0f64),
    ) {
        // Start from feasible rotor thrusts, so the demanded wrench is reachable.
        let l = aerial_layout();
        let (force, torque) = l.wrench_from_thrusts(&thrusts);
        let mixer = Mixer::new(&l).unwrap();
        let collective: f64 = l.axes.iter().zip(&thrusts).map(|(a, t)| a.z * t).sum();
        prop_assert!((force.z - collective).abs() < 1e-9);
        let out = mixer.mix(force.z, torque);
        prop_assert!(!out.saturated);
        for (a, b) in out.thrusts_n.iter().zip(&thrusts) {
            prop_assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", out.thrusts_n, thrusts);
        }
    }

    #[test]
    fn saturated_output_stays_in_range(
        f in 0.0..200.0f64,
        tx in -20.0..20.0f64,
        ty in -20.0..20.0f64,
        tz in -5.0..5.0f64,
    ) {
        let l = aerial_layout();
        let out = Mixer::new(&l).unwrap().mix(f, Vector3::new(tx, ty, tz));
        for t in out.thrusts_n {
            prop_assert!((-1e-9..=l.max_rotor_thrust_n + 1e-9).contains(&t));
        }
    }
}
