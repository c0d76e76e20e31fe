use nalgebra::Vector3;

use super::model::{com_for_joints, RobotModel};
use crate::kinematics::{self, JointAngles, LegId};

/// Net rotor wrench in the body frame, torque taken about the CoM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrusterWrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub rotor_thrust_n: [f64; 4],
    /// True when any throttle had to be clamped into [0, 1].
    pub clamped: bool,
}

/// Per-rotor geometry about the CoM for a given pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorLayout {
    /// Hub positions relative to the CoM, body frame.
    pub arms: [Vector3<f64>; 4],
    pub axes: [Vector3<f64>; 4],
    pub spin: [f64; 4],
    pub yaw_drag_m: f64,
    pub max_rotor_thrust_n: f64,
}

impl RotorLayout {
    pub fn for_pose(model: &RobotModel, joints: &[JointAngles; 4]) -> Self {
        let com = com_for_joints(model, joints);
        let hubs = model.rotor_positions(joints);
        let arms = hubs.map(|h| h - com);
        let axes = LegId::ALL.map(|id| kinematics::prop_axis(model.leg(id), &joints[id.index()]));
        Self {
            arms,
            axes,
            spin: model.thrusters.spin,
            yaw_drag_m: model.thrusters.yaw_drag_m,
            max_rotor_thrust_n: model.thrusters.max_rotor_thrust_n(),
        }
    }

    pub fn wrench_from_thrusts(&self, thrusts: &[f64; 4]) -> (Vector3<f64>, Vector3<f64>) {
        let mut force = Vector3::zeros();
        let mut torque = Vector3::zeros();
        for i in 0..4 {
            let f = self.axes[i] * thrusts[i];
            force += f;
            torque += self.arms[i].cross(&f) + self.axes[i] * (self.yaw_drag_m * thrusts[i] * self.spin[i]);
        }
        (force, torque)
    }
}

/// Rotor thrust is linear in throttle: `throttle * max_rotor_thrust`.
pub fn thruster_wrench(model: &RobotModel, joints: &[JointAngles; 4], throttles: &[f64; 4]) -> ThrusterWrench {
    let layout = RotorLayout::for_pose(model, joints);
    thruster_wrench_with_layout(&layout, throttles)
}

pub fn thruster_wrench_with_layout(layout: &RotorLayout, throttles: &[f64; 4]) -> ThrusterWrench {
    let mut clamped = false;
    let thrusts = throttles.map(|u| {
        let c = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        if c != u {
            clamped = true;
        }
        c * layout.max_rotor_thrust_n
    });
    let (force, torque) = layout.wrench_from_thrusts(&thrusts);
    ThrusterWrench {
        force,
        torque,
        rotor_thrust_n: thrusts,
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::splay_configuration;

    fn splayed(model: &RobotModel) -> [JointAngles; 4] {
        LegId::ALL.map(|id| splay_configuration(model.leg(id)).unwrap())
    }

    fn symmetric_model() -> RobotModel {
        let mut cfg = crate::sim::ModelConfig::default();
        cfg.body.body_com_m = [0.0; 3];
        cfg.body.battery_m = [0.0; 3];
        cfg.leg.folded_knee_rad = 0.0;
        RobotModel::from_config(&cfg).unwrap()
    }

    #[test]
    fn zero_throttle_zero_wrench() {
        let m = RobotModel::default();
        let w = thruster_wrench(&m, &splayed(&m), &[0.0; 4]);
        assert_eq!(w.force, Vector3::zeros());
        assert_eq!(w.torque, Vector3::zeros());
        assert!(!w.clamped);
    }

    #[test]
    fn equal_throttles_pure_lift() {
        let m = symmetric_model();
        let w = thruster_wrench(&m, &splayed(&m), &[0.6; 4]);
        assert!((w.force.z - 0.6 * m.thrusters.max_total_thrust_n).abs() < 1e-9);
        assert!(w.force.xy().norm() < 1e-9);
        assert!(w.torque.norm() < 1e-9, "{}", w.torque);
    }

    #[test]
    fn diagonal_differential_is_pure_yaw() {
        let m = symmetric_model();
        let (tau, eps) = (0.5, 0.05);
        let w = thruster_wrench(&m, &splayed(&m), &[tau + eps, tau - eps, tau + eps, tau - eps]);
        assert!(w.torque.x.abs() < 1e-9 && w.torque.y.abs() < 1e-9);
        let expected = 4.0 * eps * m.thrusters.max_rotor_thrust_n() * m.thrusters.yaw_drag_m;
        assert!((w.torque.z - expected).abs() < 1e-9);
        assert!((w.force.z - 4.0 * tau * m.thrusters.max_rotor_thrust_n()).abs() < 1e-9);
    }

    #[test]
    fn throttles_clamped() {
        let m = RobotModel::default();
        let w = thruster_wrench(&m, &splayed(&m), &[1.5, -0.2, 0.5, 0.5]);
        assert!(w.clamped);
        assert_eq!(w.rotor_thrust_n[0], m.thrusters.max_rotor_thrust_n());
        assert_eq!(w.rotor_thrust_n[1], 0.0);
    }
}
