use serde::{Deserialize, Serialize};

use nalgebra::Vector3;

use crate::kinematics::{self, LegId, Side};
use crate::sim::{BodyState, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollAssistConfig {
    /// Differential thrust per radian of roll, N.
    pub kp_n_per_rad: f64,
    /// Differential thrust per rad/s of roll rate, N*s.
    pub kd_ns_per_rad: f64,
    /// Largest increment per rotor, as a fraction of rotor max thrust.
    pub cap: f64,
    /// Smallest usable roll moment arm (m) of every rotor.
    pub min_roll_arm_m: f64,
}

impl Default for RollAssistConfig {
    fn default() -> Self {
        Self {
            kp_n_per_rad: 120.0,
            kd_ns_per_rad: 8.0,
            cap: 0.3,
            min_roll_arm_m: 0.05,
        }
    }
}

impl RollAssistConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.kp_n_per_rad >= 0.0 && self.kd_ns_per_rad >= 0.0) {
            return Err("roll assist gains must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.cap) {
            return Err(format!("roll assist cap {} not in [0, 1]", self.cap));
        }
        if !(self.min_roll_arm_m > 0.0) {
            return Err("min_roll_arm_m must be positive".into());
        }
        Ok(())
    }
}

/// Roll moment (body x) per newton of thrust of each rotor, taken about the
/// foot centroid. With feet on the ground the body pivots there rather than
/// about the CoM.
pub fn roll_arms(model: &RobotModel, state: &BodyState) -> [f64; 4] {
    let hubs = model.rotor_positions(&state.joints);
    let pivot = model.foot_positions(&state.joints).iter().sum::<Vector3<f64>>() / 4.0;
    std::array::from_fn(|i| {
        let axis = kinematics::prop_axis(&model.legs[i], &state.joints[i]);
        (hubs[i] - pivot).cross(&axis).x
    })
}

/// Sign shared by the left-pair roll arms (the right pair has the other),
/// or `None` if any arm is shorter than `min_arm` or breaks the pattern.
fn arm_pattern(arms: &[f64; 4], min_arm: f64) -> Option<f64> {
    let left = arms[LegId::FL.index()].signum();
    let ok = LegId::ALL.iter().all(|id| {
        let side = match id.side() {
            Side::Left => 1.0,
            Side::Right => -1.0,
        };
        arms[id.index()] * left * side >= min_arm
    });
    ok.then_some(left)
}

/// Differential throttle increments: the left pair gets one sign, the right
/// pair the other, and they cancel. Returns zeros unless every rotor has a
/// usable roll arm about the feet with the left and right arms opposed.
///
/// Near-vertical legs leave the rotor axes pointing sideways, so the moment
/// comes from lateral thrust acting above the ground; wide splayed stances
/// tilt the axes up and flip the arm sign.
pub fn roll_assist(state: &BodyState, model: &RobotModel, cfg: &RollAssistConfig) -> [f64; 4] {
    let Some(left_sign) = arm_pattern(&roll_arms(model, state), cfg.min_roll_arm_m) else {
        return [0.0; 4];
    };
    let (roll, _, _) = state.rpy();
    let delta_n = cfg.kp_n_per_rad * roll + cfg.kd_ns_per_rad * state.angular_velocity.x;
    let u = (delta_n / model.thrusters.max_rotor_thrust_n()).clamp(-cfg.cap, cfg.cap);
    // Positive roll needs a negative moment about the feet.
    LegId::ALL.map(|id| match id.side() {
        Side::Left => -u * left_sign,
        Side::Right => u * left_sign,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{feet_to_joints, standing_feet, standing_joints};
    use nalgebra::UnitQuaternion;

    /// Low stance with feet 0.25 m outboard of the hips.
    fn standing() -> (RobotModel, BodyState) {
        let m = RobotModel::default();
        let mut feet = standing_feet(&m, 0.15).unwrap();
        for id in LegId::ALL {
            feet[id.index()].y += 0.25 * id.side().sign();
        }
        let s = BodyState {
            joints: feet_to_joints(&m, &feet).unwrap(),
            ..BodyState::default()
        };
        (m, s)
    }

    #[test]
    fn zero_error_zero_increments() {
        let (m, s) = standing();
        assert_eq!(roll_assist(&s, &m, &RollAssistConfig::default()), [0.0; 4]);
    }

    #[test]
    fn positive_roll_antisymmetric() {
        let (m, mut s) = standing();
        s.orientation = UnitQuaternion::from_euler_angles(0.1, 0.0, 0.0);
        let inc = roll_assist(&s, &m, &RollAssistConfig::default());
        assert!(inc[LegId::FL.index()] < 0.0 && inc[LegId::FR.index()] > 0.0);
        assert_eq!(inc[LegId::FL.index()], inc[LegId::BL.index()]);
        assert_eq!(inc.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn increments_reduce_roll() {
        let (m, mut s) = standing();
        s.orientation = UnitQuaternion::from_euler_angles(0.05, 0.0, 0.0);
        let cfg = RollAssistConfig::default();
        let inc = roll_assist(&s, &m, &cfg);
        let base = [cfg.cap; 4];
        let throttles: [f64; 4] = std::array::from_fn(|i| base[i] + inc[i]);
        // Shift the CoM wrench to the foot centroid.
        let com = crate::sim::com_for_joints(&m, &s.joints);
        let pivot = m.foot_positions(&s.joints).iter().sum::<Vector3<f64>>() / 4.0;
        let about_pivot = |u: &[f64; 4]| {
            let w = crate::sim::thruster_wrench(&m, &s.joints, u);
            w.torque + (com - pivot).cross(&w.force)
        };
        assert!(about_pivot(&throttles).x - about_pivot(&base).x < 0.0);
    }

    #[test]
    fn capped() {
        let (m, mut s) = standing();
        s.angular_velocity = Vector3::new(100.0, 0.0, 0.0);
        let cfg = RollAssistConfig::default();
        let inc = roll_assist(&s, &m, &cfg);
        assert!(inc.iter().all(|u| u.abs() <= cfg.cap));
    }

    #[test]
    fn narrow_stance_flips_pairs() {
        // Sideways rotors above the feet: pushing the high side outward rolls it down.
        let m = RobotModel::default();
        let s = BodyState {
            joints: standing_joints(&m, 0.28).unwrap(),
            orientation: UnitQuaternion::from_euler_angles(0.1, 0.0, 0.0),
            ..BodyState::default()
        };
        let inc = roll_assist(&s, &m, &RollAssistConfig::default());
        assert!(inc[LegId::FL.index()] > 0.0 && inc[LegId::BR.index()] < 0.0);
        let com = crate::sim::com_for_joints(&m, &s.joints);
        let pivot = m.foot_positions(&s.joints).iter().sum::<Vector3<f64>>() / 4.0;
        let base = [0.3; 4];
        let throttles: [f64; 4] = std::array::from_fn(|i| base[i] + inc[i]);
        let w = crate::sim::thruster_wrench(&m, &s.joints, &throttles);
        let w0 = crate::sim::thruster_wrench(&m, &s.joints, &base);
        let dm = (w.torque - w0.torque) + (com - pivot).cross(&(w.force - w0.force));
        assert!(dm.x < 0.0);
    }

    #[test]
    fn intermediate_width_is_guarded() {
        let m = RobotModel::default();
        let mut feet = standing_feet(&m, 0.18).unwrap();
        for id in LegId::ALL {
            feet[id.index()].y += 0.15 * id.side().sign();
        }
        let s = BodyState {
            joints: feet_to_joints(&m, &feet).unwrap(),
            orientation: UnitQuaternion::from_euler_angles(0.1, 0.0, 0.0),
            ..BodyState::default()
        };
        assert!(roll_arms(&m, &s).iter().all(|a| a.abs() < 0.05));
        assert_eq!(roll_assist(&s, &m, &RollAssistConfig::default()), [0.0; 4]);
    }

    #[test]
    fn guard_requires_roll_arm() {
        let (m, mut s) = standing();
        s.orientation = UnitQuaternion::from_euler_angles(0.1, 0.0, 0.0);
        let cfg = RollAssistConfig {
            min_roll_arm_m: 1.0,
            ..RollAssistConfig::default()
        };
        assert_eq!(roll_assist(&s, &m, &cfg), [0.0; 4]);
    }
}
