use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::mixer::{Mixer, MixerError};
use crate::sim::{center_of_mass, BodyState, RobotModel, RotorLayout};
use crate::GRAVITY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoverControllerConfig {
    /// Position loop gains per world axis; the z entries are the altitude loop.
    pub pos_kp: [f64; 3],
    pub pos_ki: [f64; 3],
    pub pos_kd: [f64; 3],
    /// Attitude loop gains for roll, pitch, yaw (angular acceleration per rad).
    pub att_kp: [f64; 3],
    pub att_ki: [f64; 3],
    pub att_kd: [f64; 3],
    /// Throttle fraction that balances gravity. `None` uses m*g / max thrust.
    pub hover_throttle: Option<f64>,
    /// CoM position setpoint, world.
    pub setpoint_m: [f64; 3],
    pub yaw_rad: f64,
    pub max_tilt_rad: f64,
    /// Reference speed limit while moving toward the setpoint.
    pub max_speed_mps: f64,
    /// Bandwidth of the first-order reference approach, 1/s.
    pub reference_rate_hz: f64,
    pub pos_integrator_limit: f64,
    pub att_integrator_limit: f64,
}

impl Default for HoverControllerConfig {
    fn default() -> Self {
        Self {
            pos_kp: [3.0, 3.0, 12.0],
            pos_ki: [0.3, 0.3, 4.0],
            pos_kd: [3.0, 3.0, 7.0],
            att_kp: [400.0, 400.0, 60.0],
            att_ki: [40.0, 40.0, 5.0],
            att_kd: [40.0, 40.0, 15.0],
            hover_throttle: None,
            setpoint_m: [0.0, 0.0, 1.0],
            yaw_rad: 0.0,
            max_tilt_rad: 0.35,
            max_speed_mps: 0.6,
            reference_rate_hz: 3.0,
            pos_integrator_limit: 0.5,
            att_integrator_limit: 0.2,
        }
    }
}

impl HoverControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        let gains = [self.pos_kp, self.pos_ki, self.pos_kd, self.att_kp, self.att_ki, self.att_kd];
        if gains.iter().flatten().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err("hover gains must be finite and non-negative".into());
        }
        if let Some(h) = self.hover_throttle {
            if !(h > 0.0 && h < 1.0) {
                return Err(format!("hover_throttle {h} not in (0, 1)"));
            }
        }
        if !(self.max_tilt_rad > 0.0 && self.max_tilt_rad < 1.2) {
            return Err(format!("max_tilt_rad {} not in (0, 1.2)", self.max_tilt_rad));
        }
        if !(self.max_speed_mps > 0.0 && self.reference_rate_hz > 0.0) {
            return Err("max_speed_mps and reference_rate_hz must be positive".into());
        }
        if !(self.pos_integrator_limit >= 0.0 && self.att_integrator_limit >= 0.0) {
            return Err("integrator limits must be non-negative".into());
        }
        if self.setpoint_m.iter().any(|x| !x.is_finite()) || !self.yaw_rad.is_finite() {
            return Err("hover setpoint must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoverOutput {
    pub throttles: [f64; 4],
    pub saturated: bool,
    pub thrust_n: f64,
    pub torque_nm: Vector3<f64>,
}

/// Two-loop cascade: position to tilt and collective thrust, attitude to body
/// torques, then the mixer.
#[derive(Debug, Clone)]
pub struct HoverController {
    cfg: HoverControllerConfig,
    reference: Option<Vector3<f64>>,
    pos_int: Vector3<f64>,
    att_int: Vector3<f64>,
    last_saturated: bool,
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    if w.is_finite() { w } else { 0.0 }
}

impl HoverController {
    pub fn new(cfg: HoverControllerConfig) -> Self {
        Self {
            cfg,
            reference: None,
            pos_int: Vector3::zeros(),
            att_int: Vector3::zeros(),
            last_saturated: false,
        }
    }

    pub fn config(&self) -> &HoverControllerConfig {
        &self.cfg
    }

    pub fn set_setpoint(&mut self, position_m: Vector3<f64>, yaw_rad: f64) {
        self.cfg.setpoint_m = position_m.into();
        self.cfg.yaw_rad = yaw_rad;
    }

    /// Reference speed limit, e.g. a slower descent for landing.
    pub fn set_max_speed(&mut self, mps: f64) {
        self.cfg.max_speed_mps = mps;
    }

    /// Restart the reference from the current CoM on the next update.
    pub fn reset(&mut self) {
        self.reference = None;
        self.pos_int = Vector3::zeros();
        self.att_int = Vector3::zeros();
    }

    pub fn reference(&self) -> Option<Vector3<f64>> {
        self.reference
    }

    pub fn hover_throttle(&self, model: &RobotModel) -> f64 {
        self.cfg.hover_throttle.unwrap_or_else(|| model.hover_throttle())
    }

    pub fn update(&mut self, state: &BodyState, model: &RobotModel, dt: f64) -> Result<HoverOutput, MixerError> {
        let c = &self.cfg;
        let com = state.position + state.orientation * center_of_mass(model, state);
        let setpoint = Vector3::from(c.setpoint_m);
        let r = *self.reference.get_or_insert(com);
        let to_go = setpoint - r;
        let mut r_dot = to_go * c.reference_rate_hz;
        if r_dot.norm() > c.max_speed_mps {
            r_dot *= c.max_speed_mps / r_dot.norm();
        }
        let r = if to_go.norm() <= r_dot.norm() * dt { setpoint } else { r + r_dot * dt };
        self.reference = Some(r);

        let e = r - com;
        let e_dot = r_dot - state.linear_velocity;
        let freeze = self.last_saturated;
        if !freeze {
            self.pos_int += e * dt;
            let lim = c.pos_integrator_limit;
            self.pos_int = self.pos_int.map(|x| x.clamp(-lim, lim));
        }
        let acc = Vector3::from_fn(|i, _| c.pos_kp[i] * e[i] + c.pos_ki[i] * self.pos_int[i] + c.pos_kd[i] * e_dot[i]);

        let hover_n = self.hover_throttle(model) * model.thrusters.max_total_thrust_n;
        let (roll, pitch, yaw) = state.rpy();
        let yaw_frame = UnitQuaternion::from_euler_angles(0.0, 0.0, yaw);
        let a_h = yaw_frame.inverse() * acc;
        let lift = (GRAVITY + a_h.z).max(0.2 * GRAVITY);
        let roll_des = (-a_h.y / lift).atan().clamp(-c.max_tilt_rad, c.max_tilt_rad);
        let pitch_des = (a_h.x / lift).atan().clamp(-c.max_tilt_rad, c.max_tilt_rad);
        let tilt = (roll.cos() * pitch.cos()).max(0.5);
        let thrust_n = hover_n * (lift / GRAVITY) / tilt;

        let att_err = Vector3::new(roll_des - roll, pitch_des - pitch, wrap_angle(c.yaw_rad - yaw));
        if !freeze {
            self.att_int += att_err * dt;
            let lim = c.att_integrator_limit;
            self.att_int = self.att_int.map(|x| x.clamp(-lim, lim));
        }
        let w = state.angular_velocity;
        let alpha = Vector3::from_fn(|i, _| c.att_kp[i] * att_err[i] + c.att_ki[i] * self.att_int[i] - c.att_kd[i] * w[i]);
        let torque = model.inertia * alpha + w.cross(&(model.inertia * w));

        let mixer = Mixer::new(&RotorLayout::for_pose(model, &state.joints))?;
        let out = mixer.mix(thrust_n, torque);
        self.last_saturated = out.saturated;
        let max = mixer.max_rotor_thrust_n();
        Ok(HoverOutput {
            throttles: out.thrusts_n.map(|t| (t / max).clamp(0.0, 1.0)),
            saturated: out.saturated,
            thrust_n,
            torque_nm: torque,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{splay_configuration, LegId};
    use crate::sim::ModelConfig;

    fn symmetric_hover_state() -> (RobotModel, BodyState) {
        let mut cfg = ModelConfig::default();
        cfg.body.body_com_m = [0.0; 3];
        cfg.body.battery_m = [0.0; 3];
        cfg.leg.folded_knee_rad = 0.0;
        let m = RobotModel::from_config(&cfg).unwrap();
        let joints = LegId::ALL.map(|id| splay_configuration(m.leg(id)).unwrap());
        let mut s = BodyState {
            joints,
            ..BodyState::default()
        };
        let com = center_of_mass(&m, &s);
        s.position = Vector3::new(0.0, 0.0, 1.0) - com;
        (m, s)
    }

    #[test]
    fn equilibrium_gives_hover_fraction() {
        let (m, s) = symmetric_hover_state();
        let mut h = HoverController::new(HoverControllerConfig::default());
        let out = h.update(&s, &m, 1e-3).unwrap();
        for u in out.throttles {
            assert!((u - m.hover_throttle()).abs() < 1e-9, "{u}");
        }
        assert!(!out.saturated);
    }

    #[test]
    fn yaw_error_gives_diagonal_differential() {
        let (m, s) = symmetric_hover_state();
        let mut cfg = HoverControllerConfig::default();
        cfg.yaw_rad = 0.2;
        let mut h = HoverController::new(cfg);
        let out = h.update(&s, &m, 1e-3).unwrap();
        let u = out.throttles;
        assert!((u[0] - u[2]).abs() < 1e-12 && (u[1] - u[3]).abs() < 1e-12);
        assert!(u[0] > u[1]);
        let w = crate::sim::thruster_wrench(&m, &s.joints, &u);
        assert!(w.torque.x.abs() < 1e-9 && w.torque.y.abs() < 1e-9);
        assert!(w.torque.z > 0.0);
    }

    #[test]
    fn outputs_bounded() {
        let (m, mut s) = symmetric_hover_state();
        s.linear_velocity = Vector3::new(50.0, -40.0, 30.0);
        s.angular_velocity = Vector3::new(30.0, 20.0, -10.0);
        s.orientation = UnitQuaternion::from_euler_angles(1.0, -0.7, 3.0);
        let mut h = HoverController::new(HoverControllerConfig::default());
        for _ in 0..100 {
            let out = h.update(&s, &m, 1e-3).unwrap();
            assert!(out.throttles.iter().all(|u| (0.0..=1.0).contains(u)));
        }
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.5) - (3.5 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
    }
}
