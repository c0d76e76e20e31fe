use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{clamped_ik, ControlEvent, ControlEventKind};
use crate::gait::{self, GaitSchedule, LegMode, RaibertParams};
use crate::kinematics::{self, JointAngles, LegId};
use crate::sim::{center_of_mass, BodyState, RobotModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrotControllerConfig {
    /// Desired velocity in the heading frame (forward, left).
    pub v_des_mps: [f64; 2],
    pub gait: GaitSchedule,
    pub k_v_s: f64,
    pub body_height_m: f64,
    /// Virtual-model attitude PD, N*m per rad and N*m*s per rad.
    pub attitude_kp: f64,
    pub attitude_kd: f64,
    /// Virtual-model height PD, N per m and N*s per m.
    pub height_kp: f64,
    pub height_kd: f64,
    pub swing_apex_m: f64,
    /// Extra outboard offset of the neutral footholds, m. Wide stances tilt
    /// the rotor axes up.
    pub stance_width_m: f64,
    /// Joint deflection per unit of virtual joint torque, rad per N*m.
    pub joint_compliance: f64,
    /// Limit on how fast the commanded velocity follows `v_des_mps`.
    pub accel_limit_mps2: f64,
    pub ground_height_m: f64,
    /// Swing targets end this far below the ground plane so touchdown is firm.
    pub touchdown_depth_m: f64,
    /// Integral gain (1/s) trimming the stance sweep speed so the
    /// stride-averaged body speed meets the command.
    pub speed_trim_gain: f64,
}

impl Default for TrotControllerConfig {
    fn default() -> Self {
        Self {
            v_des_mps: [0.3, 0.0],
            gait: GaitSchedule::default(),
            k_v_s: 0.03,
            body_height_m: 0.28,
            attitude_kp: 60.0,
            attitude_kd: 3.0,
            height_kp: 400.0,
            height_kd: 40.0,
            swing_apex_m: 0.06,
            stance_width_m: 0.0,
            joint_compliance: 1e-3,
            accel_limit_mps2: 1.0,
            ground_height_m: 0.0,
            touchdown_depth_m: 0.008,
            speed_trim_gain: 1.0,
        }
    }
}

impl TrotControllerConfig {
    pub fn validate(&self, model: &RobotModel) -> Result<(), String> {
        self.gait.validate().map_err(|e| e.to_string())?;
        let gains = [
            self.k_v_s,
            self.attitude_kp,
            self.attitude_kd,
            self.height_kp,
            self.height_kd,
            self.joint_compliance,
            self.speed_trim_gain,
        ];
        if gains.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err("trot gains must be finite and non-negative".into());
        }
        if !(self.swing_apex_m > 0.0) {
            return Err(format!("swing_apex_m = {} must be positive", self.swing_apex_m));
        }
        if !(self.stance_width_m >= 0.0 && self.stance_width_m.is_finite()) {
            return Err(format!("stance_width_m = {} must be non-negative", self.stance_width_m));
        }
        if !(self.accel_limit_mps2 > 0.0) {
            return Err("accel_limit_mps2 must be positive".into());
        }
        if self.v_des_mps.iter().any(|v| !v.is_finite()) {
            return Err("v_des_mps must be finite".into());
        }
        let reach = LegId::ALL
            .iter()
            .map(|id| model.leg(*id).max_reach())
            .fold(f64::INFINITY, f64::min);
        if !(self.body_height_m > 0.0 && RaibertParams::reach_radius_for(reach, self.body_height_m) > 0.0) {
            return Err(format!(
                "body_height_m = {} outside the usable leg reach (< {:.3} m)",
                self.body_height_m,
                0.8 * reach
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LegTrack {
    mode: LegMode,
    /// Stance: foot position in the heading frame at touchdown, relative to the body origin.
    anchor_h: Vector3<f64>,
    /// Swing: world foot position at lift-off.
    liftoff_w: Vector3<f64>,
    clamp_reported: bool,
}

/// Raibert-style trot with kinematic stance leveling and a virtual-model
/// correction mapped through the leg Jacobian transpose.
#[derive(Debug, Clone)]
pub struct TrotController {
    cfg: TrotControllerConfig,
    model: RobotModel,
    raibert: RaibertParams,
    neutral: [Vector2<f64>; 4],
    track: Option<[LegTrack; 4]>,
    v_cmd: Vector2<f64>,
    /// Body velocity averaged over roughly one stride.
    v_avg: Option<Vector2<f64>>,
    trim: Vector2<f64>,
    events: Vec<ControlEvent>,
}

fn heading(state: &BodyState) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(0.0, 0.0, state.yaw())
}

impl TrotController {
    pub fn new(model: &RobotModel, cfg: TrotControllerConfig) -> Self {
        let reach = model.leg(LegId::FL).max_reach();
        let raibert = RaibertParams {
            k_v: cfg.k_v_s,
            reach_radius_m: RaibertParams::reach_radius_for(reach, cfg.body_height_m),
        };
        let neutral = LegId::ALL.map(|id| {
            let hip = model.leg(id).hip_offset().xy();
            Vector2::new(hip.x, hip.y + cfg.stance_width_m * id.side().sign())
        });
        Self {
            cfg,
            model: model.clone(),
            raibert,
            neutral,
            track: None,
            v_cmd: Vector2::zeros(),
            v_avg: None,
            trim: Vector2::zeros(),
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &TrotControllerConfig {
        &self.cfg
    }

    pub fn set_v_des(&mut self, v: Vector2<f64>) {
        self.cfg.v_des_mps = v.into();
    }

    /// Start commanded velocity from `v` instead of zero.
    pub fn set_v_cmd(&mut self, v: Vector2<f64>) {
        self.v_cmd = v;
    }

    pub fn v_cmd(&self) -> Vector2<f64> {
        self.v_cmd
    }

    pub fn raibert(&self) -> &RaibertParams {
        &self.raibert
    }

    pub fn drain_events(&mut self) -> Vec<ControlEvent> {
        std::mem::take(&mut self.events)
    }

    /// Neutral foothold below the hip, heading frame relative to the body origin.
    pub fn hip_projection(&self, leg: LegId) -> Vector2<f64> {
        self.neutral[leg.index()]
    }

    /// Touchdown target (heading frame, relative to the body origin at touchdown).
    pub fn touchdown_target(&self, state: &BodyState, leg: LegId) -> Vector2<f64> {
        let v = state.heading_velocity().xy();
        gait::raibert_foot_target(
            v,
            self.v_cmd,
            self.cfg.gait.stance_duration(),
            &self.raibert,
            self.hip_projection(leg),
        )
    }

    fn foot_world(&self, state: &BodyState, leg: LegId) -> Vector3<f64> {
        let g = self.model.leg(leg);
        let p = g.hip_offset() + kinematics::forward_kinematics(g, &state.joints[leg.index()]);
        state.position + state.orientation * p
    }

    /// Joint commands at gait time `t`. `dt` is the time since the previous call.
    pub fn update(&mut self, state: &BodyState, t: f64, dt: f64) -> [JointAngles; 4] {
        let cfg = self.cfg.clone();
        let v_des = Vector2::from(cfg.v_des_mps);
        let dv = v_des - self.v_cmd;
        let max_dv = cfg.accel_limit_mps2 * dt.max(0.0);
        self.v_cmd += if dv.norm() > max_dv { dv * (max_dv / dv.norm()) } else { dv };
        let v_meas = state.heading_velocity().xy();
        let tau = cfg.gait.period_s;
        let v_avg = match self.v_avg {
            Some(va) => va + (v_meas - va) * (dt / (tau + dt)),
            None => self.v_cmd,
        };
        self.v_avg = Some(v_avg);
        self.trim += (self.v_cmd - v_avg) * (cfg.speed_trim_gain * dt);
        let trim_max = 0.5 * self.v_cmd.norm() + 0.15;
        if self.trim.norm() > trim_max {
            self.trim *= trim_max / self.trim.norm();
        }

        let yaw_q = heading(state);
        let r = state.orientation;
        let h_now = state.position.z - cfg.ground_height_m;
        let t_st = cfg.gait.stance_duration();
        let t_sw = cfg.gait.swing_duration();

        let mut track = match self.track {
            Some(tr) => tr,
            None => LegId::ALL.map(|id| {
                let w = self.foot_world(state, id);
                LegTrack {
                    mode: cfg.gait.phase(t, id).mode,
                    anchor_h: yaw_q.inverse() * (w - state.position),
                    liftoff_w: w,
                    clamp_reported: false,
                }
            }),
        };

        let mut feet_b = [Vector3::zeros(); 4];
        let mut stance = Vec::with_capacity(4);
        for id in LegId::ALL {
            let i = id.index();
            let ph = cfg.gait.phase(t, id);
            let tr = &mut track[i];
            if ph.mode != tr.mode {
                let w = self.foot_world(state, id);
                match ph.mode {
                    LegMode::Swing => tr.liftoff_w = w,
                    LegMode::Stance => {
                        tr.anchor_h = yaw_q.inverse() * (w - state.position);
                    }
                }
                tr.mode = ph.mode;
                tr.clamp_reported = false;
            }
            match ph.mode {
                LegMode::Stance => {
                    let xy = tr.anchor_h.xy() - (self.v_cmd + self.trim) * (ph.progress * t_st);
                    feet_b[i] = Vector3::new(xy.x, xy.y, -cfg.body_height_m);
                    stance.push(id);
                }
                LegMode::Swing => {
                    let v = state.heading_velocity().xy();
                    let remaining = (1.0 - ph.progress) * t_sw;
                    let target_h = v * remaining + self.touchdown_target(state, id);
                    let target_w = state.position
                        + yaw_q * Vector3::new(target_h.x, target_h.y, 0.0)
                        + Vector3::new(0.0, 0.0, cfg.ground_height_m - cfg.touchdown_depth_m - state.position.z);
                    let curve = gait::make_swing_curve(tr.liftoff_w, target_w, cfg.swing_apex_m)
                        .expect("apex validated positive");
                    let (b, _) = gait::bezier_eval(&curve, ph.progress).expect("progress in [0, 1)");
                    feet_b[i] = r.inverse() * (b - state.position);
                }
            }
        }

        let dq = self.virtual_model(state, &feet_b, &stance, h_now);

        let mut out = [JointAngles::default(); 4];
        for id in LegId::ALL {
            let i = id.index();
            let g = self.model.leg(id);
            let (q, err) = clamped_ik(g, &(feet_b[i] - g.hip_offset()));
            if let Some(e) = err {
                if !track[i].clamp_reported {
                    track[i].clamp_reported = true;
                    self.events.push(ControlEvent {
                        time_s: state.time_s,
                        kind: ControlEventKind::IkClamp {
                            leg: id,
                            detail: e.to_string(),
                        },
                    });
                }
            }
            let q = JointAngles::from_array(std::array::from_fn(|j| q.as_array()[j] + dq[i][j]));
            out[i] = g.clamp_to_limits(&q);
        }
        self.track = Some(track);
        out
    }

    /// Vertical foot forces from a height/attitude PD, allocated over the
    /// stance feet by least squares and turned into joint offsets.
    fn virtual_model(&self, state: &BodyState, feet_b: &[Vector3<f64>; 4], stance: &[LegId], h: f64) -> [[f64; 3]; 4] {
        let cfg = &self.cfg;
        let mut dq = [[0.0; 3]; 4];
        if stance.is_empty() || cfg.joint_compliance == 0.0 {
            return dq;
        }
        let (roll, pitch, _) = state.rpy();
        let w = state.angular_velocity;
        let wrench = DVector::from_vec(vec![
            cfg.height_kp * (cfg.body_height_m - h) - cfg.height_kd * state.linear_velocity.z,
            -cfg.attitude_kp * roll - cfg.attitude_kd * w.x,
            -cfg.attitude_kp * pitch - cfg.attitude_kd * w.y,
        ]);
        let com = center_of_mass(&self.model, state);
        let mut a = DMatrix::zeros(3, stance.len());
        for (k, id) in stance.iter().enumerate() {
            let p = feet_b[id.index()] - com;
            a[(0, k)] = 1.0;
            a[(1, k)] = p.y;
            a[(2, k)] = -p.x;
        }
        let Ok(pinv) = a.pseudo_inverse(1e-9) else {
            return dq;
        };
        let f = pinv * wrench;
        for (k, id) in stance.iter().enumerate() {
            let i = id.index();
            let jac = kinematics::jacobian(self.model.leg(*id), &state.joints[i]);
            let tau = jac.transpose() * Vector3::new(0.0, 0.0, f[k]);
            for j in 0..3 {
                dq[i][j] = -cfg.joint_compliance * tau[j];
            }
        }
        dq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::standing_joints;

    fn rest() -> (RobotModel, BodyState) {
        let m = RobotModel::default();
        let s = BodyState {
            position: Vector3::new(0.0, 0.0, 0.28),
            joints: standing_joints(&m, 0.28).unwrap(),
            ..BodyState::default()
        };
        (m, s)
    }

    #[test]
    fn neutral_targets_at_rest() {
        let (m, s) = rest();
        let cfg = TrotControllerConfig {
            v_des_mps: [0.0, 0.0],
            ..TrotControllerConfig::default()
        };
        let c = TrotController::new(&m, cfg);
        for id in LegId::ALL {
            assert_eq!(c.touchdown_target(&s, id), c.hip_projection(id));
        }
    }

    #[test]
    fn diagonal_pairs_share_profiles() {
        let (m, s) = rest();
        let mut c = TrotController::new(&m, TrotControllerConfig::default());
        for k in 0..50 {
            let q = c.update(&s, k as f64 * 0.01, 0.01);
            let fl = q[LegId::FL.index()];
            let br = q[LegId::BR.index()];
            // Mirror images through the body center: same knee, same frontal.
            assert!((fl.q_knee - br.q_knee).abs() < 0.2, "{fl:?} {br:?}");
        }
    }

    #[test]
    fn time_shift_consistent() {
        let (m, s) = rest();
        let mut a = TrotController::new(&m, TrotControllerConfig::default());
        a.update(&s, 0.1, 0.01);
        let mut b = a.clone();
        let p = a.config().gait.period_s;
        for k in 1..40 {
            let t = 0.1 + k as f64 * 0.01;
            let qa = a.update(&s, t, 0.01);
            let qb = b.update(&s, t + p, 0.01);
            for i in 0..4 {
                assert!(qa[i].max_abs_diff(&qb[i]) < 1e-9);
            }
        }
    }

    #[test]
    fn commands_within_limits_for_wild_states() {
        let (m, mut s) = rest();
        s.linear_velocity = Vector3::new(5.0, -4.0, 2.0);
        s.orientation = UnitQuaternion::from_euler_angles(0.8, -0.6, 1.0);
        s.position.z = 0.05;
        let mut c = TrotController::new(&m, TrotControllerConfig::default());
        for k in 0..100 {
            let q = c.update(&s, k as f64 * 0.013, 0.013);
            for id in LegId::ALL {
                assert!(m.leg(id).check_limits(&q[id.index()]).is_ok());
            }
        }
        let events = c.drain_events();
        assert!(events.iter().any(|e| matches!(e.kind, ControlEventKind::IkClamp { .. })));
    }

    #[test]
    fn validation() {
        let m = RobotModel::default();
        assert!(TrotControllerConfig::default().validate(&m).is_ok());
        let bad = TrotControllerConfig {
            body_height_m: 0.4,
            ..TrotControllerConfig::default()
        };
        assert!(bad.validate(&m).is_err());
    }
}
