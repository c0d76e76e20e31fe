//! Floating-base dynamics: one rigid body carrying four kinematic legs.
//!
//! Legs are position-servoed and massless for the dynamics, but their point
//! masses set the CoM, which is the reference point for the body's equations
//! of motion. Feet and the perch touch a flat spring-damper ground. Each call
//! to [`Simulator::step`] advances a fixed `dt` with semi-implicit Euler,
//! split into equal substeps no longer than the model's `physics_substep_s`.

mod contact;
mod model;
mod state;
mod thrust;

pub use contact::{contact_force, Terrain};
pub use model::{
    com_for_joints, BodyParams, ContactParams, MassPoint, ModelConfig, ModelError, RobotModel, ServoParams,
    ThrusterParams,
};
pub use state::BodyState;
pub use thrust::{thruster_wrench, thruster_wrench_with_layout, RotorLayout, ThrusterWrench};

use nalgebra::{UnitQuaternion, Vector3};

use crate::kinematics::{self, JointAngles, LegId};
use crate::GRAVITY;

pub const MAX_DT: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimFault {
    #[error("time step {0} s outside (0, 5 ms]")]
    InvalidDt(f64),
    #[error("non-finite `{term}` at t = {time:.4} s")]
    NonFinite {
        time: f64,
        term: &'static str,
        last_valid: Box<BodyState>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactReport {
    /// Ground force on each foot, world frame, [`LegId::ALL`] order.
    pub foot: [Vector3<f64>; 4],
    /// Total over the perch contact points.
    pub perch: Vector3<f64>,
}

impl ContactReport {
    pub fn foot_normals(&self) -> [f64; 4] {
        self.foot.map(|f| f.z)
    }

    pub fn total_normal(&self) -> f64 {
        self.foot.iter().map(|f| f.z).sum::<f64>() + self.perch.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimEvent {
    ThrottleClamped { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimDiagnostics {
    /// Largest `|tangential| - mu * normal` seen at any contact sample.
    pub max_cone_excess_n: f64,
    pub substeps: u64,
}

/// Center of mass in the body frame.
pub fn center_of_mass(model: &RobotModel, state: &BodyState) -> Vector3<f64> {
    com_for_joints(model, &state.joints)
}

/// Kinetic + gravitational + contact-spring energy, with the ground plane as the potential datum.
pub fn mechanical_energy(model: &RobotModel, state: &BodyState, terrain: &Terrain) -> f64 {
    let m = model.total_mass();
    let com_world = state.position + state.orientation * center_of_mass(model, state);
    let w = state.angular_velocity;
    let mut e = 0.5 * m * state.linear_velocity.norm_squared()
        + 0.5 * w.dot(&(model.inertia * w))
        + m * GRAVITY * (com_world.z - terrain.height_m);
    let mut points: Vec<Vector3<f64>> = model.foot_positions(&state.joints).to_vec();
    points.extend(terrain.perch_points());
    for p in points {
        let depth = terrain.height_m - (state.position + state.orientation * p).z;
        if depth > 0.0 {
            e += 0.5 * model.contact.stiffness_n_per_m * depth * depth;
        }
    }
    e
}

/// Owns one robot's state and advances it.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub model: RobotModel,
    pub terrain: Terrain,
    state: BodyState,
    contacts: ContactReport,
    events: Vec<SimEvent>,
    diagnostics: SimDiagnostics,
    throttle_clamped: bool,
}

impl Simulator {
    pub fn new(model: RobotModel, terrain: Terrain, state: BodyState) -> Self {
        Self {
            model,
            terrain,
            state,
            contacts: ContactReport::default(),
            events: Vec::new(),
            diagnostics: SimDiagnostics::default(),
            throttle_clamped: false,
        }
    }

    pub fn state(&self) -> &BodyState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut BodyState {
        &mut self.state
    }

    pub fn contacts(&self) -> &ContactReport {
        &self.contacts
    }

    pub fn diagnostics(&self) -> &SimDiagnostics {
        &self.diagnostics
    }

    pub fn drain_events(&mut self) -> Vec<SimEvent> {
        std::mem::take(&mut self.events)
    }

    /// Instantaneous change of CoM velocity (world) and body angular velocity.
    pub fn apply_velocity_impulse(&mut self, dv_world: Vector3<f64>, dw_body: Vector3<f64>) {
        self.state.linear_velocity += dv_world;
        self.state.angular_velocity += dw_body;
    }

    pub fn step(
        &mut self,
        joint_commands: &[JointAngles; 4],
        throttles: &[f64; 4],
        dt: f64,
    ) -> Result<&BodyState, SimFault> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(SimFault::InvalidDt(dt));
        }
        let n = (dt / self.model.physics_substep_s - 1e-9).ceil().max(1.0) as usize;
        let h = dt / n as f64;
        let start_time = self.state.time_s;
        for k in 0..n {
            self.substep(joint_commands, throttles, h)?;
            // Accumulating h drifts; pin the clock to the step grid.
            self.state.time_s = start_time + h * (k + 1) as f64;
        }
        self.state.time_s = start_time + dt;
        Ok(&self.state)
    }

    fn substep(&mut self, cmds: &[JointAngles; 4], throttles: &[f64; 4], h: f64) -> Result<(), SimFault> {
        let model = &self.model;
        let s = &self.state;
        let last_valid = s.clone();
        let fault = |term: &'static str| SimFault::NonFinite {
            time: last_valid.time_s,
            term,
            last_valid: Box::new(last_valid.clone()),
        };

        let r = s.orientation;
        let com = com_for_joints(model, &s.joints);
        let com_rate = {
            const PROBE: f64 = 1e-6;
            let probe = std::array::from_fn(|i| {
                let q = s.joints[i].as_array();
                let v = s.joint_velocities[i].as_array();
                JointAngles::from_array(std::array::from_fn(|j| q[j] + v[j] * PROBE))
            });
            (com_for_joints(model, &probe) - com) / PROBE
        };
        let w_world = r * s.angular_velocity;
        // Velocity of a body-fixed-in-pose point p, plus its own body-frame rate.
        let point_velocity = |p: &Vector3<f64>, p_rate: &Vector3<f64>| {
            s.linear_velocity + w_world.cross(&(r * (p - com))) + r * (p_rate - com_rate)
        };

        let mut force = Vector3::new(0.0, 0.0, -model.total_mass() * GRAVITY);
        let mut torque_body = Vector3::zeros();
        let mut report = ContactReport::default();
        let mut foot_load_body = [Vector3::zeros(); 4];

        for id in LegId::ALL {
            let i = id.index();
            let g = model.leg(id);
            let q = &s.joints[i];
            let foot_b = g.hip_offset() + kinematics::forward_kinematics(g, q);
            let jac = kinematics::jacobian(g, q);
            let qd = s.joint_velocities[i].as_array();
            let foot_rate = jac * Vector3::from(qd);
            let pos_w = s.position + r * foot_b;
            let vel_w = point_velocity(&foot_b, &foot_rate);
            let f = contact_force(&pos_w, &vel_w, &self.terrain, &model.contact);
            if !f.iter().all(|x| x.is_finite()) {
                return Err(fault("foot contact force"));
            }
            self.diagnostics.max_cone_excess_n = self
                .diagnostics
                .max_cone_excess_n
                .max(f.xy().norm() - self.terrain.friction * f.z);
            report.foot[i] = f;
            force += f;
            let f_b = r.inverse() * f;
            torque_body += (foot_b - com).cross(&f_b);
            foot_load_body[i] = jac.transpose() * f_b;
        }
        for perch in self.terrain.perch_points() {
            let pos_w = s.position + r * perch;
            let vel_w = point_velocity(&perch, &Vector3::zeros());
            let f = contact_force(&pos_w, &vel_w, &self.terrain, &model.contact);
            if !f.iter().all(|x| x.is_finite()) {
                return Err(fault("perch contact force"));
            }
            self.diagnostics.max_cone_excess_n = self
                .diagnostics
                .max_cone_excess_n
                .max(f.xy().norm() - self.terrain.friction * f.z);
            report.perch += f;
            force += f;
            torque_body += (perch - com).cross(&(r.inverse() * f));
        }

        let wrench = thruster_wrench(model, &s.joints, throttles);
        if !(wrench.force.iter().chain(wrench.torque.iter()).all(|x| x.is_finite())) {
            return Err(fault("thruster wrench"));
        }
        if wrench.clamped && !self.throttle_clamped {
            self.events.push(SimEvent::ThrottleClamped { time: s.time_s });
        }
        self.throttle_clamped = wrench.clamped;
        force += r * wrench.force;
        torque_body += wrench.torque;

        // Joint servos.
        let servo = &model.servo;
        let wn = servo.natural_freq_radps;
        let mut joints = s.joints;
        let mut joint_vel = s.joint_velocities;
        for id in LegId::ALL {
            let i = id.index();
            let limits = model.leg(id).joint_limits;
            let ranges = [limits.frontal, limits.sagittal, limits.knee];
            let mut q = joints[i].as_array();
            let mut qd = joint_vel[i].as_array();
            let target = cmds[i].as_array();
            for j in 0..3 {
                let target_j = if target[j].is_finite() { ranges[j].clamp(target[j]) } else { q[j] };
                let acc = wn * wn * (target_j - q[j]) - 2.0 * wn * qd[j];
                qd[j] = (qd[j] + h * acc).clamp(-servo.rate_limit_radps, servo.rate_limit_radps);
                let load = foot_load_body[i][j];
                let excess = load.abs() - servo.stall_torque_nm[j];
                let yield_rate = if excess > 0.0 {
                    load.signum() * excess * servo.yield_radps_per_nm
                } else {
                    0.0
                };
                q[j] += h * (qd[j] + yield_rate);
                if q[j] < ranges[j].min || q[j] > ranges[j].max {
                    q[j] = ranges[j].clamp(q[j]);
                    qd[j] = 0.0;
                }
            }
            joints[i] = JointAngles::from_array(q);
            joint_vel[i] = JointAngles::from_array(qd);
        }

        // Body: velocities first, then positions.
        let m = model.total_mass();
        let w = s.angular_velocity;
        let w_dot = model.inertia_inv * (torque_body - w.cross(&(model.inertia * w)));
        let v_new = s.linear_velocity + force * (h / m);
        let w_new = w + w_dot * h;
        let com_world = s.position + r * com;
        let com_world_new = com_world + v_new * h;
        let mut r_new = r * UnitQuaternion::from_scaled_axis(w_new * h);
        r_new.renormalize();
        let com_new = com_for_joints(model, &joints);
        let position_new = com_world_new - r_new * com_new;

        let next = BodyState {
            time_s: s.time_s + h,
            position: position_new,
            orientation: r_new,
            linear_velocity: v_new,
            angular_velocity: w_new,
            joints,
            joint_velocities: joint_vel,
            rotor_thrust_n: wrench.rotor_thrust_n,
        };
        if let Some(term) = next.first_non_finite() {
            return Err(fault(term));
        }
        self.state = next;
        self.contacts = report;
        self.diagnostics.substeps += 1;
        Ok(())
    }
}

/// Functional form of [`Simulator::step`].
pub fn step(
    model: &RobotModel,
    state: &BodyState,
    joint_commands: &[JointAngles; 4],
    throttles: &[f64; 4],
    terrain: &Terrain,
    dt: f64,
) -> Result<BodyState, SimFault> {
    let mut sim = Simulator::new(model.clone(), *terrain, state.clone());
    sim.step(joint_commands, throttles, dt)?;
    Ok(sim.state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_model() -> RobotModel {
        RobotModel::default()
    }

    #[test]
    fn rejects_bad_dt() {
        let m = free_model();
        let s = BodyState::default();
        let t = Terrain::default();
        let c = [JointAngles::default(); 4];
        assert_eq!(step(&m, &s, &c, &[0.0; 4], &t, 0.0), Err(SimFault::InvalidDt(0.0)));
        assert_eq!(step(&m, &s, &c, &[0.0; 4], &t, 0.006), Err(SimFault::InvalidDt(0.006)));
    }

    #[test]
    fn nan_command_is_ignored_and_nan_state_faults() {
        let m = free_model();
        let mut s = BodyState::default();
        s.position.z = 5.0;
        let t = Terrain::default();
        let c = [JointAngles::new(f64::NAN, 0.0, 0.0); 4];
        assert!(step(&m, &s, &c, &[0.0; 4], &t, 1e-3).is_ok());
        s.linear_velocity.x = f64::NAN;
        match step(&m, &s, &[JointAngles::default(); 4], &[0.0; 4], &t, 1e-3) {
            Err(SimFault::NonFinite { .. }) => {}
            other => panic!("expected fault, got {other:?}"),
        }
    }

    #[test]
    fn quaternion_stays_normalized() {
        let m = free_model();
        let mut s = BodyState::default();
        s.position.z = 10.0;
        s.angular_velocity = Vector3::new(3.0, -2.0, 5.0);
        let mut sim = Simulator::new(m, Terrain::default(), s);
        for _ in 0..500 {
            let st = sim.step(&[JointAngles::default(); 4], &[0.0; 4], 1e-3).unwrap();
            assert!((st.orientation.coords.norm() - 1.0).abs() < 1e-9);
        }
    }
}
