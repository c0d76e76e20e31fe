use nalgebra::{UnitQuaternion, Vector3};

use crate::kinematics::JointAngles;

/// Floating-base state of the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyState {
    pub time_s: f64,
    /// Body-frame origin, world.
    pub position: Vector3<f64>,
    /// World from body.
    pub orientation: UnitQuaternion<f64>,
    /// Velocity of the center of mass, world.
    pub linear_velocity: Vector3<f64>,
    /// Angular velocity, body frame.
    pub angular_velocity: Vector3<f64>,
    pub joints: [JointAngles; 4],
    pub joint_velocities: [JointAngles; 4],
    pub rotor_thrust_n: [f64; 4],
}

impl Default for BodyState {
    fn default() -> Self {
        Self {
            time_s: 0.0,
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            joints: [JointAngles::default(); 4],
            joint_velocities: [JointAngles::default(); 4],
            rotor_thrust_n: [0.0; 4],
        }
    }
}

impl BodyState {
    /// Roll, pitch, yaw (ZYX convention), radians.
    pub fn rpy(&self) -> (f64, f64, f64) {
        self.orientation.euler_angles()
    }

    pub fn yaw(&self) -> f64 {
        self.rpy().2
    }

    /// Velocity of the CoM expressed in the yaw-aligned horizontal frame.
    pub fn heading_velocity(&self) -> Vector3<f64> {
        let yaw = UnitQuaternion::from_euler_angles(0.0, 0.0, self.yaw());
        yaw.inverse() * self.linear_velocity
    }

    pub fn angular_velocity_world(&self) -> Vector3<f64> {
        self.orientation * self.angular_velocity
    }

    pub fn first_non_finite(&self) -> Option<&'static str> {
        let vec_ok = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        if !self.time_s.is_finite() {
            return Some("time");
        }
        if !vec_ok(&self.position) {
            return Some("position");
        }
        if !self.orientation.coords.iter().all(|x| x.is_finite()) {
            return Some("orientation");
        }
        if !vec_ok(&self.linear_velocity) {
            return Some("linear_velocity");
        }
        if !vec_ok(&self.angular_velocity) {
            return Some("angular_velocity");
        }
        if !self.joints.iter().all(JointAngles::is_finite) {
            return Some("joints");
        }
        if !self.joint_velocities.iter().all(JointAngles::is_finite) {
            return Some("joint_velocities");
        }
        if !self.rotor_thrust_n.iter().all(|t| t.is_finite()) {
            return Some("rotor_thrust");
        }
        None
    }
}
