use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::design::{MassBudget, DEFAULT_MAX_THRUST_KGF, KGF};
use crate::kinematics::{self, JointAngles, LegGeometry, LegId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid robot model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Design(#[from] crate::design::DesignError),
    #[error(transparent)]
    Kinematics(#[from] crate::kinematics::KinematicsError),
}

/// Spring-damper ground contact with regularized Coulomb friction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    pub stiffness_n_per_m: f64,
    pub damping_ns_per_m: f64,
    /// Slip speed at which friction reaches ~71% of the Coulomb bound.
    pub slip_reg_mps: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness_n_per_m: 2.0e4,
            damping_ns_per_m: 150.0,
            slip_reg_mps: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoParams {
    /// Natural frequency of the critically damped position loop.
    pub natural_freq_radps: f64,
    pub rate_limit_radps: f64,
    /// Stall torque per joint: frontal, sagittal, knee.
    pub stall_torque_nm: [f64; 3],
    /// Back-driving speed per N m of load beyond stall.
    pub yield_radps_per_nm: f64,
}

impl Default for ServoParams {
    fn default() -> Self {
        Self {
            natural_freq_radps: 60.0,
            rate_limit_radps: 6.0,
            stall_torque_nm: [9.9, 9.9, 10.6],
            yield_radps_per_nm: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThrusterParams {
    /// Combined thrust of all four rotors at full throttle.
    pub max_total_thrust_n: f64,
    /// Reaction torque per newton of thrust.
    pub yaw_drag_m: f64,
    /// Spin direction per rotor in [`LegId::ALL`] order.
    pub spin: [f64; 4],
}

impl Default for ThrusterParams {
    fn default() -> Self {
        Self {
            max_total_thrust_n: DEFAULT_MAX_THRUST_KGF * KGF,
            yaw_drag_m: 0.012,
            spin: [1.0, -1.0, 1.0, -1.0],
        }
    }
}

impl ThrusterParams {
    pub fn max_rotor_thrust_n(&self) -> f64 {
        self.max_total_thrust_n / 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyParams {
    /// Box used for the inertia approximation: length, width, height.
    pub dimensions_m: [f64; 3],
    /// Body-mass (frame and electronics) location in the body frame.
    pub body_com_m: [f64; 3],
    pub battery_m: [f64; 3],
    /// Perch pad center on the underside, body frame.
    pub perch_m: [f64; 3],
    /// Perch pad half extents along body x and y.
    pub perch_half_size_m: [f64; 2],
    /// Explicit inertia about the CoM (row-major). `None` uses the box.
    pub inertia_kgm2: Option<[f64; 9]>,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self {
            dimensions_m: [0.4, 0.3, 0.15],
            body_com_m: [0.01, 0.0, 0.0],
            battery_m: [-0.03, 0.0, -0.04],
            perch_m: [0.0, 0.0, -0.075],
            perch_half_size_m: [0.05, 0.05],
            inertia_kgm2: None,
        }
    }
}

/// Everything a run may override, as loaded from a model file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mass_budget: MassBudget,
    /// Front-left leg; the others are mirrored from it.
    pub leg: LegGeometry,
    pub contact: ContactParams,
    pub servo: ServoParams,
    pub thrusters: ThrusterParams,
    pub body: BodyParams,
    pub friction: Option<f64>,
    pub physics_substep_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub budget: MassBudget,
    pub legs: [LegGeometry; 4],
    pub inertia: Matrix3<f64>,
    pub inertia_inv: Matrix3<f64>,
    pub contact: ContactParams,
    pub servo: ServoParams,
    pub thrusters: ThrusterParams,
    pub body: BodyParams,
    pub friction: f64,
    /// Upper bound on the internal integration step.
    pub physics_substep_s: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self::from_config(&ModelConfig::default()).expect("default model is valid")
    }
}

/// A point mass attached to the robot, body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassPoint {
    pub mass_kg: f64,
    pub position: Vector3<f64>,
}

impl RobotModel {
    pub fn from_config(cfg: &ModelConfig) -> Result<Self, ModelError> {
        cfg.mass_budget.validate()?;
        if cfg.mass_budget.leg_count != 4 {
            return Err(ModelError::Invalid(format!(
                "the simulator models four legs, mass budget has leg_count = {}",
                cfg.mass_budget.leg_count
            )));
        }
        cfg.leg.validate()?;
        let legs = LegId::ALL.map(|id| LegGeometry::for_leg(&cfg.leg, id));
        let m = cfg.mass_budget.total_mass_kg();
        if !(m > 0.0) {
            return Err(ModelError::Invalid("total mass must be positive".into()));
        }
        let inertia = match cfg.body.inertia_kgm2 {
            Some(rows) => Matrix3::from_row_slice(&rows),
            None => {
                let [l, w, h] = cfg.body.dimensions_m;
                Matrix3::from_diagonal(&Vector3::new(
                    m * (w * w + h * h) / 12.0,
                    m * (l * l + h * h) / 12.0,
                    m * (l * l + w * w) / 12.0,
                ))
            }
        };
        if (inertia - inertia.transpose()).abs().max() > 1e-12 {
            return Err(ModelError::Invalid("inertia tensor is not symmetric".into()));
        }
        if inertia.cholesky().is_none() {
            return Err(ModelError::Invalid("inertia tensor is not positive definite".into()));
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| ModelError::Invalid("inertia tensor is singular".into()))?;
        let c = &cfg.contact;
        if !(c.stiffness_n_per_m > 0.0 && c.damping_ns_per_m >= 0.0 && c.slip_reg_mps > 0.0) {
            return Err(ModelError::Invalid(format!("contact parameters out of range: {c:?}")));
        }
        if cfg.body.perch_half_size_m.iter().any(|h| !(*h >= 0.0 && h.is_finite())) {
            return Err(ModelError::Invalid(format!(
                "perch_half_size_m {:?} must be finite and non-negative",
                cfg.body.perch_half_size_m
            )));
        }
        let friction = cfg.friction.unwrap_or(0.7);
        if !(friction >= 0.0) {
            return Err(ModelError::Invalid(format!("friction coefficient {friction} is negative")));
        }
        let s = &cfg.servo;
        if !(s.natural_freq_radps > 0.0 && s.rate_limit_radps > 0.0 && s.stall_torque_nm.iter().all(|t| *t > 0.0)) {
            return Err(ModelError::Invalid(format!("servo parameters out of range: {s:?}")));
        }
        let t = &cfg.thrusters;
        if !(t.max_total_thrust_n > 0.0) {
            return Err(ModelError::Invalid("max_total_thrust_n must be positive".into()));
        }
        if t.spin[0] != t.spin[2] || t.spin[1] != t.spin[3] || t.spin[0] == t.spin[1] {
            return Err(ModelError::Invalid(
                "rotor spins must match across diagonals and alternate around the body".into(),
            ));
        }
        let substep = cfg.physics_substep_s.unwrap_or(1e-4);
        if !(substep > 0.0 && substep <= 5e-3) {
            return Err(ModelError::Invalid(format!("physics_substep_s = {substep} not in (0, 5 ms]")));
        }
        Ok(Self {
            budget: cfg.mass_budget.clone(),
            legs,
            inertia,
            inertia_inv,
            contact: cfg.contact,
            servo: cfg.servo,
            thrusters: cfg.thrusters,
            body: cfg.body,
            friction,
            physics_substep_s: substep,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.budget.total_mass_kg()
    }

    pub fn weight(&self) -> f64 {
        self.total_mass() * crate::GRAVITY
    }

    pub fn leg(&self, id: LegId) -> &LegGeometry {
        &self.legs[id.index()]
    }

    pub fn hover_throttle(&self) -> f64 {
        self.weight() / self.thrusters.max_total_thrust_n
    }

    pub fn perch_point(&self) -> Vector3<f64> {
        Vector3::from(self.body.perch_m)
    }

    pub fn default_terrain(&self) -> super::Terrain {
        super::Terrain {
            height_m: 0.0,
            friction: self.friction,
            perch_point_m: Some(self.perch_point()),
            perch_half_size_m: self.body.perch_half_size_m,
        }
    }

    /// Body-frame point masses: body, battery, and per-leg segments at their
    /// midpoints (servos at the hip, motor and propeller at the rotor hub).
    pub fn mass_points(&self, joints: &[JointAngles; 4]) -> Vec<MassPoint> {
        let b = &self.budget;
        let mut pts = Vec::with_capacity(2 + 4 * 6);
        pts.push(MassPoint {
            mass_kg: b.body_kg,
            position: Vector3::from(self.body.body_com_m),
        });
        pts.push(MassPoint {
            mass_kg: b.battery_kg,
            position: Vector3::from(self.body.battery_m),
        });
        for id in LegId::ALL {
            let g = self.leg(id);
            let q = &joints[id.index()];
            let hip = g.hip_offset();
            let servos = b.servo_count_per_leg as f64 * b.servo_kg;
            pts.push(MassPoint {
                mass_kg: b.hip_kg + servos,
                position: hip,
            });
            pts.push(MassPoint {
                mass_kg: b.upper_leg_kg,
                position: hip + kinematics::femur_point(g, q, 0.5),
            });
            pts.push(MassPoint {
                mass_kg: b.lower_leg_kg,
                position: hip + kinematics::tibia_point(g, q, 0.5),
            });
            pts.push(MassPoint {
                mass_kg: b.ankle_kg,
                position: hip + kinematics::tibia_point(g, q, 0.9),
            });
            pts.push(MassPoint {
                mass_kg: b.foot_kg,
                position: hip + kinematics::forward_kinematics(g, q),
            });
            pts.push(MassPoint {
                mass_kg: b.bldc_kg + b.prop_kg,
                position: hip + kinematics::prop_position(g, q),
            });
        }
        pts
    }

    /// Rotor hub positions in the body frame.
    pub fn rotor_positions(&self, joints: &[JointAngles; 4]) -> [Vector3<f64>; 4] {
        LegId::ALL.map(|id| {
            let g = self.leg(id);
            g.hip_offset() + kinematics::prop_position(g, &joints[id.index()])
        })
    }

    pub fn foot_positions(&self, joints: &[JointAngles; 4]) -> [Vector3<f64>; 4] {
        LegId::ALL.map(|id| {
            let g = self.leg(id);
            g.hip_offset() + kinematics::forward_kinematics(g, &joints[id.index()])
        })
    }
}

/// Center of mass of the robot in the body frame for the given joint angles.
pub fn com_for_joints(model: &RobotModel, joints: &[JointAngles; 4]) -> Vector3<f64> {
    let mut total = 0.0;
    let mut acc = Vector3::zeros();
    for p in model.mass_points(joints) {
        total += p.mass_kg;
        acc += p.position * p.mass_kg;
    }
    acc / total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_properties() {
        let m = RobotModel::default();
        assert!((m.total_mass() - 7.824).abs() < 1e-12);
        assert!((m.thrusters.max_rotor_thrust_n() * 4.0 - 13.4 * KGF).abs() < 1e-12);
        assert!(m.inertia.cholesky().is_some());
        let pts = m.mass_points(&[JointAngles::default(); 4]);
        let sum: f64 = pts.iter().map(|p| p.mass_kg).sum();
        assert!((sum - m.total_mass()).abs() < 1e-12);
        assert_eq!(m.thrusters.spin[0], m.thrusters.spin[2]);
        assert_eq!(m.thrusters.spin[1], m.thrusters.spin[3]);
    }

    #[test]
    fn rejects_bad_inertia_and_spins() {
        let mut cfg = ModelConfig::default();
        cfg.body.inertia_kgm2 = Some([1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(RobotModel::from_config(&cfg).is_err());
        let mut cfg = ModelConfig::default();
        cfg.body.inertia_kgm2 = Some([1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(RobotModel::from_config(&cfg).is_err());
        let mut cfg = ModelConfig::default();
        cfg.thrusters.spin = [1.0, 1.0, -1.0, -1.0];
        assert!(RobotModel::from_config(&cfg).is_err());
    }
}
