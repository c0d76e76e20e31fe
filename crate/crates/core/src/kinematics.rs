//! Closed-form kinematics of the 3-DoF leg.
//!
//! Joint chain, expressed in the hip frame (axes parallel to the body frame):
//! hip frontal rotation about x, hip sagittal rotation about y, then knee
//! flexion about the knee's y axis. The lower leg is driven through a parallel
//! four-bar, so the shank angle is [`fourbar_knee_map`] of the knee servo angle.
//! At zero the leg hangs straight down with the knee extended. Positive knee
//! flexion folds the shank backwards, which puts the knee forward of the
//! hip-foot line; that is the only IK branch returned.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 for left (body +y), -1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// Legs in cyclic order around the body. Rotor spin directions alternate along
/// this order, so diagonal legs (indices 0/2 and 1/3) share a spin direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LegId {
    FL,
    FR,
    BR,
    BL,
}

impl LegId {
    pub const ALL: [LegId; 4] = [LegId::FL, LegId::FR, LegId::BR, LegId::BL];

    pub fn index(self) -> usize {
        match self {
            LegId::FL => 0,
            LegId::FR => 1,
            LegId::BR => 2,
            LegId::BL => 3,
        }
    }

    pub fn side(self) -> Side {
        match self {
            LegId::FL | LegId::BL => Side::Left,
            LegId::FR | LegId::BR => Side::Right,
        }
    }

    pub fn is_front(self) -> bool {
        matches!(self, LegId::FL | LegId::FR)
    }

    pub fn diagonal_partner(self) -> LegId {
        match self {
            LegId::FL => LegId::BR,
            LegId::BR => LegId::FL,
            LegId::FR => LegId::BL,
            LegId::BL => LegId::FR,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LegId::FL => "fl",
            LegId::FR => "fr",
            LegId::BR => "br",
            LegId::BL => "bl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointRange {
    pub min: f64,
    pub max: f64,
}

impl JointRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.min && q <= self.max
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub frontal: JointRange,
    pub sagittal: JointRange,
    pub knee: JointRange,
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            frontal: JointRange::new(-1.75, 1.75),
            sagittal: JointRange::new(-2.0, 2.0),
            knee: JointRange::new(0.0, 3.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointAngles {
    pub q_frontal: f64,
    pub q_sagittal: f64,
    pub q_knee: f64,
}

impl JointAngles {
    pub const fn new(q_frontal: f64, q_sagittal: f64, q_knee: f64) -> Self {
        Self {
            q_frontal,
            q_sagittal,
            q_knee,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.q_frontal, self.q_sagittal, self.q_knee]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|q| q.is_finite())
    }

    pub fn max_abs_diff(&self, other: &JointAngles) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("target at distance {distance:.6} m is outside the leg workspace; nearest reachable distance {nearest:.6} m")]
    OutOfWorkspace { distance: f64, nearest: f64 },
    #[error("target lies on the hip frontal axis (distance {radial:.3e} m from it)")]
    Singular { radial: f64 },
    #[error("joint `{joint}` value {value:.6} rad outside [{min:.6}, {max:.6}]")]
    JointLimit {
        joint: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid leg geometry: {0}")]
    InvalidGeometry(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LegGeometry {
    /// Hip-to-knee length.
    pub femur_m: f64,
    /// Knee-to-foot length.
    pub tibia_m: f64,
    /// Body frame to hip frontal axis.
    pub hip_offset_m: [f64; 3],
    pub side: Side,
    pub joint_limits: JointLimits,
    /// Propeller hub relative to the knee, in the femur frame.
    pub knee_to_prop_offset_m: [f64; 3],
    /// Knee angle held while the leg is splayed for flight.
    pub folded_knee_rad: f64,
    /// Distance from the frontal axis below which IK reports a singularity.
    pub singularity_eps_m: f64,
}

impl Default for LegGeometry {
    fn default() -> Self {
        Self {
            femur_m: 0.20,
            tibia_m: 0.22,
            hip_offset_m: [0.17, 0.10, 0.0],
            side: Side::Left,
            joint_limits: JointLimits::default(),
            knee_to_prop_offset_m: [0.0, 0.0, 0.0],
            folded_knee_rad: 2.9,
            singularity_eps_m: 1e-4,
        }
    }
}

impl LegGeometry {
    /// Geometry for `leg`, mirroring the front-left template across the body axes.
    pub fn for_leg(template: &LegGeometry, leg: LegId) -> LegGeometry {
        let [hx, hy, hz] = template.hip_offset_m;
        let (hx, hy) = (hx.abs(), hy.abs());
        let x = if leg.is_front() { hx } else { -hx };
        let side = leg.side();
        let y = side.sign() * hy;
        let mut g = template.clone();
        g.side = side;
        g.hip_offset_m = [x, y, hz];
        let [px, py, pz] = template.knee_to_prop_offset_m;
        let py = match (template.side, side) {
            (a, b) if a == b => py,
            _ => -py,
        };
        g.knee_to_prop_offset_m = [px, py, pz];
        if template.side != side {
            let f = template.joint_limits.frontal;
            g.joint_limits.frontal = JointRange::new(-f.max, -f.min);
        }
        g
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.femur_m > 0.0 && self.femur_m.is_finite()) {
            return Err(KinematicsError::InvalidGeometry(format!("femur_m = {}", self.femur_m)));
        }
        if !(self.tibia_m > 0.0 && self.tibia_m.is_finite()) {
            return Err(KinematicsError::InvalidGeometry(format!("tibia_m = {}", self.tibia_m)));
        }
        let l = &self.joint_limits;
        for (name, r) in [("frontal", l.frontal), ("sagittal", l.sagittal), ("knee", l.knee)] {
            if !(r.min < r.max) {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "{name} limits not ordered: [{}, {}]",
                    r.min, r.max
                )));
            }
        }
        if !(self.singularity_eps_m > 0.0) {
            return Err(KinematicsError::InvalidGeometry("singularity_eps_m must be positive".into()));
        }
        Ok(())
    }

    pub fn hip_offset(&self) -> Vector3<f64> {
        Vector3::from(self.hip_offset_m)
    }

    pub fn max_reach(&self) -> f64 {
        self.femur_m + self.tibia_m
    }

    pub fn min_reach(&self) -> f64 {
        (self.femur_m - self.tibia_m).abs()
    }

    pub fn check_limits(&self, q: &JointAngles) -> Result<(), KinematicsError> {
        let l = &self.joint_limits;
        for (joint, value, r) in [
            ("frontal", q.q_frontal, l.frontal),
            ("sagittal", q.q_sagittal, l.sagittal),
            ("knee", q.q_knee, l.knee),
        ] {
            if !r.contains(value) {
                return Err(KinematicsError::JointLimit {
                    joint,
                    value,
                    min: r.min,
                    max: r.max,
                });
            }
        }
        Ok(())
    }

    pub fn clamp_to_limits(&self, q: &JointAngles) -> JointAngles {
        let l = &self.joint_limits;
        JointAngles::new(
            l.frontal.clamp(q.q_frontal),
            l.sagittal.clamp(q.q_sagittal),
            l.knee.clamp(q.q_knee),
        )
    }
}

/// Shank rotation produced by a knee servo angle. The lower leg is an ideal
/// parallel four-bar, so this is the identity.
pub fn fourbar_knee_map(q_knee: f64) -> f64 {
    q_knee
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_x_deriv(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

/// Foot and knee in the leg plane (before the frontal rotation).
fn planar(geom: &LegGeometry, q_sagittal: f64, q_knee: f64) -> (Vector3<f64>, Vector3<f64>) {
    let shank = q_sagittal + fourbar_knee_map(q_knee);
    let (sb, cb) = q_sagittal.sin_cos();
    let (ss, cs) = shank.sin_cos();
    let knee = Vector3::new(-geom.femur_m * sb, 0.0, -geom.femur_m * cb);
    let foot = knee + Vector3::new(-geom.tibia_m * ss, 0.0, -geom.tibia_m * cs);
    (knee, foot)
}

/// Foot position in the hip frame.
pub fn forward_kinematics(geom: &LegGeometry, q: &JointAngles) -> Vector3<f64> {
    let (_, foot) = planar(geom, q.q_sagittal, q.q_knee);
    rot_x(q.q_frontal) * foot
}

/// Knee position in the hip frame.
pub fn knee_position(geom: &LegGeometry, q: &JointAngles) -> Vector3<f64> {
    let (knee, _) = planar(geom, q.q_sagittal, q.q_knee);
    rot_x(q.q_frontal) * knee
}

/// Point at fraction `f` along the femur (0 = hip, 1 = knee), hip frame.
pub fn femur_point(geom: &LegGeometry, q: &JointAngles, f: f64) -> Vector3<f64> {
    knee_position(geom, q) * f
}

/// Point at fraction `f` along the tibia (0 = knee, 1 = foot), hip frame.
pub fn tibia_point(geom: &LegGeometry, q: &JointAngles, f: f64) -> Vector3<f64> {
    let (knee, foot) = planar(geom, q.q_sagittal, q.q_knee);
    rot_x(q.q_frontal) * (knee + (foot - knee) * f)
}

/// Propeller hub position in the hip frame.
pub fn prop_position(geom: &LegGeometry, q: &JointAngles) -> Vector3<f64> {
    let (knee, _) = planar(geom, q.q_sagittal, q.q_knee);
    let (sb, cb) = q.q_sagittal.sin_cos();
    let rot_y = Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
    rot_x(q.q_frontal) * (knee + rot_y * Vector3::from(geom.knee_to_prop_offset_m))
}

/// Unit thrust axis of the knee-mounted rotor, hip frame. It is the knee axis,
/// pointing outboard, and so turns vertical when the leg is splayed.
pub fn prop_axis(geom: &LegGeometry, q: &JointAngles) -> Vector3<f64> {
    rot_x(q.q_frontal) * Vector3::new(0.0, geom.side.sign(), 0.0)
}

/// Closed-form IK, knee-forward branch.
pub fn inverse_kinematics(geom: &LegGeometry, p: &Vector3<f64>) -> Result<JointAngles, KinematicsError> {
    let q = inverse_kinematics_unchecked(geom, p)?;
    geom.check_limits(&q)?;
    Ok(q)
}

/// IK without the joint-limit check.
pub fn inverse_kinematics_unchecked(
    geom: &LegGeometry,
    p: &Vector3<f64>,
) -> Result<JointAngles, KinematicsError> {
    let (l1, l2) = (geom.femur_m, geom.tibia_m);
    let d = p.norm();
    if d > l1 + l2 {
        return Err(KinematicsError::OutOfWorkspace {
            distance: d,
            nearest: l1 + l2,
        });
    }
    if d < (l1 - l2).abs() {
        return Err(KinematicsError::OutOfWorkspace {
            distance: d,
            nearest: (l1 - l2).abs(),
        });
    }
    let radial = p.y.hypot(p.z);
    if radial < geom.singularity_eps_m {
        return Err(KinematicsError::Singular { radial });
    }
    // Leg plane: rotate p back about x so it lies in the x-z plane, below the hip.
    let q_frontal = p.y.atan2(-p.z);
    let wx = p.x;
    let wz = -radial;

    let cos_knee = ((wx * wx + wz * wz - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let shank = cos_knee.acos();
    let q_sagittal = (-wx).atan2(-wz) - (l2 * shank.sin()).atan2(l1 + l2 * shank.cos());
    // fourbar_knee_map is the identity, so the shank angle is the servo angle.
    let q_knee = shank;
    Ok(JointAngles::new(q_frontal, q_sagittal, q_knee))
}

/// d(foot)/d(q) in the hip frame, columns ordered frontal, sagittal, knee.
pub fn jacobian(geom: &LegGeometry, q: &JointAngles) -> Matrix3<f64> {
    let (_, foot) = planar(geom, q.q_sagittal, q.q_knee);
    let shank = q.q_sagittal + fourbar_knee_map(q.q_knee);
    let (ss, cs) = shank.sin_cos();
    let r = rot_x(q.q_frontal);
    let d_frontal = rot_x_deriv(q.q_frontal) * foot;
    let d_sagittal = r * Vector3::new(foot.z, 0.0, -foot.x);
    let d_knee = r * Vector3::new(-geom.tibia_m * cs, 0.0, geom.tibia_m * ss);
    Matrix3::from_columns(&[d_frontal, d_sagittal, d_knee])
}

/// Aerial pose: frontal servo at +/-90 degrees so the whole leg lies in the
/// hip's horizontal plane, sagittal at zero, knee folded.
pub fn splay_configuration(geom: &LegGeometry) -> Result<JointAngles, KinematicsError> {
    let q = JointAngles::new(geom.side.sign() * FRAC_PI_2, 0.0, geom.folded_knee_rad);
    geom.check_limits(&q)?;
    Ok(q)
}
