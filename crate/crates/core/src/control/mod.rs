//! Trot, roll-assist, and hover controllers.

pub mod hover;
pub mod mixer;
pub mod roll_assist;
pub mod trot;

use nalgebra::Vector3;

use crate::kinematics::{self, JointAngles, KinematicsError, LegGeometry, LegId};
use crate::sim::{com_for_joints, RobotModel};

pub use hover::{HoverController, HoverControllerConfig, HoverOutput};
pub use mixer::{Mixer, MixerError, MixerOutput};
pub use roll_assist::{roll_assist, RollAssistConfig};
pub use trot::{TrotController, TrotControllerConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum ControlEventKind {
    /// A foot target was outside the leg workspace and was pulled back.
    IkClamp { leg: LegId, detail: String },
    MixerSaturation,
    Fall { height_m: f64 },
    /// A controller refused to act because its precondition did not hold.
    ModeGuard { detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlEvent {
    pub time_s: f64,
    pub kind: ControlEventKind,
}

impl ControlEventKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControlEventKind::IkClamp { .. } => "ik_clamp",
            ControlEventKind::MixerSaturation => "mixer_saturation",
            ControlEventKind::Fall { .. } => "fall",
            ControlEventKind::ModeGuard { .. } => "mode_guard",
        }
    }

    pub fn detail(&self) -> String {
        match self {
            ControlEventKind::IkClamp { leg, detail } => format!("{}: {detail}", leg.name()),
            ControlEventKind::MixerSaturation => String::new(),
            ControlEventKind::Fall { height_m } => format!("height_m={height_m}"),
            ControlEventKind::ModeGuard { detail } => detail.clone(),
        }
    }
}

/// Flags a fall once body height stays under a fraction of the setpoint for
/// longer than the hold time.
#[derive(Debug, Clone, PartialEq)]
pub struct FallDetector {
    pub fraction: f64,
    pub hold_s: f64,
    below_since: Option<f64>,
    fallen: bool,
}

impl Default for FallDetector {
    fn default() -> Self {
        Self::new(0.5, 0.2)
    }
}

impl FallDetector {
    pub fn new(fraction: f64, hold_s: f64) -> Self {
        Self {
            fraction,
            hold_s,
            below_since: None,
            fallen: false,
        }
    }

    /// Returns true on the tick the fall is first detected.
    pub fn update(&mut self, t: f64, height_m: f64, setpoint_m: f64) -> bool {
        if self.fallen {
            return false;
        }
        if height_m < self.fraction * setpoint_m {
            let since = *self.below_since.get_or_insert(t);
            if t - since > self.hold_s {
                self.fallen = true;
                return true;
            }
        } else {
            self.below_since = None;
        }
        false
    }

    pub fn fallen(&self) -> bool {
        self.fallen
    }

    pub fn reset(&mut self) {
        self.below_since = None;
        self.fallen = false;
    }
}

/// IK that never fails: targets outside the reachable shell are pulled onto
/// it and the result is clamped to joint limits. The error, if any, is
/// returned alongside.
pub fn clamped_ik(geom: &LegGeometry, p_hip: &Vector3<f64>) -> (JointAngles, Option<KinematicsError>) {
    match kinematics::inverse_kinematics(geom, p_hip) {
        Ok(q) => (q, None),
        Err(e) => {
            let d = p_hip.norm();
            let (lo, hi) = (geom.min_reach() * 1.001 + 1e-6, geom.max_reach() * 0.999);
            let mut p = if d > hi {
                p_hip * (hi / d)
            } else if d < lo {
                if d > 0.0 {
                    p_hip * (lo / d)
                } else {
                    Vector3::new(0.0, 0.0, -lo)
                }
            } else {
                *p_hip
            };
            if p.y.hypot(p.z) < geom.singularity_eps_m * 2.0 {
                p.z = -geom.singularity_eps_m * 2.0;
            }
            let q = kinematics::inverse_kinematics_unchecked(geom, &p)
                .map(|q| geom.clamp_to_limits(&q))
                .unwrap_or_else(|_| geom.clamp_to_limits(&JointAngles::new(0.0, 0.0, 0.5)));
            (q, Some(e))
        }
    }
}

/// Body-frame standing foot positions at height `height_m` whose centroid sits
/// under the CoM.
pub fn standing_feet(model: &RobotModel, height_m: f64) -> Result<[Vector3<f64>; 4], KinematicsError> {
    let hips = LegId::ALL.map(|id| model.leg(id).hip_offset());
    let mut shift = Vector3::zeros();
    let mut feet = hips.map(|h| Vector3::new(h.x, h.y, -height_m));
    for _ in 0..20 {
        feet = hips.map(|h| Vector3::new(h.x + shift.x, h.y + shift.y, -height_m));
        let joints = feet_to_joints(model, &feet)?;
        let com = com_for_joints(model, &joints);
        let centroid = feet.iter().sum::<Vector3<f64>>() / 4.0;
        let err = Vector3::new(com.x - centroid.x, com.y - centroid.y, 0.0);
        if err.norm() < 1e-12 {
            break;
        }
        shift += err;
    }
    Ok(feet)
}

pub fn feet_to_joints(model: &RobotModel, feet: &[Vector3<f64>; 4]) -> Result<[JointAngles; 4], KinematicsError> {
    let mut out = [JointAngles::default(); 4];
    for id in LegId::ALL {
        let g = model.leg(id);
        out[id.index()] = kinematics::inverse_kinematics(g, &(feet[id.index()] - g.hip_offset()))?;
    }
    Ok(out)
}

pub fn standing_joints(model: &RobotModel, height_m: f64) -> Result<[JointAngles; 4], KinematicsError> {
    feet_to_joints(model, &standing_feet(model, height_m)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standing_centroid_under_com() {
        let m = RobotModel::default();
        let feet = standing_feet(&m, 0.32).unwrap();
        let q = feet_to_joints(&m, &feet).unwrap();
        let com = com_for_joints(&m, &q);
        let c = feet.iter().sum::<Vector3<f64>>() / 4.0;
        assert!((c.xy() - com.xy()).norm() < 1e-9);
        assert!(feet.iter().all(|f| (f.z + 0.32).abs() < 1e-15));
    }

    #[test]
    fn fall_detector_holds() {
        let mut f = FallDetector::default();
        assert!(!f.update(0.0, 0.1, 0.32));
        assert!(!f.update(0.15, 0.1, 0.32));
        assert!(!f.update(0.19, 0.2, 0.32));
        assert!(!f.update(0.3, 0.1, 0.32));
        assert!(!f.update(0.5, 0.1, 0.32));
        assert!(f.update(0.51, 0.1, 0.32));
        assert!(f.fallen());
        assert!(!f.update(0.6, 0.1, 0.32));
    }

    #[test]
    fn clamped_ik_pulls_back() {
        let g = LegGeometry::default();
        let (q, e) = clamped_ik(&g, &Vector3::new(0.0, 0.0, -1.0));
        assert!(e.is_some());
        let p = kinematics::forward_kinematics(&g, &q);
        assert!(p.norm() <= g.max_reach());
        assert!(g.check_limits(&q).is_ok());
        let target = Vector3::new(0.05, 0.01, -0.3);
        let (q, e) = clamped_ik(&g, &target);
        assert!(e.is_none());
        assert!((kinematics::forward_kinematics(&g, &q) - target).norm() < 1e-12);
    }
}
