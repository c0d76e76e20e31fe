//! Trot phase clock, quartic swing curves, and Raibert foot placement.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::LegId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaitError {
    #[error("invalid gait schedule: {0}")]
    InvalidSchedule(String),
    #[error("curve parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("swing apex height must be positive, got {0}")]
    NonPositiveApex(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegMode {
    Stance,
    Swing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegPhase {
    /// Gait-cycle phase in [0, 1).
    pub s: f64,
    pub mode: LegMode,
    /// Progress through the current stance or swing window, in [0, 1).
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitSchedule {
    pub period_s: f64,
    pub duty_factor: f64,
    /// Phase offsets in [`LegId::ALL`] order.
    pub phase_offset: [f64; 4],
}

impl Default for GaitSchedule {
    fn default() -> Self {
        Self::trot(0.5, 0.5)
    }
}

impl GaitSchedule {
    /// Diagonal-pair trot: FL/BR at phase 0, FR/BL half a cycle later.
    pub fn trot(period_s: f64, duty_factor: f64) -> Self {
        let mut phase_offset = [0.0; 4];
        for leg in LegId::ALL {
            phase_offset[leg.index()] = match leg {
                LegId::FL | LegId::BR => 0.0,
                LegId::FR | LegId::BL => 0.5,
            };
        }
        Self {
            period_s,
            duty_factor,
            phase_offset,
        }
    }

    pub fn validate(&self) -> Result<(), GaitError> {
        if !(self.period_s > 0.0 && self.period_s.is_finite()) {
            return Err(GaitError::InvalidSchedule(format!("period_s = {}", self.period_s)));
        }
        if !(self.duty_factor > 0.0 && self.duty_factor < 1.0) {
            return Err(GaitError::InvalidSchedule(format!(
                "duty_factor = {} not in (0, 1)",
                self.duty_factor
            )));
        }
        for (i, off) in self.phase_offset.iter().enumerate() {
            if !(0.0..1.0).contains(off) {
                return Err(GaitError::InvalidSchedule(format!("phase_offset[{i}] = {off} not in [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn stance_duration(&self) -> f64 {
        self.duty_factor * self.period_s
    }

    pub fn swing_duration(&self) -> f64 {
        (1.0 - self.duty_factor) * self.period_s
    }

    pub fn phase(&self, t: f64, leg: LegId) -> LegPhase {
        let s = (t / self.period_s + self.phase_offset[leg.index()]).rem_euclid(1.0);
        // rem_euclid can round up to exactly 1.0 for tiny negative arguments.
        let s = if s >= 1.0 { 0.0 } else { s };
        if s < self.duty_factor {
            LegPhase {
                s,
                mode: LegMode::Stance,
                progress: s / self.duty_factor,
            }
        } else {
            LegPhase {
                s,
                mode: LegMode::Swing,
                progress: ((s - self.duty_factor) / (1.0 - self.duty_factor)).min(1.0 - f64::EPSILON),
            }
        }
    }
}

/// Degree-4 Bezier curve with repeated end control points, so the derivative
/// vanishes at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingCurve {
    points: [Vector3<f64>; 5],
}

const BINOMIAL4: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];

impl SwingCurve {
    pub fn control_points(&self) -> &[Vector3<f64>; 5] {
        &self.points
    }

    pub fn start(&self) -> Vector3<f64> {
        self.points[0]
    }

    pub fn end(&self) -> Vector3<f64> {
        self.points[4]
    }
}

pub fn make_swing_curve(
    start: Vector3<f64>,
    end: Vector3<f64>,
    apex_height_m: f64,
) -> Result<SwingCurve, GaitError> {
    if !(apex_height_m > 0.0 && apex_height_m.is_finite()) {
        return Err(GaitError::NonPositiveApex(apex_height_m));
    }
    let apex = (start + end) * 0.5 + Vector3::new(0.0, 0.0, apex_height_m);
    Ok(SwingCurve {
        points: [start, start, apex, end, end],
    })
}

/// Position and d/ds at `s`, by Bernstein polynomials.
pub fn bezier_eval(curve: &SwingCurve, s: f64) -> Result<(Vector3<f64>, Vector3<f64>), GaitError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(GaitError::ParameterOutOfRange(s));
    }
    let u = 1.0 - s;
    let p = &curve.points;
    let mut pos = Vector3::zeros();
    for (i, (c, pt)) in BINOMIAL4.iter().zip(p).enumerate() {
        pos += pt * (c * s.powi(i as i32) * u.powi(4 - i as i32));
    }
    // Derivative: 4 * sum over the cubic basis of control-point differences.
    let binom3 = [1.0, 3.0, 3.0, 1.0];
    let mut vel = Vector3::zeros();
    for i in 0..4 {
        let diff = p[i + 1] - p[i];
        vel += diff * (4.0 * binom3[i] * s.powi(i as i32) * u.powi(3 - i as i32));
    }
    Ok((pos, vel))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaibertParams {
    /// Velocity-error gain, seconds.
    pub k_v: f64,
    /// Maximum horizontal distance of the target from the hip projection.
    pub reach_radius_m: f64,
}

impl RaibertParams {
    /// Horizontal clamp radius: the circle where a sphere of radius
    /// 0.8 x (femur + tibia) around the hip meets a plane `height_m` below it.
    pub fn reach_radius_for(leg_length_m: f64, height_m: f64) -> f64 {
        let r = 0.8 * leg_length_m;
        (r * r - height_m * height_m).max(0.0).sqrt()
    }
}

/// Touchdown point `hip + v T_st / 2 + k_v (v - v_des)`, clamped to the reach radius.
pub fn raibert_foot_target(
    v_body: Vector2<f64>,
    v_des: Vector2<f64>,
    t_stance_s: f64,
    params: &RaibertParams,
    hip_ground_projection: Vector2<f64>,
) -> Vector2<f64> {
    let offset = v_body * (t_stance_s * 0.5) + (v_body - v_des) * params.k_v;
    hip_ground_projection + clamp_radius(offset, params.reach_radius_m)
}

pub fn clamp_radius(v: Vector2<f64>, radius: f64) -> Vector2<f64> {
    let n = v.norm();
    if n > radius && n > 0.0 {
        v * (radius / n)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k_v: f64) -> RaibertParams {
        RaibertParams {
            k_v,
            reach_radius_m: 1.0,
        }
    }

    #[test]
    fn phase_examples() {
        let g = GaitSchedule::default();
        let p = g.phase(0.0, LegId::FL);
        assert_eq!((p.mode, p.progress), (LegMode::Stance, 0.0));
        let p = g.phase(0.75 * g.period_s, LegId::FL);
        assert_eq!(p.mode, LegMode::Swing);
        assert!((p.progress - 0.5).abs() < 1e-12);
        for k in 0..200 {
            let t = k as f64 * 0.0137;
            let a = g.phase(t, LegId::FL);
            let b = g.phase(t, LegId::BR);
            assert_eq!((a.mode, a.progress), (b.mode, b.progress));
            let c = g.phase(t, LegId::FR);
            let d = g.phase(t, LegId::BL);
            assert_eq!((c.mode, c.progress), (d.mode, d.progress));
            assert_ne!(a.mode, c.mode);
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(GaitSchedule::trot(0.5, 1.0).validate().is_err());
        assert!(GaitSchedule::trot(0.0, 0.5).validate().is_err());
        assert!(GaitSchedule::default().validate().is_ok());
        assert_eq!(GaitSchedule::default().stance_duration(), 0.25);
    }

    #[test]
    fn swing_curve_midpoint() {
        let c = make_swing_curve(Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0), 0.08).unwrap();
        let (p, _) = bezier_eval(&c, 0.5).unwrap();
        assert!((p.z - 0.030).abs() < 1e-15);
        assert!((p.x - 0.05).abs() < 1e-15);
    }

    #[test]
    fn swing_curve_endpoints() {
        let a = Vector3::new(0.03, -0.02, -0.3);
        let b = Vector3::new(0.11, 0.01, -0.31);
        let c = make_swing_curve(a, b, 0.06).unwrap();
        assert_eq!(bezier_eval(&c, 0.0).unwrap(), (a, Vector3::zeros()));
        assert_eq!(bezier_eval(&c, 1.0).unwrap(), (b, Vector3::zeros()));
        assert!(bezier_eval(&c, 1.5).is_err());
        assert!(bezier_eval(&c, -0.1).is_err());
    }

    #[test]
    fn degenerate_swing_returns_to_start() {
        let a = Vector3::new(0.1, 0.2, -0.3);
        let c = make_swing_curve(a, a, 0.05).unwrap();
        assert_eq!(bezier_eval(&c, 1.0).unwrap().0, a);
        let (mid, v) = bezier_eval(&c, 0.5).unwrap();
        assert!(mid.z > a.z);
        assert!(v.norm() < 1e-15);
        assert!(make_swing_curve(a, a, 0.0).is_err());
    }

    #[test]
    fn raibert_examples() {
        let v = Vector2::new(0.4, 0.0);
        let t = raibert_foot_target(v, v, 0.25, &params(0.03), Vector2::zeros());
        assert!((t - Vector2::new(0.05, 0.0)).norm() < 1e-15);

        let hip = Vector2::new(0.17, 0.1);
        let t = raibert_foot_target(Vector2::zeros(), Vector2::zeros(), 0.25, &params(0.03), hip);
        assert_eq!(t, hip);

        let t = raibert_foot_target(Vector2::new(0.6, 0.0), v, 0.25, &params(0.05), Vector2::zeros());
        assert!((t - Vector2::new(0.085, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn raibert_clamps() {
        let p = RaibertParams {
            k_v: 0.03,
            reach_radius_m: 0.05,
        };
        let t = raibert_foot_target(Vector2::new(2.0, 0.0), Vector2::zeros(), 0.25, &p, Vector2::zeros());
        assert!((t.norm() - 0.05).abs() < 1e-15);
        assert!((clamp_radius(t, 0.05) - t).norm() < 1e-15);
        assert!((RaibertParams::reach_radius_for(0.42, 0.32) - (0.336f64.powi(2) - 0.1024).sqrt()).abs() < 1e-15);
    }
}
