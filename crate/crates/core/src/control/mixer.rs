use nalgebra::{Matrix4, Vector3, Vector4};

use crate::sim::RotorLayout;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MixerError {
    #[error("rotor layout gives a singular allocation matrix")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixerOutput {
    pub thrusts_n: [f64; 4],
    /// The demanded wrench was scaled back to fit the rotor limits.
    pub saturated: bool,
}

/// Exact allocation from (collective thrust, body torques) to rotor thrusts
/// for a fixed rotor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixer {
    allocation: Matrix4<f64>,
    inverse: Matrix4<f64>,
    max_rotor_thrust_n: f64,
}

impl Mixer {
    pub fn new(layout: &RotorLayout) -> Result<Self, MixerError> {
        let mut a = Matrix4::zeros();
        for i in 0..4 {
            let mut thrusts = [0.0; 4];
            thrusts[i] = 1.0;
            let (f, t) = layout.wrench_from_thrusts(&thrusts);
            a.set_column(i, &Vector4::new(f.z, t.x, t.y, t.z));
        }
        let inverse = a.try_inverse().ok_or(MixerError::Singular)?;
        if !inverse.iter().all(|x| x.is_finite()) {
            return Err(MixerError::Singular);
        }
        Ok(Self {
            allocation: a,
            inverse,
            max_rotor_thrust_n: layout.max_rotor_thrust_n,
        })
    }

    pub fn allocation(&self) -> &Matrix4<f64> {
        &self.allocation
    }

    pub fn max_rotor_thrust_n(&self) -> f64 {
        self.max_rotor_thrust_n
    }

    /// Unconstrained solution of the allocation.
    pub fn solve(&self, total_thrust_n: f64, torque: Vector3<f64>) -> [f64; 4] {
        let t = self.inverse * Vector4::new(total_thrust_n, torque.x, torque.y, torque.z);
        [t[0], t[1], t[2], t[3]]
    }

    /// Allocation with rotor limits. When infeasible, collective thrust is kept
    /// (clamped to the achievable range), yaw torque is scaled back first, then
    /// roll and pitch together.
    pub fn mix(&self, total_thrust_n: f64, torque: Vector3<f64>) -> MixerOutput {
        let hi = self.max_rotor_thrust_n;
        let raw = self.solve(total_thrust_n, torque);
        if raw.iter().all(|t| (0.0..=hi).contains(t)) {
            return MixerOutput {
                thrusts_n: raw,
                saturated: false,
            };
        }
        let mut collective = self.inverse * Vector4::new(total_thrust_n, 0.0, 0.0, 0.0);
        let c_scale = largest_feasible_step(&Vector4::zeros(), &collective, hi);
        collective *= c_scale;
        let roll_pitch = self.inverse * Vector4::new(0.0, torque.x, torque.y, 0.0);
        let yaw = self.inverse * Vector4::new(0.0, 0.0, 0.0, torque.z);
        let with_rp = collective + roll_pitch;
        let out = if in_bounds(&with_rp, hi) {
            let l = largest_feasible_step(&with_rp, &yaw, hi);
            with_rp + yaw * l
        } else {
            let l = largest_feasible_step(&collective, &roll_pitch, hi);
            collective + roll_pitch * l
        };
        MixerOutput {
            thrusts_n: [0, 1, 2, 3].map(|i| out[i].clamp(0.0, hi)),
            saturated: true,
        }
    }
}

fn in_bounds(v: &Vector4<f64>, hi: f64) -> bool {
    v.iter().all(|t| *t >= -1e-12 && *t <= hi + 1e-12)
}

/// Largest `l` in [0, 1] with `base + l * dir` inside [0, hi] per component,
/// assuming `base` itself is inside.
fn largest_feasible_step(base: &Vector4<f64>, dir: &Vector4<f64>, hi: f64) -> f64 {
    let mut l: f64 = 1.0;
    for i in 0..4 {
        let (b, d) = (base[i], dir[i]);
        if d > 0.0 {
            l = l.min((hi - b) / d);
        } else if d < 0.0 {
            l = l.min((0.0 - b) / d);
        }
    }
    l.clamp(0.0, 1.0)
}
