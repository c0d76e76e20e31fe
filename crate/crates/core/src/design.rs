//! Modal-conflict tradeoff math for a legged robot that gains thruster structures.
//!
//! Design steps accumulate mass: two legs on a base (step 1), then two thruster
//! structures (step 2), then two more (step 3). Leg loading and thrust-to-weight
//! ratios are evaluated at each step. A [`MassBudget`] carries per-component
//! masses for the vehicle-level numbers.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::GRAVITY;

/// 1 kgf in newtons.
pub const KGF: f64 = GRAVITY;

/// Rated maximum thrust of the four motor/propeller sets, in kgf.
pub const DEFAULT_MAX_THRUST_KGF: f64 = 13.4;

/// Thrust-to-weight ratio quoted for the hardware.
pub const QUOTED_THRUST_TO_WEIGHT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("design step index {0} is not one of 1, 2, 3")]
    InvalidStep(u8),
    #[error("invalid design parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("cumulative mass at step {step} is zero")]
    ZeroMass { step: u8 },
    #[error("total vehicle mass is zero")]
    ZeroTotalMass,
    #[error("maximum thrust must be positive, got {0} N")]
    NonPositiveThrust(f64),
}

/// Per-component masses in kilograms. Defaults are the hardware's measured
/// component breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassBudget {
    pub body_kg: f64,
    pub hip_kg: f64,
    pub upper_leg_kg: f64,
    pub lower_leg_kg: f64,
    pub ankle_kg: f64,
    pub foot_kg: f64,
    pub bldc_kg: f64,
    /// Mass of one servo. Treated as a per-unit figure.
    pub servo_kg: f64,
    pub battery_kg: f64,
    pub prop_kg: f64,
    pub servo_count_per_leg: u32,
    pub leg_count: u32,
}

impl Default for MassBudget {
    fn default() -> Self {
        Self {
            body_kg: 1.68,
            hip_kg: 0.048,
            upper_leg_kg: 0.46,
            lower_leg_kg: 0.060,
            ankle_kg: 0.055,
            foot_kg: 0.075,
            bldc_kg: 0.197,
            servo_kg: 0.165,
            battery_kg: 0.50,
            prop_kg: 0.021,
            servo_count_per_leg: 3,
            leg_count: 4,
        }
    }
}

impl MassBudget {
    pub fn validate(&self) -> Result<(), DesignError> {
        let fields = [
            ("body_kg", self.body_kg),
            ("hip_kg", self.hip_kg),
            ("upper_leg_kg", self.upper_leg_kg),
            ("lower_leg_kg", self.lower_leg_kg),
            ("ankle_kg", self.ankle_kg),
            ("foot_kg", self.foot_kg),
            ("bldc_kg", self.bldc_kg),
            ("servo_kg", self.servo_kg),
            ("battery_kg", self.battery_kg),
            ("prop_kg", self.prop_kg),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(DesignError::InvalidParameter {
                    name,
                    value,
                    reason: "masses must be finite and nonnegative",
                });
            }
        }
        if self.servo_count_per_leg == 0 {
            return Err(DesignError::InvalidParameter {
                name: "servo_count_per_leg",
                value: 0.0,
                reason: "must be a positive integer",
            });
        }
        if self.leg_count == 0 {
            return Err(DesignError::InvalidParameter {
                name: "leg_count",
                value: 0.0,
                reason: "must be a positive integer",
            });
        }
        Ok(())
    }

    /// Mass of the structural parts of one leg (hip through foot).
    pub fn leg_structure_kg(&self) -> f64 {
        self.hip_kg + self.upper_leg_kg + self.lower_leg_kg + self.ankle_kg + self.foot_kg
    }

    /// Everything carried by one leg: structure, its motor and propeller, and its servos.
    pub fn leg_assembly_kg(&self) -> f64 {
        self.leg_structure_kg()
            + self.bldc_kg
            + self.prop_kg
            + self.servo_count_per_leg as f64 * self.servo_kg
    }

    /// Whole-vehicle mass under the aggregation reported by [`Self::aggregation_formula`].
    pub fn total_mass_kg(&self) -> f64 {
        self.body_kg + self.leg_count as f64 * self.leg_assembly_kg() + self.battery_kg
    }

    pub fn aggregation_formula(&self) -> String {
        format!(
            "total = body + {legs} x (hip + upper_leg + lower_leg + ankle + foot + bldc + prop + {servos} x servo) + battery \
             = {body} + {legs} x ({hip} + {ul} + {ll} + {ankle} + {foot} + {bldc} + {prop} + {servos} x {servo}) + {battery} \
             = {total:.4} kg",
            legs = self.leg_count,
            servos = self.servo_count_per_leg,
            body = self.body_kg,
            hip = self.hip_kg,
            ul = self.upper_leg_kg,
            ll = self.lower_leg_kg,
            ankle = self.ankle_kg,
            foot = self.foot_kg,
            bldc = self.bldc_kg,
            prop = self.prop_kg,
            servo = self.servo_kg,
            battery = self.battery_kg,
            total = self.total_mass_kg(),
        )
    }
}

/// One point in the three-step mass accumulation argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignStep {
    pub step_index: u8,
    /// Base mass `m_b`.
    pub base_mass_kg: f64,
    /// Mass of one leg, `m_L`.
    pub leg_mass_kg: f64,
    /// Mass of one thruster structure, `m_t`.
    pub thruster_unit_mass_kg: f64,
    /// Desired-to-actual leg-load ratio at step 1.
    pub alpha: f64,
    /// Reference thrust-to-weight ratio.
    pub beta: f64,
    pub thrust_total_n: f64,
}

impl DesignStep {
    pub fn new(step_index: u8, base_mass_kg: f64, leg_mass_kg: f64, thruster_unit_mass_kg: f64) -> Self {
        Self {
            step_index,
            base_mass_kg,
            leg_mass_kg,
            thruster_unit_mass_kg,
            alpha: 1.0,
            beta: 1.0,
            thrust_total_n: 0.0,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn at_step(mut self, step_index: u8) -> Self {
        self.step_index = step_index;
        self
    }

    pub fn with_thruster_mass(mut self, m_t: f64) -> Self {
        self.thruster_unit_mass_kg = m_t;
        self
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        if !(1..=3).contains(&self.step_index) {
            return Err(DesignError::InvalidStep(self.step_index));
        }
        let positive = [
            ("base_mass_kg", self.base_mass_kg),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(DesignError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and positive",
                });
            }
        }
        let nonneg = [
            ("leg_mass_kg", self.leg_mass_kg),
            ("thruster_unit_mass_kg", self.thruster_unit_mass_kg),
            ("thrust_total_n", self.thrust_total_n),
        ];
        for (name, value) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(DesignError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and nonnegative",
                });
            }
        }
        Ok(())
    }

    fn mass_at(&self, step: u8) -> f64 {
        let m1 = self.base_mass_kg + 2.0 * self.leg_mass_kg;
        match step {
            1 => m1,
            2 => m1 + 2.0 * self.thruster_unit_mass_kg,
            _ => m1 + 2.0 * self.thruster_unit_mass_kg + 2.0 * self.thruster_unit_mass_kg,
        }
    }
}

/// `m1 = m_b + 2 m_L`, `m2 = m1 + 2 m_t`, `m3 = m2 + 2 m_t`.
pub fn cumulative_mass(step: &DesignStep) -> Result<f64, DesignError> {
    step.validate()?;
    Ok(step.mass_at(step.step_index))
}

/// Ratio of the desired leg load (fixed at step 1) to the actual leg load at this step.
pub fn leg_load_ratio(step: &DesignStep) -> Result<f64, DesignError> {
    step.validate()?;
    let m_t = step.thruster_unit_mass_kg;
    match step.step_index {
        1 => Ok(step.alpha),
        k => {
            let m = step.mass_at(k);
            if m == 0.0 {
                return Err(DesignError::ZeroMass { step: k });
            }
            let added = if k == 2 { 2.0 * m_t } else { 4.0 * m_t };
            Ok((1.0 - added / m) * step.alpha)
        }
    }
}

/// Step-3 thrust-to-weight ratio `(2 - 4 m_t / m3) * beta`, evaluated as written.
pub fn thrust_to_weight_step3(step: &DesignStep) -> Result<f64, DesignError> {
    step.validate()?;
    let m3 = step.mass_at(3);
    if m3 == 0.0 {
        return Err(DesignError::ZeroMass { step: 3 });
    }
    Ok((2.0 - 4.0 * step.thruster_unit_mass_kg / m3) * step.beta)
}

/// The same ratio in the form `2 beta m2 / m3`, which follows from doubling the
/// thrust when `beta = T / (m2 g)`.
pub fn thrust_to_weight_step3_via_m2(step: &DesignStep) -> Result<f64, DesignError> {
    step.validate()?;
    let m3 = step.mass_at(3);
    if m3 == 0.0 {
        return Err(DesignError::ZeroMass { step: 3 });
    }
    Ok(2.0 * step.beta * step.mass_at(2) / m3)
}

/// Leg mass that is reused as flight structure.
pub fn repurposed_mass(budget: &MassBudget) -> f64 {
    budget.leg_count as f64 * budget.leg_structure_kg()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThrustToWeightReport {
    pub ratio: f64,
    pub max_thrust_n: f64,
    pub total_mass_kg: f64,
    pub formula: String,
    /// `ratio - 2.0`: distance from the quoted figure.
    pub residual_vs_quoted: f64,
}

impl ThrustToWeightReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mass aggregation: {}", self.formula);
        let _ = writeln!(
            out,
            "max thrust: {:.3} N ({:.2} kgf)",
            self.max_thrust_n,
            self.max_thrust_n / KGF
        );
        let _ = writeln!(out, "thrust-to-weight: {:.4}", self.ratio);
        let _ = writeln!(
            out,
            "residual vs quoted ~{:.1}: {:+.4}{}",
            QUOTED_THRUST_TO_WEIGHT,
            self.residual_vs_quoted,
            if self.residual_vs_quoted.abs() > 0.05 {
                " (discrepancy: the component breakdown does not reproduce the quoted ratio under this aggregation)"
            } else {
                ""
            }
        );
        out
    }
}

pub fn vehicle_thrust_to_weight(
    budget: &MassBudget,
    max_thrust_n: f64,
) -> Result<ThrustToWeightReport, DesignError> {
    budget.validate()?;
    if !(max_thrust_n.is_finite() && max_thrust_n > 0.0) {
        return Err(DesignError::NonPositiveThrust(max_thrust_n));
    }
    let total = budget.total_mass_kg();
    if total <= 0.0 {
        return Err(DesignError::ZeroTotalMass);
    }
    let ratio = max_thrust_n / (total * GRAVITY);
    Ok(ThrustToWeightReport {
        ratio,
        max_thrust_n,
        total_mass_kg: total,
        formula: budget.aggregation_formula(),
        residual_vs_quoted: ratio - QUOTED_THRUST_TO_WEIGHT,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub m_t: f64,
    pub m3: f64,
    pub load_ratio: f64,
    pub beta_prime: f64,
}

/// Evaluates step 3 for every thruster mass in `m_t_values`, in input order.
/// An empty input yields an empty table.
pub fn tradeoff_sweep(template: &DesignStep, m_t_values: &[f64]) -> Result<Vec<SweepRow>, DesignError> {
    m_t_values
        .iter()
        .map(|&m_t| {
            let step = template.at_step(3).with_thruster_mass(m_t);
            Ok(SweepRow {
                m_t,
                m3: cumulative_mass(&step)?,
                load_ratio: leg_load_ratio(&step)?,
                beta_prime: thrust_to_weight_step3(&step)?,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "m_t,m3,load_ratio,beta_prime";

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.m_t, r.m3, r.load_ratio, r.beta_prime);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(step: u8) -> DesignStep {
        DesignStep::new(step, 1.0, 0.5, 0.2)
    }

    #[test]
    fn cumulative_mass_steps() {
        assert!((cumulative_mass(&sample(1)).unwrap() - 2.0).abs() < 1e-15);
        assert!((cumulative_mass(&sample(2)).unwrap() - 2.4).abs() < 1e-15);
        assert!((cumulative_mass(&sample(3)).unwrap() - 2.8).abs() < 1e-15);
        assert_eq!(cumulative_mass(&sample(4)), Err(DesignError::InvalidStep(4)));
        assert_eq!(cumulative_mass(&sample(0)), Err(DesignError::InvalidStep(0)));
    }

    #[test]
    fn load_ratio_examples() {
        let zero_mt = DesignStep::new(3, 1.3, 0.7, 0.0);
        assert_eq!(leg_load_ratio(&zero_mt).unwrap(), 1.0);
        let r2 = leg_load_ratio(&sample(2)).unwrap();
        assert!((r2 - (1.0 - 0.4 / 2.4)).abs() < 1e-15);
        let r3 = leg_load_ratio(&sample(3)).unwrap();
        assert!((r3 - (1.0 - 0.8 / 2.8)).abs() < 1e-15);
        assert!(r3 < r2 && r2 < 1.0);
    }

    #[test]
    fn beta_prime_examples() {
        let massless = DesignStep::new(3, 1.0, 0.5, 0.0);
        assert_eq!(thrust_to_weight_step3(&massless).unwrap(), 2.0);
        let bp = thrust_to_weight_step3(&sample(3)).unwrap();
        assert!((bp - (2.0 - 0.8 / 2.8)).abs() < 1e-15);

        let s = DesignStep::new(3, 1.0, 0.5, 0.35).with_beta(0.8);
        // m2 = 2.7, m3 = 3.4
        let oracle = 2.0 * 0.8 * 2.7 / 3.4;
        assert!((thrust_to_weight_step3(&s).unwrap() - oracle).abs() < 1e-12);
        assert!((thrust_to_weight_step3_via_m2(&s).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn repurposed_mass_examples() {
        let b = MassBudget::default();
        assert!((repurposed_mass(&b) - 2.792).abs() < 1e-12);
        let zero = MassBudget {
            hip_kg: 0.0,
            upper_leg_kg: 0.0,
            lower_leg_kg: 0.0,
            ankle_kg: 0.0,
            foot_kg: 0.0,
            ..MassBudget::default()
        };
        assert_eq!(repurposed_mass(&zero), 0.0);
        let tenth = MassBudget {
            hip_kg: 0.1,
            upper_leg_kg: 0.1,
            lower_leg_kg: 0.1,
            ankle_kg: 0.1,
            foot_kg: 0.1,
            ..MassBudget::default()
        };
        assert!((repurposed_mass(&tenth) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn thrust_to_weight_examples() {
        let heavy = MassBudget {
            body_kg: 6.7,
            hip_kg: 0.0,
            upper_leg_kg: 0.0,
            lower_leg_kg: 0.0,
            ankle_kg: 0.0,
            foot_kg: 0.0,
            bldc_kg: 0.0,
            servo_kg: 0.0,
            battery_kg: 0.0,
            prop_kg: 0.0,
            ..MassBudget::default()
        };
        let r = vehicle_thrust_to_weight(&heavy, 13.4 * KGF).unwrap();
        assert!((r.ratio - 2.0).abs() < 1e-12);

        let r = vehicle_thrust_to_weight(&MassBudget::default(), 13.4 * KGF).unwrap();
        assert!((r.total_mass_kg - 7.824).abs() < 1e-12);
        assert!((r.ratio - 13.4 / 7.824).abs() < 1e-12);
        assert!(r.formula.contains("battery"));
        assert!(r.render().contains("discrepancy"));

        assert_eq!(
            vehicle_thrust_to_weight(&MassBudget::default(), 0.0),
            Err(DesignError::NonPositiveThrust(0.0))
        );
        let empty = MassBudget {
            body_kg: 0.0,
            battery_kg: 0.0,
            hip_kg: 0.0,
            upper_leg_kg: 0.0,
            lower_leg_kg: 0.0,
            ankle_kg: 0.0,
            foot_kg: 0.0,
            bldc_kg: 0.0,
            servo_kg: 0.0,
            prop_kg: 0.0,
            ..MassBudget::default()
        };
        assert_eq!(vehicle_thrust_to_weight(&empty, 10.0), Err(DesignError::ZeroTotalMass));
    }

    #[test]
    fn negative_mass_rejected() {
        let b = MassBudget {
            foot_kg: -0.1,
            ..MassBudget::default()
        };
        assert!(matches!(b.validate(), Err(DesignError::InvalidParameter { name: "foot_kg", .. })));
    }

    #[test]
    fn sweep_rows() {
        let t = DesignStep::new(1, 1.0, 0.5, 0.0);
        assert!(tradeoff_sweep(&t, &[]).unwrap().is_empty());
        let rows = tradeoff_sweep(&t, &[0.0]).unwrap();
        assert_eq!(rows[0].load_ratio, 1.0);
        assert_eq!(rows[0].beta_prime, 2.0);
        let rows = tradeoff_sweep(&t, &[0.2, 0.0]).unwrap();
        assert_eq!(rows[0].load_ratio, leg_load_ratio(&sample(3)).unwrap());
        assert_eq!(rows[0].beta_prime, thrust_to_weight_step3(&sample(3)).unwrap());
        assert_eq!(rows[1].m_t, 0.0);
        let csv = sweep_to_csv(&rows);
        assert!(csv.starts_with("m_t,m3,load_ratio,beta_prime\n0.2,2.8"));
    }
}
