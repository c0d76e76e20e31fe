//! `design` subcommands: tradeoff sweeps and the mass-budget report.

use std::fmt::Write as _;
use std::path::Path;

use husky_core::design::{
    repurposed_mass, thrust_to_weight_step3, thrust_to_weight_step3_via_m2, tradeoff_sweep, vehicle_thrust_to_weight,
    DesignStep, MassBudget, SweepRow, DEFAULT_MAX_THRUST_KGF, KGF,
};
use serde::Deserialize;

use crate::HarnessError;

/// Design-step template for the sweep. Absent masses come from the budget.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepTemplate {
    /// Default: body + battery.
    pub base_mass_kg: Option<f64>,
    /// Default: one leg's structure plus its servos.
    pub leg_mass_kg: Option<f64>,
    /// Default: one motor plus propeller.
    pub thruster_unit_mass_kg: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetFile {
    pub budget: MassBudget,
    pub max_thrust_kgf: Option<f64>,
    pub sweep: SweepTemplate,
}

impl BudgetFile {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config(path, vec![e.to_string()]))?;
        let file: BudgetFile = toml::from_str(&text).map_err(|e| HarnessError::config(path, vec![e.to_string()]))?;
        let mut v = Vec::new();
        if let Err(e) = file.budget.validate() {
            v.push(format!("[budget] {e}"));
        }
        if let Err(e) = file.template().validate() {
            v.push(format!("[sweep] {e}"));
        }
        if file.max_thrust_kgf.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            v.push("max_thrust_kgf must be positive".into());
        }
        if v.is_empty() { Ok(file) } else { Err(HarnessError::config(path, v)) }
    }

    pub fn template(&self) -> DesignStep {
        let b = &self.budget;
        let s = &self.sweep;
        DesignStep::new(
            3,
            s.base_mass_kg.unwrap_or(b.body_kg + b.battery_kg),
            s.leg_mass_kg
                .unwrap_or(b.leg_structure_kg() + b.servo_count_per_leg as f64 * b.servo_kg),
            s.thruster_unit_mass_kg.unwrap_or(b.bldc_kg + b.prop_kg),
        )
        .with_alpha(s.alpha.unwrap_or(1.0))
        .with_beta(s.beta.unwrap_or(1.0))
    }

    pub fn max_thrust_n(&self) -> f64 {
        self.max_thrust_kgf.unwrap_or(DEFAULT_MAX_THRUST_KGF) * KGF
    }
}

pub fn sweep(file: &BudgetFile, m_t: &[f64]) -> Result<Vec<SweepRow>, String> {
    tradeoff_sweep(&file.template(), m_t).map_err(|e| e.to_string())
}

pub fn report(file: &BudgetFile) -> Result<String, String> {
    let b = &file.budget;
    let tw = vehicle_thrust_to_weight(b, file.max_thrust_n()).map_err(|e| e.to_string())?;
    let step = file.template();
    let direct = thrust_to_weight_step3(&step).map_err(|e| e.to_string())?;
    let via_m2 = thrust_to_weight_step3_via_m2(&step).map_err(|e| e.to_string())?;
    let mut out = String::new();
    let _ = writeln!(out, "repurposed leg mass: {:.4} kg", repurposed_mass(b));
    let _ = writeln!(out, "total mass: {:.4} kg", tw.total_mass_kg);
    out.push_str(&tw.render());
    let _ = writeln!(
        out,
        "step 3 with m_b = {}, m_L = {}, m_t = {}, beta = {}:",
        step.base_mass_kg, step.leg_mass_kg, step.thruster_unit_mass_kg, step.beta
    );
    let _ = writeln!(out, "  beta' = (2 - 4 m_t / m3) beta = {direct:.6}");
    let _ = writeln!(out, "  beta' = 2 beta m2 / m3      = {via_m2:.6}");
    Ok(out)
}
