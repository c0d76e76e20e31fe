//! Scenario files: model reference, controller settings, and the mode script.

use std::path::{Path, PathBuf};

use husky_core::control::{HoverControllerConfig, RollAssistConfig, TrotControllerConfig};
use husky_core::morph::MorphConfig;
use husky_core::sim::{ModelConfig, RobotModel, MAX_DT};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Desired trot velocity: a forward speed or a (forward, left) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VDes {
    Forward(f64),
    Planar([f64; 2]),
}

impl VDes {
    pub fn as_array(self) -> [f64; 2] {
        match self {
            VDes::Forward(v) => [v, 0.0],
            VDes::Planar(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Trot {
        duration_s: f64,
        v_des_mps: VDes,
    },
    /// Velocity impulse at absolute run time `t_s`.
    Push {
        t_s: f64,
        impulse_mps: [f64; 3],
        /// Body-frame angular velocity change.
        #[serde(default)]
        angular_impulse_radps: [f64; 3],
    },
    MorphToAerial,
    Hover {
        duration_s: f64,
        /// World CoM setpoint. Defaults to 1 m above the takeoff point.
        setpoint_m: Option<[f64; 3]>,
    },
    Land,
    MorphToLegged,
}

impl Step {
    pub fn mode(&self) -> &'static str {
        match self {
            Step::Trot { .. } => "trot",
            Step::Push { .. } => "push",
            Step::MorphToAerial => "morph_to_aerial",
            Step::Hover { .. } => "hover",
            Step::Land => "land",
            Step::MorphToLegged => "morph_to_legged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollAssistSettings {
    pub enabled: bool,
    /// Common throttle the increments ride on. `None` uses the cap.
    pub base_throttle: Option<f64>,
    pub kp_n_per_rad: f64,
    pub kd_ns_per_rad: f64,
    pub cap: f64,
    pub min_roll_arm_m: f64,
}

impl Default for RollAssistSettings {
    fn default() -> Self {
        let c = RollAssistConfig::default();
        Self {
            enabled: false,
            base_throttle: None,
            kp_n_per_rad: c.kp_n_per_rad,
            kd_ns_per_rad: c.kd_ns_per_rad,
            cap: c.cap,
            min_roll_arm_m: c.min_roll_arm_m,
        }
    }
}

impl RollAssistSettings {
    pub fn config(&self) -> RollAssistConfig {
        RollAssistConfig {
            kp_n_per_rad: self.kp_n_per_rad,
            kd_ns_per_rad: self.kd_ns_per_rad,
            cap: self.cap,
            min_roll_arm_m: self.min_roll_arm_m,
        }
    }

    pub fn base(&self) -> f64 {
        self.base_throttle.unwrap_or(self.cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandingSettings {
    pub descent_speed_mps: f64,
    /// The descent setpoint sits this far below the perched CoM height.
    pub setpoint_below_touchdown_m: f64,
}

impl Default for LandingSettings {
    fn default() -> Self {
        Self {
            descent_speed_mps: 0.3,
            setpoint_below_touchdown_m: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FallSettings {
    /// Legged fall: CoM below this fraction of the trot height...
    pub height_fraction: f64,
    /// ...for longer than this.
    pub hold_s: f64,
    /// Roll or pitch beyond this is a fall in any mode.
    pub max_tilt_deg: f64,
}

impl Default for FallSettings {
    fn default() -> Self {
        Self {
            height_fraction: 0.5,
            hold_s: 0.2,
            max_tilt_deg: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Model file, relative to the scenario file. Absent: built-in model.
    pub model: Option<PathBuf>,
    pub dt_s: f64,
    pub log_interval_s: f64,
    /// Recorded for reproducibility; the simulation itself draws no random numbers.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Standing time before the script starts.
    pub settle_s: f64,
    /// Initial standing body height. `None` uses the trot height.
    pub initial_height_m: Option<f64>,
    pub trot: TrotControllerConfig,
    pub hover: HoverControllerConfig,
    pub morph: MorphConfig,
    pub roll_assist: RollAssistSettings,
    pub landing: LandingSettings,
    pub fall: FallSettings,
    pub script: Vec<Step>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            model: None,
            dt_s: 1e-3,
            log_interval_s: 0.01,
            seed: 0,
            output_dir: None,
            settle_s: 0.0,
            initial_height_m: None,
            trot: TrotControllerConfig::default(),
            hover: HoverControllerConfig::default(),
            morph: MorphConfig::default(),
            roll_assist: RollAssistSettings::default(),
            landing: LandingSettings::default(),
            fall: FallSettings::default(),
            script: Vec::new(),
        }
    }
}

/// A parsed, validated scenario with its model resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: RobotModel,
    /// File the scenario came from, if any.
    pub source: Option<PathBuf>,
}

/// Where the robot stands in the script: what the next step may be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stance {
    Legged,
    Aerial,
    Landed,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn log_every(&self) -> usize {
        ((self.log_interval_s / self.dt_s).round() as usize).max(1)
    }

    /// Every violation, in script order.
    pub fn violations(&self, model: &RobotModel) -> Vec<String> {
        let mut v = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            v.push(format!("name `{}` must be non-empty and contain no path separators", self.name));
        }
        if !(self.dt_s > 0.0 && self.dt_s <= MAX_DT) {
            v.push(format!("dt_s = {} outside (0, {MAX_DT}]", self.dt_s));
        }
        if !(self.log_interval_s > 0.0 && self.log_interval_s.is_finite()) {
            v.push(format!("log_interval_s = {} must be positive", self.log_interval_s));
        } else if self.dt_s > 0.0 && self.log_interval_s < self.dt_s {
            v.push(format!("log_interval_s = {} shorter than dt_s", self.log_interval_s));
        }
        if !(self.settle_s >= 0.0 && self.settle_s.is_finite()) {
            v.push(format!("settle_s = {} must be non-negative", self.settle_s));
        }
        if let Some(h) = self.initial_height_m {
            if !(h > 0.0 && h.is_finite()) {
                v.push(format!("initial_height_m = {h} must be positive"));
            }
        }
        let sections: [(&str, Result<(), String>); 4] = [
            ("trot", self.trot.validate(model)),
            ("hover", self.hover.validate()),
            ("morph", self.morph.validate()),
            ("roll_assist", self.roll_assist.config().validate()),
        ];
        for (name, r) in sections {
            if let Err(e) = r {
                v.push(format!("[{name}] {e}"));
            }
        }
        if let Some(b) = self.roll_assist.base_throttle {
            if !(0.0..=1.0).contains(&b) {
                v.push(format!("[roll_assist] base_throttle {b} not in [0, 1]"));
            }
        }
        let l = &self.landing;
        if !(l.descent_speed_mps > 0.0 && l.setpoint_below_touchdown_m >= 0.0) {
            v.push("[landing] descent_speed_mps must be positive and setpoint_below_touchdown_m non-negative".into());
        }
        let f = &self.fall;
        if !(f.height_fraction > 0.0 && f.height_fraction < 1.0 && f.hold_s >= 0.0 && f.max_tilt_deg > 0.0) {
            v.push("[fall] needs 0 < height_fraction < 1, hold_s >= 0, max_tilt_deg > 0".into());
        }

        let mut stance = Stance::Legged;
        for (i, step) in self.script.iter().enumerate() {
            let at = format!("script[{i}] ({})", step.mode());
            let mut positive = |name: &str, x: f64| {
                if !(x > 0.0 && x.is_finite()) {
                    v.push(format!("{at}: {name} = {x} must be positive"));
                }
            };
            match step {
                Step::Trot { duration_s, v_des_mps } => {
                    positive("duration_s", *duration_s);
                    if v_des_mps.as_array().iter().any(|x| !x.is_finite()) {
                        v.push(format!("{at}: v_des_mps must be finite"));
                    }
                }
                Step::Hover { duration_s, setpoint_m } => {
                    positive("duration_s", *duration_s);
                    if setpoint_m.is_some_and(|s| s.iter().any(|x| !x.is_finite())) {
                        v.push(format!("{at}: setpoint_m must be finite"));
                    }
                }
                Step::Push {
                    t_s,
                    impulse_mps,
                    angular_impulse_radps,
                } => {
                    if !(*t_s >= 0.0 && t_s.is_finite()) {
                        v.push(format!("{at}: t_s = {t_s} must be non-negative"));
                    }
                    if impulse_mps.iter().chain(angular_impulse_radps).any(|x| !x.is_finite()) {
                        v.push(format!("{at}: impulses must be finite"));
                    }
                }
                _ => {}
            }
            let needs = match step {
                Step::Trot { .. } | Step::MorphToAerial => Some(Stance::Legged),
                Step::Hover { .. } | Step::Land => Some(Stance::Aerial),
                Step::MorphToLegged => Some(Stance::Landed),
                Step::Push { .. } => None,
            };
            if let Some(n) = needs {
                if n != stance {
                    let what = match n {
                        Stance::Legged => "the robot to be legged",
                        Stance::Aerial => "a preceding morph_to_aerial",
                        Stance::Landed => "a preceding land",
                    };
                    v.push(format!("{at}: needs {what}"));
                }
            }
            stance = match step {
                Step::MorphToAerial => Stance::Aerial,
                Step::Land => Stance::Landed,
                Step::MorphToLegged => Stance::Legged,
                _ => stance,
            };
        }
        v
    }
}

impl Scenario {
    /// Validate `config` against the model it names (resolved relative to `base_dir`).
    pub fn new(config: ScenarioConfig, base_dir: Option<&Path>, source: Option<PathBuf>) -> Result<Self, HarnessError> {
        let origin = source.clone().unwrap_or_else(|| PathBuf::from(&config.name));
        let model = match &config.model {
            None => RobotModel::default(),
            Some(p) => {
                let path = base_dir.map(|d| d.join(p)).unwrap_or_else(|| p.clone());
                let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::config(&origin, vec![format!("model file {}: {e}", path.display())]))?;
                let mc: ModelConfig = toml::from_str(&text)
                    .map_err(|e| HarnessError::config(&origin, vec![format!("model file {}: {e}", path.display())]))?;
                RobotModel::from_config(&mc)
                    .map_err(|e| HarnessError::config(&origin, vec![format!("model file {}: {e}", path.display())]))?
            }
        };
        let violations = config.violations(&model);
        if !violations.is_empty() {
            return Err(HarnessError::config(&origin, violations));
        }
        Ok(Self { config, model, source })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config(path, vec![e.to_string()]))?;
        let config = ScenarioConfig::from_toml(&text).map_err(|e| HarnessError::config(path, vec![e]))?;
        Self::new(config, path.parent(), Some(path.to_path_buf()))
    }

    pub fn initial_height(&self) -> f64 {
        self.config.initial_height_m.unwrap_or(self.config.trot.body_height_m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ScenarioConfig {
        ScenarioConfig::from_toml(text).unwrap()
    }

    #[test]
    fn script_parses() {
        let c = parse(
            r#"
            name = "m"
            [[script]]
            mode = "trot"
            duration_s = 8.0
            v_des_mps = 0.3
            [[script]]
            mode = "push"
            t_s = 4.0
            impulse_mps = [0.0, 0.1, 0.0]
            [[script]]
            mode = "morph_to_aerial"
            [[script]]
            mode = "hover"
            duration_s = 20.0
            [[script]]
            mode = "land"
            [[script]]
            mode = "morph_to_legged"
            "#,
        );
        assert_eq!(c.script.len(), 6);
        assert_eq!(
            c.script[0],
            Step::Trot {
                duration_s: 8.0,
                v_des_mps: VDes::Forward(0.3)
            }
        );
        assert!(c.violations(&RobotModel::default()).is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml("nme = \"x\"").is_err());
        assert!(ScenarioConfig::from_toml("[[script]]\nmode = \"trot\"\nduration_s = 1.0\nv_des_mps = 0.1\nspeed = 2.0").is_err());
        assert!(ScenarioConfig::from_toml("[[script]]\nmode = \"fly\"").is_err());
    }

    #[test]
    fn all_violations_listed() {
        let mut c = parse(
            r#"
            dt_s = 0.01
            [[script]]
            mode = "hover"
            duration_s = -1.0
            [[script]]
            mode = "trot"
            duration_s = 0.0
            v_des_mps = [0.1, 0.0]
            "#,
        );
        c.morph.guards.weight_transfer_fraction = 2.0;
        let v = c.violations(&RobotModel::default());
        let joined = v.join("\n");
        assert!(joined.contains("dt_s"), "{joined}");
        assert!(joined.contains("script[0] (hover): duration_s"), "{joined}");
        assert!(joined.contains("script[0] (hover): needs a preceding morph_to_aerial"), "{joined}");
        assert!(joined.contains("script[1] (trot): duration_s"), "{joined}");
        assert!(joined.contains("[morph]"), "{joined}");
        assert_eq!(v.len(), 5, "{joined}");
    }

    #[test]
    fn sequencing() {
        let m = RobotModel::default();
        let mk = |modes: &[&str]| {
            let script = modes
                .iter()
                .map(|m| match *m {
                    "a" => Step::MorphToAerial,
                    "h" => Step::Hover {
                        duration_s: 1.0,
                        setpoint_m: None,
                    },
                    "l" => Step::Land,
                    "g" => Step::MorphToLegged,
                    _ => Step::Trot {
                        duration_s: 1.0,
                        v_des_mps: VDes::Forward(0.1),
                    },
                })
                .collect();
            ScenarioConfig {
                script,
                ..ScenarioConfig::default()
            }
            .violations(&m)
        };
        assert!(mk(&["t", "a", "h", "l", "g", "t"]).is_empty());
        assert!(mk(&["a", "l", "g"]).is_empty());
        assert_eq!(mk(&["a", "t"]).len(), 1);
        assert_eq!(mk(&["a", "g"]).len(), 1);
        assert_eq!(mk(&["l"]).len(), 1);
        assert_eq!(mk(&["a", "h", "l", "h"]).len(), 1);
    }
}
