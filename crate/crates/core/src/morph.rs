//! Legged/aerial morphing sequence.
//!
//! Forward chain: Legged, Crouch, WeightTransfer, Splay, PropAlign, SpinUp,
//! Aerial. Reverse chain, after a landing command and a detected touchdown:
//! SpinDown, Unsplay, WeightReturn, Stand, back to Legged.
//!
//! A phase advances once its nominal duration has elapsed and its guard holds
//! on the filtered signal. A guard still failing at the timeout faults the
//! machine, which then holds its last joint setpoints with the rotors off.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::{clamped_ik, standing_feet};
use crate::kinematics::{JointAngles, LegId};
use crate::sim::{com_for_joints, BodyState, ContactReport, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MorphPhase {
    Legged,
    Crouch,
    WeightTransfer,
    Splay,
    PropAlign,
    SpinUp,
    Aerial,
    SpinDown,
    Unsplay,
    WeightReturn,
    Stand,
}

impl MorphPhase {
    pub const ALL: [MorphPhase; 11] = [
        MorphPhase::Legged,
        MorphPhase::Crouch,
        MorphPhase::WeightTransfer,
        MorphPhase::Splay,
        MorphPhase::PropAlign,
        MorphPhase::SpinUp,
        MorphPhase::Aerial,
        MorphPhase::SpinDown,
        MorphPhase::Unsplay,
        MorphPhase::WeightReturn,
        MorphPhase::Stand,
    ];

    /// Position in the combined forward-then-reverse chain.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MorphPhase::Legged => "Legged",
            MorphPhase::Crouch => "Crouch",
            MorphPhase::WeightTransfer => "WeightTransfer",
            MorphPhase::Splay => "Splay",
            MorphPhase::PropAlign => "PropAlign",
            MorphPhase::SpinUp => "SpinUp",
            MorphPhase::Aerial => "Aerial",
            MorphPhase::SpinDown => "SpinDown",
            MorphPhase::Unsplay => "Unsplay",
            MorphPhase::WeightReturn => "WeightReturn",
            MorphPhase::Stand => "Stand",
        }
    }

    /// Phases in which the rotors may be driven by the sequence.
    pub fn rotors_allowed(self) -> bool {
        matches!(self, MorphPhase::SpinUp | MorphPhase::Aerial | MorphPhase::SpinDown)
    }

    fn next(self) -> MorphPhase {
        match self {
            MorphPhase::Legged => MorphPhase::Crouch,
            MorphPhase::Crouch => MorphPhase::WeightTransfer,
            MorphPhase::WeightTransfer => MorphPhase::Splay,
            MorphPhase::Splay => MorphPhase::PropAlign,
            MorphPhase::PropAlign => MorphPhase::SpinUp,
            MorphPhase::SpinUp => MorphPhase::Aerial,
            MorphPhase::Aerial => MorphPhase::SpinDown,
            MorphPhase::SpinDown => MorphPhase::Unsplay,
            MorphPhase::Unsplay => MorphPhase::WeightReturn,
            MorphPhase::WeightReturn => MorphPhase::Stand,
            MorphPhase::Stand => MorphPhase::Legged,
        }
    }
}

impl fmt::Display for MorphPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphCommand {
    GoAerial,
    Land,
}

/// Nominal duration of each timed phase, s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseDurations {
    pub crouch: f64,
    pub weight_transfer: f64,
    pub splay: f64,
    pub prop_align: f64,
    pub spin_up: f64,
    pub spin_down: f64,
    pub unsplay: f64,
    pub weight_return: f64,
    pub stand: f64,
}

impl Default for PhaseDurations {
    fn default() -> Self {
        Self {
            crouch: 2.5,
            weight_transfer: 1.5,
            splay: 3.0,
            prop_align: 2.0,
            spin_up: 1.0,
            spin_down: 1.0,
            unsplay: 3.0,
            weight_return: 1.5,
            stand: 2.5,
        }
    }
}

impl PhaseDurations {
    pub fn get(&self, phase: MorphPhase) -> Option<f64> {
        Some(match phase {
            MorphPhase::Crouch => self.crouch,
            MorphPhase::WeightTransfer => self.weight_transfer,
            MorphPhase::Splay => self.splay,
            MorphPhase::PropAlign => self.prop_align,
            MorphPhase::SpinUp => self.spin_up,
            MorphPhase::SpinDown => self.spin_down,
            MorphPhase::Unsplay => self.unsplay,
            MorphPhase::WeightReturn => self.weight_return,
            MorphPhase::Stand => self.stand,
            MorphPhase::Legged | MorphPhase::Aerial => return None,
        })
    }

    fn all(&self) -> [f64; 9] {
        [
            self.crouch,
            self.weight_transfer,
            self.splay,
            self.prop_align,
            self.spin_up,
            self.spin_down,
            self.unsplay,
            self.weight_return,
            self.stand,
        ]
    }

    /// Nominal length of the forward chain.
    pub fn forward_total(&self) -> f64 {
        self.crouch + self.weight_transfer + self.splay + self.prop_align + self.spin_up
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphGuards {
    pub perch_contact_threshold_n: f64,
    /// Share of the robot's weight the perch (forward) or the feet (reverse)
    /// must carry.
    pub weight_transfer_fraction: f64,
    pub splay_tolerance_rad: f64,
    pub col_com_tolerance_m: f64,
    /// Per-phase timeouts. `None` uses `timeout_factor` times the nominal duration.
    pub timeout_s: Option<PhaseDurations>,
    pub timeout_factor: f64,
    /// Longest wait for touchdown after a landing command.
    pub landing_timeout_s: f64,
}

impl Default for MorphGuards {
    fn default() -> Self {
        Self {
            perch_contact_threshold_n: 10.0,
            weight_transfer_fraction: 0.95,
            splay_tolerance_rad: 0.02,
            col_com_tolerance_m: 0.005,
            timeout_s: None,
            timeout_factor: 3.0,
            landing_timeout_s: 30.0,
        }
    }
}

impl MorphGuards {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("perch_contact_threshold_n", self.perch_contact_threshold_n),
            ("splay_tolerance_rad", self.splay_tolerance_rad),
            ("col_com_tolerance_m", self.col_com_tolerance_m),
            ("landing_timeout_s", self.landing_timeout_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} = {v} must be positive"));
            }
        }
        if !(self.weight_transfer_fraction > 0.0 && self.weight_transfer_fraction <= 1.0) {
            return Err(format!("weight_transfer_fraction {} not in (0, 1]", self.weight_transfer_fraction));
        }
        if !(self.timeout_factor >= 1.0 && self.timeout_factor.is_finite()) {
            return Err(format!("timeout_factor {} must be at least 1", self.timeout_factor));
        }
        if let Some(t) = &self.timeout_s {
            if t.all().iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err("phase timeouts must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandingConfig {
    pub window_s: f64,
    pub max_vertical_speed_mps: f64,
    /// Contact force needed, N. `None` uses the perch contact threshold.
    pub force_threshold_n: Option<f64>,
}

impl Default for LandingConfig {
    fn default() -> Self {
        Self {
            window_s: 0.3,
            max_vertical_speed_mps: 0.05,
            force_threshold_n: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphConfig {
    pub durations: PhaseDurations,
    pub guards: MorphGuards,
    pub landing: LandingConfig,
    /// Body height of the standing pose the reverse chain returns to.
    pub stand_height_m: f64,
    /// Foot depth below the hips at the end of the crouch.
    pub crouch_height_m: f64,
    /// Crouched foot position along body x relative to the hip.
    pub crouch_foot_x_m: f64,
    /// Sagittal angle of the tucked legs while the perch carries the body.
    pub retract_sagittal_rad: f64,
    /// Extra foot depth below the crouch used to lift the body off the perch.
    pub return_extension_m: f64,
    /// Throttle reached at the end of spin-up, as a fraction of hover throttle.
    pub spin_up_fraction: f64,
    /// Moving-average window for guard signals.
    pub filter_window_s: f64,
}

impl Default for MorphConfig {
    fn default() -> Self {
        Self {
            durations: PhaseDurations::default(),
            guards: MorphGuards::default(),
            landing: LandingConfig::default(),
            stand_height_m: 0.28,
            crouch_height_m: 0.07,
            crouch_foot_x_m: -0.02,
            retract_sagittal_rad: -1.4,
            return_extension_m: 0.01,
            spin_up_fraction: 0.8,
            filter_window_s: 0.02,
        }
    }
}

impl MorphConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.guards.validate()?;
        if self.durations.all().iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err("phase durations must be positive".into());
        }
        let l = &self.landing;
        if !(l.window_s >= 0.0 && l.max_vertical_speed_mps > 0.0) {
            return Err("landing window must be non-negative and speed bound positive".into());
        }
        if let Some(f) = l.force_threshold_n {
            if !(f > 0.0) {
                return Err(format!("landing force threshold {f} must be positive"));
            }
        }
        if !(self.crouch_height_m > 0.0 && self.stand_height_m > self.crouch_height_m) {
            return Err("need 0 < crouch_height_m < stand_height_m".into());
        }
        if !(self.return_extension_m >= 0.0 && self.retract_sagittal_rad.is_finite() && self.crouch_foot_x_m.is_finite()) {
            return Err("return_extension_m must be non-negative".into());
        }
        if !(self.spin_up_fraction > 0.0 && self.spin_up_fraction < 1.0) {
            return Err(format!("spin_up_fraction {} not in (0, 1)", self.spin_up_fraction));
        }
        if !(self.filter_window_s >= 0.0) {
            return Err("filter_window_s must be non-negative".into());
        }
        Ok(())
    }

    fn timeout(&self, phase: MorphPhase) -> Option<f64> {
        if phase == MorphPhase::Aerial {
            return Some(self.guards.landing_timeout_s);
        }
        match &self.guards.timeout_s {
            Some(t) => t.get(phase),
            None => self.durations.get(phase).map(|d| d * self.guards.timeout_factor),
        }
    }
}

/// Filtered guard signals at the last step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GuardSnapshot {
    pub perch_force_n: f64,
    pub perch_load_fraction: f64,
    pub foot_load_fraction: f64,
    /// Largest joint error against the current phase's end pose.
    pub splay_error_rad: f64,
    pub col_com_offset_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphState {
    pub phase: MorphPhase,
    pub phase_entry_time_s: f64,
    pub guards: GuardSnapshot,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MorphFault {
    #[error("{phase} timed out at t = {time_s:.3} s: guard `{guard}` = {value:.6}, needs {threshold:.6}")]
    Timeout {
        phase: MorphPhase,
        time_s: f64,
        guard: &'static str,
        value: f64,
        threshold: f64,
    },
    #[error("command {command:?} not accepted in {phase}")]
    Rejected { command: MorphCommand, phase: MorphPhase },
    #[error("invalid morph setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphTransition {
    pub time_s: f64,
    pub from: MorphPhase,
    pub to: MorphPhase,
    pub guards: GuardSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThrottleCommand {
    Off,
    Fixed([f64; 4]),
    /// Rotors follow the hover controller; `landing` asks it to descend.
    Hover { landing: bool },
}

impl ThrottleCommand {
    /// 0 when the rotors must be stopped, 1 otherwise.
    pub fn gate(&self) -> f64 {
        match self {
            ThrottleCommand::Off => 0.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphOutput {
    /// `None` in Legged: the locomotion controller owns the legs.
    pub joints: Option<[JointAngles; 4]>,
    pub throttle: ThrottleCommand,
}

/// Horizontal (world) distance between the rotor centroid and the CoM.
pub fn col_com_offset(model: &RobotModel, state: &BodyState) -> f64 {
    let hubs = model.rotor_positions(&state.joints);
    let col = hubs.iter().sum::<Vector3<f64>>() / 4.0;
    let com = com_for_joints(model, &state.joints);
    (state.orientation * (col - com)).xy().norm()
}

/// Touchdown detector: contact force above a threshold with small vertical
/// speed, held for a window.
#[derive(Debug, Clone, PartialEq)]
pub struct LandingDetector {
    pub force_threshold_n: f64,
    pub max_vertical_speed_mps: f64,
    pub window_s: f64,
    since: Option<f64>,
}

impl LandingDetector {
    pub fn new(force_threshold_n: f64, max_vertical_speed_mps: f64, window_s: f64) -> Self {
        Self {
            force_threshold_n,
            max_vertical_speed_mps,
            window_s,
            since: None,
        }
    }

    pub fn update(&mut self, t: f64, state: &BodyState, contacts: &ContactReport) -> bool {
        let touching = contacts.total_normal() >= self.force_threshold_n;
        if touching && state.linear_velocity.z.abs() < self.max_vertical_speed_mps {
            let since = *self.since.get_or_insert(t);
            t - since >= self.window_s - 1e-12
        } else {
            self.since = None;
            false
        }
    }

    pub fn reset(&mut self) {
        self.since = None;
    }
}

/// Mean over the samples of the last `window_s` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverage {
    window_s: f64,
    samples: VecDeque<(f64, f64)>,
    sum: f64,
}

impl MovingAverage {
    pub fn new(window_s: f64) -> Self {
        Self {
            window_s,
            samples: VecDeque::new(),
            sum: 0.0,
        }
    }

    pub fn push(&mut self, t: f64, v: f64) -> f64 {
        self.samples.push_back((t, v));
        self.sum += v;
        while let Some(&(t0, v0)) = self.samples.front() {
            if t - t0 < self.window_s - 1e-12 || self.samples.len() == 1 {
                break;
            }
            self.samples.pop_front();
            self.sum -= v0;
        }
        self.sum / self.samples.len() as f64
    }
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

fn lerp_joints(a: &[JointAngles; 4], b: &[JointAngles; 4], s: f64) -> [JointAngles; 4] {
    std::array::from_fn(|i| {
        let (x, y) = (a[i].as_array(), b[i].as_array());
        JointAngles::from_array(std::array::from_fn(|j| x[j] + (y[j] - x[j]) * s))
    })
}

fn joint_error(a: &[JointAngles; 4], b: &[JointAngles; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, f64::max)
}

/// Share of a ramp spent moving; the rest of the phase lets the servos settle.
const RAMP_SHARE: f64 = 0.8;
/// Share of the splay ramp spent on the frontal joints.
const FRONTAL_SHARE: f64 = 0.6;

/// Fixed poses of the sequence, computed once per model.
#[derive(Debug, Clone, PartialEq)]
struct Poses {
    standing: [JointAngles; 4],
    standing_feet: [Vector3<f64>; 4],
    crouch_feet: [Vector3<f64>; 4],
    crouch: [JointAngles; 4],
    retract: [JointAngles; 4],
    /// Frontal joints splayed, sagittal still tucked.
    half_splay: [JointAngles; 4],
    splay: [JointAngles; 4],
    aligned: [JointAngles; 4],
    return_feet: [Vector3<f64>; 4],
    return_pose: [JointAngles; 4],
}

fn ik_all(model: &RobotModel, feet: &[Vector3<f64>; 4]) -> [JointAngles; 4] {
    LegId::ALL.map(|id| {
        let g = model.leg(id);
        clamped_ik(g, &(feet[id.index()] - g.hip_offset())).0
    })
}

fn splayed(model: &RobotModel, sagittal: f64) -> [JointAngles; 4] {
    LegId::ALL.map(|id| {
        let g = model.leg(id);
        JointAngles::new(id.side().sign() * FRAC_PI_2, sagittal, g.folded_knee_rad)
    })
}

/// Common sagittal angle that puts the splayed rotor centroid over the CoM
/// along body x, by bisection.
fn alignment_angle(model: &RobotModel) -> f64 {
    let f = |b: f64| {
        let q = splayed(model, b);
        let col = model.rotor_positions(&q).iter().sum::<Vector3<f64>>() / 4.0;
        col.x - com_for_joints(model, &q).x
    };
    let (mut lo, mut hi) = (-0.6, 0.6);
    let (flo, fhi) = (f(lo), f(hi));
    if flo.signum() == fhi.signum() {
        return if flo.abs() < fhi.abs() { lo } else { hi };
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl Poses {
    fn new(model: &RobotModel, cfg: &MorphConfig) -> Result<Self, MorphFault> {
        let setup = |e: crate::kinematics::KinematicsError| MorphFault::Setup(e.to_string());
        let standing_feet = standing_feet(model, cfg.stand_height_m).map_err(setup)?;
        let standing = crate::control::feet_to_joints(model, &standing_feet).map_err(setup)?;
        let crouch_feet = LegId::ALL.map(|id| {
            let h = model.leg(id).hip_offset();
            Vector3::new(h.x + cfg.crouch_foot_x_m, h.y, -cfg.crouch_height_m)
        });
        let crouch = crate::control::feet_to_joints(model, &crouch_feet).map_err(setup)?;
        let retract = LegId::ALL.map(|id| JointAngles::new(0.0, cfg.retract_sagittal_rad, model.leg(id).folded_knee_rad));
        let half_splay = splayed(model, cfg.retract_sagittal_rad);
        let splay = splayed(model, 0.0);
        let aligned = splayed(model, alignment_angle(model));
        for (id, q) in LegId::ALL.iter().zip(retract.iter().chain(&half_splay).chain(&aligned)) {
            model.leg(*id).check_limits(q).map_err(setup)?;
        }
        let depth = cfg.crouch_height_m + cfg.return_extension_m;
        let return_feet = crouch_feet.map(|f| Vector3::new(f.x, f.y, -depth));
        let return_pose = crate::control::feet_to_joints(model, &return_feet).map_err(setup)?;
        Ok(Self {
            standing,
            standing_feet,
            crouch_feet,
            crouch,
            retract,
            half_splay,
            splay,
            aligned,
            return_feet,
            return_pose,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Filters {
    perch_force: MovingAverage,
    perch_load: MovingAverage,
    foot_load: MovingAverage,
    splay_error: MovingAverage,
    col_com: MovingAverage,
}

impl Filters {
    fn new(window_s: f64) -> Self {
        Self {
            perch_force: MovingAverage::new(window_s),
            perch_load: MovingAverage::new(window_s),
            foot_load: MovingAverage::new(window_s),
            splay_error: MovingAverage::new(window_s),
            col_com: MovingAverage::new(window_s),
        }
    }
}

/// The morphing state machine. Owned by one control loop and stepped at the
/// control rate.
#[derive(Debug, Clone)]
pub struct MorphController {
    cfg: MorphConfig,
    poses: Poses,
    state: MorphState,
    filters: Filters,
    landing: LandingDetector,
    landing_requested: bool,
    /// Set once a reverse chain has ended in Legged.
    returned: bool,
    /// Body-frame feet when the forward chain was commanded.
    start_feet: [Vector3<f64>; 4],
    /// Hover throttles at touchdown, ramped to zero by SpinDown.
    touchdown_throttles: [f64; 4],
    last_joints: [JointAngles; 4],
    fault: Option<MorphFault>,
    transitions: Vec<MorphTransition>,
}

impl MorphController {
    pub fn new(model: &RobotModel, cfg: MorphConfig) -> Result<Self, MorphFault> {
        cfg.validate().map_err(MorphFault::Setup)?;
        let poses = Poses::new(model, &cfg)?;
        let threshold = cfg.landing.force_threshold_n.unwrap_or(cfg.guards.perch_contact_threshold_n);
        Ok(Self {
            landing: LandingDetector::new(threshold, cfg.landing.max_vertical_speed_mps, cfg.landing.window_s),
            filters: Filters::new(cfg.filter_window_s),
            state: MorphState {
                phase: MorphPhase::Legged,
                phase_entry_time_s: 0.0,
                guards: GuardSnapshot::default(),
            },
            start_feet: poses.standing_feet,
            touchdown_throttles: [0.0; 4],
            last_joints: poses.standing,
            poses,
            cfg,
            landing_requested: false,
            returned: false,
            fault: None,
            transitions: Vec::new(),
        })
    }

    /// Start in the aerial configuration, e.g. for a hover-only run.
    pub fn new_aerial(model: &RobotModel, cfg: MorphConfig, t: f64) -> Result<Self, MorphFault> {
        let mut m = Self::new(model, cfg)?;
        m.state.phase = MorphPhase::Aerial;
        m.state.phase_entry_time_s = t;
        m.last_joints = m.poses.aligned;
        Ok(m)
    }

    pub fn config(&self) -> &MorphConfig {
        &self.cfg
    }

    pub fn state(&self) -> &MorphState {
        &self.state
    }

    pub fn phase(&self) -> MorphPhase {
        self.state.phase
    }

    pub fn fault(&self) -> Option<&MorphFault> {
        self.fault.as_ref()
    }

    pub fn landing_requested(&self) -> bool {
        self.landing_requested
    }

    /// Transitions since the last call.
    pub fn drain_transitions(&mut self) -> Vec<MorphTransition> {
        std::mem::take(&mut self.transitions)
    }

    pub fn standing_pose(&self) -> [JointAngles; 4] {
        self.poses.standing
    }

    /// Splayed pose with the rotor centroid over the CoM.
    pub fn aerial_pose(&self) -> [JointAngles; 4] {
        self.poses.aligned
    }

    /// CoM height above the ground when the body rests level on the perch
    /// in the aerial pose.
    pub fn perched_com_height(&self, model: &RobotModel) -> f64 {
        com_for_joints(model, &self.poses.aligned).z - model.body.perch_m[2]
    }

    /// GoAerial is accepted in Legged, Land in Aerial.
    pub fn command(&mut self, cmd: MorphCommand, state: &BodyState, model: &RobotModel) -> Result<(), MorphFault> {
        let phase = self.state.phase;
        match (cmd, phase) {
            (MorphCommand::GoAerial, MorphPhase::Legged) if self.fault.is_none() => {
                self.start_feet = model.foot_positions(&state.joints);
                self.enter(MorphPhase::Crouch, state.time_s);
                Ok(())
            }
            (MorphCommand::Land, MorphPhase::Aerial) if self.fault.is_none() && !self.landing_requested => {
                self.landing_requested = true;
                self.landing.reset();
                self.state.phase_entry_time_s = state.time_s;
                Ok(())
            }
            _ => Err(MorphFault::Rejected { command: cmd, phase }),
        }
    }

    fn enter(&mut self, to: MorphPhase, t: f64) {
        self.transitions.push(MorphTransition {
            time_s: t,
            from: self.state.phase,
            to,
            guards: self.state.guards,
        });
        self.state.phase = to;
        self.state.phase_entry_time_s = t;
        if to == MorphPhase::Legged {
            self.landing_requested = false;
            self.returned = true;
        }
    }

    /// Target pose the current phase ends in, for the splay error signal.
    fn end_pose(&self) -> Option<&[JointAngles; 4]> {
        Some(match self.state.phase {
            MorphPhase::Crouch => &self.poses.crouch,
            MorphPhase::WeightTransfer => &self.poses.retract,
            MorphPhase::Splay => &self.poses.splay,
            MorphPhase::PropAlign | MorphPhase::SpinUp | MorphPhase::Aerial | MorphPhase::SpinDown => {
                &self.poses.aligned
            }
            MorphPhase::Unsplay => &self.poses.retract,
            MorphPhase::WeightReturn => &self.poses.return_pose,
            MorphPhase::Stand => &self.poses.standing,
            MorphPhase::Legged => return None,
        })
    }

    fn measure(&mut self, t: f64, model: &RobotModel, state: &BodyState, contacts: &ContactReport) {
        let w = model.weight();
        let feet: f64 = contacts.foot_normals().iter().sum();
        let splay_error = self.end_pose().map_or(0.0, |p| joint_error(&state.joints, p));
        let f = &mut self.filters;
        self.state.guards = GuardSnapshot {
            perch_force_n: f.perch_force.push(t, contacts.perch.z),
            perch_load_fraction: f.perch_load.push(t, contacts.perch.z / w),
            foot_load_fraction: f.foot_load.push(t, feet / w),
            splay_error_rad: f.splay_error.push(t, splay_error),
            col_com_offset_m: f.col_com.push(t, col_com_offset(model, state)),
        };
    }

    /// Guard of the current phase as (name, value, threshold, holds).
    fn guard(&self) -> Option<(&'static str, f64, f64, bool)> {
        let g = &self.state.guards;
        let c = &self.cfg.guards;
        let at_least = |name, v: f64, th: f64| Some((name, v, th, v >= th));
        let below = |name, v: f64, th: f64| Some((name, v, th, v < th));
        match self.state.phase {
            MorphPhase::Crouch => at_least("perch_force_n", g.perch_force_n, c.perch_contact_threshold_n),
            MorphPhase::WeightTransfer => {
                at_least("perch_load_fraction", g.perch_load_fraction, c.weight_transfer_fraction)
            }
            MorphPhase::Splay | MorphPhase::Unsplay | MorphPhase::Stand => {
                below("splay_error_rad", g.splay_error_rad, c.splay_tolerance_rad)
            }
            MorphPhase::PropAlign => below("col_com_offset_m", g.col_com_offset_m, c.col_com_tolerance_m),
            MorphPhase::WeightReturn => {
                at_least("foot_load_fraction", g.foot_load_fraction, c.weight_transfer_fraction)
            }
            MorphPhase::SpinUp | MorphPhase::SpinDown | MorphPhase::Legged | MorphPhase::Aerial => None,
        }
    }

    /// Advance the machine by one control step. `hover_throttles` are the
    /// rotor commands applied on the previous step, used to start the
    /// spin-down ramp from where the hover controller left off.
    pub fn step(
        &mut self,
        model: &RobotModel,
        state: &BodyState,
        contacts: &ContactReport,
        hover_throttles: &[f64; 4],
    ) -> Result<MorphOutput, MorphFault> {
        let t = state.time_s;
        if let Some(f) = &self.fault {
            return Err(f.clone());
        }
        self.measure(t, model, state, contacts);

        let phase = self.state.phase;
        let elapsed = t - self.state.phase_entry_time_s;
        if phase == MorphPhase::Aerial && self.landing_requested {
            if self.landing.update(t, state, contacts) {
                self.touchdown_throttles = *hover_throttles;
                self.enter(MorphPhase::SpinDown, t);
            } else if elapsed > self.cfg.guards.landing_timeout_s {
                return Err(self.trip(MorphFault::Timeout {
                    phase,
                    time_s: t,
                    guard: "landing_detect",
                    value: contacts.total_normal(),
                    threshold: self.landing.force_threshold_n,
                }));
            }
        } else if let Some(nominal) = self.cfg.durations.get(phase) {
            let guard = self.guard();
            let holds = guard.is_none_or(|g| g.3);
            if elapsed >= nominal - 1e-9 && holds {
                self.enter(phase.next(), t);
            } else if let (Some(timeout), Some((name, value, threshold, false))) = (self.cfg.timeout(phase), guard) {
                if elapsed > timeout {
                    return Err(self.trip(MorphFault::Timeout {
                        phase,
                        time_s: t,
                        guard: name,
                        value,
                        threshold,
                    }));
                }
            }
        }

        let out = self.output(model, t);
        if let Some(q) = out.joints {
            self.last_joints = q;
        }
        Ok(out)
    }

    fn trip(&mut self, f: MorphFault) -> MorphFault {
        self.fault = Some(f.clone());
        f
    }

    /// Setpoints to hold once faulted.
    pub fn hold_output(&self) -> MorphOutput {
        MorphOutput {
            joints: Some(self.last_joints),
            throttle: ThrottleCommand::Off,
        }
    }

    fn output(&self, model: &RobotModel, t: f64) -> MorphOutput {
        let p = &self.poses;
        let phase = self.state.phase;
        let elapsed = t - self.state.phase_entry_time_s;
        let ramp = |nominal: f64| smoothstep(elapsed / (RAMP_SHARE * nominal));
        let d = &self.cfg.durations;
        let feet_ramp = |a: &[Vector3<f64>; 4], b: &[Vector3<f64>; 4], s: f64| {
            let feet: [Vector3<f64>; 4] = std::array::from_fn(|i| a[i] + (b[i] - a[i]) * s);
            ik_all(model, &feet)
        };
        let two_stage = |a, mid, b, first_share: f64, nominal: f64| {
            let moving = RAMP_SHARE * nominal;
            let s1 = smoothstep(elapsed / (first_share * moving));
            let s2 = smoothstep((elapsed - first_share * moving) / ((1.0 - first_share) * moving));
            if s1 < 1.0 { lerp_joints(a, mid, s1) } else { lerp_joints(mid, b, s2) }
        };
        let (joints, throttle) = match phase {
            MorphPhase::Legged => (None, ThrottleCommand::Off),
            MorphPhase::Crouch => (Some(feet_ramp(&self.start_feet, &p.crouch_feet, ramp(d.crouch))), ThrottleCommand::Off),
            MorphPhase::WeightTransfer => (
                Some(lerp_joints(&p.crouch, &p.retract, ramp(d.weight_transfer))),
                ThrottleCommand::Off,
            ),
            MorphPhase::Splay => (
                Some(two_stage(&p.retract, &p.half_splay, &p.splay, FRONTAL_SHARE, d.splay)),
                ThrottleCommand::Off,
            ),
            MorphPhase::PropAlign => (
                Some(lerp_joints(&p.splay, &p.aligned, ramp(d.prop_align))),
                ThrottleCommand::Off,
            ),
            MorphPhase::SpinUp => {
                let u = self.cfg.spin_up_fraction * model.hover_throttle() * (elapsed / d.spin_up).clamp(0.0, 1.0);
                (Some(p.aligned), ThrottleCommand::Fixed([u; 4]))
            }
            MorphPhase::Aerial => (
                Some(p.aligned),
                ThrottleCommand::Hover {
                    landing: self.landing_requested,
                },
            ),
            MorphPhase::SpinDown => {
                let k = 1.0 - (elapsed / (RAMP_SHARE * d.spin_down)).clamp(0.0, 1.0);
                (Some(p.aligned), ThrottleCommand::Fixed(self.touchdown_throttles.map(|u| u * k)))
            }
            MorphPhase::Unsplay => (
                Some(two_stage(&p.aligned, &p.half_splay, &p.retract, 1.0 - FRONTAL_SHARE, d.unsplay)),
                ThrottleCommand::Off,
            ),
            MorphPhase::WeightReturn => (
                Some(lerp_joints(&p.retract, &p.return_pose, ramp(d.weight_return))),
                ThrottleCommand::Off,
            ),
            MorphPhase::Stand => (
                Some(if ramp(d.stand) >= 1.0 {
                    p.standing
                } else {
                    feet_ramp(&p.return_feet, &p.standing_feet, ramp(d.stand))
                }),
                ThrottleCommand::Off,
            ),
        };
        // Legged after a completed reverse chain holds the standing pose.
        let joints = if phase == MorphPhase::Legged && self.returned { Some(p.standing) } else { joints };
        MorphOutput { joints, throttle }
    }
}
