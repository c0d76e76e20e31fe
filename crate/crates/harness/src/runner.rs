//! Runs a scenario script against the simulator and writes its logs.

use std::path::{Path, PathBuf};

use husky_core::control::{
    feet_to_joints, roll_assist, standing_feet, FallDetector, HoverController, TrotController,
};
use husky_core::kinematics::{JointAngles, LegId};
use husky_core::morph::{MorphCommand, MorphController, MorphFault, MorphPhase, ThrottleCommand};
use husky_core::sim::{center_of_mass, BodyState, SimEvent, SimFault, Simulator};
use nalgebra::{Vector2, Vector3};

use crate::log::{write_events, EventRecord, LogRow, LogWriter};
use crate::scenario::{Scenario, Step};
use crate::summary::{summarize, RunSummary, EVENTS_FILE, SUMMARY_FILE, TRAJECTORY_FILE};
use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Logs go straight into this directory.
    pub out_dir: PathBuf,
    /// Add the morph guard signals to the trajectory log.
    pub morph_trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    Fall { time_s: f64 },
    Fault { time_s: f64, message: String },
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Fall { .. } => "fall",
            RunStatus::Fault { .. } => "fault",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Ok => crate::EXIT_OK,
            RunStatus::Fall { .. } => crate::EXIT_FALL,
            RunStatus::Fault { .. } => crate::EXIT_FAULT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub summary: RunSummary,
    pub out_dir: PathBuf,
    /// Largest friction-cone excess seen by the simulator; never positive
    /// unless contact forces left the cone.
    pub max_cone_excess_n: f64,
}

/// Why a segment stopped early.
enum Stop {
    Fall,
    Fault(String),
}

impl From<MorphFault> for Stop {
    fn from(f: MorphFault) -> Self {
        Stop::Fault(f.to_string())
    }
}

impl From<SimFault> for Stop {
    fn from(f: SimFault) -> Self {
        Stop::Fault(format!("simulation: {f}"))
    }
}

/// Who drives the legs and rotors on a tick.
#[derive(Clone, Copy, PartialEq)]
enum Drive {
    Hold,
    Trot,
    Morph,
}

struct Pending {
    t_s: f64,
    dv: Vector3<f64>,
    dw: Vector3<f64>,
}

struct Run<'a> {
    sc: &'a Scenario,
    sim: Simulator,
    morph: MorphController,
    trot: Option<(TrotController, f64)>,
    hover: HoverController,
    fall: FallDetector,
    fall_height_m: f64,
    pushes: Vec<Pending>,
    events: Vec<EventRecord>,
    log: LogWriter,
    log_path: PathBuf,
    trace: bool,
    segment: &'static str,
    tick: u64,
    hold: [JointAngles; 4],
    throttles: [f64; 4],
    setpoint: Option<Vector3<f64>>,
    v_des: [f64; 2],
    hover_saturated: bool,
}

fn com_world(sim: &Simulator) -> Vector3<f64> {
    let s = sim.state();
    s.position + s.orientation * center_of_mass(&sim.model, s)
}

/// Standing pose at `height` with the feet pushed outboard by `width`.
fn initial_pose(sc: &Scenario) -> Result<[JointAngles; 4], String> {
    let m = &sc.model;
    let mut feet = standing_feet(m, sc.initial_height()).map_err(|e| format!("initial pose: {e}"))?;
    for id in LegId::ALL {
        feet[id.index()].y += sc.config.trot.stance_width_m * id.side().sign();
    }
    feet_to_joints(m, &feet).map_err(|e| format!("initial pose: {e}"))
}

impl<'a> Run<'a> {
    fn dt(&self) -> f64 {
        self.sc.config.dt_s
    }

    fn now(&self) -> f64 {
        self.sim.state().time_s
    }

    fn event(&mut self, kind: &str, detail: impl Into<String>) {
        let t = self.now();
        self.events.push(EventRecord::new(t, kind, detail));
    }

    fn start_segment(&mut self, name: &'static str) {
        self.segment = name;
        self.event("segment", name);
    }

    fn row(&self, status: &str) -> LogRow {
        let s = self.sim.state();
        let c = self.sim.contacts();
        let (r, p, y) = s.rpy();
        let com = com_world(&self.sim);
        LogRow {
            t_s: s.time_s,
            segment: self.segment.to_string(),
            phase: self.morph.phase(),
            com_m: com.into(),
            vel_mps: s.linear_velocity.into(),
            rpy_rad: [r, p, y],
            omega_radps: s.angular_velocity.into(),
            v_des_mps: self.v_des,
            setpoint_m: self.setpoint.map_or([f64::NAN; 3], Into::into),
            joints_rad: s.joints.map(|q| q.as_array()),
            throttles: self.throttles,
            foot_fz_n: c.foot_normals(),
            perch_fz_n: c.perch.z,
            status: status.to_string(),
            trace: self.trace.then_some(self.morph.state().guards),
        }
    }

    fn write_row(&mut self, status: &str) -> Result<(), HarnessError> {
        let row = self.row(status);
        self.log.write(&row).map_err(|e| HarnessError::io(&self.log_path, e))
    }

    fn apply_pushes(&mut self) {
        let t = self.now();
        let dt = self.dt();
        while self.pushes.first().is_some_and(|p| p.t_s < t + 0.5 * dt) {
            let p = self.pushes.remove(0);
            self.sim.apply_velocity_impulse(p.dv, p.dw);
            let detail = format!(
                "dv=({}, {}, {}) dw=({}, {}, {})",
                p.dv.x, p.dv.y, p.dv.z, p.dw.x, p.dw.y, p.dw.z
            );
            self.event("push", detail);
        }
    }

    fn record_morph_transitions(&mut self) {
        for tr in self.morph.drain_transitions() {
            let g = tr.guards;
            let mut e = EventRecord::new(
                tr.time_s,
                "morph_transition",
                format!(
                    "perch_force_n={} perch_load_fraction={} foot_load_fraction={} splay_error_rad={} col_com_offset_m={}",
                    g.perch_force_n, g.perch_load_fraction, g.foot_load_fraction, g.splay_error_rad, g.col_com_offset_m
                ),
            );
            e.phase_from = tr.from.name().into();
            e.phase_to = tr.to.name().into();
            self.events.push(e);
            if tr.to == MorphPhase::Aerial {
                let com = com_world(&self.sim);
                let z = self.sc.config.hover.setpoint_m[2];
                self.hover.reset();
                self.hover.set_max_speed(self.sc.config.hover.max_speed_mps);
                self.hover.set_setpoint(Vector3::new(com.x, com.y, z), self.sim.state().yaw());
                self.setpoint = Some(Vector3::new(com.x, com.y, z));
            }
            if tr.to == MorphPhase::SpinDown {
                self.setpoint = None;
            }
        }
    }

    fn hover_throttles(&mut self, s: &BodyState) -> Result<[f64; 4], Stop> {
        let out = self
            .hover
            .update(s, &self.sc.model, self.dt())
            .map_err(|e| Stop::Fault(format!("hover mixer: {e}")))?;
        if out.saturated && !self.hover_saturated {
            self.event("mixer_saturation", format!("thrust_n={}", out.thrust_n));
        }
        self.hover_saturated = out.saturated;
        Ok(out.throttles)
    }

    /// One control step: commands from `drive`, then the simulator.
    fn step(&mut self, drive: Drive) -> Result<(), Stop> {
        self.apply_pushes();
        let s = self.sim.state().clone();
        let t = s.time_s;
        let dt = self.dt();
        let (joints, throttles) = match drive {
            Drive::Hold => (self.hold, [0.0; 4]),
            Drive::Trot => {
                let (ctl, t0) = self.trot.as_mut().expect("trot segment without a controller");
                let q = ctl.update(&s, t - *t0, dt);
                for e in ctl.drain_events() {
                    self.events.push(EventRecord::new(e.time_s, e.kind.name(), e.kind.detail()));
                }
                let ra = &self.sc.config.roll_assist;
                let u = if ra.enabled {
                    let inc = roll_assist(&s, &self.sc.model, &ra.config());
                    std::array::from_fn(|i| ra.base() + inc[i])
                } else {
                    [0.0; 4]
                };
                self.hold = q;
                (q, u)
            }
            Drive::Morph => {
                let out = self.morph.step(&self.sc.model, &s, self.sim.contacts(), &self.throttles);
                self.record_morph_transitions();
                let out = out?;
                if let Some(q) = out.joints {
                    self.hold = q;
                }
                let u = match out.throttle {
                    ThrottleCommand::Off => [0.0; 4],
                    ThrottleCommand::Fixed(u) => u,
                    ThrottleCommand::Hover { .. } => self.hover_throttles(&s)?,
                };
                (self.hold, u.map(|x| x * out.throttle.gate()))
            }
        };
        self.throttles = throttles;
        self.sim.step(&joints, &throttles, dt)?;
        for e in self.sim.drain_events() {
            match e {
                SimEvent::ThrottleClamped { time } => self.events.push(EventRecord::new(time, "throttle_clamped", "")),
            }
        }
        self.tick += 1;
        self.check_fall(drive)
    }

    fn check_fall(&mut self, drive: Drive) -> Result<(), Stop> {
        let s = self.sim.state();
        let (r, p, _) = s.rpy();
        let max_tilt = self.sc.config.fall.max_tilt_deg.to_radians();
        let tilted = r.abs() > max_tilt || p.abs() > max_tilt;
        let legged = drive != Drive::Morph && self.morph.phase() == MorphPhase::Legged;
        let (t, z) = (s.time_s, s.position.z);
        let sagged = legged && self.fall.update(t, z, self.fall_height_m);
        if tilted || sagged {
            let why = if tilted {
                format!("tilt roll={r} pitch={p}")
            } else {
                format!("height_m={z}")
            };
            self.event("fall", why);
            return Err(Stop::Fall);
        }
        Ok(())
    }

    /// Step `n` times, logging every `log_every` ticks.
    fn run_ticks(&mut self, n: u64, drive: Drive) -> Result<Result<(), Stop>, HarnessError> {
        for _ in 0..n {
            if let Err(stop) = self.step(drive) {
                return Ok(Err(stop));
            }
            self.maybe_log()?;
        }
        Ok(Ok(()))
    }

    /// Step the morph machine until `done` holds.
    fn run_until(&mut self, done: impl Fn(MorphPhase) -> bool) -> Result<Result<(), Stop>, HarnessError> {
        while !done(self.morph.phase()) {
            if let Err(stop) = self.step(Drive::Morph) {
                return Ok(Err(stop));
            }
            self.maybe_log()?;
        }
        Ok(Ok(()))
    }

    fn maybe_log(&mut self) -> Result<(), HarnessError> {
        if self.tick % self.sc.config.log_every() as u64 == 0 {
            self.write_row("ok")?;
        }
        Ok(())
    }

    fn ticks(&self, duration_s: f64) -> u64 {
        (duration_s / self.dt()).round() as u64
    }

    fn execute(&mut self) -> Result<Result<(), Stop>, HarnessError> {
        let cfg = &self.sc.config;
        if cfg.settle_s > 0.0 {
            self.start_segment("settle");
            let n = self.ticks(cfg.settle_s);
            if let Err(s) = self.run_ticks(n, Drive::Hold)? {
                return Ok(Err(s));
            }
        }
        let script = cfg.script.clone();
        for (i, step) in script.iter().enumerate() {
            let continues_trot = script[..i]
                .iter()
                .rev()
                .find(|s| !matches!(s, Step::Push { .. }))
                .is_some_and(|s| matches!(s, Step::Trot { .. }));
            let r = match step {
                // Applied by time, wherever they sit in the script.
                Step::Push { .. } => continue,
                Step::Trot { duration_s, v_des_mps } => {
                    self.start_segment("trot");
                    if !continues_trot || self.trot.is_none() {
                        let t0 = self.now();
                        self.trot = Some((TrotController::new(&self.sc.model, cfg.trot.clone()), t0));
                        self.fall.reset();
                        self.fall_height_m = cfg.trot.body_height_m;
                    }
                    let v = v_des_mps.as_array();
                    self.v_des = v;
                    self.trot.as_mut().unwrap().0.set_v_des(Vector2::from(v));
                    let n = self.ticks(*duration_s);
                    self.run_ticks(n, Drive::Trot)?
                }
                Step::MorphToAerial => {
                    self.start_segment("morph_to_aerial");
                    self.v_des = [0.0; 2];
                    self.trot = None;
                    let s = self.sim.state().clone();
                    if let Err(f) = self.morph.command(MorphCommand::GoAerial, &s, &self.sc.model) {
                        return Ok(Err(f.into()));
                    }
                    self.record_morph_transitions();
                    self.run_until(|p| p == MorphPhase::Aerial)?
                }
                Step::Hover { duration_s, setpoint_m } => {
                    self.start_segment("hover");
                    if let Some(sp) = setpoint_m {
                        let yaw = self.sim.state().yaw();
                        self.hover.set_setpoint(Vector3::from(*sp), yaw);
                        self.setpoint = Some(Vector3::from(*sp));
                    }
                    let n = self.ticks(*duration_s);
                    self.run_ticks(n, Drive::Morph)?
                }
                Step::Land => {
                    self.start_segment("land");
                    let s = self.sim.state().clone();
                    if let Err(f) = self.morph.command(MorphCommand::Land, &s, &self.sc.model) {
                        return Ok(Err(f.into()));
                    }
                    let com = com_world(&self.sim);
                    let z = self.morph.perched_com_height(&self.sc.model) - cfg.landing.setpoint_below_touchdown_m;
                    let sp = Vector3::new(com.x, com.y, z);
                    self.hover.set_max_speed(cfg.landing.descent_speed_mps);
                    self.hover.set_setpoint(sp, s.yaw());
                    self.setpoint = Some(sp);
                    self.run_until(|p| p != MorphPhase::Aerial)?
                }
                Step::MorphToLegged => {
                    self.start_segment("morph_to_legged");
                    let r = self.run_until(|p| p == MorphPhase::Legged)?;
                    if r.is_ok() {
                        self.fall.reset();
                        self.fall_height_m = cfg.morph.stand_height_m;
                    }
                    r
                }
            };
            if r.is_err() {
                return Ok(r);
            }
        }
        Ok(Ok(()))
    }
}

/// Run a validated scenario, writing `trajectory.csv`, `events.csv`, and
/// `summary.json` into `opts.out_dir`. Falls and faults stop the run but still
/// produce logs; only setup and I/O problems return `Err`.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
    let origin = sc.source.clone().unwrap_or_else(|| PathBuf::from(&sc.config.name));
    let setup = |msg: String| HarnessError::config(&origin, vec![msg]);
    let joints = initial_pose(sc).map_err(setup)?;
    let morph = MorphController::new(&sc.model, sc.config.morph.clone()).map_err(|e| setup(e.to_string()))?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| HarnessError::io(&opts.out_dir, e))?;
    let log_path = opts.out_dir.join(TRAJECTORY_FILE);
    let log = LogWriter::create(&log_path, opts.morph_trace)?;

    let state = BodyState {
        position: Vector3::new(0.0, 0.0, sc.initial_height() + 0.001),
        joints,
        ..BodyState::default()
    };
    let mut pushes: Vec<Pending> = sc
        .config
        .script
        .iter()
        .filter_map(|s| match s {
            Step::Push {
                t_s,
                impulse_mps,
                angular_impulse_radps,
            } => Some(Pending {
                t_s: *t_s,
                dv: Vector3::from(*impulse_mps),
                dw: Vector3::from(*angular_impulse_radps),
            }),
            _ => None,
        })
        .collect();
    pushes.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
    let fall = &sc.config.fall;
    let mut run = Run {
        sc,
        sim: Simulator::new(sc.model.clone(), sc.model.default_terrain(), state),
        morph,
        trot: None,
        hover: HoverController::new(sc.config.hover.clone()),
        fall: FallDetector::new(fall.height_fraction, fall.hold_s),
        fall_height_m: sc.initial_height(),
        pushes,
        events: Vec::new(),
        log,
        log_path: log_path.clone(),
        trace: opts.morph_trace,
        segment: "settle",
        tick: 0,
        hold: joints,
        throttles: [0.0; 4],
        setpoint: None,
        v_des: [0.0; 2],
        hover_saturated: false,
    };
    run.write_row("ok")?;

    let status = match run.execute()? {
        Ok(()) => RunStatus::Ok,
        Err(stop) => {
            let time_s = run.now();
            let status = match stop {
                Stop::Fall => RunStatus::Fall { time_s },
                Stop::Fault(message) => {
                    run.event("fault", message.clone());
                    RunStatus::Fault { time_s, message }
                }
            };
            run.write_row(status.name())?;
            status
        }
    };
    for p in std::mem::take(&mut run.pushes) {
        run.events.push(EventRecord::new(p.t_s, "push_skipped", "run ended before the push time"));
    }
    let max_cone_excess_n = run.sim.diagnostics().max_cone_excess_n;
    let Run { log, events, .. } = run;
    log.finish().map_err(|e| HarnessError::io(&log_path, e))?;
    write_events(&opts.out_dir.join(EVENTS_FILE), &events)?;

    let summary = summarize(&log_path)?;
    let summary_path = opts.out_dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&summary_path, json + "\n").map_err(|e| HarnessError::io(&summary_path, e))?;
    Ok(RunOutcome {
        status,
        summary,
        out_dir: opts.out_dir.clone(),
        max_cone_excess_n,
    })
}

/// Output directory for a scenario under `root`.
pub fn scenario_dir(root: &Path, sc: &Scenario) -> PathBuf {
    root.join(&sc.config.name)
}
