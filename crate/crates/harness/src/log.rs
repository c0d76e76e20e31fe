//! Trajectory and event logs.
//!
//! The trajectory CSV has one row per log interval. Floats are written in
//! shortest round-trip form, so parsing a log gives back exactly the values
//! the run computed with.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use husky_core::kinematics::LegId;
use husky_core::morph::{GuardSnapshot, MorphPhase};

use crate::HarnessError;

pub const JOINT_NAMES: [&str; 3] = ["frontal", "sagittal", "knee"];

/// Guard columns added by `--morph-trace`.
pub const TRACE_COLUMNS: [&str; 5] = [
    "perch_force_n",
    "perch_load_fraction",
    "foot_load_fraction",
    "splay_error_rad",
    "col_com_offset_m",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t_s: f64,
    /// Script mode the row belongs to (`settle` before the script).
    pub segment: String,
    pub phase: MorphPhase,
    /// CoM position and velocity, world frame.
    pub com_m: [f64; 3],
    pub vel_mps: [f64; 3],
    pub rpy_rad: [f64; 3],
    /// Body angular velocity.
    pub omega_radps: [f64; 3],
    pub v_des_mps: [f64; 2],
    /// Hover CoM setpoint; NaN outside hover control.
    pub setpoint_m: [f64; 3],
    /// [`LegId::ALL`] order, frontal/sagittal/knee per leg.
    pub joints_rad: [[f64; 3]; 4],
    /// Throttles applied to the simulator.
    pub throttles: [f64; 4],
    pub foot_fz_n: [f64; 4],
    pub perch_fz_n: f64,
    /// `ok`, `fall`, or `fault`.
    pub status: String,
    pub trace: Option<GuardSnapshot>,
}

pub fn columns(trace: bool) -> Vec<String> {
    let mut c: Vec<String> = ["t_s", "segment", "phase", "com_x_m", "com_y_m", "com_z_m", "vx_mps", "vy_mps", "vz_mps"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    c.extend(["roll_rad", "pitch_rad", "yaw_rad", "wx_radps", "wy_radps", "wz_radps"].map(String::from));
    c.extend(["v_des_x_mps", "v_des_y_mps", "setpoint_x_m", "setpoint_y_m", "setpoint_z_m"].map(String::from));
    for id in LegId::ALL {
        for j in JOINT_NAMES {
            c.push(format!("q_{}_{j}", id.name()));
        }
    }
    for id in LegId::ALL {
        c.push(format!("throttle_{}", id.name()));
    }
    for id in LegId::ALL {
        c.push(format!("fz_{}_n", id.name()));
    }
    c.push("fz_perch_n".into());
    c.push("status".into());
    if trace {
        c.extend(TRACE_COLUMNS.map(String::from));
    }
    c
}

fn phase_from_name(s: &str) -> Option<MorphPhase> {
    MorphPhase::ALL.into_iter().find(|p| p.name() == s)
}

impl LogRow {
    pub fn fields(&self) -> Vec<String> {
        let mut f = vec![self.t_s.to_string(), self.segment.clone(), self.phase.name().to_string()];
        let nums = self
            .com_m
            .iter()
            .chain(&self.vel_mps)
            .chain(&self.rpy_rad)
            .chain(&self.omega_radps)
            .chain(&self.v_des_mps)
            .chain(&self.setpoint_m)
            .chain(self.joints_rad.iter().flatten())
            .chain(&self.throttles)
            .chain(&self.foot_fz_n)
            .chain(std::iter::once(&self.perch_fz_n));
        f.extend(nums.map(|x| x.to_string()));
        f.push(self.status.clone());
        if let Some(g) = &self.trace {
            f.extend(
                [
                    g.perch_force_n,
                    g.perch_load_fraction,
                    g.foot_load_fraction,
                    g.splay_error_rad,
                    g.col_com_offset_m,
                ]
                .map(|x| x.to_string()),
            );
        }
        f
    }

    /// Value of a numeric column by name.
    pub fn value(&self, column: &str) -> Option<f64> {
        let names = columns(self.trace.is_some());
        let i = names.iter().position(|c| c == column)?;
        self.fields()[i].parse().ok()
    }

    fn parse(rec: &csv::StringRecord, trace: bool) -> Result<Self, String> {
        let expected = columns(trace).len();
        if rec.len() != expected {
            return Err(format!("expected {expected} fields, found {}", rec.len()));
        }
        let num = |i: usize| -> Result<f64, String> {
            rec[i].parse::<f64>().map_err(|e| format!("column {}: `{}`: {e}", i + 1, &rec[i]))
        };
        let arr3 = |i: usize| -> Result<[f64; 3], String> { Ok([num(i)?, num(i + 1)?, num(i + 2)?]) };
        let arr4 = |i: usize| -> Result<[f64; 4], String> { Ok([num(i)?, num(i + 1)?, num(i + 2)?, num(i + 3)?]) };
        let phase = phase_from_name(&rec[2]).ok_or_else(|| format!("unknown phase `{}`", &rec[2]))?;
        let status = rec[41].to_string();
        if !["ok", "fall", "fault"].contains(&status.as_str()) {
            return Err(format!("unknown status `{status}`"));
        }
        let trace = if trace {
            Some(GuardSnapshot {
                perch_force_n: num(42)?,
                perch_load_fraction: num(43)?,
                foot_load_fraction: num(44)?,
                splay_error_rad: num(45)?,
                col_com_offset_m: num(46)?,
            })
        } else {
            None
        };
        Ok(Self {
            t_s: num(0)?,
            segment: rec[1].to_string(),
            phase,
            com_m: arr3(3)?,
            vel_mps: arr3(6)?,
            rpy_rad: arr3(9)?,
            omega_radps: arr3(12)?,
            v_des_mps: [num(15)?, num(16)?],
            setpoint_m: arr3(17)?,
            joints_rad: [arr3(20)?, arr3(23)?, arr3(26)?, arr3(29)?],
            throttles: arr4(32)?,
            foot_fz_n: arr4(36)?,
            perch_fz_n: num(40)?,
            status,
            trace,
        })
    }
}

pub struct LogWriter {
    out: csv::Writer<BufWriter<File>>,
}

impl LogWriter {
    pub fn create(path: &Path, trace: bool) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut out = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
        out.write_record(columns(trace)).map_err(|e| HarnessError::io(path, e.into()))?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &LogRow) -> std::io::Result<()> {
        self.out.write_record(row.fields()).map_err(std::io::Error::from)
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Read a trajectory log. Errors carry the 1-based line number.
pub fn read_log(path: &Path) -> Result<Vec<LogRow>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| HarnessError::parse(path, 1, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let trace = if header == columns(false) {
        false
    } else if header == columns(true) {
        true
    } else {
        return Err(HarnessError::parse(path, 1, "header does not match the trajectory log layout".into()));
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            HarnessError::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(LogRow::parse(&rec, trace).map_err(|m| HarnessError::parse(path, line, m))?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub t_s: f64,
    pub kind: String,
    pub phase_from: String,
    pub phase_to: String,
    pub detail: String,
}

impl EventRecord {
    pub fn new(t_s: f64, kind: &str, detail: impl Into<String>) -> Self {
        Self {
            t_s,
            kind: kind.into(),
            phase_from: String::new(),
            phase_to: String::new(),
            detail: detail.into(),
        }
    }
}

pub const EVENT_COLUMNS: [&str; 5] = ["t_s", "kind", "phase_from", "phase_to", "detail"];

pub fn write_events(path: &Path, events: &[EventRecord]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| HarnessError::io(path, e.into());
    w.write_record(EVENT_COLUMNS).map_err(io)?;
    for e in events {
        w.write_record([e.t_s.to_string(), e.kind.clone(), e.phase_from.clone(), e.phase_to.clone(), e.detail.clone()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| HarnessError::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let t_s = rec[0].parse().map_err(|e| HarnessError::parse(path, line, format!("t_s: {e}")))?;
        out.push(EventRecord {
            t_s,
            kind: rec[1].to_string(),
            phase_from: rec[2].to_string(),
            phase_to: rec[3].to_string(),
            detail: rec[4].to_string(),
        });
    }
    Ok(out)
}

/// Writes a two-column series.
pub fn write_series(path: &Path, name: &str, series: &[(f64, f64)]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| HarnessError::io(path, e);
    writeln!(w, "t_s,{name}").map_err(io)?;
    for (t, v) in series {
        writeln!(w, "{t},{v}").map_err(io)?;
    }
    w.flush().map_err(io)
}
