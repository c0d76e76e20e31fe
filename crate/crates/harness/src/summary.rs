//! Run summary, computed from trajectory rows only so it can be rebuilt from
//! a log file.

use std::collections::BTreeMap;
use std::path::Path;

use husky_core::morph::MorphPhase;
use serde::{Deserialize, Serialize};

use crate::log::{read_log, LogRow};
use crate::HarnessError;

/// Altitude band used for the hover settling time, m.
pub const HOVER_SETTLE_BAND_M: f64 = 0.02;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrotStats {
    pub duration_s: f64,
    /// Mean horizontal CoM velocity along the commanded direction.
    pub mean_speed_mps: f64,
    pub mean_v_des_mps: f64,
    pub max_abs_roll_deg: f64,
    pub max_abs_pitch_deg: f64,
    pub mean_abs_roll_deg: f64,
    pub mean_abs_pitch_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphStats {
    pub forward_completed: bool,
    /// Time spent in Crouch through SpinUp.
    pub forward_time_s: f64,
    pub reverse_completed: bool,
    /// Time spent in SpinDown through Stand.
    pub reverse_time_s: f64,
    /// Rows with nonzero throttle in a phase that forbids it (trot rows in
    /// Legged are exempt: roll assist may run there).
    pub interlock_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoverStats {
    pub duration_s: f64,
    /// From the start of hover until the altitude error stays inside the band.
    /// `None` if it never does.
    pub settle_time_s: Option<f64>,
    pub rms_roll_deg: f64,
    pub rms_pitch_deg: f64,
    pub max_alt_error_m: f64,
    pub rms_alt_error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFiles {
    pub trajectory: String,
    pub events: String,
    pub summary: String,
}

impl Default for LogFiles {
    fn default() -> Self {
        Self {
            trajectory: TRAJECTORY_FILE.into(),
            events: EVENTS_FILE.into(),
            summary: SUMMARY_FILE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub duration_s: f64,
    pub samples: usize,
    pub segment_durations_s: BTreeMap<String, f64>,
    pub phase_durations_s: BTreeMap<String, f64>,
    pub trot: Option<TrotStats>,
    pub morph: MorphStats,
    pub hover: Option<HoverStats>,
    /// First row in SpinDown after a landing.
    pub landing_time_s: Option<f64>,
    /// `ok`, `fall`, or `fault`, from the last row.
    pub status: String,
    /// File names, relative to the log directory.
    pub files: LogFiles,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    mean(xs.map(|x| x * x)).sqrt()
}

/// Time covered by each row: from the previous row (or t = 0) to this one.
fn row_spans(rows: &[LogRow]) -> Vec<f64> {
    let mut prev = 0.0;
    rows.iter()
        .map(|r| {
            let d = r.t_s - prev;
            prev = r.t_s;
            d
        })
        .collect()
}

fn trot_stats(rows: &[LogRow], spans: &[f64]) -> Option<TrotStats> {
    let trot: Vec<(&LogRow, f64)> = rows.iter().zip(spans.iter().copied()).filter(|(r, _)| r.segment == "trot").collect();
    if trot.is_empty() {
        return None;
    }
    let along = |r: &LogRow| {
        let (vx, vy) = (r.vel_mps[0], r.vel_mps[1]);
        let [dx, dy] = r.v_des_mps;
        let n = dx.hypot(dy);
        if n > 0.0 { (vx * dx + vy * dy) / n } else { vx.hypot(vy) }
    };
    let deg = f64::to_degrees;
    Some(TrotStats {
        duration_s: trot.iter().map(|(_, d)| d).sum(),
        mean_speed_mps: mean(trot.iter().map(|(r, _)| along(r))),
        mean_v_des_mps: mean(trot.iter().map(|(r, _)| r.v_des_mps[0].hypot(r.v_des_mps[1]))),
        max_abs_roll_deg: trot.iter().map(|(r, _)| deg(r.rpy_rad[0].abs())).fold(0.0, f64::max),
        max_abs_pitch_deg: trot.iter().map(|(r, _)| deg(r.rpy_rad[1].abs())).fold(0.0, f64::max),
        mean_abs_roll_deg: mean(trot.iter().map(|(r, _)| deg(r.rpy_rad[0].abs()))),
        mean_abs_pitch_deg: mean(trot.iter().map(|(r, _)| deg(r.rpy_rad[1].abs()))),
    })
}

fn hover_stats(rows: &[LogRow], spans: &[f64]) -> Option<HoverStats> {
    let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].segment == "hover").collect();
    let first = *idx.first()?;
    let start = rows[first].t_s - spans[first];
    let alt_err = |r: &LogRow| r.com_m[2] - r.setpoint_m[2];
    let last_out = idx.iter().rev().find(|&&i| !(alt_err(&rows[i]).abs() <= HOVER_SETTLE_BAND_M)).copied();
    let (settle, after): (Option<f64>, Vec<usize>) = match last_out {
        None => (Some(0.0), idx.clone()),
        Some(i) if i == *idx.last().unwrap() => (None, Vec::new()),
        Some(i) => (Some(rows[i].t_s - start), idx.iter().copied().filter(|&j| j > i).collect()),
    };
    let post = || after.iter().map(|&i| &rows[i]);
    Some(HoverStats {
        duration_s: idx.iter().map(|&i| spans[i]).sum(),
        settle_time_s: settle,
        rms_roll_deg: rms(post().map(|r| r.rpy_rad[0])).to_degrees(),
        rms_pitch_deg: rms(post().map(|r| r.rpy_rad[1])).to_degrees(),
        max_alt_error_m: post().map(|r| alt_err(r).abs()).fold(0.0, f64::max),
        rms_alt_error_m: rms(post().map(alt_err)),
    })
}

const FORWARD: [MorphPhase; 5] = [
    MorphPhase::Crouch,
    MorphPhase::WeightTransfer,
    MorphPhase::Splay,
    MorphPhase::PropAlign,
    MorphPhase::SpinUp,
];
const REVERSE: [MorphPhase; 4] = [
    MorphPhase::SpinDown,
    MorphPhase::Unsplay,
    MorphPhase::WeightReturn,
    MorphPhase::Stand,
];

pub fn summarize_rows(rows: &[LogRow]) -> RunSummary {
    let spans = row_spans(rows);
    let mut segment_durations_s = BTreeMap::new();
    let mut phase_durations_s = BTreeMap::new();
    for (r, d) in rows.iter().zip(&spans) {
        *segment_durations_s.entry(r.segment.clone()).or_insert(0.0) += d;
        *phase_durations_s.entry(r.phase.name().to_string()).or_insert(0.0) += d;
    }
    let in_phases = |set: &[MorphPhase]| -> f64 {
        rows.iter().zip(&spans).filter(|(r, _)| set.contains(&r.phase)).map(|(_, d)| d).sum()
    };
    let forward_completed = rows
        .windows(2)
        .any(|w| w[0].phase == MorphPhase::SpinUp && w[1].phase == MorphPhase::Aerial);
    let reverse_completed = rows
        .windows(2)
        .any(|w| w[0].phase == MorphPhase::Stand && w[1].phase == MorphPhase::Legged);
    let interlock_violations = rows
        .iter()
        .filter(|r| {
            let exempt = r.phase.rotors_allowed() || (r.phase == MorphPhase::Legged && r.segment == "trot");
            !exempt && r.throttles.iter().any(|u| *u != 0.0)
        })
        .count();
    let landing_time_s = rows
        .windows(2)
        .find(|w| w[0].phase == MorphPhase::Aerial && w[1].phase == MorphPhase::SpinDown)
        .map(|w| w[1].t_s);
    RunSummary {
        duration_s: rows.last().map_or(0.0, |r| r.t_s),
        samples: rows.len(),
        segment_durations_s,
        phase_durations_s,
        trot: trot_stats(rows, &spans),
        morph: MorphStats {
            forward_completed,
            forward_time_s: in_phases(&FORWARD),
            reverse_completed,
            reverse_time_s: in_phases(&REVERSE),
            interlock_violations,
        },
        hover: hover_stats(rows, &spans),
        landing_time_s,
        status: rows.last().map_or("ok".to_string(), |r| r.status.clone()),
        files: LogFiles::default(),
    }
}

/// Recompute the summary of a trajectory log.
pub fn summarize(log: &Path) -> Result<RunSummary, HarnessError> {
    Ok(summarize_rows(&read_log(log)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::tests::sample_row;

    #[test]
    fn empty_log() {
        let s = summarize_rows(&[]);
        assert_eq!(s.samples, 0);
        assert_eq!(s.duration_s, 0.0);
        assert!(s.trot.is_none() && s.hover.is_none());
        assert_eq!(s.status, "ok");
    }

    #[test]
    fn stationary_robot_has_zero_speed() {
        let rows: Vec<_> = (1..=100)
            .map(|k| {
                let mut r = sample_row(k as f64 * 0.01, false);
                r.vel_mps = [0.0; 3];
                r.v_des_mps = [0.0; 2];
                r
            })
            .collect();
        let t = summarize_rows(&rows).trot.unwrap();
        assert_eq!(t.mean_speed_mps, 0.0);
        assert!((t.duration_s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hover_settling_from_rows() {
        // Altitude error decays linearly from 0.3 m to 0 over 2 s, then stays at 1 cm.
        let rows: Vec<_> = (1..=500)
            .map(|k| {
                let t = k as f64 * 0.01;
                let mut r = sample_row(t, false);
                r.segment = "hover".into();
                r.phase = MorphPhase::Aerial;
                r.setpoint_m = [0.0, 0.0, 1.0];
                let err = if t < 2.0 { 0.3 * (1.0 - t / 2.0) } else { 0.01 };
                r.com_m = [0.0, 0.0, 1.0 - err];
                r.rpy_rad = [0.01, 0.0, 0.0];
                r
            })
            .collect();
        let h = summarize_rows(&rows).hover.unwrap();
        // The error crosses 2 cm at t = 1.8667 s; the last row outside the band is t = 1.86 s.
        assert!((h.settle_time_s.unwrap() - 1.86).abs() < 1e-9, "{h:?}");
        assert!((h.max_alt_error_m - 0.3 * (1.0 - 1.87 / 2.0)).abs() < 1e-9);
        assert!((h.rms_roll_deg - 0.01f64.to_degrees()).abs() < 1e-12);
    }

    #[test]
    fn interlock_count() {
        let mut rows: Vec<_> = (1..=4).map(|k| sample_row(k as f64, false)).collect();
        rows[0].throttles = [0.3; 4];
        rows[1].phase = MorphPhase::Splay;
        rows[1].segment = "morph_to_aerial".into();
        rows[1].throttles = [0.0, 0.1, 0.0, 0.0];
        rows[2].phase = MorphPhase::SpinUp;
        rows[2].throttles = [0.4; 4];
        let s = summarize_rows(&rows);
        assert_eq!(s.morph.interlock_violations, 1);
    }
}
