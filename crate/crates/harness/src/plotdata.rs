//! Time series extraction from trajectory logs.

use husky_core::kinematics::{forward_kinematics, JointAngles, LegId};
use husky_core::sim::RobotModel;

use crate::log::{columns, LogRow};

const AXES: [&str; 3] = ["x", "y", "z"];

/// Body-frame foot position channels, computed from the logged joints.
pub fn foot_channels() -> Vec<String> {
    LegId::ALL
        .iter()
        .flat_map(|id| AXES.map(|a| format!("foot_{}_{a}", id.name())))
        .collect()
}

/// Every channel `extract` accepts for a log with or without trace columns.
pub fn available_channels(trace: bool) -> Vec<String> {
    let mut c: Vec<String> = columns(trace)
        .into_iter()
        .filter(|c| !["t_s", "segment", "phase", "status"].contains(&c.as_str()))
        .collect();
    c.extend(foot_channels());
    c
}

fn foot_value(model: &RobotModel, row: &LogRow, channel: &str) -> Option<f64> {
    let rest = channel.strip_prefix("foot_")?;
    let (leg, axis) = rest.split_once('_')?;
    let id = LegId::ALL.into_iter().find(|id| id.name() == leg)?;
    let k = AXES.iter().position(|a| *a == axis)?;
    let g = model.leg(id);
    let q = JointAngles::from_array(row.joints_rad[id.index()]);
    Some((g.hip_offset() + forward_kinematics(g, &q))[k])
}

/// One `(t, value)` series per channel, in the order given.
pub fn extract(model: &RobotModel, rows: &[LogRow], channels: &[String]) -> Result<Vec<Vec<(f64, f64)>>, String> {
    let trace = rows.first().is_some_and(|r| r.trace.is_some());
    let avail = available_channels(trace);
    let unknown: Vec<&String> = channels.iter().filter(|c| !avail.contains(c)).collect();
    if !unknown.is_empty() {
        let names: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
        return Err(format!(
            "unknown channel(s) {}; available: {}",
            names.join(", "),
            avail.join(", ")
        ));
    }
    Ok(channels
        .iter()
        .map(|c| {
            rows.iter()
                .map(|r| {
                    let v = if c.starts_with("foot_") { foot_value(model, r, c) } else { r.value(c) };
                    (r.t_s, v.unwrap_or(f64::NAN))
                })
                .collect()
        })
        .collect())
}

/// Wide CSV: `t_s` then one column per channel.
pub fn to_csv(channels: &[String], series: &[Vec<(f64, f64)>]) -> String {
    let mut out = String::from("t_s");
    for c in channels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    let n = series.first().map_or(0, Vec::len);
    for i in 0..n {
        out.push_str(&series[0][i].0.to_string());
        for s in series {
            out.push(',');
            out.push_str(&s[i].1.to_string());
        }
        out.push('\n');
    }
    out
}
