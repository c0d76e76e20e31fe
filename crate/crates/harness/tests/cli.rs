use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use husky_core::kinematics::{forward_kinematics, JointAngles, LegId};
use husky_core::sim::RobotModel;
use husky_harness::log::read_log;
use husky_harness::{summarize, RunSummary};
use sha2::{Digest, Sha256};

fn husky(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_husky")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SHORT_TROT: &str = r#"
name = "short"
settle_s = 0.2

[[script]]
mode = "trot"
duration_s = 1.0
v_des_mps = 0.3
"#;

#[test]
fn bad_config_exits_2_and_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.toml", "name = \"bad\"\ndt_s = -1.0\nlog_interval_s = 0.0\n");
    let out = husky(&["run", s(&p), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dt_s") && err.contains("log_interval_s"), "{err}");

    let p = write(dir.path(), "typo.toml", "name = \"typo\"\nsettle = 1.0\n");
    assert_eq!(husky(&["run", s(&p)]).status.code(), Some(2));
    assert_eq!(husky(&["run", s(&dir.path().join("missing.toml"))]).status.code(), Some(2));
}

#[test]
fn duplicate_names_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.toml", SHORT_TROT);
    let b = write(dir.path(), "b.toml", SHORT_TROT);
    let out = husky(&["run", s(&a), s(&b), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));
}

#[test]
fn empty_script_only_settles() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "idle.toml", "name = \"idle\"\nsettle_s = 0.5\n");
    let out = husky(&["run", s(&p), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sum = summarize(&dir.path().join("idle/trajectory.csv")).unwrap();
    assert!((sum.duration_s - 0.5).abs() < 0.011, "{}", sum.duration_s);
    assert!(sum.trot.is_none() && sum.hover.is_none());
}

#[test]
fn fall_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SHORT_TROT}\n[[script]]\nmode = \"push\"\nt_s = 0.6\nimpulse_mps = [0.0, 0.0, 0.0]\nangular_impulse_radps = [40.0, 0.0, 0.0]\n");
    let p = write(dir.path(), "fall.toml", &text);
    let out = husky(&["run", s(&p), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stdout));
    let sum: RunSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("short/summary.json")).unwrap()).unwrap();
    assert_eq!(sum.status, "fall");
}

#[test]
fn morph_guard_timeout_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = "name = \"stuck\"\nsettle_s = 0.2\n[morph.guards]\nperch_contact_threshold_n = 1000.0\n[[script]]\nmode = \"morph_to_aerial\"\n";
    let p = write(dir.path(), "stuck.toml", text);
    let out = husky(&["run", s(&p), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    let events = std::fs::read_to_string(dir.path().join("stuck/events.csv")).unwrap();
    assert!(events.contains("fault") && events.contains("timed out"), "{events}");
}

fn hashes(dir: &Path) -> Vec<Vec<u8>> {
    ["trajectory.csv", "events.csv", "summary.json"]
        .iter()
        .map(|f| Sha256::digest(std::fs::read(dir.join(f)).unwrap()).to_vec())
        .collect()
}

#[test]
fn runs_are_deterministic_and_parallel_safe() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.toml", SHORT_TROT);
    let b = write(dir.path(), "b.toml", &SHORT_TROT.replace("\"short\"", "\"other\""));
    assert_eq!(husky(&["run", s(&a), "--out", s(&dir.path().join("serial"))]).status.code(), Some(0));
    let out = husky(&["run", s(&a), s(&b), "--jobs", "2", "--out", s(&dir.path().join("par"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(hashes(&dir.path().join("serial/short")), hashes(&dir.path().join("par/short")));
    assert!(dir.path().join("par/other/summary.json").exists());
}

#[test]
fn summarize_matches_written_summary() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "a.toml", SHORT_TROT);
    assert_eq!(husky(&["run", s(&p), "--out", s(dir.path())]).status.code(), Some(0));
    let run = dir.path().join("short");
    let out = husky(&["summarize", s(&run.join("trajectory.csv"))]);
    assert_eq!(out.status.code(), Some(0));
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(printed, written);
}

#[test]
fn plotdata_foot_channels_follow_joints() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "a.toml", SHORT_TROT);
    assert_eq!(husky(&["run", s(&p), "--out", s(dir.path())]).status.code(), Some(0));
    let log = dir.path().join("short/trajectory.csv");
    let out = husky(&["plotdata", s(&log), "--channels", "com_z_m,foot_br_x,foot_br_z"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = read_log(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t_s,com_z_m,foot_br_x,foot_br_z");
    assert_eq!(lines.len(), rows.len() + 1);

    let model = RobotModel::default();
    let g = model.leg(LegId::BR);
    for (line, row) in lines[1..].iter().zip(&rows).step_by(17) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let q = JointAngles::from_array(row.joints_rad[LegId::BR.index()]);
        let foot = g.hip_offset() + forward_kinematics(g, &q);
        assert_eq!(v[0], row.t_s);
        assert!((v[2] - foot.x).abs() < 1e-12 && (v[3] - foot.z).abs() < 1e-12);
        // Standing feet sit below the hips, behind the body center.
        assert!(foot.z < 0.0 && foot.x < 0.0);
    }

    let out = husky(&["plotdata", s(&log), "--channels", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("available"));
}

#[test]
fn design_commands() {
    let budget = Path::new(env!("CARGO_MANIFEST_DIR")).join("budgets/default.toml");
    let out = husky(&["design", "report", s(&budget)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("repurposed leg mass: 2.7920 kg"), "{text}");

    let out = husky(&["design", "sweep", s(&budget), "--mt", "0,0.1,0.2"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");

    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "b.toml", "[budget]\nbody_kg = -1.0\n");
    assert_eq!(husky(&["design", "report", s(&bad)]).status.code(), Some(2));
    assert_eq!(husky(&["design", "sweep", s(&budget), "--mt", "-0.1"]).status.code(), Some(2));
}
