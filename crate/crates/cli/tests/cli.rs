use std::path::{Path, PathBuf};
use std::process::Command;

use ergodesign::io::{model_from_str, model_to_string, scenario_from_str, scenario_to_string, AgentSource};
use ergodesign::templates::desk_robot;
use ergodesign_cli::compare::{compare, read_norms, NormRow};
use ergodesign_cli::report::five_numbers;
use ergodesign_cli::{assets, EXIT_BAD_INPUT, EXIT_CONVERGED, EXIT_MAX_ITER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ergodesign"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// The bundled scenario restricted to `heights`, with the robot file next to it.
fn scenario(dir: &Path, heights: &[f64]) -> PathBuf {
    write(dir, "desk-robot.toml", assets::DESK_ROBOT);
    let mut file = scenario_from_str(assets::DESK_SCENARIO).unwrap();
    file.scenario.heights = heights.to_vec();
    write(dir, "lift.toml", &scenario_to_string(&file))
}

#[test]
fn bundled_robot_matches_the_template() {
    assert_eq!(model_from_str(assets::DESK_ROBOT).unwrap(), desk_robot());
    assert_eq!(assets::DESK_ROBOT, model_to_string(&desk_robot()));
}

#[test]
fn bundled_scenario_uses_the_bundled_robot() {
    let file = scenario_from_str(assets::DESK_SCENARIO).unwrap();
    assert_eq!(file.robot, AgentSource::File("desk-robot.toml".into()));
    assert_eq!(file.scenario.heights, vec![0.8, 1.0, 1.2]);
}

#[test]
fn five_numbers_interpolate() {
    assert_eq!(five_numbers(&[4.0, 1.0, 3.0, 2.0, 5.0]), [1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(five_numbers(&[1.0, 2.0]), [1.0, 1.25, 1.5, 1.75, 2.0]);
    assert_eq!(five_numbers(&[7.0]), [7.0; 5]);
}

fn row(height: f64, human: Option<f64>, robot: Option<f64>) -> NormRow {
    NormRow {
        height,
        feasible: human.is_some(),
        status: String::new(),
        human,
        robot,
    }
}

#[test]
fn comparison_percentages_and_flags() {
    let a = [row(1.0, Some(100.0), Some(50.0)), row(1.2, Some(100.0), Some(50.0)), row(1.5, None, None)];
    let b = [row(1.0, Some(105.0), Some(25.0)), row(1.2, Some(120.0), Some(40.0)), row(1.5, Some(1.0), Some(1.0))];
    let c = compare(&a, &b).unwrap();
    assert_eq!(c.change(1.0, "robot"), Some(-50.0));
    assert_eq!(c.change(1.0, "human"), Some(5.0));
    assert_eq!(c.change(1.5, "robot"), None);
    assert_eq!(c.flagged, vec![1.0]);
    assert!(compare(&a[..2], &b).is_err());
}

#[test]
fn compare_on_the_lifting_table() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "original.csv", assets::TABLE_ORIGINAL);
    let b = write(dir.path(), "optimized.csv", assets::TABLE_OPTIMIZED);
    let c = compare(&read_norms(&a).unwrap(), &read_norms(&b).unwrap()).unwrap();
    assert!((c.change(1.0, "robot").unwrap() - -37.3355).abs() < 1e-4);
    assert!((c.change(1.2, "human").unwrap() - -0.2441).abs() < 5e-5);

    let out = bin().arg("compare").arg(&a).arg(&b).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("-37.34%"), "{text}");
    assert!(text.contains("-0.24%"), "{text}");
}

#[test]
fn compare_rejects_mismatched_tables() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", assets::TABLE_ORIGINAL);
    let b = write(dir.path(), "b.csv", "height,feasible,status,human,robot\n1.0,true,converged,1,1\n");
    let out = bin().arg("compare").arg(&a).arg(&b).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_BAD_INPUT));
    let junk = write(dir.path(), "junk.csv", "height,feasible\nfoo,bar\n");
    let out = bin().arg("compare").arg(&a).arg(&junk).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_BAD_INPUT));
}

#[test]
fn bad_inputs_exit_with_64() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["optimize", "/nonexistent/lift.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_BAD_INPUT));
    let broken = write(dir.path(), "broken.toml", "human = [\n");
    let out = bin().arg("optimize").arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_BAD_INPUT));
    let unsorted = write(dir.path(), "unsorted.toml", "human = { human = 1.8 }\nrobot = \"desk-robot\"\n[scenario]\nheights = [1.2, 0.8]\n");
    let out = bin().arg("optimize").arg(&unsorted).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_BAD_INPUT));
    let bad_model = write(dir.path(), "bad.toml", &assets::DESK_ROBOT.replacen("density = ", "density = -", 1));
    let s = scenario(dir.path(), &[1.0]);
    let out = bin().arg("evaluate").arg(&bad_model).arg(&s).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_BAD_INPUT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("density must be positive"));
}

#[test]
fn evaluate_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), &[1.0]);
    let robot = dir.path().join("desk-robot.toml");
    let out_dir = dir.path().join("report");
    let out = bin().arg("evaluate").arg(&robot).arg(&s).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONVERGED), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "torque_norms.csv",
        "joint_torques.csv",
        "boxplot.csv",
        "wrenches.csv",
        "cop.csv",
        "hardware.csv",
        "decision.csv",
        "summary.txt",
    ] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let norms = read_norms(&out_dir).unwrap();
    assert_eq!(norms.len(), 1);
    assert!(norms[0].feasible && norms[0].robot.unwrap() > 0.0);
    let joints = std::fs::read_to_string(out_dir.join("joint_torques.csv")).unwrap();
    let human_joints = joints.lines().filter(|l| l.contains(",human,")).count();
    assert_eq!(human_joints, 26);
    let wrenches = std::fs::read_to_string(out_dir.join("wrenches.csv")).unwrap();
    assert_eq!(wrenches.lines().count(), 1 + 8);
    assert!(!out_dir.join("optimized_model.toml").exists());
}

#[test]
fn iteration_limit_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), &[1.0]);
    let out_dir = dir.path().join("report");
    let out = bin().arg("optimize").arg(&s).args(["--max-iter", "2", "--out"]).arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_MAX_ITER), "{}", String::from_utf8_lossy(&out.stderr));
    let norms = read_norms(&out_dir).unwrap();
    assert!(!norms[0].feasible);
    assert_eq!(norms[0].status, "max-iter");
}
