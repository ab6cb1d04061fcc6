use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn itnav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itnav"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run itnav")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    for flag in ["--help", "--version"] {
        let out = itnav(dir.path(), &[flag]);
        assert_eq!(out.status.code(), Some(0), "{flag}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = itnav(dir.path(), &["fuse", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("itnav: error[usage]:"));
}

#[test]
fn malformed_config_is_one_line_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[filter]\nmax_iterations = \"many\"\n").unwrap();
    let out = itnav(dir.path(), &["simulate", "--config", "bad.toml", "-o", "out"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("itnav: error[config]:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");

    fs::write(dir.path().join("unknown.toml"), "[filter]\nspeed = 3\n").unwrap();
    let out = itnav(dir.path(), &["simulate", "--config", "unknown.toml", "-o", "out"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = itnav(dir.path(), &["fuse", "-i", "nope.csv", "-o", "out"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("itnav: error["));
}

#[test]
fn simulate_fuse_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = itnav(dir.path(), &["simulate", "-o", "sim", "--duration", "30", "--seed", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["sensor_log.csv", "reference.csv", "config.toml"] {
        assert!(dir.path().join("sim").join(name).is_file(), "{name}");
    }

    let out = itnav(
        dir.path(),
        &[
            "fuse", "-i", "sim/sensor_log.csv", "--reference", "sim/reference.csv", "--config",
            "sim/config.toml", "--iterations", "3", "-o", "run",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3, "{stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/report.json")).unwrap()).unwrap();
    let passes = report["iterations"].as_array().unwrap();
    assert_eq!(passes.len(), 3);
    assert!(passes.iter().all(|p| p["rmse"].as_f64().unwrap() >= 0.0));
    assert_eq!(report["diverged"], false);

    let out = itnav(
        dir.path(),
        &[
            "evaluate", "--reference", "sim/reference.csv", "--trajectory", "run/trajectory.csv",
            "--trajectory", "run/trajectory_ekf.csv", "-o", "eval",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics = fs::read_to_string(dir.path().join("eval/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3, "{metrics}");
    assert!(metrics.starts_with("trajectory,rmse,mae,sarmse_largest"));
}

#[test]
fn jsonl_logs_fuse_like_csv_logs() {
    let dir = tempfile::tempdir().unwrap();
    for (name, extra) in [("csv", None), ("jsonl", Some("--jsonl"))] {
        let mut args = vec!["simulate", "-o", name, "--duration", "20", "--seed", "2"];
        args.extend(extra);
        assert!(itnav(dir.path(), &args).status.success());
    }
    let a = itnav(dir.path(), &["fuse", "-i", "csv/sensor_log.csv", "--iterations", "2", "-o", "a"]);
    let b = itnav(dir.path(), &["fuse", "-i", "jsonl/sensor_log.jsonl", "--iterations", "2", "-o", "b"]);
    assert!(a.status.success() && b.status.success(), "{}{}", stderr(&a), stderr(&b));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        fs::read(dir.path().join("a/trajectory.csv")).unwrap(),
        fs::read(dir.path().join("b/trajectory.csv")).unwrap()
    );
}
