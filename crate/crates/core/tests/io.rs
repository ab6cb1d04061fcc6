use std::time::Instant;

use itnav_core::io::export::{geojson_positions, parse_track};
use itnav_core::io::log::{read_csv, read_jsonl, write_csv, write_jsonl};
use itnav_core::io::{run_pipeline, simulate_log, write_outputs, PipelineOptions, RunConfig};
use itnav_core::{ScenarioSpec, Shape};

fn spec(duration: f64) -> ScenarioSpec {
    ScenarioSpec {
        shape: Shape::CityBlockLoop,
        duration,
        stationary: 3.0,
        rng_seed: 11,
        ..ScenarioSpec::default()
    }
}

#[test]
fn csv_export_and_reingest_is_idempotent() {
    let (log, _) = simulate_log(&spec(20.0)).unwrap();
    let mut first = Vec::new();
    write_csv(&log, &mut first).unwrap();
    let back = read_csv(first.as_slice()).unwrap();
    assert_eq!(back.dropped(), 0);
    assert_eq!(back.log, log);
    let mut second = Vec::new();
    write_csv(&back.log, &mut second).unwrap();
    assert_eq!(first, second);
}

#[test]
fn jsonl_export_and_reingest_is_idempotent() {
    let (log, _) = simulate_log(&spec(20.0)).unwrap();
    let mut first = Vec::new();
    write_jsonl(&log, &mut first).unwrap();
    let back = read_jsonl(first.as_slice()).unwrap();
    assert_eq!(back.dropped(), 0);
    assert_eq!(back.log, log);
    let mut second = Vec::new();
    write_jsonl(&back.log, &mut second).unwrap();
    assert_eq!(first, second);
}

#[test]
fn thirty_thousand_rows_ingest_quickly() {
    // 300 s at 100 Hz plus fixes and barometer rows.
    let (log, _) = simulate_log(&spec(300.0)).unwrap();
    assert!(log.imu.len() >= 30_000);
    let mut buf = Vec::new();
    write_csv(&log, &mut buf).unwrap();
    let start = Instant::now();
    let back = read_csv(buf.as_slice()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(back.log.imu.len(), log.imu.len());
    let limit = if cfg!(debug_assertions) { 10.0 } else { 1.0 };
    assert!(elapsed < limit, "{elapsed} s");
}

#[test]
fn geojson_and_csv_outputs_agree() {
    let (log, reference) = simulate_log(&spec(30.0)).unwrap();
    let cfg = RunConfig::default();
    let opts = PipelineOptions { iterations: Some(2), ..PipelineOptions::default() };
    let report = run_pipeline(&log, &cfg, &opts, Some(&reference)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&report, &log, dir.path()).unwrap();

    let frame = report.frame().unwrap();
    let csv = parse_track(&std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap()).unwrap();
    let from_csv = csv.in_frame(&frame).unwrap().positions();
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trajectory.geojson")).unwrap()).unwrap();
    let from_geojson = geojson_positions(&doc, &frame).unwrap();
    assert_eq!(from_csv.len(), from_geojson.len());
    for (a, b) in from_csv.iter().zip(&from_geojson) {
        assert!((a - b).norm() <= 1e-6, "{a} vs {b}");
    }
    for name in ["trajectory_ekf.csv", "metrics.csv", "sarmse.csv", "report.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn malformed_rows_are_reported_not_fatal() {
    let text = "t,type,ax,ay,az,wx,wy,wz\n\
                0.00,imu,0,0,9.8,0,0,0\n\
                0.01,imu,0,zero,9.8,0,0,0\n\
                0.02,imu,0,0,9.8,0,0,0\n\
                0.02,imu,0,0,9.8,0,0,0\n";
    let report = read_csv(text.as_bytes()).unwrap();
    assert_eq!(report.log.imu.len(), 2);
    assert_eq!(report.diagnostics.len(), 1);
    assert_eq!(report.diagnostics[0].line, 3);
    assert_eq!(report.duplicates, 1);
}
