use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::fusion::{giekf_run, nlpd_score, Measurement, MeasurementKind};
use crate::geodesy::{enu_to_wgs84, wgs84_to_enu, EnuFrame, GeoPoint};
use crate::io::config::{Belief, Mode, RunConfig};
use crate::io::export::{geojson, trajectory_csv, write_text, ReferenceTrack};
use crate::io::init::{init_from_stationary, Initialization};
use crate::io::log::{Annotation, BaroSample, LocationFix, SensorLog, STATIONARY_END, STATIONARY_START};
use crate::metrics::{
    default_scales, heldout_errors, line_interpolation_baseline, median, rmse_mae, sarmse_in,
    AlignmentSpace, SarmseCurve, Trajectory, DEFAULT_STRIDE_FRACTION,
};
use crate::simulate::{ablate_gap, gen_trajectory, is_fix, subsample_split, synth_barometer, synth_gnss, synth_imu, ScenarioSpec};

/// Number of SARMSE scales evaluated against a reference.
pub const SARMSE_SCALES: usize = 10;

/// Smallest accuracy radius written for noise-free synthetic fixes, m.
const MIN_ACCURACY: f64 = 1e-3;

/// Command-line overrides of the configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineOptions {
    pub iterations: Option<usize>,
    /// Fraction of the fix span with fixes removed.
    pub gap: Option<f64>,
    /// Keep one fix in `n`; the rest are held out.
    pub subsample: Option<usize>,
    pub mode: Option<Mode>,
}

/// Metrics of one pass. Reference metrics are absent without a reference
/// track, held-out metrics without held-out fixes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationReport {
    pub index: usize,
    pub label: String,
    pub max_position_change: Option<f64>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub sarmse: Option<SarmseCurve>,
    pub heldout_rmse: Option<f64>,
    pub heldout_mae: Option<f64>,
    pub heldout_median: Option<f64>,
    pub nlpd: Option<f64>,
}

impl IterationReport {
    pub fn sarmse_largest(&self) -> Option<f64> {
        self.sarmse.as_ref().and_then(|c| c.largest_scale_error())
    }
}

/// Outcome of one reconstruction. Wall-clock timing is left out so that
/// reports are reproducible byte for byte.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub origin: GeoPoint,
    pub mode: Mode,
    pub imu_samples: usize,
    pub fixes_used: usize,
    pub heldout_fixes: usize,
    pub heights: usize,
    pub zupts: usize,
    pub dropped_measurements: usize,
    pub initialized_from_stationary: bool,
    pub max_iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: Vec<IterationReport>,
    /// Smoothed track of every pass.
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
    /// Measurements fed to the filter.
    #[serde(skip)]
    pub measurements: Vec<Measurement>,
    #[serde(skip)]
    pub heldout: Vec<Measurement>,
    /// Reference in the run's frame, when one was given.
    #[serde(skip)]
    pub reference: Option<Trajectory>,
}

impl RunReport {
    pub fn frame(&self) -> Result<EnuFrame> {
        EnuFrame::new(self.origin)
    }

    pub fn last(&self) -> &IterationReport {
        self.iterations.last().expect("at least one pass")
    }

    pub fn last_trajectory(&self) -> &Trajectory {
        self.trajectories.last().expect("at least one pass")
    }
}

fn position_measurement(fix: &LocationFix, frame: &EnuFrame, mode: Mode, variance: f64) -> Result<Measurement> {
    let p = wgs84_to_enu(&fix.point, frame)?;
    match mode {
        Mode::ThreeD => Measurement::position3d(fix.t, p, Matrix3::identity() * variance),
        Mode::PlanarBaro => Measurement::position2d(fix.t, Vector2::new(p.x, p.y), Matrix2::identity() * variance),
    }
}

fn stationary_window(log: &SensorLog, cfg: &RunConfig) -> Option<(f64, f64)> {
    if let Some(w) = log.stationary_windows().first() {
        return Some(*w);
    }
    let w = cfg.measurements.stationary_window;
    match log.imu.first() {
        Some(s) if w > 0.0 => Some((s.t, s.t + w)),
        _ => None,
    }
}

/// Measurement stream of `log` in `frame`, sorted by time: location fixes,
/// barometric heights (planar mode) and zero-velocity updates inside the
/// stationary windows.
pub fn build_measurements(log: &SensorLog, cfg: &RunConfig, frame: &EnuFrame, mode: Mode) -> Result<Vec<Measurement>> {
    let f = cfg.fusion_config();
    let mut out = Vec::new();
    for fix in &log.locations {
        out.push(position_measurement(fix, frame, mode, f.accuracy_variance(fix.accuracy))?);
    }
    if mode == Mode::PlanarBaro {
        for b in &log.barometer {
            let s = b.sigma.unwrap_or(cfg.measurements.barometer_sigma);
            out.push(Measurement::height(b.t, b.altitude - frame.origin.altitude, s * s)?);
        }
    }
    let m = &cfg.measurements;
    let mut windows = log.stationary_windows();
    if windows.is_empty() {
        windows.extend(stationary_window(log, cfg));
    }
    for (from, to) in windows {
        let n = ((to - from) * m.zupt_rate + 1e-9).floor() as usize;
        for k in 0..=n {
            out.push(Measurement::zupt(from + k as f64 / m.zupt_rate, m.zupt_sigma * m.zupt_sigma)?);
        }
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

/// Applies the gap and subsampling ablations; returns `(kept, held_out)`.
fn ablate(meas: Vec<Measurement>, gap_start: f64, opts: &PipelineOptions) -> Result<(Vec<Measurement>, Vec<Measurement>)> {
    let mut kept = meas;
    let mut held = Vec::new();
    if let Some(g) = opts.gap.filter(|&g| g > 0.0) {
        let after = ablate_gap(&kept, gap_start, g)?;
        held.extend(kept.iter().filter(|m| is_fix(m) && !after.contains(m)).cloned());
        kept = after;
    }
    if let Some(n) = opts.subsample.filter(|&n| n > 1) {
        let (k, h) = subsample_split(&kept, n)?;
        kept = k;
        held.extend(h);
    }
    held.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok((kept, held))
}

/// What every pass is scored against.
struct Scoring<'a> {
    reference: Option<&'a Trajectory>,
    heldout: &'a [Measurement],
    space: AlignmentSpace,
}

/// Metrics of `tr`; the held-out NLPD uses `belief`, which carries the
/// position covariances.
fn iteration_report(
    index: usize,
    label: String,
    change: Option<f64>,
    tr: &Trajectory,
    belief: &Trajectory,
    scoring: &Scoring,
) -> Result<IterationReport> {
    let Scoring { reference, heldout, space } = *scoring;
    let mut r = IterationReport {
        index,
        label,
        max_position_change: change,
        rmse: None,
        mae: None,
        sarmse: None,
        heldout_rmse: None,
        heldout_mae: None,
        heldout_median: None,
        nlpd: None,
    };
    if let Some(gt) = reference {
        let (rmse, mae) = rmse_mae(gt, tr)?;
        r.rmse = Some(rmse);
        r.mae = Some(mae);
        let span = gt.end().min(tr.end()) - gt.start().max(tr.start());
        r.sarmse = Some(sarmse_in(gt, tr, &default_scales(span, SARMSE_SCALES), DEFAULT_STRIDE_FRACTION, space)?);
    }
    let errors = heldout_errors(tr, heldout)?;
    if !errors.is_empty() {
        let n = errors.len() as f64;
        r.heldout_rmse = Some((errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt());
        r.heldout_mae = Some(errors.iter().sum::<f64>() / n);
        r.heldout_median = median(&errors);
        if belief.samples.iter().all(|s| s.position_cov.is_some()) {
            r.nlpd = Some(nlpd_score(belief, heldout)?);
        }
    }
    Ok(r)
}

/// Sensor log to smoothed trajectories: ENU conversion anchored at the first
/// fix (or the configured origin), measurement assembly and ablation, prior
/// from the stationary window, the iterated filter, and metrics against the
/// held-out fixes and an optional reference track.
pub fn run_pipeline(
    log: &SensorLog,
    cfg: &RunConfig,
    opts: &PipelineOptions,
    reference: Option<&ReferenceTrack>,
) -> Result<RunReport> {
    if log.imu.len() < 2 {
        return Err(invalid("the log needs at least two IMU samples"));
    }
    let origin = match (cfg.measurements.origin, log.locations.first()) {
        (Some(o), _) => o,
        (None, Some(f)) => f.point,
        (None, None) => return Err(invalid("no location fixes and no configured origin")),
    };
    let frame = EnuFrame::new(origin)?;
    let mode = opts.mode.unwrap_or(cfg.measurements.mode);
    let all = build_measurements(log, cfg, &frame, mode)?;
    let (meas, heldout) = ablate(all, cfg.measurements.gap_start, opts)?;

    let start = meas
        .iter()
        .find(|m| is_fix(m))
        .and_then(|m| m.position_or(&Vector3::zeros()))
        .unwrap_or_else(Vector3::zeros);
    let Initialization {
        prior,
        from_stationary,
        ..
    } = init_from_stationary(&log.imu, stationary_window(log, cfg), start, &cfg.prior);
    let mut fusion = cfg.fusion_config();
    fusion.prior = prior;
    if let Some(n) = opts.iterations {
        fusion.max_iterations = n;
    }
    let reference = reference.map(|r| r.in_frame(&frame)).transpose()?;
    info!(
        "fusing {} IMU samples with {} measurements ({} held out)",
        log.imu.len(),
        meas.len(),
        heldout.len()
    );
    let out = giekf_run(&log.imu, &meas, &fusion)?;
    if out.history.dropped_measurements > 0 {
        warn!("{} measurements outside the IMU span were dropped", out.history.dropped_measurements);
    }

    let mut iterations = Vec::with_capacity(out.iterations.len());
    let mut trajectories = Vec::with_capacity(out.iterations.len());
    let scoring = Scoring {
        reference: reference.as_ref(),
        heldout: &heldout,
        space: cfg.metrics.sarmse_alignment,
    };
    for it in &out.iterations {
        let belief = match cfg.metrics.nlpd_belief {
            Belief::Smoothed => &it.smoothed,
            Belief::Filtered => &it.filtered,
        };
        iterations.push(iteration_report(
            it.index,
            it.label(),
            it.max_position_change,
            &it.smoothed,
            belief,
            &scoring,
        )?);
        trajectories.push(it.smoothed.clone());
    }
    let count = |k: MeasurementKind| meas.iter().filter(|m| m.kind == k).count();
    Ok(RunReport {
        origin,
        mode,
        imu_samples: log.imu.len(),
        fixes_used: meas.iter().filter(|m| is_fix(m)).count(),
        heldout_fixes: heldout.len(),
        heights: count(MeasurementKind::Height),
        zupts: count(MeasurementKind::Zupt),
        dropped_measurements: out.history.dropped_measurements,
        initialized_from_stationary: from_stationary,
        max_iterations: fusion.max_iterations,
        converged: out.converged,
        diverged: out.diverged,
        iterations,
        trajectories,
        measurements: meas,
        heldout,
        reference,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per pass.
pub fn metrics_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "iteration,label,rmse,mae,sarmse_largest,heldout_rmse,heldout_mae,heldout_median,nlpd,max_position_change\n",
    );
    for r in &report.iterations {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.label,
            opt(r.rmse),
            opt(r.mae),
            opt(r.sarmse_largest()),
            opt(r.heldout_rmse),
            opt(r.heldout_mae),
            opt(r.heldout_median),
            opt(r.nlpd),
            opt(r.max_position_change),
        );
    }
    out
}

/// SARMSE curves of all passes in long form.
pub fn sarmse_csv(report: &RunReport) -> String {
    let mut out = String::from("iteration,label,scale_seconds,error_meters,n_segments\n");
    for r in &report.iterations {
        if let Some(c) = &r.sarmse {
            for ((s, e), n) in c.scales.iter().zip(&c.errors).zip(&c.segments) {
                let _ = writeln!(out, "{},{},{s},{e},{n}", r.index, r.label);
            }
        }
    }
    out
}

/// Writes `trajectory.csv` (last pass), `trajectory_ekf.csv` (first pass),
/// `trajectory.geojson`, `metrics.csv`, `sarmse.csv` (with a reference) and
/// `report.json` into `dir`.
pub fn write_outputs(report: &RunReport, log: &SensorLog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let frame = report.frame()?;
    let last = report.last_trajectory();
    write_text(&dir.join("trajectory.csv"), &trajectory_csv(last, Some(&report.origin)))?;
    write_text(&dir.join("trajectory_ekf.csv"), &trajectory_csv(&report.trajectories[0], Some(&report.origin)))?;
    let doc = geojson(last, &frame, &log.locations, &report.last().label)?;
    write_text(&dir.join("trajectory.geojson"), &serde_json::to_string(&doc).map_err(|e| invalid(e.to_string()))?)?;
    write_text(&dir.join("metrics.csv"), &metrics_csv(report))?;
    if report.reference.is_some() {
        write_text(&dir.join("sarmse.csv"), &sarmse_csv(report))?;
    }
    let json = serde_json::to_string_pretty(report).map_err(|e| invalid(e.to_string()))?;
    write_text(&dir.join("report.json"), &(json + "\n"))
}

/// Sensor log and ground-truth reference of a synthetic scenario. Fixes are
/// reported with accuracy radius `2 σ`, barometer rows with their σ, and a
/// stationary start is annotated.
pub fn simulate_log(spec: &ScenarioSpec) -> Result<(SensorLog, ReferenceTrack)> {
    spec.validate()?;
    let truth = gen_trajectory(spec)?;
    let frame = EnuFrame::new(spec.origin)?;
    let imu = synth_imu(&truth, spec)?;
    let locations = synth_gnss(&truth, spec)?
        .iter()
        .map(|m| {
            Ok(LocationFix {
                t: m.t,
                point: enu_to_wgs84(&Vector3::new(m.y[0], m.y[1], m.y[2]), &frame)?,
                accuracy: (2.0 * spec.gnss_sigma).max(MIN_ACCURACY),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let barometer = synth_barometer(&truth, spec)?
        .iter()
        .map(|m| BaroSample {
            t: m.t,
            altitude: spec.origin.altitude + m.y[0],
            sigma: Some(spec.baro_sigma.max(MIN_ACCURACY)),
        })
        .collect();
    let annotations = if spec.stationary > 0.0 {
        vec![
            Annotation { t: 0.0, label: STATIONARY_START.into() },
            Annotation { t: spec.stationary, label: STATIONARY_END.into() },
        ]
    } else {
        Vec::new()
    };
    Ok((
        SensorLog { imu, locations, barometer, annotations },
        ReferenceTrack { origin: Some(spec.origin), trajectory: truth },
    ))
}

/// Scores of one method on one synthetic run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodScore {
    pub method: String,
    pub rmse: f64,
    pub mae: f64,
    pub sarmse_largest: Option<f64>,
    pub heldout_median: Option<f64>,
}

/// First pass, last pass and line interpolation between the used fixes,
/// scored against the ground truth of `spec`.
pub fn compare_methods(spec: &ScenarioSpec, cfg: &RunConfig, opts: &PipelineOptions) -> Result<(RunReport, Vec<MethodScore>)> {
    let (log, reference) = simulate_log(spec)?;
    let report = run_pipeline(&log, cfg, opts, Some(&reference))?;
    let truth = report.reference.clone().expect("reference given");
    let mut scores: Vec<MethodScore> = [&report.iterations[0], report.last()]
        .iter()
        .map(|r| MethodScore {
            method: r.label.clone(),
            rmse: r.rmse.expect("reference given"),
            mae: r.mae.expect("reference given"),
            sarmse_largest: r.sarmse_largest(),
            heldout_median: r.heldout_median,
        })
        .collect();
    if report.iterations.len() == 1 {
        scores.pop();
    }
    let fixes: Vec<Measurement> = report.measurements.iter().filter(|m| m.kind.is_position()).cloned().collect();
    let line = line_interpolation_baseline(&fixes, &truth.times())?.trajectory;
    let scoring = Scoring {
        reference: Some(&truth),
        heldout: &report.heldout,
        space: cfg.metrics.sarmse_alignment,
    };
    let base = iteration_report(0, "line".into(), None, &line, &line, &scoring)?;
    scores.push(MethodScore {
        method: "line".into(),
        rmse: base.rmse.expect("reference given"),
        mae: base.mae.expect("reference given"),
        sarmse_largest: base.sarmse_largest(),
        heldout_median: base.heldout_median,
    });
    Ok((report, scores))
}
