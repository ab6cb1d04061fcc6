use log::warn;

use crate::error::{invalid, Error, Result};
use crate::fusion::{
    ekf_update, predict_with_jacobian, FusionConfig, GaussianEstimate, Measurement,
};
use crate::ins::{validate_stream, DynamicsJacobian, ImuSample};

/// Filter moments at one step of the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Index of the IMU sample ending this step; `None` for a step inserted to
    /// reach an off-grid measurement time.
    pub imu_index: Option<usize>,
    /// `m_{k|k-1}, P_{k|k-1}` (equal to the prior for the first record).
    pub predicted: GaussianEstimate,
    /// `m_{k|k}, P_{k|k}`.
    pub filtered: GaussianEstimate,
    /// Linearization of the step from the previous record, evaluated at its
    /// filtered mean. `None` for the first record.
    pub transition: Option<DynamicsJacobian>,
    /// Number of measurement updates applied at this step.
    pub updates: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterHistory {
    pub records: Vec<StepRecord>,
    /// Measurements outside the IMU time span.
    pub dropped_measurements: usize,
    pub applied_updates: usize,
    /// Updates that were no-ops (e.g. speed constraint not active).
    pub skipped_updates: usize,
    pub speed_limit_updates: usize,
}

impl FilterHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

struct Step {
    t: f64,
    dt: f64,
    sample: ImuSample,
    imu_index: Option<usize>,
    measurements: Vec<usize>,
}

fn median_step(imu: &[ImuSample]) -> f64 {
    let mut dts: Vec<f64> = imu.windows(2).map(|w| w[1].t - w[0].t).collect();
    if dts.is_empty() {
        return 0.0;
    }
    dts.sort_by(f64::total_cmp);
    dts[dts.len() / 2]
}

/// Merges measurements into the IMU timeline. A measurement within
/// `snap · nominal Δt` of a sample is applied right after that sample's
/// prediction; otherwise a step ending exactly at the measurement time is
/// inserted, driven by the reading of the sample that closes the interval.
fn build_timeline(imu: &[ImuSample], meas: &[Measurement], snap: f64) -> (Vec<Step>, usize) {
    let nominal = median_step(imu);
    let first = imu[0].t;
    let last = imu[imu.len() - 1].t;

    let mut order: Vec<usize> = (0..meas.len()).collect();
    order.sort_by(|&a, &b| meas[a].t.total_cmp(&meas[b].t));

    let mut attached: Vec<Vec<usize>> = vec![Vec::new(); imu.len()];
    // (interval index k, time, measurement) for insertions inside (t_{k-1}, t_k)
    let mut inserted: Vec<(usize, f64, usize)> = Vec::new();
    let mut dropped = 0;
    for j in order {
        let t = meas[j].t;
        if t < first || t > last {
            dropped += 1;
            continue;
        }
        let k = imu.partition_point(|s| s.t < t);
        let nearest = if k == 0 {
            0
        } else if k == imu.len() || (t - imu[k - 1].t) <= (imu[k].t - t) {
            k - 1
        } else {
            k
        };
        if (t - imu[nearest].t).abs() <= snap * nominal {
            attached[nearest].push(j);
        } else {
            inserted.push((k, t, j));
        }
    }

    let mut steps = Vec::with_capacity(imu.len() + inserted.len());
    steps.push(Step {
        t: first,
        dt: 0.0,
        sample: imu[0],
        imu_index: Some(0),
        measurements: std::mem::take(&mut attached[0]),
    });
    let mut ins = inserted.into_iter().peekable();
    for k in 1..imu.len() {
        let mut prev_t = imu[k - 1].t;
        while let Some(&(interval, t, j)) = ins.peek() {
            if interval != k {
                break;
            }
            ins.next();
            match steps.last_mut() {
                Some(s) if s.imu_index.is_none() && s.t == t => s.measurements.push(j),
                _ => {
                    steps.push(Step {
                        t,
                        dt: t - prev_t,
                        sample: imu[k],
                        imu_index: None,
                        measurements: vec![j],
                    });
                    prev_t = t;
                }
            }
        }
        steps.push(Step {
            t: imu[k].t,
            dt: imu[k].t - prev_t,
            sample: imu[k],
            imu_index: Some(k),
            measurements: std::mem::take(&mut attached[k]),
        });
    }
    (steps, dropped)
}

/// Runs the EKF over the whole IMU stream and stores predicted and filtered
/// moments for every step.
///
/// The prior applies at the first IMU timestamp. Measurements are applied in
/// time order after the prediction that reaches them; the speed constraint,
/// when configured, is checked after every prediction.
pub fn forward_pass(
    imu: &[ImuSample],
    meas: &[Measurement],
    prior: &GaussianEstimate,
    config: &FusionConfig,
) -> Result<FilterHistory> {
    if imu.is_empty() {
        return Err(invalid("empty IMU stream"));
    }
    validate_stream(imu)?;
    for m in meas {
        m.validate()?;
    }
    let (steps, dropped) = build_timeline(imu, meas, config.snap_fraction);
    if dropped > 0 {
        warn!("{dropped} measurements outside the IMU time span were dropped");
    }

    let speed_limit = match config.speed_limit {
        Some(s) => Some((Measurement::speed_limit(0.0, s.max_speed, s.sigma * s.sigma)?, s.interval)),
        None => None,
    };

    let mut history = FilterHistory {
        records: Vec::with_capacity(steps.len()),
        dropped_measurements: dropped,
        ..FilterHistory::default()
    };
    let mut current = *prior;
    let mut last_speed_check: Option<f64> = None;
    for (i, step) in steps.iter().enumerate() {
        let (predicted, transition) = if i == 0 {
            (current, None)
        } else {
            let (p, j) = predict_with_jacobian(&current, &step.sample, step.dt, &config.constants)
                .map_err(|e| match e {
                    Error::NonFiniteCovariance { .. } => Error::NonFiniteCovariance { step: i },
                    other => other,
                })?;
            (p, Some(j))
        };
        let mut filtered = predicted;
        let mut updates = 0;
        for &j in &step.measurements {
            let out = ekf_update(&filtered, &meas[j])?;
            if out.applied {
                updates += 1;
                filtered = out.estimate;
            } else {
                history.skipped_updates += 1;
            }
        }
        if let Some((limit, interval)) = &speed_limit {
            let due = last_speed_check.is_none_or(|t| step.t - t >= interval - 1e-9);
            if due {
                last_speed_check = Some(step.t);
                let out = ekf_update(&filtered, limit)?;
                if out.applied {
                    updates += 1;
                    history.speed_limit_updates += 1;
                    filtered = out.estimate;
                }
            }
        }
        if !filtered.is_finite() {
            return Err(Error::NonFiniteCovariance { step: i });
        }
        history.applied_updates += updates as usize;
        history.records.push(StepRecord {
            t: step.t,
            imu_index: step.imu_index,
            predicted,
            filtered,
            transition,
            updates,
        });
        current = filtered;
    }
    Ok(history)
}
