//! Drift, RMSE, bias-convergence and status-timing metrics of an odometry run.

use serde::{Deserialize, Serialize};

use super::pipeline::Estimate;
use super::status::transitions;
use crate::error::{Error, Result};
use crate::estimators::{pressure_to_altitude, AtmosphereParams};
use crate::geometry::Vec3;
use crate::record::{FlightRecord, FlightStatus};

/// Biases injected into a synthetic flight, in the units the simulator uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasTruth {
    /// Accelerometer bias, body frame, m/s².
    pub accel_body: Vec3,
    /// Offset added to the velocity estimate, body frame, m/s.
    pub velocity_body: Vec3,
    /// Barometric altitude bias at t = 0, m.
    pub baro: f64,
    /// Barometric altitude bias drift, m/s.
    pub baro_rate: f64,
}

impl BiasTruth {
    /// The barometer bias in the observer's down-axis convention.
    pub fn baro_down(&self, t: f64) -> f64 {
        -(self.baro + self.baro_rate * t)
    }
}

/// Earliest time from which each bias estimate stays inside its tolerance
/// until the end of the run; `None` when it never settles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConvergence {
    pub accel_s: Option<f64>,
    pub velocity_z_s: Option<f64>,
    pub baro_s: Option<f64>,
}

/// Final-sample estimation errors of the biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasErrors {
    pub accel: [f64; 3],
    pub velocity_z: f64,
    pub baro: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalBias {
    pub accel: [f64; 3],
    pub velocity_z: f64,
    pub baro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionError {
    pub truth_s: f64,
    pub estimated_s: Option<f64>,
    pub error_s: Option<f64>,
    pub status: FlightStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub transitions_s: Vec<f64>,
    pub frame_accuracy: Option<f64>,
    pub timing: Option<Vec<TransitionError>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub duration_s: f64,
    /// Final position error norm, m; vertical error against the barometer
    /// when the flight carries no ground truth.
    pub drift_m: f64,
    pub drift_axis_m: [Option<f64>; 3],
    pub position_rmse_m: Option<[f64; 3]>,
    pub velocity_rmse_mps: Option<[f64; 3]>,
    pub max_position_error_m: Option<f64>,
    pub max_vertical_error_m: Option<f64>,
    pub dead_reckoning_drift_m: Option<f64>,
    pub final_bias: FinalBias,
    pub bias_error: Option<BiasErrors>,
    pub bias_convergence_s: Option<BiasConvergence>,
    pub status: StatusReport,
}

/// Relative tolerance for accelerometer and velocity bias convergence.
pub const BIAS_RELATIVE_TOLERANCE: f64 = 0.1;
/// Absolute tolerance for barometer bias convergence, m.
pub const BARO_TOLERANCE: f64 = 0.05;

fn settle_time(t: &[f64], ok: impl Iterator<Item = bool>) -> Option<f64> {
    let flags: Vec<bool> = ok.collect();
    if !flags.last().copied().unwrap_or(false) {
        return None;
    }
    let first_bad_from_end = flags.iter().rposition(|f| !f);
    Some(match first_bad_from_end {
        Some(i) => t[i + 1],
        None => t[0],
    })
}

fn rmse(sum_sq: Vec3, n: usize) -> [f64; 3] {
    let m = sum_sq / n.max(1) as f64;
    [m.x.sqrt(), m.y.sqrt(), m.z.sqrt()]
}

/// Metrics of `estimates` against the flight they were computed from. The
/// estimates must share the flight's timestamps.
pub fn compute_metrics(
    estimates: &[Estimate],
    records: &[FlightRecord],
    atmosphere: &AtmosphereParams,
    bias_truth: Option<&BiasTruth>,
) -> Result<Metrics> {
    if estimates.is_empty() || estimates.len() != records.len() {
        return Err(Error::Dataset(format!(
            "{} estimates for {} flight samples",
            estimates.len(),
            records.len()
        )));
    }
    if let Some(i) = estimates.iter().zip(records).position(|(e, r)| e.t != r.t) {
        return Err(Error::Dataset(format!(
            "estimate timestamp {} differs from flight timestamp {} at row {i}",
            estimates[i].t, records[i].t
        )));
    }
    let n = estimates.len();
    let t: Vec<f64> = estimates.iter().map(|e| e.t).collect();
    let last = &estimates[n - 1];
    let est_status: Vec<FlightStatus> = estimates.iter().map(|e| e.status).collect();
    let final_bias = FinalBias {
        accel: last.state.accel_bias.into(),
        velocity_z: last.state.velocity_bias.z,
        baro: last.state.baro_bias,
    };
    let has_truth = records.iter().all(|r| r.truth.is_some());

    if !has_truth {
        let h = records
            .iter()
            .rev()
            .find_map(|r| r.pressure)
            .ok_or_else(|| Error::Dataset("flight has neither ground truth nor barometer samples".into()))?;
        let dz = (last.state.position.z + pressure_to_altitude(h, atmosphere)?).abs();
        return Ok(Metrics {
            samples: n,
            duration_s: t[n - 1] - t[0],
            drift_m: dz,
            drift_axis_m: [None, None, Some(dz)],
            position_rmse_m: None,
            velocity_rmse_mps: None,
            max_position_error_m: None,
            max_vertical_error_m: None,
            dead_reckoning_drift_m: None,
            final_bias,
            bias_error: None,
            bias_convergence_s: None,
            status: StatusReport {
                transitions_s: transitions(&t, &est_status).iter().map(|x| x.0).collect(),
                frame_accuracy: None,
                timing: None,
            },
        });
    }

    let truth: Vec<_> = records.iter().map(|r| r.truth.expect("checked above")).collect();
    let (mut sp, mut sv) = (Vec3::zeros(), Vec3::zeros());
    let (mut max_p, mut max_z) = (0.0f64, 0.0f64);
    for (e, g) in estimates.iter().zip(&truth) {
        let dp = e.state.position - g.position;
        let dv = e.state.velocity - g.velocity;
        sp += dp.component_mul(&dp);
        sv += dv.component_mul(&dv);
        max_p = max_p.max(dp.norm());
        max_z = max_z.max(dp.z.abs());
    }
    let end = last.state.position - truth[n - 1].position;
    let dr = (last.dead_reckoning - truth[n - 1].position).norm();

    let (bias_error, bias_convergence_s) = match bias_truth {
        Some(b) => {
            let accel_truth = |i: usize| truth[i].attitude().apply(&b.accel_body);
            let velocity_truth = |i: usize| truth[i].attitude().apply(&b.velocity_body).z;
            let a_tol = BIAS_RELATIVE_TOLERANCE * b.accel_body.norm();
            let v_tol = BIAS_RELATIVE_TOLERANCE * b.velocity_body.z.abs();
            let conv = BiasConvergence {
                accel_s: settle_time(
                    &t,
                    (0..n).map(|i| (estimates[i].state.accel_bias - accel_truth(i)).norm() <= a_tol),
                ),
                velocity_z_s: settle_time(
                    &t,
                    (0..n).map(|i| (estimates[i].state.velocity_bias.z - velocity_truth(i)).abs() <= v_tol),
                ),
                baro_s: settle_time(
                    &t,
                    (0..n).map(|i| (estimates[i].state.baro_bias - b.baro_down(t[i])).abs() <= BARO_TOLERANCE),
                ),
            };
            let err = BiasErrors {
                accel: (last.state.accel_bias - accel_truth(n - 1)).into(),
                velocity_z: last.state.velocity_bias.z - velocity_truth(n - 1),
                baro: last.state.baro_bias - b.baro_down(t[n - 1]),
            };
            (Some(err), Some(conv))
        }
        None => (None, None),
    };

    let truth_status: Vec<FlightStatus> = truth.iter().map(|g| g.status).collect();
    let agree = est_status.iter().zip(&truth_status).filter(|(a, b)| a == b).count();
    let est_tr = transitions(&t, &est_status);
    let timing = transitions(&t, &truth_status)
        .into_iter()
        .map(|(tt, s)| {
            let nearest = est_tr
                .iter()
                .filter(|(_, es)| *es == s)
                .map(|(et, _)| *et)
                .min_by(|a, b| (a - tt).abs().total_cmp(&(b - tt).abs()));
            TransitionError {
                truth_s: tt,
                estimated_s: nearest,
                error_s: nearest.map(|et| et - tt),
                status: s,
            }
        })
        .collect();

    Ok(Metrics {
        samples: n,
        duration_s: t[n - 1] - t[0],
        drift_m: end.norm(),
        drift_axis_m: [Some(end.x.abs()), Some(end.y.abs()), Some(end.z.abs())],
        position_rmse_m: Some(rmse(sp, n)),
        velocity_rmse_mps: Some(rmse(sv, n)),
        max_position_error_m: Some(max_p),
        max_vertical_error_m: Some(max_z),
        dead_reckoning_drift_m: Some(dr),
        final_bias,
        bias_error,
        bias_convergence_s,
        status: StatusReport {
            transitions_s: est_tr.iter().map(|x| x.0).collect(),
            frame_accuracy: Some(agree as f64 / n as f64),
            timing: Some(timing),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::observer::FusionState;
    use crate::record::GroundTruth;

    fn flight(n: usize) -> Vec<FlightRecord> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.0025;
                let air = (20..n - 20).contains(&i);
                FlightRecord {
                    t,
                    pressure: Some(101_000.0),
                    truth: Some(GroundTruth {
                        position: Vec3::new(t, 0.5 * t, -1.0),
                        velocity: Vec3::new(1.0, 0.5, 0.0),
                        acceleration: Vec3::zeros(),
                        quaternion: [1.0, 0.0, 0.0, 0.0],
                        status: if air { FlightStatus::InAir } else { FlightStatus::OnGround },
                    }),
                    ..FlightRecord::default()
                }
            })
            .collect()
    }

    fn perfect(records: &[FlightRecord], offset: Vec3) -> Vec<Estimate> {
        records
            .iter()
            .map(|r| {
                let g = r.truth.unwrap();
                let mut s = FusionState::at_rest(g.position + offset);
                s.velocity = g.velocity;
                Estimate {
                    t: r.t,
                    state: s,
                    status: g.status,
                    dead_reckoning: g.position,
                }
            })
            .collect()
    }

    #[test]
    fn estimates_equal_to_truth_score_zero() {
        let recs = flight(200);
        let m = compute_metrics(&perfect(&recs, Vec3::zeros()), &recs, &AtmosphereParams::default(), None).unwrap();
        assert_eq!(m.drift_m, 0.0);
        assert_eq!(m.position_rmse_m, Some([0.0; 3]));
        assert_eq!(m.velocity_rmse_mps, Some([0.0; 3]));
        assert_eq!(m.dead_reckoning_drift_m, Some(0.0));
        assert_eq!(m.status.frame_accuracy, Some(1.0));
        for tr in m.status.timing.unwrap() {
            assert_eq!(tr.error_s, Some(0.0));
        }
    }

    #[test]
    fn constant_vertical_offset() {
        let recs = flight(200);
        let m = compute_metrics(&perfect(&recs, Vec3::new(0.0, 0.0, 1.0)), &recs, &AtmosphereParams::default(), None).unwrap();
        assert_eq!(m.drift_m, 1.0);
        assert_eq!(m.drift_axis_m, [Some(0.0), Some(0.0), Some(1.0)]);
        assert_eq!(m.position_rmse_m, Some([0.0, 0.0, 1.0]));
    }

    #[test]
    fn flights_without_truth_report_baro_drift_only() {
        let mut recs = flight(50);
        for r in recs.iter_mut() {
            r.truth = None;
        }
        let est: Vec<Estimate> = recs
            .iter()
            .map(|r| Estimate {
                t: r.t,
                state: FusionState::at_rest(Vec3::zeros()),
                status: FlightStatus::OnGround,
                dead_reckoning: Vec3::zeros(),
            })
            .collect();
        let atm = AtmosphereParams::default();
        let m = compute_metrics(&est, &recs, &atm, None).unwrap();
        let h = pressure_to_altitude(101_000.0, &atm).unwrap();
        assert!((m.drift_m - h).abs() < 1e-12);
        assert!(m.position_rmse_m.is_none() && m.velocity_rmse_mps.is_none());
    }

    #[test]
    fn settle_time_is_the_start_of_the_final_good_run() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(settle_time(&t, [false, true, false, true, true].into_iter()), Some(3.0));
        assert_eq!(settle_time(&t, [true; 5].into_iter()), Some(0.0));
        assert_eq!(settle_time(&t, [true, true, true, true, false].into_iter()), None);
    }

    #[test]
    fn mismatched_timestamps_are_rejected() {
        let recs = flight(30);
        let mut est = perfect(&recs, Vec3::zeros());
        est[7].t += 1e-3;
        assert!(compute_metrics(&est, &recs, &AtmosphereParams::default(), None).is_err());
        assert!(compute_metrics(&est[..10], &recs, &AtmosphereParams::default(), None).is_err());
    }
}
