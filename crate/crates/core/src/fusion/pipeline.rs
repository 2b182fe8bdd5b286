//! The full odometry stream: attitude, network inference, status debouncing
//! and the status-switched observers over one recorded flight.

use serde::{Deserialize, Serialize};

use super::observer::{fusion_step, takeoff_reset, FusionState, GainConfig, MeasurementBundle};
use super::status::{Hysteresis, StatusFilter};
use crate::error::{Error, Result};
use crate::estimators::{initial_attitude, pressure_to_altitude, AttitudeGains, AttitudeObserver, AtmosphereParams};
use crate::geometry::{gravity_ned, Rotation, Vec3};
use crate::nn::{make_windows, session_features, window_input, FeatureBuilder, Model, NetworkKind};
use crate::record::{FlightRecord, FlightStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdometryConfig {
    pub gains: GainConfig,
    pub attitude: AttitudeGains,
    pub hysteresis: Hysteresis,
    /// Base-grid ticks between network evaluations; outputs are held in between.
    pub inference_stride: usize,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            gains: GainConfig::default(),
            attitude: AttitudeGains::default(),
            hysteresis: Hysteresis::default(),
            inference_stride: 8,
        }
    }
}

impl OdometryConfig {
    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        self.attitude.validate()?;
        self.hysteresis.validate()?;
        if self.inference_stride == 0 {
            return Err(Error::Config("fusion.inference_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trained networks feeding the observers.
#[derive(Debug, Clone, Copy)]
pub struct NetworkSet<'a> {
    pub velocity: &'a Model,
    pub acceleration: &'a Model,
    pub status: &'a Model,
}

impl NetworkSet<'_> {
    fn check(&self) -> Result<()> {
        for (m, kind) in [
            (self.velocity, NetworkKind::Velocity),
            (self.acceleration, NetworkKind::Acceleration),
            (self.status, NetworkKind::Status),
        ] {
            if m.kind != kind {
                return Err(Error::Dataset(format!(
                    "{} weights supplied where the {} network was expected",
                    m.kind.name(),
                    kind.name()
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth standing in for the networks, with an optional injected
/// body-frame offset on the velocity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleOptions {
    pub velocity_bias: Vec3,
}

#[derive(Debug, Clone, Copy)]
pub enum Estimators<'a> {
    Networks(NetworkSet<'a>),
    Oracle(OracleOptions),
}

/// One row of the estimates output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub t: f64,
    pub state: FusionState,
    pub status: FlightStatus,
    /// Accelerometer-only dead-reckoned position, m.
    pub dead_reckoning: Vec3,
}

/// Per-tick outputs of a run plus the measurements that produced them.
#[derive(Debug, Clone)]
pub struct Odometry {
    pub estimates: Vec<Estimate>,
    pub attitude: Vec<Rotation>,
    /// Velocity estimate fed to the observer, body frame.
    pub velocity_measurement: Vec<Option<Vec3>>,
    pub acceleration_measurement: Vec<Option<Vec3>>,
    /// Raw classifier probability of being airborne.
    pub air_probability: Vec<Option<f64>>,
}

/// Hold the latest prediction: `out[i]` is the value of the last window
/// ending at or before tick `i`.
fn hold(n: usize, ends: impl Iterator<Item = usize>, values: &[f64], k: usize) -> Vec<Option<Vec<f64>>> {
    let mut out = vec![None; n];
    let mut marks: Vec<(usize, &[f64])> = ends.zip(values.chunks_exact(k)).collect();
    marks.sort_by_key(|m| m.0);
    let mut current: Option<Vec<f64>> = None;
    let mut next = marks.iter().peekable();
    for (i, slot) in out.iter_mut().enumerate() {
        while let Some((e, v)) = next.peek() {
            if *e > i {
                break;
            }
            current = Some(v.to_vec());
            next.next();
        }
        *slot = current.clone();
    }
    out
}

/// Network outputs on the decimated grid for a network whose input does not
/// depend on the running estimate.
fn offline_predictions(
    model: &Model,
    records: &[FlightRecord],
    atmosphere: &AtmosphereParams,
    stride: usize,
) -> Result<Vec<Option<Vec<f64>>>> {
    let features = session_features(model.kind, records, atmosphere, None)?;
    let window = model.spec.sequence_length;
    if features.len() < window {
        return Ok(vec![None; records.len()]);
    }
    let set = make_windows(vec![features], window, stride)?;
    let idx: Vec<usize> = (0..set.len()).collect();
    let values = model.predict_windows(&set, &idx, 128)?;
    let ends = set.ends.iter().map(|e| e.1);
    Ok(hold(records.len(), ends, &values, model.spec.output_units()))
}

/// Mean spacing of barometer samples, s.
fn mean_baro_interval(records: &[FlightRecord]) -> f64 {
    let mut ticks = records.iter().filter(|r| r.pressure.is_some()).map(|r| r.t);
    let first = ticks.next();
    let (count, last) = ticks.fold((0usize, first), |(c, _), t| (c + 1, Some(t)));
    match (first, last) {
        (Some(a), Some(b)) if count > 0 => (b - a) / count as f64,
        _ => records[1].t - records[0].t,
    }
}

fn first_baro(records: &[FlightRecord], atmosphere: &AtmosphereParams) -> Result<f64> {
    let p = records
        .iter()
        .find_map(|r| r.pressure)
        .ok_or_else(|| Error::Dataset("flight has no barometer samples".into()))?;
    Ok(-pressure_to_altitude(p, atmosphere)?)
}

/// Attitude from the accelerometer and magnetometer means over the first
/// `seconds` of the flight, and the gyro mean over the same interval, which
/// is the gyro bias of a vehicle at rest.
fn startup_attitude(records: &[FlightRecord], seconds: f64, earth_field: &Vec3) -> Result<(Rotation, Vec3)> {
    let t0 = records[0].t;
    let early = records.iter().take_while(|r| r.t - t0 < seconds.max(1e-9));
    let mut sums = [(Vec3::zeros(), 0usize); 3];
    for r in early {
        for (slot, v) in sums.iter_mut().zip([r.accel, r.mag, r.gyro]) {
            if let Some(v) = v {
                slot.0 += v;
                slot.1 += 1;
            }
        }
    }
    let mean = |(sum, n): (Vec3, usize)| (n > 0).then(|| sum / n as f64);
    let acc = mean(sums[0]).ok_or_else(|| Error::Dataset("no accelerometer samples to initialise the attitude".into()))?;
    let rotation = initial_attitude(&acc, mean(sums[1]).as_ref(), earth_field)?;
    Ok((rotation, mean(sums[2]).unwrap_or_default()))
}

fn truth_of(rec: &FlightRecord, i: usize) -> Result<&crate::record::GroundTruth> {
    rec.truth
        .as_ref()
        .ok_or_else(|| Error::Dataset(format!("row {i} has no ground truth, which oracle mode requires")))
}

/// Run the odometry over one flight. `earth_field` is the reference magnetic
/// field used by the attitude observer.
pub fn run_odometry(
    records: &[FlightRecord],
    estimators: Estimators,
    cfg: &OdometryConfig,
    atmosphere: &AtmosphereParams,
    earth_field: &Vec3,
) -> Result<Odometry> {
    cfg.validate()?;
    if records.len() < 2 {
        return Err(Error::Dataset("a flight needs at least two samples".into()));
    }
    for (i, w) in records.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(Error::Data {
                path: "<records>".into(),
                row: i + 1,
                message: "timestamps must increase strictly".into(),
            });
        }
    }
    let n = records.len();
    let stride = cfg.inference_stride;
    let baro_interval = mean_baro_interval(records);

    let (velocity_pred, status_pred) = match estimators {
        Estimators::Networks(nets) => {
            nets.check()?;
            (
                offline_predictions(nets.velocity, records, atmosphere, stride)?,
                offline_predictions(nets.status, records, atmosphere, stride)?,
            )
        }
        Estimators::Oracle(_) => (vec![None; n], vec![None; n]),
    };
    let mut accel_features = match estimators {
        Estimators::Networks(nets) => Some((nets.acceleration, FeatureBuilder::new(NetworkKind::Acceleration, atmosphere, false))),
        Estimators::Oracle(_) => None,
    };

    let (r0, gyro_bias) = startup_attitude(records, cfg.attitude.startup, earth_field)?;
    let mut attitude = AttitudeObserver::new(r0, cfg.attitude, *earth_field);
    attitude.state.gyro_bias = gyro_bias;
    let mut state = FusionState::at_rest(Vec3::new(0.0, 0.0, first_baro(records, atmosphere)?));
    let mut status_filter = StatusFilter::new(cfg.hysteresis, FlightStatus::OnGround);
    let mut status = FlightStatus::OnGround;
    let mut last_baro: Option<f64> = None;
    let mut accel_net: Option<Vec3> = None;
    let (mut dr_v, mut dr_p) = (Vec3::zeros(), state.position);

    let mut out = Odometry {
        estimates: Vec::with_capacity(n),
        attitude: Vec::with_capacity(n),
        velocity_measurement: Vec::with_capacity(n),
        acceleration_measurement: Vec::with_capacity(n),
        air_probability: Vec::with_capacity(n),
    };

    for (i, rec) in records.iter().enumerate() {
        let dt = if i == 0 { 0.0 } else { rec.t - records[i - 1].t };
        let r_hat = match (rec.accel, rec.gyro) {
            (Some(a), Some(g)) if dt > 0.0 => attitude.update(a, g, rec.mag, state.acceleration, dt).rotation,
            _ => attitude.state.rotation,
        };
        let baro = match rec.pressure {
            Some(p) => Some(-pressure_to_altitude(p, atmosphere)?),
            None => None,
        };
        if baro.is_some() {
            last_baro = baro;
        }

        let (velocity, acceleration, p_air, new_status) = match estimators {
            Estimators::Oracle(opts) => {
                let truth = truth_of(rec, i)?;
                (
                    Some(truth.body_velocity() + opts.velocity_bias),
                    Some(truth.acceleration),
                    None,
                    truth.status,
                )
            }
            Estimators::Networks(_) => {
                let (model, builder) = accel_features.as_mut().expect("networks carry a feature builder");
                builder.push(rec, Some(&r_hat))?;
                let window = model.spec.sequence_length;
                if i + 1 >= window && (i + 1 - window) % stride == 0 {
                    let x = window_input(builder.features(), i, window, &model.normalization)?;
                    let y = model.predict_normalized(&x)?;
                    let d = y.data();
                    if d.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Numerical(format!("acceleration network output is not finite at t = {}", rec.t)));
                    }
                    accel_net = Some(Vec3::new(d[0], d[1], d[2]));
                }
                let p = status_pred[i].as_ref().map(|p| p[1]);
                let s = status_filter.update(rec.t, p.unwrap_or(0.0));
                (velocity_pred[i].as_ref().map(|v| Vec3::new(v[0], v[1], v[2])), accel_net, p, s)
            }
        };

        if status == FlightStatus::OnGround && new_status == FlightStatus::InAir {
            if let Some(h) = last_baro {
                state = takeoff_reset(&state, h);
            }
        }
        status = new_status;

        if dt > 0.0 {
            let bundle = MeasurementBundle {
                t: rec.t,
                accel: rec.accel,
                attitude: Some(r_hat),
                velocity,
                acceleration,
                baro,
                baro_interval,
                status,
            };
            state = fusion_step(&state, &bundle, &cfg.gains, dt)?;
            if let Some(a) = rec.accel {
                dr_p += dr_v * dt;
                dr_v += (r_hat.apply(&a) + gravity_ned()) * dt;
            }
        }
        if !state.is_finite() {
            return Err(Error::Numerical(format!("observer state became non-finite at t = {}", rec.t)));
        }
        out.estimates.push(Estimate {
            t: rec.t,
            state,
            status,
            dead_reckoning: dr_p,
        });
        out.attitude.push(r_hat);
        out.velocity_measurement.push(velocity);
        out.acceleration_measurement.push(acceleration);
        out.air_probability.push(p_air);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn held_predictions_follow_the_latest_window() {
        let h = hold(6, [1usize, 4].into_iter(), &[10.0, 20.0], 1);
        let flat: Vec<Option<f64>> = h.iter().map(|v| v.as_ref().map(|v| v[0])).collect();
        assert_eq!(flat, vec![None, Some(10.0), Some(10.0), Some(10.0), Some(20.0), Some(20.0)]);
    }
}
