//! On-ground and in-air fusion observers with accelerometer, velocity-net and
//! barometer bias states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gravity_ned, Rotation, Vec3};
use crate::record::{FlightStatus, BASE_DT};

/// Diagonal observer gains plus the accelerometer/network blend `alpha` and
/// the baro-rate factor `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainConfig {
    pub k0: [f64; 3],
    pub k1: [f64; 3],
    pub k2: [f64; 3],
    pub k3: [f64; 3],
    pub k4: [f64; 3],
    pub k5: [f64; 3],
    pub k6: [f64; 3],
    pub alpha: f64,
    pub beta: f64,
}

const E: [f64; 3] = [1.0, 1.0, 1.0];
const F: [f64; 3] = [0.0, 0.0, 1.0];

fn scaled(c: f64, m: [f64; 3]) -> [f64; 3] {
    [c * m[0], c * m[1], c * m[2]]
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            k0: scaled(0.001, E),
            k1: scaled(0.9, E),
            k2: scaled(0.01, F),
            k3: scaled(0.01, E),
            k4: scaled(0.001, E),
            k5: scaled(0.005, F),
            k6: scaled(0.005, F),
            alpha: 0.0,
            beta: 0.4,
        }
    }
}

impl GainConfig {
    pub fn validate(&self) -> Result<()> {
        let diagonals = [
            ("k0", self.k0),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("k5", self.k5),
            ("k6", self.k6),
        ];
        for (name, d) in diagonals {
            if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("gains.{name} entries must be finite and nonnegative, got {d:?}")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("gains.alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("gains.beta must be nonnegative, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Diagonal gain times vector.
fn diag(k: &[f64; 3], v: &Vec3) -> Vec3 {
    Vec3::new(k[0] * v.x, k[1] * v.y, k[2] * v.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionState {
    /// Inertial position, m.
    pub position: Vec3,
    /// Inertial velocity, m/s.
    pub velocity: Vec3,
    /// Inertial acceleration used by the last update, m/s².
    pub acceleration: Vec3,
    /// Lumped accelerometer bias, inertial frame, m/s².
    pub accel_bias: Vec3,
    /// Velocity-network output bias, m/s.
    pub velocity_bias: Vec3,
    /// Barometer bias as a down-axis offset `h − P_z`, m.
    pub baro_bias: f64,
    /// Rate of the barometer bias, m/s.
    pub baro_bias_rate: f64,
}

impl FusionState {
    /// At rest at `position` with all biases zero.
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            accel_bias: Vec3::zeros(),
            velocity_bias: Vec3::zeros(),
            baro_bias: 0.0,
            baro_bias_rate: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        let v = [self.position, self.velocity, self.acceleration, self.accel_bias, self.velocity_bias];
        v.iter().all(|x| x.iter().all(|c| c.is_finite())) && self.baro_bias.is_finite() && self.baro_bias_rate.is_finite()
    }
}

/// Everything the observers may consume on one base-grid tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementBundle {
    pub t: f64,
    /// Accelerometer specific force, body frame, m/s².
    pub accel: Option<Vec3>,
    /// Attitude estimate.
    pub attitude: Option<Rotation>,
    /// Velocity-network output, body frame, m/s.
    pub velocity: Option<Vec3>,
    /// Acceleration-network output, inertial frame, m/s².
    pub acceleration: Option<Vec3>,
    /// Barometric height as a down-axis coordinate (minus the pressure
    /// altitude), m.
    pub baro: Option<f64>,
    /// Time covered by one barometer sample, s; baro corrections are
    /// integrated over this interval on the ticks that carry a sample.
    pub baro_interval: f64,
    pub status: FlightStatus,
}

impl MeasurementBundle {
    pub fn empty(t: f64, status: FlightStatus) -> Self {
        Self {
            t,
            accel: None,
            attitude: None,
            velocity: None,
            acceleration: None,
            baro: None,
            baro_interval: 2.0 * BASE_DT,
            status,
        }
    }
}

fn check_step(m: &MeasurementBundle, expected: FlightStatus, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("observer step needs dt > 0, got {dt}")));
    }
    if m.status != expected {
        return Err(Error::Domain(format!(
            "{expected:?} observer called with a {:?} measurement at t = {}",
            m.status, m.t
        )));
    }
    Ok(())
}

/// `g·k0 + R̂·a_m − b̂_a`, when both the attitude and the accelerometer are present.
fn imu_acceleration(s: &FusionState, m: &MeasurementBundle) -> Option<Vec3> {
    match (m.accel, m.attitude) {
        (Some(a), Some(r)) => Some(gravity_ned() + r.apply(&a) - s.accel_bias),
        _ => None,
    }
}

/// On-ground observer: velocity is pulled to zero and its integral feeds the
/// accelerometer bias; the barometer states are frozen.
pub fn ground_step(s: &FusionState, m: &MeasurementBundle, gains: &GainConfig, dt: f64) -> Result<FusionState> {
    check_step(m, FlightStatus::OnGround, dt)?;
    let accel = imu_acceleration(s, m).unwrap_or(s.acceleration);
    Ok(FusionState {
        position: s.position + s.velocity * dt,
        velocity: s.velocity + (accel - diag(&gains.k1, &s.velocity)) * dt,
        acceleration: accel,
        accel_bias: s.accel_bias + diag(&gains.k0, &s.velocity) * dt,
        ..*s
    })
}

/// Velocity and altitude innovations of the in-air observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovations {
    /// `V̂ − R̂·v_w + b̂_w`, when the network output and attitude are present.
    pub velocity: Option<Vec3>,
    /// `(P̂_z − h + b̂_b)·k0`, on barometer ticks. Only the altitude channel
    /// is populated.
    pub position: Option<Vec3>,
}

pub fn innovations(s: &FusionState, m: &MeasurementBundle) -> Innovations {
    let velocity = match (m.velocity, m.attitude) {
        (Some(v), Some(r)) => Some(s.velocity - r.apply(&v) + s.velocity_bias),
        _ => None,
    };
    let position = m.baro.map(|h| Vec3::new(0.0, 0.0, s.position.z - h + s.baro_bias));
    Innovations { velocity, position }
}

/// Correction rates driven by the innovations; each is linear in them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corrections {
    /// Subtracted from the position rate: `k2·e_p`.
    pub position: Vec3,
    /// Subtracted from the velocity rate: `k3·e_v`.
    pub velocity: Vec3,
    /// Added to the accelerometer-bias rate: `k4·e_v + k5·e_p`.
    pub accel_bias: Vec3,
    /// Subtracted from the velocity-bias rate: `k6·e_v`.
    pub velocity_bias: Vec3,
    /// Subtracted from the baro-bias acceleration: `β·k5·e_p` (altitude axis).
    pub baro_bias_rate: f64,
}

/// Correction terms split into the velocity part (applied over `dt`) and the
/// barometer part (applied over the baro interval).
pub fn corrections(e: &Innovations, gains: &GainConfig) -> (Corrections, Corrections) {
    let zero = Vec3::zeros();
    let ev = e.velocity.unwrap_or(zero);
    let ep = e.position.unwrap_or(zero);
    let vel = Corrections {
        position: zero,
        velocity: diag(&gains.k3, &ev),
        accel_bias: diag(&gains.k4, &ev),
        velocity_bias: diag(&gains.k6, &ev),
        baro_bias_rate: 0.0,
    };
    let baro = Corrections {
        position: diag(&gains.k2, &ep),
        velocity: zero,
        accel_bias: diag(&gains.k5, &ep),
        velocity_bias: zero,
        baro_bias_rate: gains.beta * gains.k5[2] * ep.z,
    };
    (vel, baro)
}

/// In-air observer. The acceleration is the `alpha` blend of the corrected
/// accelerometer and the learned estimate; velocity corrections are skipped
/// on ticks without a velocity estimate and baro corrections on ticks
/// without a barometer sample.
pub fn air_step(s: &FusionState, m: &MeasurementBundle, gains: &GainConfig, dt: f64) -> Result<FusionState> {
    check_step(m, FlightStatus::InAir, dt)?;
    let imu = imu_acceleration(s, m);
    let accel = match (m.acceleration, imu) {
        (Some(ap), Some(ai)) => ai * gains.alpha + ap * (1.0 - gains.alpha),
        (Some(ap), None) if gains.alpha == 0.0 => ap,
        (None, Some(ai)) => ai,
        _ => s.acceleration,
    };
    let e = innovations(s, m);
    let (cv, cb) = corrections(&e, gains);
    let db = if e.position.is_some() { m.baro_interval } else { 0.0 };
    Ok(FusionState {
        position: s.position + (s.velocity * dt - cb.position * db),
        velocity: s.velocity + (accel - cv.velocity) * dt,
        acceleration: accel,
        accel_bias: s.accel_bias + cv.accel_bias * dt + cb.accel_bias * db,
        velocity_bias: s.velocity_bias - cv.velocity_bias * dt,
        baro_bias: s.baro_bias + s.baro_bias_rate * dt,
        baro_bias_rate: s.baro_bias_rate - cb.baro_bias_rate * db,
    })
}

/// Dispatch on the bundle's status.
pub fn fusion_step(s: &FusionState, m: &MeasurementBundle, gains: &GainConfig, dt: f64) -> Result<FusionState> {
    match m.status {
        FlightStatus::OnGround => ground_step(s, m, gains, dt),
        FlightStatus::InAir => air_step(s, m, gains, dt),
    }
}

/// Re-anchor the barometer bias at takeoff so the altitude innovation starts at zero.
pub fn takeoff_reset(s: &FusionState, baro: f64) -> FusionState {
    FusionState {
        baro_bias: baro - s.position.z,
        baro_bias_rate: 0.0,
        ..*s
    }
}
