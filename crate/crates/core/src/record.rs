//! One row of a multirate flight log.

use serde::{Deserialize, Serialize};

use crate::geometry::{Rotation, Vec3};

/// Base sampling grid shared by every stream, Hz.
pub const BASE_RATE_HZ: f64 = 400.0;
pub const BASE_DT: f64 = 1.0 / BASE_RATE_HZ;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FlightStatus {
    #[default]
    OnGround,
    InAir,
}

impl FlightStatus {
    pub fn as_index(self) -> usize {
        match self {
            FlightStatus::OnGround => 0,
            FlightStatus::InAir => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(FlightStatus::OnGround),
            1 => Some(FlightStatus::InAir),
            _ => None,
        }
    }

    pub fn in_air(self) -> bool {
        self == FlightStatus::InAir
    }
}

/// Ground-truth columns of a log. Absent for real flights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    /// Inertial NED position, m.
    pub position: Vec3,
    /// Inertial velocity, m/s.
    pub velocity: Vec3,
    /// Inertial acceleration, m/s².
    pub acceleration: Vec3,
    /// Body-to-inertial attitude as `(w, x, y, z)`.
    pub quaternion: [f64; 4],
    pub status: FlightStatus,
}

impl GroundTruth {
    pub fn attitude(&self) -> Rotation {
        Rotation::from_quaternion(self.quaternion)
    }

    /// Velocity expressed in the body frame, `Rᵀ·V`.
    pub fn body_velocity(&self) -> Vec3 {
        self.attitude().apply_inverse(&self.velocity)
    }
}

/// A base-grid row; `None` means the sensor produced no sample on this tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlightRecord {
    pub t: f64,
    /// Thermal anemometer channels, m/s.
    pub anemometer: Option<[f64; 4]>,
    /// Accelerometer specific force, body frame, m/s².
    pub accel: Option<Vec3>,
    /// Gyroscope, body frame, rad/s.
    pub gyro: Option<Vec3>,
    /// Magnetometer, body frame, normalized units.
    pub mag: Option<Vec3>,
    /// Static pressure, Pa.
    pub pressure: Option<f64>,
    /// Normalized ESC commands in `[0, 1]`.
    pub esc: Option<[f64; 4]>,
    /// Battery voltage, V.
    pub voltage: Option<f64>,
    /// Battery current, A.
    pub current: Option<f64>,
    pub truth: Option<GroundTruth>,
}
