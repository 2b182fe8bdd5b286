//! Analytic estimators: lever-arm airflow velocity, attitude observer with
//! gyro-bias estimation, and barometric altitude.

pub mod airflow;
pub mod altitude;
pub mod attitude;

pub use airflow::lever_arm_velocity;
pub use altitude::{altitude_to_pressure, pressure_to_altitude, AtmosphereParams};
pub use attitude::{attitude_step, initial_attitude, AttitudeGains, AttitudeObserver, AttitudeState, ImuMeans};
