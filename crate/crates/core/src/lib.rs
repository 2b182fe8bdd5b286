//! Airflow-inertial odometry for multirotor vehicles.
//!
//! The crate simulates full flights with anemometer, IMU, barometer, ESC and
//! battery streams, trains small convolutional/recurrent estimators for body
//! velocity, inertial acceleration and flight status, and fuses them with
//! observer-based ground and air filters that estimate sensor biases.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod flightlog;
pub mod fusion;
pub mod geometry;
pub mod nn;
pub mod record;
pub mod simkit;

pub use error::{Error, Result};
