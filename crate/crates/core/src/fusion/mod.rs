//! Airflow-inertial fusion: the on-ground and in-air observers, status
//! debouncing and the end-to-end odometry run.

pub mod metrics;
pub mod observer;
pub mod pipeline;
pub mod status;

pub use metrics::{compute_metrics, BiasConvergence, BiasTruth, Metrics};
pub use observer::{
    air_step, corrections, fusion_step, ground_step, innovations, takeoff_reset, Corrections, FusionState, GainConfig,
    Innovations, MeasurementBundle,
};
pub use pipeline::{run_odometry, Estimate, Estimators, NetworkSet, Odometry, OdometryConfig, OracleOptions};
pub use status::{status_with_hysteresis, transitions, Hysteresis, StatusFilter};
