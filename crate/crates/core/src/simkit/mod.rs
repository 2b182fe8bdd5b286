//! Ground-truth flight generation and multirate sensor synthesis.

pub mod sensors;
pub mod trajectory;
pub mod vehicle;

pub use sensors::{synthesize_sensors, BiasSpec, NoiseSpec, SensorRig};
pub use trajectory::{
    generate_trajectory, SampleRates, ScenarioConfig, Trajectory, TrajectoryStyle, TruthSample, TruthSeries,
};
pub use vehicle::{
    ground_effect_factor, induced_velocity, quad_accel_forward, rotor_lag_step, VehicleParams,
};
