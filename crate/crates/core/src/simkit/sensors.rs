//! Sensor synthesis: anemometers (with lever arm and rotor downwash), IMU,
//! barometer, ESC commands and battery monitor, decimated to their rates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::altitude::{altitude_to_pressure, AtmosphereParams};
use crate::geometry::{gravity_ned, Mat3, Rotation, Vec3};
use crate::record::{FlightRecord, GroundTruth, BASE_DT};

use super::trajectory::{SampleRates, TruthSeries};
use super::vehicle::{ground_effect_factor, induced_velocity, rotor_lag_step, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// m/s per anemometer channel.
    pub anemometer: f64,
    /// m/s²
    pub accel: f64,
    /// rad/s
    pub gyro: f64,
    /// normalized field units
    pub mag: f64,
    /// Pa
    pub pressure: f64,
    /// normalized command units
    pub esc: f64,
    /// V
    pub voltage: f64,
    /// A
    pub current: f64,
    /// Extra accelerometer noise at full rotor speed, m/s².
    pub accel_vibration: f64,
    /// Extra gyro noise at full rotor speed, rad/s.
    pub gyro_vibration: f64,
    /// Fractional std increase per m/s of airspeed; 0 gives homoscedastic noise.
    pub speed_gain: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            anemometer: 0.05,
            accel: 0.05,
            gyro: 0.003,
            mag: 0.005,
            pressure: 1.0,
            esc: 0.003,
            voltage: 0.01,
            current: 0.03,
            accel_vibration: 0.3,
            gyro_vibration: 0.02,
            speed_gain: 0.0,
        }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            anemometer: 0.0,
            accel: 0.0,
            gyro: 0.0,
            mag: 0.0,
            pressure: 0.0,
            esc: 0.0,
            voltage: 0.0,
            current: 0.0,
            accel_vibration: 0.0,
            gyro_vibration: 0.0,
            speed_gain: 0.0,
        }
    }
}

/// Constant sensor biases plus the barometer's linear drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasSpec {
    /// Accelerometer bias, body frame, m/s².
    pub accel: [f64; 3],
    /// Gyro bias, body frame, rad/s.
    pub gyro: [f64; 3],
    /// Magnetometer bias, body frame.
    pub mag: [f64; 3],
    /// Barometric altitude bias at t = 0, m.
    pub baro: f64,
    /// Barometric altitude bias drift, m/s.
    pub baro_rate: f64,
}

impl Default for BiasSpec {
    fn default() -> Self {
        Self {
            accel: [0.04, -0.03, 0.06],
            gyro: [0.01, -0.02, 0.005],
            mag: [0.0; 3],
            baro: 0.3,
            baro_rate: 0.002,
        }
    }
}

impl BiasSpec {
    pub fn zero() -> Self {
        Self {
            accel: [0.0; 3],
            gyro: [0.0; 3],
            mag: [0.0; 3],
            baro: 0.0,
            baro_rate: 0.0,
        }
    }

    /// Barometric altitude bias at time `t`, m.
    pub fn baro_at(&self, t: f64) -> f64 {
        self.baro + self.baro_rate * t
    }
}

/// Anemometer mount geometry, noise model, biases and the environment the
/// sensors see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorRig {
    /// Sensor-to-body rotation.
    pub r0: Rotation,
    /// Sensor center in the body frame, m.
    pub delta: [f64; 3],
    /// Unit measurement axes in the sensor frame: two horizontal, then the
    /// vertical pair.
    pub channel_axes: [[f64; 3]; 4],
    /// Downwash seen per channel as a fraction of the induced velocity; the
    /// horizontal entries are leakage.
    pub downwash_gain: [f64; 4],
    /// Earth magnetic field direction, inertial frame.
    pub earth_field: [f64; 3],
    pub atmosphere: AtmosphereParams,
    pub noise: NoiseSpec,
    pub bias: BiasSpec,
}

impl Default for SensorRig {
    fn default() -> Self {
        let inclination = 60f64.to_radians();
        Self {
            r0: Rotation::from_euler(0.0, 0.0, std::f64::consts::FRAC_PI_4),
            delta: [0.03, 0.0, -0.06],
            channel_axes: [
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, 0.0, 1.0],
            ],
            downwash_gain: [0.05, 0.05, 1.0, 0.6],
            earth_field: [inclination.cos(), 0.0, inclination.sin()],
            atmosphere: AtmosphereParams::default(),
            noise: NoiseSpec::default(),
            bias: BiasSpec::default(),
        }
    }
}

impl SensorRig {
    /// Ideal rig: no noise, no biases, no downwash, sensor frame at the CoM.
    pub fn ideal() -> Self {
        Self {
            r0: Rotation::identity(),
            delta: [0.0; 3],
            downwash_gain: [0.0; 4],
            noise: NoiseSpec::zero(),
            bias: BiasSpec::zero(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.channel_axes.iter().enumerate() {
            let n = Vec3::from(*a).norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("rig.channel_axes[{i}] is not unit norm")));
            }
        }
        for i in [2, 3] {
            if (self.channel_axes[i][2].abs() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "rig.channel_axes[{i}] must be parallel or antiparallel to the sensor k axis"
                )));
            }
        }
        let m = self.axis_matrix();
        if (m.transpose() * m).determinant().abs() < 1e-9 {
            return Err(Error::Config("rig.channel_axes do not span three dimensions".into()));
        }
        if Vec3::from(self.earth_field).norm() <= 0.0 {
            return Err(Error::Config("rig.earth_field must be nonzero".into()));
        }
        if self.r0.orthonormality_error() > 1e-9 || (self.r0.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("rig.r0 is not a proper rotation".into()));
        }
        self.atmosphere.validate()
    }

    pub fn delta(&self) -> Vec3 {
        Vec3::from(self.delta)
    }

    pub fn earth_field(&self) -> Vec3 {
        Vec3::from(self.earth_field)
    }

    /// Rows are the channel axes; maps a sensor-frame airflow vector to the
    /// four channel readings.
    fn axis_matrix(&self) -> nalgebra::Matrix4x3<f64> {
        nalgebra::Matrix4x3::from_fn(|i, j| self.channel_axes[i][j])
    }

    /// Least-squares sensor-frame vector from the four channel readings. For
    /// the default layout this is `[h1, h2, mean(v1, v2)]`.
    pub fn assemble(&self, channels: &[f64; 4]) -> Vec3 {
        let a = self.axis_matrix();
        let normal: Mat3 = a.transpose() * a;
        let rhs = a.transpose() * nalgebra::Vector4::from(*channels);
        normal
            .try_inverse()
            .map(|inv| inv * rhs)
            .unwrap_or_else(Vec3::zeros)
    }

    /// Noise-free channel readings for a sensor-frame airflow vector and an
    /// effective induced velocity.
    pub fn project(&self, sensor_airflow: &Vec3, downwash: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, axis) in self.channel_axes.iter().enumerate() {
            out[i] = Vec3::from(*axis).dot(sensor_airflow) + self.downwash_gain[i] * downwash;
        }
        out
    }
}

/// Sensor ids keying independent random streams.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Anemometer = 1,
    Accel,
    Gyro,
    Mag,
    Baro,
    Esc,
    Battery,
}

struct Noise {
    rng: ChaCha8Rng,
}

impl Noise {
    fn new(seed: u64, stream: Stream) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        Self { rng }
    }

    fn sample(&mut self, std: f64) -> f64 {
        // Draw unconditionally so streams stay aligned when a std is zero.
        let n: f64 = StandardNormal.sample(&mut self.rng);
        n * std
    }

    fn vec3(&mut self, std: f64) -> Vec3 {
        Vec3::new(self.sample(std), self.sample(std), self.sample(std))
    }
}

/// Produce the multirate sensor log for a ground-truth flight.
pub fn synthesize_sensors(
    truth: &TruthSeries,
    rig: &SensorRig,
    params: &VehicleParams,
    seed: u64,
) -> Result<Vec<FlightRecord>> {
    rig.validate()?;
    params.validate()?;
    let rates: SampleRates = truth.config().rates;
    rates.validate()?;
    let baro_every = SampleRates::decimation(rates.baro);
    let battery_every = SampleRates::decimation(rates.battery);
    let esc_sub = (rates.esc / crate::record::BASE_RATE_HZ).round() as usize;
    let esc_dt = BASE_DT / esc_sub as f64;

    let traj = &truth.trajectory;
    let noise = &rig.noise;
    let bias = &rig.bias;
    let delta = rig.delta();
    let field = rig.earth_field();
    let tau = params.rotor_time_constant;

    let mut n_anem = Noise::new(seed, Stream::Anemometer);
    let mut n_acc = Noise::new(seed, Stream::Accel);
    let mut n_gyro = Noise::new(seed, Stream::Gyro);
    let mut n_mag = Noise::new(seed, Stream::Mag);
    let mut n_baro = Noise::new(seed, Stream::Baro);
    let mut n_esc = Noise::new(seed, Stream::Esc);
    let mut n_bat = Noise::new(seed, Stream::Battery);

    // Rotor speed state, advanced at the ESC rate.
    let mut rotor = traj.rotor_speed(0.0);
    let mut records = Vec::with_capacity(truth.samples.len());

    for (i, s) in truth.samples.iter().enumerate() {
        let t = s.t;

        // ESC: command leads the required speed by the rotor lag so the
        // lagged response tracks it; sub-samples are averaged onto the tick.
        let mut esc_sum = 0.0;
        for j in 0..esc_sub {
            let ts = t - (esc_sub - 1 - j) as f64 * esc_dt;
            let h = 1e-4;
            let w = traj.rotor_speed(ts);
            let dw = (traj.rotor_speed(ts + h) - traj.rotor_speed(ts - h)) / (2.0 * h);
            let cmd = (w + tau * dw).max(0.0);
            if i > 0 || j > 0 {
                rotor = rotor_lag_step(rotor, cmd, tau, esc_dt);
            }
            esc_sum += (cmd / params.max_rotor_speed).clamp(0.0, 1.0);
        }
        let esc_mean = esc_sum / esc_sub as f64;
        let mut esc = [0.0; 4];
        for e in esc.iter_mut() {
            *e = (esc_mean + n_esc.sample(noise.esc)).clamp(0.0, 1.0);
        }

        let actual_thrust = 4.0 * params.thrust_coefficient * rotor * rotor;
        let spin = (rotor / params.max_rotor_speed).clamp(0.0, 1.0);
        let downwash = induced_velocity(actual_thrust, params)
            * ground_effect_factor(s.rotor_altitude, params);

        let r = &s.attitude;
        let body_air = r.apply_inverse(&s.velocity);
        let speed_scale = 1.0 + noise.speed_gain * s.velocity.norm();

        // Anemometers: R0ᵀ(RᵀV_a + ω×δ) projected on each channel axis.
        let sensor_air = rig.r0.apply_inverse(&(body_air + s.omega.cross(&delta)));
        let mut anem = rig.project(&sensor_air, downwash);
        for a in anem.iter_mut() {
            *a += n_anem.sample(noise.anemometer * speed_scale);
        }

        let accel_std = (noise.accel + noise.accel_vibration * spin) * speed_scale;
        let accel = r.apply_inverse(&(s.acceleration - gravity_ned()))
            + Vec3::from(bias.accel)
            + n_acc.vec3(accel_std);
        let gyro_std = (noise.gyro + noise.gyro_vibration * spin) * speed_scale;
        let gyro = s.omega + Vec3::from(bias.gyro) + n_gyro.vec3(gyro_std);
        let mag = r.apply_inverse(&field) + Vec3::from(bias.mag) + n_mag.vec3(noise.mag);

        let baro_noise = n_baro.sample(noise.pressure);
        let pressure = if i % baro_every == 0 {
            let altitude = -s.position.z + bias.baro_at(t);
            Some(altitude_to_pressure(altitude, &rig.atmosphere)? + baro_noise)
        } else {
            None
        };

        let v_noise = n_bat.sample(noise.voltage);
        let c_noise = n_bat.sample(noise.current);
        let (voltage, current) = if i % battery_every == 0 {
            let current = 0.2 + 25.0 * spin * spin;
            let voltage = 12.6 - 0.08 * current - 0.0015 * t;
            (Some(voltage + v_noise), Some(current + c_noise))
        } else {
            (None, None)
        };

        records.push(FlightRecord {
            t,
            anemometer: Some(anem),
            accel: Some(accel),
            gyro: Some(gyro),
            mag: Some(mag),
            pressure,
            esc: Some(esc),
            voltage,
            current,
            truth: Some(GroundTruth {
                position: s.position,
                velocity: s.velocity,
                acceleration: s.acceleration,
                quaternion: r.to_quaternion(),
                status: s.status,
            }),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GRAVITY;
    use crate::simkit::trajectory::{generate_trajectory, ScenarioConfig, TrajectoryStyle};

    fn scenario(style: TrajectoryStyle, duration: f64) -> ScenarioConfig {
        ScenarioConfig {
            duration,
            style,
            seed: 21,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn ideal_rig_reduces_to_body_velocity() {
        let params = VehicleParams::default();
        let truth = generate_trajectory(&scenario(TrajectoryStyle::RandomSpline, 40.0), &params).unwrap();
        let recs = synthesize_sensors(&truth, &SensorRig::ideal(), &params, 1).unwrap();
        for (rec, s) in recs.iter().zip(&truth.samples).step_by(37) {
            let v = s.attitude.apply_inverse(&s.velocity);
            let a = rec.anemometer.unwrap();
            assert!((a[0] - v.x).abs() < 1e-12);
            assert!((a[1] - v.y).abs() < 1e-12);
            assert!((a[2] - v.z).abs() < 1e-12);
            assert!((a[3] - v.z).abs() < 1e-12);
        }
    }

    #[test]
    fn hover_vertical_channels_read_downwash() {
        let params = VehicleParams::default();
        let cfg = scenario(TrajectoryStyle::Hover, 30.0);
        let truth = generate_trajectory(&cfg, &params).unwrap();
        let rig = SensorRig {
            noise: NoiseSpec::zero(),
            bias: BiasSpec::zero(),
            delta: [0.0; 3],
            ..SensorRig::default()
        };
        let recs = synthesize_sensors(&truth, &rig, &params, 1).unwrap();
        let i = (15.0 * 400.0) as usize;
        let s = &truth.samples[i];
        let vi = induced_velocity(params.weight(), &params) * ground_effect_factor(s.rotor_altitude, &params)
            / ground_effect_factor(s.rotor_altitude, &params).sqrt();
        let a = recs[i].anemometer.unwrap();
        // At steady hover the rotors produce W/ge, so the induced velocity is
        // sqrt(1/ge) times the free-air value, then amplified by ge.
        assert!((a[2] - vi).abs() < 1e-6, "{} vs {vi}", a[2]);
        assert!((a[3] - 0.6 * vi).abs() < 1e-6);
        assert!((a[0] - 0.05 * vi).abs() < 1e-6);
    }

    #[test]
    fn accelerometer_reads_minus_gravity_at_rest() {
        let params = VehicleParams::default();
        let mut cfg = scenario(TrajectoryStyle::Hover, 30.0);
        cfg.seed = 0;
        let truth = generate_trajectory(&cfg, &params).unwrap();
        let recs = synthesize_sensors(&truth, &SensorRig::ideal(), &params, 1).unwrap();
        // Landed attitude is a pure yaw, which leaves the down axis alone.
        assert!((recs[0].accel.unwrap() - Vec3::new(0.0, 0.0, -GRAVITY)).norm() < 1e-12);
    }

    #[test]
    fn multirate_alignment() {
        let params = VehicleParams::default();
        let truth = generate_trajectory(&scenario(TrajectoryStyle::Hover, 30.0), &params).unwrap();
        let recs = synthesize_sensors(&truth, &SensorRig::default(), &params, 4).unwrap();
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(r.pressure.is_some(), i % 2 == 0);
            assert_eq!(r.voltage.is_some(), i % 4 == 0);
            assert!(r.accel.is_some() && r.anemometer.is_some() && r.esc.is_some());
        }
    }

    #[test]
    fn noise_statistics_match_configuration() {
        let params = VehicleParams::default();
        let cfg = ScenarioConfig {
            duration: 300.0,
            ..scenario(TrajectoryStyle::Hover, 300.0)
        };
        let truth = generate_trajectory(&cfg, &params).unwrap();
        let mut rig = SensorRig::ideal();
        rig.noise.gyro = 0.004;
        let recs = synthesize_sensors(&truth, &rig, &params, 8).unwrap();
        let residuals: Vec<f64> = recs
            .iter()
            .zip(&truth.samples)
            .flat_map(|(r, s)| {
                let e = r.gyro.unwrap() - s.omega;
                [e.x, e.y, e.z]
            })
            .collect();
        assert!(residuals.len() >= 100_000);
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let std = (residuals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std / 0.004 - 1.0).abs() < 0.05, "std {std}");
    }

    #[test]
    fn same_seed_same_log() {
        let params = VehicleParams::default();
        let truth = generate_trajectory(&scenario(TrajectoryStyle::Lissajous, 30.0), &params).unwrap();
        let rig = SensorRig::default();
        let a = synthesize_sensors(&truth, &rig, &params, 5).unwrap();
        let b = synthesize_sensors(&truth, &rig, &params, 5).unwrap();
        let c = synthesize_sensors(&truth, &rig, &params, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn assemble_default_layout() {
        let rig = SensorRig::default();
        let v = rig.assemble(&[1.0, 2.0, 3.0, 5.0]);
        assert!((v - Vec3::new(1.0, 2.0, 4.0)).norm() < 1e-12);
        let mut bad = SensorRig::default();
        bad.channel_axes[2] = [0.0, 1.0, 0.0];
        assert!(bad.validate().is_err());
    }
}
