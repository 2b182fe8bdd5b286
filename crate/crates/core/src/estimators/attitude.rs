use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{down, Mat3, Rotation, Vec3, GRAVITY};

/// Attitude estimate and gyro-bias estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeState {
    pub rotation: Rotation,
    pub gyro_bias: Vec3,
}

impl AttitudeState {
    pub fn new(rotation: Rotation) -> Self {
        Self {
            rotation,
            gyro_bias: Vec3::zeros(),
        }
    }
}

/// Observer gains: `alpha8` drives the gyro-bias integrator, `alpha9` and
/// `alpha10` weight the accelerometer and magnetometer corrections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttitudeGains {
    pub alpha8: f64,
    pub alpha9: f64,
    pub alpha10: f64,
    /// Boxcar length for the accelerometer and magnetometer means, samples.
    pub window: usize,
    /// Time during which the estimated acceleration fed back is held at zero, s.
    pub startup: f64,
}

impl Default for AttitudeGains {
    fn default() -> Self {
        Self {
            alpha8: 0.2,
            alpha9: 1.0,
            alpha10: 1.0,
            window: 20,
            startup: 1.0,
        }
    }
}

impl AttitudeGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha8", self.alpha8),
            ("alpha9", self.alpha9),
            ("alpha10", self.alpha10),
            ("startup", self.startup),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("attitude.{name} must be nonnegative, got {v}")));
            }
        }
        if self.window == 0 {
            return Err(Error::Config("attitude.window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Inputs to one observer step.
#[derive(Debug, Clone, Copy)]
pub struct ImuMeans {
    /// Boxcar mean of the accelerometer, body frame, m/s².
    pub accel_mean: Vec3,
    /// Current gyro sample, rad/s.
    pub gyro: Vec3,
    /// Boxcar mean of the magnetometer, body frame.
    pub mag_mean: Option<Vec3>,
}

/// Correction vector `vex(γ)`.
///
/// The accelerometer measures `Rᵀ(A − g·k0)`, which points away from the
/// inertial down axis; the accelerometer cross product is therefore negated
/// so that both terms pull `R̂` toward the measured directions.
fn correction(
    state: &AttitudeState,
    imu: &ImuMeans,
    accel_estimate: &Vec3,
    earth_field: &Vec3,
    gains: &AttitudeGains,
) -> Vec3 {
    let r = &state.rotation;
    let predicted = r.apply_inverse(&(accel_estimate - down() * GRAVITY));
    let tilt = r.apply_inverse(&down()).cross(&(imu.accel_mean - predicted));
    let mut gamma = -tilt * (gains.alpha9 / GRAVITY);
    if let Some(m) = imu.mag_mean {
        let heading = r.apply_inverse(earth_field).cross(&m);
        gamma += heading * (gains.alpha10 / earth_field.norm_squared());
    }
    gamma
}

/// One observer step: `R̂′ = R̂·exp(([g_m − b̂_g]× − γ)·dt)`, `b̂_g′ = b̂_g + α8·vex(γ)·dt`.
pub fn attitude_step(
    state: &AttitudeState,
    imu: &ImuMeans,
    accel_estimate: &Vec3,
    earth_field: &Vec3,
    gains: &AttitudeGains,
    dt: f64,
) -> AttitudeState {
    let gamma = correction(state, imu, accel_estimate, earth_field, gains);
    let rate = imu.gyro - state.gyro_bias - gamma;
    AttitudeState {
        rotation: state.rotation.integrate(&rate, dt),
        gyro_bias: state.gyro_bias + gamma * (gains.alpha8 * dt),
    }
}

/// Attitude from a gravity direction and a magnetic field direction (TRIAD).
/// Without a usable magnetometer the yaw is set to zero.
pub fn initial_attitude(accel_mean: &Vec3, mag_mean: Option<&Vec3>, earth_field: &Vec3) -> Result<Rotation> {
    if accel_mean.norm() < 1e-6 {
        return Err(Error::Numerical("cannot initialise attitude from a zero accelerometer mean".into()));
    }
    let down_body = -accel_mean.normalize();
    let triad = |d: Vec3, m: Vec3| -> Option<Mat3> {
        let east = d.cross(&m);
        if east.norm() < 1e-6 {
            return None;
        }
        let east = east.normalize();
        Some(Mat3::from_columns(&[d, east, d.cross(&east)]))
    };
    let from_mag = mag_mean.and_then(|m| {
        let body = triad(down_body, *m)?;
        let inertial = triad(down(), *earth_field)?;
        Some(inertial * body.transpose())
    });
    match from_mag {
        Some(m) => Ok(Rotation::from_matrix_orthonormalized(m)),
        None => {
            // Zero yaw: the body down direction fixes roll and pitch.
            let pitch = (-down_body.x).clamp(-1.0, 1.0).asin();
            let roll = down_body.y.atan2(down_body.z);
            Ok(Rotation::from_euler(roll, pitch, 0.0))
        }
    }
}

/// Streaming observer: maintains the boxcar means and the estimate.
///
/// Samples are averaged in the inertial frame using the estimate current at
/// each sample and rotated back with the present estimate, and the fed-back
/// acceleration is averaged over the same window. Both sides of the
/// accelerometer comparison then share one time alignment, so a rotating,
/// accelerating vehicle with a correct estimate sees no correction.
#[derive(Debug, Clone)]
pub struct AttitudeObserver {
    pub state: AttitudeState,
    gains: AttitudeGains,
    earth_field: Vec3,
    accel: Boxcar,
    mag: Boxcar,
    feedback: Boxcar,
    elapsed: f64,
}

#[derive(Debug, Clone)]
struct Boxcar {
    buf: VecDeque<Vec3>,
    sum: Vec3,
    window: usize,
}

impl Boxcar {
    fn new(window: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(window + 1),
            sum: Vec3::zeros(),
            window,
        }
    }

    fn push(&mut self, v: Vec3) {
        self.buf.push_back(v);
        self.sum += v;
        if self.buf.len() > self.window {
            self.sum -= self.buf.pop_front().unwrap_or_default();
        }
    }

    fn mean(&self) -> Option<Vec3> {
        (!self.buf.is_empty()).then(|| self.sum / self.buf.len() as f64)
    }
}

impl AttitudeObserver {
    pub fn new(initial: Rotation, gains: AttitudeGains, earth_field: Vec3) -> Self {
        Self {
            state: AttitudeState::new(initial),
            gains,
            earth_field,
            accel: Boxcar::new(gains.window),
            mag: Boxcar::new(gains.window),
            feedback: Boxcar::new(gains.window),
            elapsed: 0.0,
        }
    }

    /// Feed one IMU sample. `accel_estimate` is the fused inertial
    /// acceleration; it is replaced by zero during the startup interval.
    pub fn update(&mut self, accel: Vec3, gyro: Vec3, mag: Option<Vec3>, accel_estimate: Vec3, dt: f64) -> AttitudeState {
        let r = self.state.rotation;
        self.accel.push(r.apply(&accel));
        if let Some(m) = mag {
            self.mag.push(r.apply(&m));
        }
        let vdot = if self.elapsed < self.gains.startup {
            Vec3::zeros()
        } else {
            accel_estimate
        };
        self.feedback.push(vdot);
        let imu = ImuMeans {
            accel_mean: r.apply_inverse(&self.accel.mean().unwrap_or_default()),
            gyro,
            mag_mean: self.mag.mean().map(|m| r.apply_inverse(&m)),
        };
        let vdot_mean = self.feedback.mean().unwrap_or_default();
        self.state = attitude_step(&self.state, &imu, &vdot_mean, &self.earth_field, &self.gains, dt);
        self.elapsed += dt;
        self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::BASE_DT;

    fn field() -> Vec3 {
        let inc = 60f64.to_radians();
        Vec3::new(inc.cos(), 0.0, inc.sin())
    }

    fn stationary(truth: &Rotation, gyro_bias: Vec3) -> ImuMeans {
        ImuMeans {
            accel_mean: truth.apply_inverse(&(-down() * GRAVITY)),
            gyro: gyro_bias,
            mag_mean: Some(truth.apply_inverse(&field())),
        }
    }

    #[test]
    fn equilibrium_is_fixed() {
        let truth = Rotation::from_euler(0.2, -0.1, 1.3);
        let bias = Vec3::new(0.01, -0.02, 0.005);
        let state = AttitudeState {
            rotation: truth,
            gyro_bias: bias,
        };
        let next = attitude_step(&state, &stationary(&truth, bias), &Vec3::zeros(), &field(), &AttitudeGains::default(), BASE_DT);
        assert!(next.rotation.angle_to(&truth) < 1e-14);
        assert!((next.gyro_bias - bias).norm() < 1e-16);
    }

    #[test]
    fn tilt_error_decreases_every_step() {
        let truth = Rotation::from_euler(0.05, 0.1, 0.4);
        let tilt = Rotation::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0).normalize(), 10f64.to_radians());
        let mut state = AttitudeState::new(truth.compose(&tilt));
        // Pure proportional correction: with bias integration the error
        // crosses zero before settling.
        let gains = AttitudeGains {
            alpha8: 0.0,
            ..AttitudeGains::default()
        };
        let imu = stationary(&truth, Vec3::zeros());
        let mut prev = state.rotation.angle_to(&truth);
        assert!((prev - 10f64.to_radians()).abs() < 1e-9);
        for step in 0..40_000 {
            state = attitude_step(&state, &imu, &Vec3::zeros(), &field(), &gains, BASE_DT);
            let err = state.rotation.angle_to(&truth);
            if prev > 1e-9 {
                assert!(err < prev, "step {step}: {err} >= {prev}");
            } else {
                assert!(err < 1e-8);
            }
            prev = err;
        }
        assert!(prev < 1e-7, "final error {prev}");
    }

    #[test]
    fn gyro_bias_converges() {
        let truth = Rotation::from_euler(-0.03, 0.02, 2.0);
        let bias = Vec3::new(0.01, -0.02, 0.005);
        let mut state = AttitudeState::new(truth);
        let gains = AttitudeGains::default();
        let imu = stationary(&truth, bias);
        let steps = (60.0 / BASE_DT) as usize;
        for _ in 0..steps {
            state = attitude_step(&state, &imu, &Vec3::zeros(), &field(), &gains, BASE_DT);
        }
        for k in 0..3 {
            assert!(
                (state.gyro_bias[k] - bias[k]).abs() < 0.1 * bias[k].abs(),
                "axis {k}: {} vs {}",
                state.gyro_bias[k],
                bias[k]
            );
        }
    }

    #[test]
    fn without_magnetometer_roll_pitch_still_converge() {
        let truth = Rotation::from_euler(0.1, -0.15, 0.7);
        let initial = Rotation::from_euler(-0.05, 0.05, 0.9);
        let mut state = AttitudeState::new(initial);
        let gains = AttitudeGains {
            alpha10: 0.0,
            ..AttitudeGains::default()
        };
        let mut imu = stationary(&truth, Vec3::zeros());
        imu.mag_mean = None;
        for _ in 0..(60.0 / BASE_DT) as usize {
            state = attitude_step(&state, &imu, &Vec3::zeros(), &field(), &gains, BASE_DT);
        }
        let (r, p) = state.rotation.roll_pitch();
        let (rt, pt) = truth.roll_pitch();
        assert!((r - rt).abs() < 1e-4 && (p - pt).abs() < 1e-4, "{r} {p} vs {rt} {pt}");
        // The estimated down direction matches; heading is not constrained.
        let err = state.rotation.apply_inverse(&down()) - truth.apply_inverse(&down());
        assert!(err.norm() < 1e-4);
    }

    #[test]
    fn stays_orthonormal_under_noisy_rates() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut obs = AttitudeObserver::new(Rotation::identity(), AttitudeGains::default(), field());
        for _ in 0..200_000 {
            let g = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let a = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), -GRAVITY);
            obs.update(a, g, Some(field()), Vec3::zeros(), BASE_DT);
        }
        assert!(obs.state.rotation.orthonormality_error() < 1e-6);
        assert!((obs.state.rotation.determinant() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn triad_recovers_attitude() {
        let truth = Rotation::from_euler(0.3, -0.2, -2.2);
        let a = truth.apply_inverse(&(-down() * GRAVITY));
        let m = truth.apply_inverse(&field());
        let r = initial_attitude(&a, Some(&m), &field()).unwrap();
        assert!(r.angle_to(&truth) < 1e-12);

        let r = initial_attitude(&a, None, &field()).unwrap();
        let (roll, pitch) = r.roll_pitch();
        assert!((roll - 0.3).abs() < 1e-12 && (pitch + 0.2).abs() < 1e-12);
        assert!(r.yaw().abs() < 1e-12);
        assert!(initial_attitude(&Vec3::zeros(), None, &field()).is_err());
    }
}
