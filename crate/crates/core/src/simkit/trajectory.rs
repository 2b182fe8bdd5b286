//! Ground-truth flight generation: dwell on the ground, vertical takeoff, an
//! excursion around a hover point, vertical landing, dwell again.
//!
//! Position is built from quintic smooth steps, sinusoids and uniform cubic
//! B-splines, so velocity and acceleration are exact analytic derivatives.
//! Attitude follows from the acceleration through the differential-flatness
//! map of a quadrotor (thrust along body −k) with drag included.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gravity_ned, log_so3, Mat3, Rotation, Vec3, GRAVITY};
use crate::record::{FlightStatus, BASE_RATE_HZ};

use super::vehicle::{ground_effect_factor, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryStyle {
    Hover,
    Lissajous,
    RandomSpline,
}

/// Per-stream sampling rates, Hz. Slow streams must divide the base rate and
/// the ESC rate must be a multiple of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleRates {
    pub anemometer: f64,
    pub imu: f64,
    pub baro: f64,
    pub battery: f64,
    pub esc: f64,
}

impl Default for SampleRates {
    fn default() -> Self {
        Self {
            anemometer: 400.0,
            imu: 400.0,
            baro: 200.0,
            battery: 100.0,
            esc: 800.0,
        }
    }
}

impl SampleRates {
    pub fn validate(&self) -> Result<()> {
        let is_int = |x: f64| (x - x.round()).abs() < 1e-9 && x.round() >= 1.0;
        if self.anemometer != BASE_RATE_HZ || self.imu != BASE_RATE_HZ {
            return Err(Error::Config(format!(
                "anemometer and IMU must run on the {BASE_RATE_HZ} Hz base grid"
            )));
        }
        for (name, rate) in [("baro", self.baro), ("battery", self.battery)] {
            if !(rate > 0.0 && is_int(BASE_RATE_HZ / rate)) {
                return Err(Error::Config(format!(
                    "{name} rate {rate} Hz must divide the base rate"
                )));
            }
        }
        if !(self.esc > 0.0 && is_int(self.esc / BASE_RATE_HZ)) {
            return Err(Error::Config("ESC rate must be a multiple of the base rate".into()));
        }
        Ok(())
    }

    /// Base-grid ticks between two samples of a slow stream.
    pub fn decimation(rate: f64) -> usize {
        (BASE_RATE_HZ / rate).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Total length of the session, s.
    pub duration: f64,
    /// Time on the ground before takeoff, s.
    pub ground_dwell_pre: f64,
    /// Time on the ground after touchdown, s.
    pub ground_dwell_post: f64,
    pub seed: u64,
    pub style: TrajectoryStyle,
    /// Horizontal/vertical excursion bounds around the hover point, m.
    pub amplitude: [f64; 3],
    /// Speed bound used to pick excursion frequencies, m/s.
    pub max_speed: f64,
    /// Hover height above the ground, m.
    pub hover_altitude: f64,
    /// Vertical climb and descent durations, s.
    pub takeoff_time: f64,
    pub landing_time: f64,
    /// Rotor spin-up before liftoff and spin-down after touchdown, s.
    pub spinup_time: f64,
    /// Peak yaw excursion, rad.
    pub yaw_amplitude: f64,
    pub rates: SampleRates,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration: 200.0,
            ground_dwell_pre: 6.0,
            ground_dwell_post: 6.0,
            seed: 0,
            style: TrajectoryStyle::RandomSpline,
            amplitude: [2.5, 2.5, 0.5],
            max_speed: 1.5,
            hover_altitude: 1.2,
            takeoff_time: 3.0,
            landing_time: 3.0,
            spinup_time: 1.5,
            yaw_amplitude: 0.6,
            rates: SampleRates::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        let positive = [
            ("duration", self.duration),
            ("ground_dwell_pre", self.ground_dwell_pre),
            ("ground_dwell_post", self.ground_dwell_post),
            ("hover_altitude", self.hover_altitude),
            ("takeoff_time", self.takeoff_time),
            ("landing_time", self.landing_time),
            ("spinup_time", self.spinup_time),
            ("max_speed", self.max_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("scenario.{name} must be positive")));
            }
        }
        if self.amplitude.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config("scenario.amplitude must be nonnegative".into()));
        }
        if self.air_duration() <= 0.0 {
            return Err(Error::Config(
                "scenario.duration must exceed the ground dwells plus takeoff and landing".into(),
            ));
        }
        if self.spinup_time > self.ground_dwell_pre || self.spinup_time > self.ground_dwell_post {
            return Err(Error::Config("scenario.spinup_time must fit inside the ground dwells".into()));
        }
        if self.style != TrajectoryStyle::Hover && self.amplitude[2] >= self.hover_altitude {
            return Err(Error::Config(
                "scenario.amplitude[2] must stay below the hover altitude".into(),
            ));
        }
        Ok(())
    }

    pub fn liftoff_time(&self) -> f64 {
        self.ground_dwell_pre
    }

    pub fn touchdown_time(&self) -> f64 {
        self.duration - self.ground_dwell_post
    }

    fn climb_end(&self) -> f64 {
        self.ground_dwell_pre + self.takeoff_time
    }

    fn descent_start(&self) -> f64 {
        self.touchdown_time() - self.landing_time
    }

    /// Time spent at hover altitude between climb and descent, s.
    pub fn air_duration(&self) -> f64 {
        self.descent_start() - self.climb_end()
    }

    /// Number of base-grid samples in the session.
    pub fn sample_count(&self) -> usize {
        (self.duration * BASE_RATE_HZ).round() as usize
    }
}

/// Quintic smooth step and its first two derivatives on `[0, 1]`.
fn smootherstep(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let x2 = x * x;
    let x3 = x2 * x;
    (
        x3 * (10.0 - 15.0 * x + 6.0 * x2),
        30.0 * x2 * (1.0 - x) * (1.0 - x),
        60.0 * x * (1.0 - 3.0 * x + 2.0 * x2),
    )
}

#[derive(Debug, Clone, PartialEq)]
enum Excursion {
    None,
    Lissajous {
        amp: [f64; 3],
        freq: [f64; 3],
        phase: [f64; 3],
    },
    Spline {
        knot_spacing: f64,
        control: Vec<Vec3>,
    },
}

impl Excursion {
    /// Offset, velocity and acceleration at time `tau` into the air phase.
    fn eval(&self, tau: f64) -> (Vec3, Vec3, Vec3) {
        match self {
            Excursion::None => (Vec3::zeros(), Vec3::zeros(), Vec3::zeros()),
            Excursion::Lissajous { amp, freq, phase } => {
                let mut p = Vec3::zeros();
                let mut v = Vec3::zeros();
                let mut a = Vec3::zeros();
                for i in 0..3 {
                    let (s, c) = (freq[i] * tau + phase[i]).sin_cos();
                    p[i] = amp[i] * s;
                    v[i] = amp[i] * freq[i] * c;
                    a[i] = -amp[i] * freq[i] * freq[i] * s;
                }
                (p, v, a)
            }
            Excursion::Spline {
                knot_spacing,
                control,
            } => {
                let s = (tau / knot_spacing).max(0.0);
                let seg = (s.floor() as usize).min(control.len() - 4);
                let u = s - seg as f64;
                let um = 1.0 - u;
                let b = [
                    um * um * um / 6.0,
                    (3.0 * u * u * u - 6.0 * u * u + 4.0) / 6.0,
                    (-3.0 * u * u * u + 3.0 * u * u + 3.0 * u + 1.0) / 6.0,
                    u * u * u / 6.0,
                ];
                let db = [
                    -um * um / 2.0,
                    (3.0 * u * u - 4.0 * u) / 2.0,
                    (-3.0 * u * u + 2.0 * u + 1.0) / 2.0,
                    u * u / 2.0,
                ];
                let ddb = [um, 3.0 * u - 2.0, -3.0 * u + 1.0, u];
                let mut p = Vec3::zeros();
                let mut v = Vec3::zeros();
                let mut a = Vec3::zeros();
                for j in 0..4 {
                    let c = control[seg + j];
                    p += c * b[j];
                    v += c * db[j];
                    a += c * ddb[j];
                }
                (p, v / *knot_spacing, a / (knot_spacing * knot_spacing))
            }
        }
    }
}

/// Kinematic state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub yaw: f64,
}

/// Continuous-time ground-truth flight.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    cfg: ScenarioConfig,
    params: VehicleParams,
    excursion: Excursion,
    yaw0: f64,
    yaw_freq: f64,
    yaw_phase: f64,
    ramp: f64,
}

impl Trajectory {
    pub fn new(cfg: &ScenarioConfig, params: &VehicleParams) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0x7261_6a65);
        let air = cfg.air_duration();
        let excursion = match cfg.style {
            TrajectoryStyle::Hover => Excursion::None,
            TrajectoryStyle::Lissajous => {
                let mut freq = [0.0; 3];
                let mut phase = [0.0; 3];
                for i in 0..3 {
                    let scale = if i == 2 { 0.3 } else { 1.0 };
                    freq[i] = if cfg.amplitude[i] > 0.0 {
                        scale * cfg.max_speed * rng.random_range(0.5..1.0) / cfg.amplitude[i]
                    } else {
                        0.0
                    };
                    phase[i] = rng.random_range(0.0..std::f64::consts::TAU);
                }
                Excursion::Lissajous {
                    amp: cfg.amplitude,
                    freq,
                    phase,
                }
            }
            TrajectoryStyle::RandomSpline => {
                let horizontal = cfg.amplitude[0].max(cfg.amplitude[1]).max(1e-3);
                let knot_spacing = (2.0 * horizontal / cfg.max_speed).max(1.0);
                let n = (air / knot_spacing).ceil() as usize + 4;
                let control = (0..n)
                    .map(|_| {
                        Vec3::new(
                            cfg.amplitude[0] * rng.random_range(-1.0..1.0),
                            cfg.amplitude[1] * rng.random_range(-1.0..1.0),
                            cfg.amplitude[2] * rng.random_range(-1.0..1.0),
                        )
                    })
                    .collect();
                Excursion::Spline {
                    knot_spacing,
                    control,
                }
            }
        };
        let yaw0 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (yaw_freq, yaw_phase) = match cfg.style {
            TrajectoryStyle::Hover => (0.0, 0.0),
            _ => (
                rng.random_range(0.03..0.1),
                rng.random_range(0.0..std::f64::consts::TAU),
            ),
        };
        let traj = Self {
            cfg: cfg.clone(),
            params: *params,
            excursion,
            yaw0,
            yaw_freq,
            yaw_phase,
            ramp: (air / 4.0).min(4.0),
        };
        Ok(traj)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    /// Envelope fading the excursion in and out of the air phase, with its
    /// first two time derivatives.
    fn envelope(&self, t: f64) -> (f64, f64, f64) {
        let ta = t - self.cfg.climb_end();
        let tb = self.cfg.descent_start() - t;
        if ta <= 0.0 || tb <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let (sa, dsa, ddsa) = smootherstep(ta / self.ramp);
        let (sb, dsb, ddsb) = smootherstep(tb / self.ramp);
        let r = self.ramp;
        let (da, dda) = (dsa / r, ddsa / (r * r));
        let (db, ddb) = (-dsb / r, ddsb / (r * r));
        (sa * sb, da * sb + sa * db, dda * sb + 2.0 * da * db + sa * ddb)
    }

    pub fn kinematics(&self, t: f64) -> Kinematics {
        let c = &self.cfg;
        let h = c.hover_altitude;
        let (z, vz, az) = if t <= c.liftoff_time() || t >= c.touchdown_time() {
            (0.0, 0.0, 0.0)
        } else if t < c.climb_end() {
            let (s, ds, dds) = smootherstep((t - c.liftoff_time()) / c.takeoff_time);
            let d = c.takeoff_time;
            (-h * s, -h * ds / d, -h * dds / (d * d))
        } else if t > c.descent_start() {
            let (s, ds, dds) = smootherstep((t - c.descent_start()) / c.landing_time);
            let d = c.landing_time;
            (-h * (1.0 - s), h * ds / d, h * dds / (d * d))
        } else {
            (-h, 0.0, 0.0)
        };
        let mut position = Vec3::new(0.0, 0.0, z);
        let mut velocity = Vec3::new(0.0, 0.0, vz);
        let mut acceleration = Vec3::new(0.0, 0.0, az);

        let (w, dw, ddw) = self.envelope(t);
        let mut yaw = self.yaw0;
        if w > 0.0 {
            let tau = t - c.climb_end();
            let (f, df, ddf) = self.excursion.eval(tau);
            position += f * w;
            velocity += f * dw + df * w;
            acceleration += f * ddw + df * (2.0 * dw) + ddf * w;
            yaw += w * c.yaw_amplitude * (self.yaw_freq * tau + self.yaw_phase).sin();
        }
        Kinematics {
            position,
            velocity,
            acceleration,
            yaw,
        }
    }

    /// Total force the rotors must produce, inertial frame:
    /// `m(g·k0 − A) − c_d|V|V` (still air).
    fn required_force(&self, k: &Kinematics) -> Vec3 {
        (gravity_ned() - k.acceleration) * self.params.mass
            - k.velocity * (self.params.drag_coefficient * k.velocity.norm())
    }

    pub fn attitude(&self, t: f64) -> Rotation {
        let k = self.kinematics(t);
        let b3 = self.required_force(&k).normalize();
        let heading = Vec3::new(k.yaw.cos(), k.yaw.sin(), 0.0);
        let b2 = b3.cross(&heading).normalize();
        let b1 = b2.cross(&b3);
        Rotation::from_matrix_unchecked(Mat3::from_columns(&[b1, b2, b3]))
    }

    /// Body angular rate by a central difference of the attitude map.
    pub fn body_rate(&self, t: f64) -> Vec3 {
        let h = 1e-4;
        let r0 = self.attitude(t - h);
        let r1 = self.attitude(t + h);
        log_so3(&(r0.matrix().transpose() * r1.matrix())) / (2.0 * h)
    }

    pub fn status(&self, t: f64) -> FlightStatus {
        if t > self.cfg.liftoff_time() && t < self.cfg.touchdown_time() {
            FlightStatus::InAir
        } else {
            FlightStatus::OnGround
        }
    }

    /// Rotor-plane height above the ground, m.
    pub fn rotor_altitude(&self, t: f64) -> f64 {
        -self.kinematics(t).position.z + self.params.rotor_height
    }

    /// Summed rotor thrust before ground effect, N.
    pub fn rotor_thrust(&self, t: f64) -> f64 {
        let c = &self.cfg;
        let ge_landed = ground_effect_factor(self.params.rotor_height, &self.params);
        let landed = self.params.weight() / ge_landed;
        let spin = c.spinup_time;
        if t < c.liftoff_time() {
            smootherstep((t - (c.liftoff_time() - spin)) / spin).0 * landed
        } else if t > c.touchdown_time() {
            (1.0 - smootherstep((t - c.touchdown_time()) / spin).0) * landed
        } else {
            let k = self.kinematics(t);
            let ge = ground_effect_factor(-k.position.z + self.params.rotor_height, &self.params);
            self.required_force(&k).norm() / ge
        }
    }

    /// Rotor speed needed for [`Trajectory::rotor_thrust`], rad/s.
    pub fn rotor_speed(&self, t: f64) -> f64 {
        self.params.rotor_speed_for_thrust(self.rotor_thrust(t))
    }
}

/// One base-grid sample of the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub attitude: Rotation,
    /// Body angular rate, rad/s.
    pub omega: Vec3,
    /// Summed rotor thrust before ground effect, N.
    pub rotor_thrust: f64,
    /// Rotor-plane height above ground, m.
    pub rotor_altitude: f64,
    pub status: FlightStatus,
}

#[derive(Debug, Clone)]
pub struct TruthSeries {
    pub samples: Vec<TruthSample>,
    pub trajectory: Trajectory,
}

impl TruthSeries {
    pub fn config(&self) -> &ScenarioConfig {
        self.trajectory.config()
    }
}

/// Sample a flight on the base grid. Rejects scenarios demanding more than 2 g.
pub fn generate_trajectory(cfg: &ScenarioConfig, params: &VehicleParams) -> Result<TruthSeries> {
    let trajectory = Trajectory::new(cfg, params)?;
    let n = cfg.sample_count();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / BASE_RATE_HZ;
        let k = trajectory.kinematics(t);
        if k.acceleration.norm() > 2.0 * GRAVITY {
            return Err(Error::Config(format!(
                "scenario demands |A| = {:.2} m/s² at t = {t:.3} s, above the 2 g limit",
                k.acceleration.norm()
            )));
        }
        samples.push(TruthSample {
            t,
            position: k.position,
            velocity: k.velocity,
            acceleration: k.acceleration,
            attitude: trajectory.attitude(t),
            omega: trajectory.body_rate(t),
            rotor_thrust: trajectory.rotor_thrust(t),
            rotor_altitude: -k.position.z + params.rotor_height,
            status: trajectory.status(t),
        });
    }
    Ok(TruthSeries {
        samples,
        trajectory,
    })
}
