use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gravity_ned, Rotation, Vec3, GRAVITY};

/// Rigid-body and rotor parameters of the simulated quadrotor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// First-order rotor time constant, s.
    pub rotor_time_constant: f64,
    /// m
    pub rotor_radius: f64,
    /// Per-rotor thrust `c_T·Ω²`, N/(rad/s)².
    pub thrust_coefficient: f64,
    /// Body drag `F_a = c_d·|V_a|·V_a`, kg/m.
    pub drag_coefficient: f64,
    /// kg/m³
    pub air_density: f64,
    /// Height of the rotor plane above the ground when landed, m.
    pub rotor_height: f64,
    /// Rotor speed mapped to a full-scale ESC command, rad/s.
    pub max_rotor_speed: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 0.5,
            rotor_time_constant: 0.03,
            rotor_radius: 0.0635,
            thrust_coefficient: 1.0e-6,
            drag_coefficient: 0.05,
            air_density: 1.225,
            rotor_height: 0.05,
            max_rotor_speed: 2500.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("rotor_time_constant", self.rotor_time_constant),
            ("rotor_radius", self.rotor_radius),
            ("thrust_coefficient", self.thrust_coefficient),
            ("drag_coefficient", self.drag_coefficient),
            ("air_density", self.air_density),
            ("rotor_height", self.rotor_height),
            ("max_rotor_speed", self.max_rotor_speed),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!(
                    "vehicle.{name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    pub fn rotor_disk_area(&self) -> f64 {
        PI * self.rotor_radius * self.rotor_radius
    }

    pub fn weight(&self) -> f64 {
        self.mass * GRAVITY
    }

    /// Rotor speed giving `thrust_total` split evenly over four rotors.
    pub fn rotor_speed_for_thrust(&self, thrust_total: f64) -> f64 {
        (thrust_total.max(0.0) / (4.0 * self.thrust_coefficient)).sqrt()
    }

    /// Body-frame aerodynamic drag force for body-frame air velocity.
    pub fn drag_force(&self, air_velocity_body: &Vec3) -> Vec3 {
        air_velocity_body * (self.drag_coefficient * air_velocity_body.norm())
    }
}

/// Exact solution of `Ω̇ = (Ω_c − Ω)/τ` over `dt` with the command held.
pub fn rotor_lag_step(omega_rotor: f64, omega_cmd: f64, tau: f64, dt: f64) -> f64 {
    debug_assert!(dt > 0.0 && tau > 0.0);
    omega_cmd + (omega_rotor - omega_cmd) * (-dt / tau).exp()
}

/// Momentum-theory induced velocity at the rotor plane, m/s.
pub fn induced_velocity(thrust_total: f64, params: &VehicleParams) -> f64 {
    let per_rotor = thrust_total.max(0.0) / 4.0;
    (per_rotor / (2.0 * params.air_density * params.rotor_disk_area())).sqrt()
}

/// In-ground-effect thrust amplification `1/(1 − (r/4z)²)`, clamped to `[1, 2]`.
/// `altitude` is the rotor-plane height above ground.
pub fn ground_effect_factor(altitude: f64, params: &VehicleParams) -> f64 {
    let quarter_r = params.rotor_radius / 4.0;
    if altitude <= quarter_r {
        return 2.0;
    }
    let ratio = quarter_r / altitude;
    (1.0 / (1.0 - ratio * ratio)).clamp(1.0, 2.0)
}

/// Inertial acceleration `A = g·k0 − (1/m)·R·(T + F_a)`.
///
/// `altitude` is the rotor-plane height above ground and scales the rotor
/// thrust through [`ground_effect_factor`].
pub fn quad_accel_forward(
    air_velocity_body: &Vec3,
    attitude: &Rotation,
    rotor_speeds: &[f64; 4],
    altitude: f64,
    params: &VehicleParams,
) -> Vec3 {
    let rotor_thrust: f64 = rotor_speeds
        .iter()
        .map(|w| params.thrust_coefficient * w * w)
        .sum();
    let thrust = Vec3::new(0.0, 0.0, rotor_thrust * ground_effect_factor(altitude, params));
    let drag = params.drag_force(air_velocity_body);
    gravity_ned() - attitude.apply(&(thrust + drag)) / params.mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rotor_lag_closed_form() {
        assert_eq!(rotor_lag_step(321.0, 321.0, 0.03, 0.01), 321.0);
        let tau = 0.05;
        let v = rotor_lag_step(0.0, 100.0, tau, tau);
        assert_relative_eq!(v, 100.0 * (1.0 - (-1.0f64).exp()), epsilon = 1e-12);
        assert!((v - 63.212).abs() < 1e-3);
    }

    #[test]
    fn rotor_lag_matches_rk4_on_staircase() {
        let tau = 0.03;
        let dt = 1.0 / 800.0;
        let commands = [0.0, 800.0, 1200.0, 400.0, 1500.0, 1500.0, 0.0];
        let mut exact = 0.0;
        let mut rk = 0.0f64;
        let sub = 200;
        let h = dt / sub as f64;
        for &cmd in commands.iter().cycle().take(700) {
            exact = rotor_lag_step(exact, cmd, tau, dt);
            let f = |w: f64| (cmd - w) / tau;
            for _ in 0..sub {
                let k1 = f(rk);
                let k2 = f(rk + h / 2.0 * k1);
                let k3 = f(rk + h / 2.0 * k2);
                let k4 = f(rk + h * k3);
                rk += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            assert!((exact - rk).abs() < 1e-9, "{exact} vs {rk}");
        }
    }

    #[test]
    fn induced_velocity_values() {
        let p = VehicleParams::default();
        assert_eq!(induced_velocity(0.0, &p), 0.0);
        let hover = 0.5 * 9.80665;
        // sqrt((0.5·9.80665/4)/(2·1.225·π·0.0635²)) evaluated offline.
        assert_relative_eq!(induced_velocity(hover, &p), 6.284686816751264, epsilon = 1e-12);
        let ratio = induced_velocity(2.0 * hover, &p) / induced_velocity(hover, &p);
        assert!((ratio - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ground_effect_values() {
        let p = VehicleParams::default();
        let r = p.rotor_radius;
        assert_relative_eq!(ground_effect_factor(10.0 * r, &p), 1.0 / (1.0 - 1.0 / 1600.0), epsilon = 1e-12);
        assert!((ground_effect_factor(10.0 * r, &p) - 1.000625).abs() < 1e-6);
        assert!((ground_effect_factor(1e9, &p) - 1.0).abs() < 1e-12);
        assert_eq!(ground_effect_factor(r / 4.0, &p), 2.0);
        assert_eq!(ground_effect_factor(0.0, &p), 2.0);
    }

    #[test]
    fn forward_model_cases() {
        let p = VehicleParams::default();
        let far = 1e6;
        let w = p.rotor_speed_for_thrust(p.weight());
        let a = quad_accel_forward(&Vec3::zeros(), &Rotation::identity(), &[w; 4], far, &p);
        assert!(a.norm() < 1e-9);

        let a = quad_accel_forward(&Vec3::zeros(), &Rotation::identity(), &[0.0; 4], far, &p);
        assert_eq!(a, Vec3::new(0.0, 0.0, GRAVITY));

        let va = Vec3::new(1.5, -0.5, 0.2);
        let a = quad_accel_forward(&va, &Rotation::identity(), &[0.0; 4], far, &p);
        let drag = a - gravity_ned();
        assert_relative_eq!(drag.norm(), p.drag_coefficient / p.mass * va.norm_squared(), epsilon = 1e-12);
        assert!(drag.normalize().dot(&va.normalize()) < -1.0 + 1e-12);
    }
}
