//! Barometric pressure-altitude in the linear-lapse troposphere model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GRAVITY;

/// Reference level and physical constants for the pressure-altitude relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtmosphereParams {
    /// Reference altitude, m.
    pub h1: f64,
    /// Temperature at the reference level, K.
    pub t1: f64,
    /// Pressure at the reference level, Pa.
    pub p1: f64,
    /// Universal gas constant, N·m/(mol·K).
    pub r_gas: f64,
    /// Temperature lapse rate, K/m.
    pub lapse: f64,
    /// Molar mass of air, kg/mol.
    pub molar_mass: f64,
    /// Gravity, m/s².
    pub g: f64,
}

impl Default for AtmosphereParams {
    fn default() -> Self {
        Self {
            h1: 0.0,
            t1: 288.15,
            p1: 101_325.0,
            r_gas: 8.31432,
            lapse: -0.0065,
            molar_mass: 0.0289644,
            g: GRAVITY,
        }
    }
}

impl AtmosphereParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p1 > 0.0 && self.t1 > 0.0 && self.lapse != 0.0) {
            return Err(Error::Config(
                "atmosphere requires p1 > 0, t1 > 0 and a nonzero lapse rate".into(),
            ));
        }
        Ok(())
    }

    fn exponent(&self) -> f64 {
        -self.r_gas * self.lapse / (self.g * self.molar_mass)
    }

    /// Air density at the reference level from the ideal gas law, kg/m³.
    pub fn reference_density(&self) -> f64 {
        self.p1 * self.molar_mass / (self.r_gas * self.t1)
    }
}

/// `h = h1 + (T1/L)·((P/P1)^(−R·L/(g·M)) − 1)`
pub fn pressure_to_altitude(pressure: f64, atm: &AtmosphereParams) -> Result<f64> {
    if !(pressure > 0.0) {
        return Err(Error::Domain(format!(
            "pressure must be positive, got {pressure} Pa"
        )));
    }
    Ok(atm.h1 + atm.t1 / atm.lapse * ((pressure / atm.p1).powf(atm.exponent()) - 1.0))
}

/// Algebraic inverse of [`pressure_to_altitude`].
pub fn altitude_to_pressure(altitude: f64, atm: &AtmosphereParams) -> Result<f64> {
    let temperature = atm.t1 + atm.lapse * (altitude - atm.h1);
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!(
            "altitude {altitude} m is outside the temperature-lapse model"
        )));
    }
    Ok(atm.p1 * (temperature / atm.t1).powf(1.0 / atm.exponent()))
}
