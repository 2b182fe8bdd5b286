//! Debouncing of the status classifier before it switches observers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::FlightStatus;

/// Switch thresholds on `P(InAir)` and the dwell each must be held for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hysteresis {
    pub takeoff_threshold: f64,
    pub landing_threshold: f64,
    /// s
    pub dwell: f64,
}

impl Default for Hysteresis {
    fn default() -> Self {
        Self {
            takeoff_threshold: 0.8,
            landing_threshold: 0.2,
            dwell: 0.1,
        }
    }
}

impl Hysteresis {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.landing_threshold)
            && (0.0..=1.0).contains(&self.takeoff_threshold)
            && self.landing_threshold <= self.takeoff_threshold
            && self.dwell >= 0.0
            && self.dwell.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "status hysteresis needs 0 <= landing <= takeoff <= 1 and a nonnegative dwell, got {self:?}"
            )))
        }
    }
}

/// Streaming debouncer. The opposite state is adopted once its condition has
/// held continuously for the dwell time.
#[derive(Debug, Clone)]
pub struct StatusFilter {
    cfg: Hysteresis,
    status: FlightStatus,
    /// Time the pending switch condition first held.
    pending_since: Option<f64>,
}

impl StatusFilter {
    pub fn new(cfg: Hysteresis, initial: FlightStatus) -> Self {
        Self {
            cfg,
            status: initial,
            pending_since: None,
        }
    }

    pub fn status(&self) -> FlightStatus {
        self.status
    }

    pub fn update(&mut self, t: f64, p_air: f64) -> FlightStatus {
        let wants_switch = match self.status {
            FlightStatus::OnGround => p_air > self.cfg.takeoff_threshold,
            FlightStatus::InAir => p_air < self.cfg.landing_threshold,
        };
        if !wants_switch {
            self.pending_since = None;
            return self.status;
        }
        let since = *self.pending_since.get_or_insert(t);
        // Tolerance absorbs grid rounding in `t`.
        if t - since >= self.cfg.dwell - 1e-9 {
            self.status = match self.status {
                FlightStatus::OnGround => FlightStatus::InAir,
                FlightStatus::InAir => FlightStatus::OnGround,
            };
            self.pending_since = None;
        }
        self.status
    }
}

/// Debounce a whole probability stream sampled at times `t`.
pub fn status_with_hysteresis(t: &[f64], p_air: &[f64], cfg: &Hysteresis, initial: FlightStatus) -> Vec<FlightStatus> {
    let mut f = StatusFilter::new(*cfg, initial);
    t.iter().zip(p_air).map(|(&ti, &p)| f.update(ti, p)).collect()
}

/// Times at which `status` changes, with the state entered.
pub fn transitions(t: &[f64], status: &[FlightStatus]) -> Vec<(f64, FlightStatus)> {
    status
        .windows(2)
        .zip(&t[1..])
        .filter(|(w, _)| w[0] != w[1])
        .map(|(w, &ti)| (ti, w[1]))
        .collect()
}
