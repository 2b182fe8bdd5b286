//! Python bindings: run configuration, flight logs, trained models, the
//! odometry run and its metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;

use aeolus::cli;
use aeolus::estimators::pressure_to_altitude as rs_pressure_to_altitude;
use aeolus::flightlog::{read_dataset, save_estimates, write_dataset, EstimateMode, RunConfig};
use aeolus::fusion::{run_odometry as rs_run_odometry, Estimate, Estimators, NetworkSet, OracleOptions};
use aeolus::geometry::Vec3;
use aeolus::nn::{Model as RsModel, NetworkKind};
use aeolus::record::FlightRecord;
use aeolus::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn kind_from(name: &str) -> PyResult<NetworkKind> {
    name.parse().map_err(to_py)
}

/// Run configuration; the same document the command-line tool reads.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(text) => RunConfig::from_toml(text).map_err(to_py)?,
            None => RunConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::load(&path).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(to_py)
    }

    /// Sets the scenario and training seeds together.
    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.scenario.seed = seed;
        self.inner.training.seed = seed;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.scenario.seed
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.scenario.duration
    }

    #[setter]
    fn set_duration(&mut self, seconds: f64) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.scenario.duration = seconds;
        next.validate().map_err(to_py)?;
        self.inner = next;
        Ok(())
    }

    #[getter]
    fn max_epochs(&self) -> usize {
        self.inner.training.max_epochs
    }

    #[setter]
    fn set_max_epochs(&mut self, epochs: usize) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.training.max_epochs = epochs;
        next.validate().map_err(to_py)?;
        self.inner = next;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(seed={}, duration={}, sessions={})",
            self.inner.scenario.seed, self.inner.scenario.duration, self.inner.sessions.count
        )
    }
}

/// A base-grid flight log. Missing samples read back as `None`.
#[pyclass(name = "FlightLog", from_py_object)]
#[derive(Clone)]
struct PyFlightLog {
    records: Vec<FlightRecord>,
}

#[pymethods]
impl PyFlightLog {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            records: read_dataset(&path).map_err(to_py)?,
        })
    }

    /// Session `index` of the configured synthetic dataset.
    #[staticmethod]
    #[pyo3(signature = (config, index=0))]
    fn simulate(config: &PyConfig, index: usize) -> PyResult<Self> {
        Ok(Self {
            records: cli::simulate_session(&config.inner, index).map_err(to_py)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_dataset(&path, &self.records).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.records.len()
    }

    #[getter]
    fn has_truth(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.truth.is_some())
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// One column by its CSV name, e.g. `"pressure"`, `"az"` or `"gt_pz"`.
    fn column(&self, name: &str) -> PyResult<Vec<Option<f64>>> {
        let pick = |v: Option<Vec3>, i: usize| v.map(|v| v[i]);
        let axis = |c: char| "xyz".find(c);
        let f: Box<dyn Fn(&FlightRecord) -> Option<f64>> = match name {
            "pressure" => Box::new(|r| r.pressure),
            "voltage" => Box::new(|r| r.voltage),
            "current" => Box::new(|r| r.current),
            n if n.len() == 2 && n.starts_with('a') && axis(n.as_bytes()[1] as char).is_some() => {
                let i = axis(n.as_bytes()[1] as char).unwrap_or(0);
                Box::new(move |r| pick(r.accel, i))
            }
            n if n.len() == 2 && n.starts_with('g') && axis(n.as_bytes()[1] as char).is_some() => {
                let i = axis(n.as_bytes()[1] as char).unwrap_or(0);
                Box::new(move |r| pick(r.gyro, i))
            }
            n if n.starts_with("anem_") || n.starts_with("esc_") => {
                let i: usize = n
                    .rsplit('_')
                    .next()
                    .and_then(|s| s.parse().ok())
                    .filter(|i| (1..=4).contains(i))
                    .ok_or_else(|| PyKeyError::new_err(name.to_string()))?;
                if n.starts_with("anem_") {
                    Box::new(move |r| r.anemometer.map(|a| a[i - 1]))
                } else {
                    Box::new(move |r| r.esc.map(|a| a[i - 1]))
                }
            }
            n if n.len() == 5 && (n.starts_with("gt_p") || n.starts_with("gt_v")) => {
                let i = axis(n.as_bytes()[4] as char).ok_or_else(|| PyKeyError::new_err(name.to_string()))?;
                if n.starts_with("gt_p") {
                    Box::new(move |r| r.truth.map(|g| g.position[i]))
                } else {
                    Box::new(move |r| r.truth.map(|g| g.velocity[i]))
                }
            }
            _ => return Err(PyKeyError::new_err(name.to_string())),
        };
        Ok(self.records.iter().map(f).collect())
    }
}

/// A trained network with its normalization.
#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: RsModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RsModel::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }
}

/// Train one network on whole sessions; returns the best-validation model.
#[pyfunction]
fn train(kind: &str, train_logs: Vec<PyFlightLog>, validation_logs: Vec<PyFlightLog>, config: &PyConfig) -> PyResult<PyModel> {
    let records = |logs: Vec<PyFlightLog>| logs.into_iter().map(|l| l.records).collect::<Vec<_>>();
    let outcome = cli::train_sessions(kind_from(kind)?, &config.inner, &records(train_logs), &records(validation_logs))
        .map_err(to_py)?;
    Ok(PyModel { inner: outcome.model })
}

/// Per-tick estimates of one odometry run.
#[pyclass(name = "Estimates")]
struct PyEstimates {
    estimates: Vec<Estimate>,
    mode: EstimateMode,
    metrics_json: String,
}

#[pymethods]
impl PyEstimates {
    fn __len__(&self) -> usize {
        self.estimates.len()
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.t).collect()
    }

    /// Fused NED positions as `(x, y, z)` tuples, m.
    fn positions(&self) -> Vec<(f64, f64, f64)> {
        self.estimates
            .iter()
            .map(|e| (e.state.position.x, e.state.position.y, e.state.position.z))
            .collect()
    }

    /// 1 where the debounced status is in the air.
    fn in_air(&self) -> Vec<bool> {
        self.estimates.iter().map(|e| e.status.in_air()).collect()
    }

    /// Metrics as a JSON document, the same one `aeolus estimate` writes.
    fn metrics_json(&self) -> String {
        self.metrics_json.clone()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_estimates(&path, &self.estimates, self.mode).map_err(to_py)
    }
}

/// Run the odometry. Without models, ground truth stands in for the
/// networks (oracle mode).
#[pyfunction]
#[pyo3(signature = (log, config, velocity=None, acceleration=None, status=None))]
fn run_odometry(
    log: &PyFlightLog,
    config: &PyConfig,
    velocity: Option<&PyModel>,
    acceleration: Option<&PyModel>,
    status: Option<&PyModel>,
) -> PyResult<PyEstimates> {
    let cfg = &config.inner;
    let odo = cfg.odometry();
    let field = cfg.rig.earth_field();
    let (run, mode) = match (velocity, acceleration, status) {
        (Some(v), Some(a), Some(s)) => {
            let nets = NetworkSet {
                velocity: &v.inner,
                acceleration: &a.inner,
                status: &s.inner,
            };
            (rs_run_odometry(&log.records, Estimators::Networks(nets), &odo, &cfg.rig.atmosphere, &field), EstimateMode::Networks)
        }
        (None, None, None) => {
            let opts = OracleOptions {
                velocity_bias: Vec3::from(cfg.fusion.oracle_velocity_bias),
            };
            (rs_run_odometry(&log.records, Estimators::Oracle(opts), &odo, &cfg.rig.atmosphere, &field), EstimateMode::Oracle)
        }
        _ => return Err(PyValueError::new_err("pass all three models or none")),
    };
    let estimates = run.map_err(to_py)?.estimates;
    let metrics = cli::metrics_for(cfg, &estimates, &log.records, mode).map_err(to_py)?;
    Ok(PyEstimates {
        metrics_json: cli::metrics_json(&metrics).map_err(to_py)?,
        estimates,
        mode,
    })
}

/// Pressure altitude in the standard troposphere, m.
#[pyfunction]
#[pyo3(signature = (pressure, config=None))]
fn pressure_to_altitude(pressure: f64, config: Option<&PyConfig>) -> PyResult<f64> {
    let atmosphere = config.map(|c| c.inner.rig.atmosphere).unwrap_or_default();
    rs_pressure_to_altitude(pressure, &atmosphere).map_err(to_py)
}

#[pymodule]
fn aeolus_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyFlightLog>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyEstimates>()?;
    m.add_function(wrap_pyfunction!(pressure_to_altitude, m)?)?;
    m.add_function(wrap_pyfunction!(run_odometry, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add("SCHEMA_VERSION", aeolus::flightlog::SCHEMA_VERSION)?;
    Ok(())
}
