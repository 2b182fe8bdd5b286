//! Command-line front end: simulate sessions, train the three networks, run
//! the odometry and evaluate it against ground truth.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flightlog::{
    load_estimates, load_gains, read_dataset, save_estimates, split_sessions, write_dataset, EstimateMode, RunConfig,
};
use crate::fusion::{compute_metrics, run_odometry, BiasTruth, Estimators, Metrics, NetworkSet, Odometry, OracleOptions};
use crate::geometry::Vec3;
use crate::nn::{make_windows, session_features, train, Model, NetworkKind, TrainOutcome};
use crate::record::FlightRecord;
use crate::simkit::{generate_trajectory, synthesize_sensors, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "aeolus", version, about = "Airflow-inertial odometry toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the scenario and training seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic sessions as flight-log CSV files.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of sessions; overrides `sessions.count`.
        #[arg(long)]
        sessions: Option<usize>,
        /// Output directory; defaults to `paths.data_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one network on a directory of sessions.
    Train {
        /// velocity, acceleration or status.
        which: NetworkKind,
        #[command(flatten)]
        common: Common,
        /// Directory of session CSV files; defaults to `paths.data_dir`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Weights file to write; the history goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the odometry over one flight log.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required_unless_present = "no_networks")]
        weights_velocity: Option<PathBuf>,
        #[arg(long, required_unless_present = "no_networks")]
        weights_acceleration: Option<PathBuf>,
        #[arg(long, required_unless_present = "no_networks")]
        weights_status: Option<PathBuf>,
        /// Observer gains file replacing the `[gains]` table.
        #[arg(long)]
        gains: Option<PathBuf>,
        /// Feed the observers ground truth instead of network outputs.
        #[arg(long)]
        no_networks: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics from an estimates file and the flight it came from.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report file (JSON); printed to stdout either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.scenario.seed = seed;
        cfg.training.seed = seed;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, sessions, out } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = sessions {
                cfg.sessions.count = n;
            }
            cfg.validate()?;
            let dir = out.or(cfg.paths.data_dir.clone()).ok_or_else(|| usage("simulate needs --out or paths.data_dir"))?;
            for s in simulate(&cfg, &dir)? {
                println!(
                    "{}: {:.1} s, {:.2} m flown, takeoff {:.2} s, landing {:.2} s",
                    s.path.display(),
                    s.duration_s,
                    s.distance_m,
                    s.takeoff_s,
                    s.landing_s
                );
            }
            Ok(())
        }
        Command::Train { which, common, data, out } => {
            let cfg = load_config(&common)?;
            let dir = data.or(cfg.paths.data_dir.clone()).ok_or_else(|| usage("train needs --data or paths.data_dir"))?;
            let outcome = train_command(which, &cfg, &dir, &out)?;
            let best = outcome
                .history
                .iter()
                .find(|h| h.epoch == outcome.best_epoch)
                .ok_or_else(|| Error::Numerical("training produced no epochs".into()))?;
            let label = if which == NetworkKind::Status { "validation accuracy" } else { "validation RMSE per axis" };
            println!("best epoch {}: {label} {:?}", outcome.best_epoch, best.val_metric);
            println!("weights {} sha256 {}", out.display(), file_sha256(&out)?);
            Ok(())
        }
        Command::Estimate {
            common,
            data,
            weights_velocity,
            weights_acceleration,
            weights_status,
            gains,
            no_networks,
            out,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(g) = gains {
                cfg.gains = load_gains(&g)?;
            }
            cfg.validate()?;
            let weights = if no_networks {
                None
            } else {
                let need = |p: Option<PathBuf>| p.ok_or_else(|| usage("all three --weights-* flags are required"));
                Some([need(weights_velocity)?, need(weights_acceleration)?, need(weights_status)?])
            };
            let metrics = estimate_command(&cfg, &data, weights.as_ref(), &out)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(())
        }
        Command::Evaluate {
            common,
            estimates,
            data,
            out,
        } => {
            let cfg = load_config(&common)?;
            let metrics = evaluate_command(&cfg, &estimates, &data)?;
            let text = metrics_json(&metrics)?;
            if let Some(p) = out {
                write_text(&p, &text)?;
            }
            println!("{text}");
            Ok(())
        }
    }
}

fn usage(msg: &str) -> Error {
    Error::Config(msg.into())
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub path: PathBuf,
    pub duration_s: f64,
    pub distance_m: f64,
    pub takeoff_s: f64,
    pub landing_s: f64,
}

/// Scenario of session `i`: consecutive seeds from the configured one.
pub fn session_scenario(cfg: &RunConfig, i: usize) -> ScenarioConfig {
    ScenarioConfig {
        seed: cfg.scenario.seed.wrapping_add(i as u64),
        ..cfg.scenario.clone()
    }
}

/// Sensor noise seed of session `i`, decorrelated from the trajectory seed.
pub fn session_sensor_seed(cfg: &RunConfig, i: usize) -> u64 {
    cfg.scenario.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1 + i as u64)
}

pub fn simulate_session(cfg: &RunConfig, i: usize) -> Result<Vec<FlightRecord>> {
    let truth = generate_trajectory(&session_scenario(cfg, i), &cfg.vehicle)?;
    synthesize_sensors(&truth, &cfg.rig, &cfg.vehicle, session_sensor_seed(cfg, i))
}

pub fn session_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("session_{i:03}.csv"))
}

pub fn simulate(cfg: &RunConfig, dir: &Path) -> Result<Vec<SessionSummary>> {
    create_dir(dir)?;
    let mut out = Vec::new();
    for i in 0..cfg.sessions.count {
        let records = simulate_session(cfg, i)?;
        let path = session_path(dir, i);
        write_dataset(&path, &records)?;
        let positions: Vec<Vec3> = records.iter().filter_map(|r| r.truth.map(|g| g.position)).collect();
        let distance_m = positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let sc = session_scenario(cfg, i);
        info!("wrote {} ({} rows)", path.display(), records.len());
        out.push(SessionSummary {
            path,
            duration_s: records.len() as f64 * crate::record::BASE_DT,
            distance_m,
            takeoff_s: sc.liftoff_time(),
            landing_s: sc.touchdown_time(),
        });
    }
    Ok(out)
}

/// Session CSV files of `dir`, sorted by name.
pub fn session_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn train_sessions(
    kind: NetworkKind,
    cfg: &RunConfig,
    train_logs: &[Vec<FlightRecord>],
    val_logs: &[Vec<FlightRecord>],
) -> Result<TrainOutcome> {
    let window = kind.spec().sequence_length;
    let features = |logs: &[Vec<FlightRecord>]| -> Result<Vec<_>> {
        logs.iter().map(|r| session_features(kind, r, &cfg.rig.atmosphere, None)).collect()
    };
    let train_set = make_windows(features(train_logs)?, window, 1)?;
    let val_set = make_windows(features(val_logs)?, window, 1)?;
    info!("{}: {} training windows, {} validation windows", kind.name(), train_set.len(), val_set.len());
    train(kind, &train_set, &val_set, &cfg.training)
}

pub fn write_history(path: &Path, outcome: &TrainOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = outcome.history.first().map_or(0, |h| h.val_metric.len());
    let mut head = vec!["epoch".to_string(), "train_loss".into(), "val_loss".into(), "lr".into()];
    head.extend((0..k).map(|j| format!("val_metric_{j}")));
    w.write_record(&head)?;
    for h in &outcome.history {
        let mut row = vec![h.epoch.to_string(), h.train_loss.to_string(), h.val_loss.to_string(), h.lr.to_string()];
        row.extend(h.val_metric.iter().map(|m| m.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn history_path(weights: &Path) -> PathBuf {
    weights.with_extension("history.csv")
}

pub fn train_command(kind: NetworkKind, cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let files = session_files(data_dir)?;
    let split = split_sessions(files)?;
    let load = |ps: &[PathBuf]| ps.iter().map(|p| read_dataset(p)).collect::<Result<Vec<_>>>();
    let outcome = train_sessions(kind, cfg, &load(&split.train)?, &load(&split.validation)?)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    outcome.model.save(out)?;
    write_history(&history_path(out), &outcome)?;
    Ok(outcome)
}

/// Injected biases of a synthetic flight, taken from the configured rig.
pub fn bias_truth(cfg: &RunConfig, mode: EstimateMode) -> BiasTruth {
    BiasTruth {
        accel_body: Vec3::from(cfg.rig.bias.accel),
        velocity_body: match mode {
            EstimateMode::Oracle => Vec3::from(cfg.fusion.oracle_velocity_bias),
            EstimateMode::Networks => Vec3::zeros(),
        },
        baro: cfg.rig.bias.baro,
        baro_rate: cfg.rig.bias.baro_rate,
    }
}

fn has_truth(records: &[FlightRecord]) -> bool {
    !records.is_empty() && records.iter().all(|r| r.truth.is_some())
}

pub fn metrics_for(cfg: &RunConfig, estimates: &[crate::fusion::Estimate], records: &[FlightRecord], mode: EstimateMode) -> Result<Metrics> {
    let truth = has_truth(records).then(|| bias_truth(cfg, mode));
    compute_metrics(estimates, records, &cfg.rig.atmosphere, truth.as_ref())
}

pub fn metrics_json(m: &Metrics) -> Result<String> {
    Ok(serde_json::to_string_pretty(m)?)
}

pub fn estimate_command(cfg: &RunConfig, data: &Path, weights: Option<&[PathBuf; 3]>, out: &Path) -> Result<Metrics> {
    let records = read_dataset(data)?;
    if records.len() < 2 {
        return Err(Error::Data {
            path: data.to_path_buf(),
            row: records.len(),
            message: "a flight needs at least two rows".into(),
        });
    }
    let odo_cfg = cfg.odometry();
    let field = cfg.rig.earth_field();
    let (odometry, mode) = match weights {
        Some([v, a, s]) => {
            let models = [
                Model::load_kind(v, NetworkKind::Velocity)?,
                Model::load_kind(a, NetworkKind::Acceleration)?,
                Model::load_kind(s, NetworkKind::Status)?,
            ];
            let set = NetworkSet {
                velocity: &models[0],
                acceleration: &models[1],
                status: &models[2],
            };
            (run_odometry(&records, Estimators::Networks(set), &odo_cfg, &cfg.rig.atmosphere, &field)?, EstimateMode::Networks)
        }
        None => {
            let opts = OracleOptions {
                velocity_bias: Vec3::from(cfg.fusion.oracle_velocity_bias),
            };
            (run_odometry(&records, Estimators::Oracle(opts), &odo_cfg, &cfg.rig.atmosphere, &field)?, EstimateMode::Oracle)
        }
    };
    create_dir(out)?;
    save_estimates(&out.join("estimates.csv"), &odometry.estimates, mode)?;
    let metrics = metrics_for(cfg, &odometry.estimates, &records, mode)?;
    write_text(&out.join("metrics.json"), &metrics_json(&metrics)?)?;
    write_figures(out, cfg, &records, &odometry, mode)?;
    info!("drift {:.3} m over {:.1} s", metrics.drift_m, metrics.duration_s);
    Ok(metrics)
}

pub fn evaluate_command(cfg: &RunConfig, estimates: &Path, data: &Path) -> Result<Metrics> {
    let (est, mode) = load_estimates(estimates)?;
    let records = read_dataset(data)?;
    metrics_for(cfg, &est, &records, mode)
}

fn cells(v: Option<Vec3>) -> [String; 3] {
    match v {
        Some(v) => [v.x.to_string(), v.y.to_string(), v.z.to_string()],
        None => Default::default(),
    }
}

/// Plot-ready series: velocity estimate vs truth, position vs truth and dead
/// reckoning, and bias estimates vs the injected values.
fn write_figures(dir: &Path, cfg: &RunConfig, records: &[FlightRecord], od: &Odometry, mode: EstimateMode) -> Result<()> {
    let bias = has_truth(records).then(|| bias_truth(cfg, mode));
    let mut vel = csv::Writer::from_path(dir.join("fig_velocity.csv"))?;
    let mut pos = csv::Writer::from_path(dir.join("fig_position.csv"))?;
    let mut bia = csv::Writer::from_path(dir.join("fig_bias.csv"))?;
    let xyz = |p: &str| ["x", "y", "z"].map(|a| format!("{p}{a}"));
    let header = |groups: &[&str]| {
        let mut h = vec!["t".to_string()];
        for g in groups {
            h.extend(xyz(g));
        }
        h
    };
    vel.write_record(header(&["net_body_v", "truth_body_v", "fused_v", "truth_v"]))?;
    pos.write_record(header(&["fused_p", "truth_p", "dr_p"]))?;
    let mut bh = header(&["ba_", "truth_ba_"]);
    bh.extend(["bw_z", "truth_bw_z", "bb", "truth_bb"].map(String::from));
    bia.write_record(&bh)?;
    for (i, (r, e)) in records.iter().zip(&od.estimates).enumerate() {
        let t = r.t.to_string();
        let g = r.truth.as_ref();
        let mut row = vec![t.clone()];
        row.extend(cells(od.velocity_measurement[i]));
        row.extend(cells(g.map(|g| g.body_velocity())));
        row.extend(cells(Some(e.state.velocity)));
        row.extend(cells(g.map(|g| g.velocity)));
        vel.write_record(&row)?;

        let mut row = vec![t.clone()];
        row.extend(cells(Some(e.state.position)));
        row.extend(cells(g.map(|g| g.position)));
        row.extend(cells(Some(e.dead_reckoning)));
        pos.write_record(&row)?;

        let mut row = vec![t];
        row.extend(cells(Some(e.state.accel_bias)));
        let truth_ba = match (g, &bias) {
            (Some(g), Some(b)) => Some(g.attitude().apply(&b.accel_body)),
            _ => None,
        };
        row.extend(cells(truth_ba));
        row.push(e.state.velocity_bias.z.to_string());
        row.push(match (g, &bias) {
            (Some(g), Some(b)) => g.attitude().apply(&b.velocity_body).z.to_string(),
            _ => String::new(),
        });
        row.push(e.state.baro_bias.to_string());
        row.push(bias.map(|b| b.baro_down(r.t).to_string()).unwrap_or_default());
        bia.write_record(&row)?;
    }
    for (w, name) in [(vel, "fig_velocity.csv"), (pos, "fig_position.csv"), (bia, "fig_bias.csv")] {
        let mut w = w;
        w.flush().map_err(|e| Error::io(dir.join(name), e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_map_to_exit_code_one() {
        assert!(Cli::try_parse_from(["aeolus", "estimate", "--data", "x.csv", "--out", "o"]).is_err());
        let ok = Cli::try_parse_from(["aeolus", "estimate", "--data", "x.csv", "--out", "o", "--no-networks"]);
        assert!(ok.is_ok());
        assert_eq!(usage("x").exit_code(), 1);
    }

    #[test]
    fn seed_flag_overrides_both_seeds() {
        let cfg = load_config(&Common { config: None, seed: Some(9) }).unwrap();
        assert_eq!((cfg.scenario.seed, cfg.training.seed), (9, 9));
        assert_ne!(session_sensor_seed(&cfg, 0), session_sensor_seed(&cfg, 1));
        assert_eq!(session_scenario(&cfg, 2).seed, 11);
    }

    #[test]
    fn network_kind_parses_from_the_command_line() {
        let cli = Cli::try_parse_from(["aeolus", "train", "status", "--data", "d", "--out", "w.json"]).unwrap();
        assert!(matches!(cli.command, Command::Train { which: NetworkKind::Status, .. }));
    }
}
