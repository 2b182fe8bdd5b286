//! The estimates CSV written by `estimate` and read back by `evaluate`.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{Estimate, FusionState};
use crate::geometry::Vec3;
use crate::record::FlightStatus;

pub const ESTIMATES_SCHEMA: &str = "# aeolus-estimates v1";

pub const ESTIMATE_COLUMNS: [&str; 23] = [
    "t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "bax", "bay", "baz", "bwx", "bwy", "bwz", "bb", "bb_rate",
    "status", "dr_px", "dr_py", "dr_pz", "mode",
];

/// Which measurements produced an estimates file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    Networks,
    Oracle,
}

impl EstimateMode {
    fn name(self) -> &'static str {
        match self {
            EstimateMode::Networks => "networks",
            EstimateMode::Oracle => "oracle",
        }
    }
}

pub fn write_estimates<W: Write>(out: W, estimates: &[Estimate], mode: EstimateMode) -> Result<()> {
    let mut out = out;
    writeln!(out, "{ESTIMATES_SCHEMA}").map_err(|e| Error::io("<output>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_COLUMNS)?;
    for e in estimates {
        let s = &e.state;
        let mut row: Vec<String> = vec![e.t.to_string()];
        for v in [s.position, s.velocity, s.acceleration, s.accel_bias, s.velocity_bias] {
            row.extend(v.iter().map(|x| x.to_string()));
        }
        row.push(s.baro_bias.to_string());
        row.push(s.baro_bias_rate.to_string());
        row.push(e.status.as_index().to_string());
        row.extend(e.dead_reckoning.iter().map(|x| x.to_string()));
        row.push(mode.name().to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

pub fn save_estimates(path: &Path, estimates: &[Estimate], mode: EstimateMode) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_estimates(std::io::BufWriter::new(file), estimates, mode)
}

pub fn read_estimates<R: BufRead>(mut input: R, path: &Path) -> Result<(Vec<Estimate>, EstimateMode)> {
    let err = |row: usize, message: String| Error::Data {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut first = String::new();
    input.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    if first.trim_end() != ESTIMATES_SCHEMA {
        return Err(err(0, format!("expected schema line {ESTIMATES_SCHEMA:?}, found {:?}", first.trim_end())));
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    if reader.headers()?.iter().ne(ESTIMATE_COLUMNS) {
        return Err(err(0, format!("unexpected header, expected {ESTIMATE_COLUMNS:?}")));
    }
    let mut out = Vec::new();
    let mut mode = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let mut v = [0.0; 22];
        for (j, x) in v.iter_mut().enumerate() {
            let cell = &rec[j];
            *x = cell
                .parse()
                .map_err(|_| err(row, format!("column {}: cannot parse {cell:?}", ESTIMATE_COLUMNS[j])))?;
        }
        let m = match &rec[22] {
            "networks" => EstimateMode::Networks,
            "oracle" => EstimateMode::Oracle,
            other => return Err(err(row, format!("unknown mode {other:?}"))),
        };
        if *mode.get_or_insert(m) != m {
            return Err(err(row, "mode changes within the file".into()));
        }
        let v3 = |k: usize| Vec3::new(v[k], v[k + 1], v[k + 2]);
        let status = match v[18] {
            s if s == 0.0 => FlightStatus::OnGround,
            s if s == 1.0 => FlightStatus::InAir,
            s => return Err(err(row, format!("status must be 0 or 1, got {s}"))),
        };
        out.push(Estimate {
            t: v[0],
            state: FusionState {
                position: v3(1),
                velocity: v3(4),
                acceleration: v3(7),
                accel_bias: v3(10),
                velocity_bias: v3(13),
                baro_bias: v[16],
                baro_bias_rate: v[17],
            },
            status,
            dead_reckoning: v3(19),
        });
    }
    let mode = mode.ok_or_else(|| err(0, "no estimate rows".into()))?;
    Ok((out, mode))
}

pub fn load_estimates(path: &Path) -> Result<(Vec<Estimate>, EstimateMode)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_estimates(BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimates_roundtrip_bitwise() {
        let est: Vec<Estimate> = (0..50)
            .map(|i| {
                let x = (i as f64 * 0.37).sin() / 3.0;
                Estimate {
                    t: i as f64 * 0.0025,
                    state: FusionState {
                        position: Vec3::new(x, -x, 1e-17 * x),
                        velocity: Vec3::new(x * 7.0, 0.1, -0.0),
                        acceleration: Vec3::repeat(x / 11.0),
                        accel_bias: Vec3::new(1e-300, x, 3.0),
                        velocity_bias: Vec3::new(0.0, 0.0, x),
                        baro_bias: -x,
                        baro_bias_rate: x * x,
                    },
                    status: if i > 20 { FlightStatus::InAir } else { FlightStatus::OnGround },
                    dead_reckoning: Vec3::new(x, x, x + 1.0),
                }
            })
            .collect();
        let mut buf = Vec::new();
        write_estimates(&mut buf, &est, EstimateMode::Oracle).unwrap();
        let (back, mode) = read_estimates(&buf[..], Path::new("e.csv")).unwrap();
        assert_eq!(mode, EstimateMode::Oracle);
        assert_eq!(back, est);
        assert_eq!(back[0].state.velocity.z.to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn wrong_schema_is_rejected() {
        assert!(read_estimates(&b"t,px\n0,1\n"[..], Path::new("e.csv")).is_err());
    }
}
