//! Base-grid CSV flight logs. The first line carries the schema version,
//! followed by a header row; an empty cell means the sensor produced no
//! sample on that tick.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::record::{FlightRecord, FlightStatus, GroundTruth, BASE_RATE_HZ};

pub const SCHEMA_NAME: &str = "aeolus-flight-log";
pub const SCHEMA_VERSION: u32 = 1;

/// Sensor columns, in file order.
pub const SENSOR_COLUMNS: [&str; 21] = [
    "t", "anem_1", "anem_2", "anem_3", "anem_4", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz", "pressure",
    "esc_1", "esc_2", "esc_3", "esc_4", "voltage", "current",
];
/// Ground-truth columns, present for simulated or motion-captured flights.
pub const TRUTH_COLUMNS: [&str; 14] = [
    "gt_px", "gt_py", "gt_pz", "gt_vx", "gt_vy", "gt_vz", "gt_ax", "gt_ay", "gt_az", "gt_qw", "gt_qx", "gt_qy", "gt_qz",
    "status",
];

fn schema_line() -> String {
    format!("# {SCHEMA_NAME} v{SCHEMA_VERSION}")
}

fn header(with_truth: bool) -> Vec<&'static str> {
    let mut h: Vec<&str> = SENSOR_COLUMNS.to_vec();
    if with_truth {
        h.extend_from_slice(&TRUTH_COLUMNS);
    }
    h
}

fn push_opt<const N: usize>(row: &mut Vec<String>, v: Option<[f64; N]>) {
    match v {
        Some(v) => row.extend(v.iter().map(|x| x.to_string())),
        None => row.extend(std::iter::repeat_n(String::new(), N)),
    }
}

fn arr(v: Option<Vec3>) -> Option<[f64; 3]> {
    v.map(|v| [v.x, v.y, v.z])
}

/// Write `records` to `out`. Ground-truth columns are written when every
/// record carries truth. Floats use the shortest decimal that parses back to
/// the same value.
pub fn write_records<W: Write>(out: W, records: &[FlightRecord]) -> Result<()> {
    let with_truth = !records.is_empty() && records.iter().all(|r| r.truth.is_some());
    let mut out = out;
    writeln!(out, "{}", schema_line()).map_err(|e| Error::io("<output>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(with_truth))?;
    for r in records {
        let mut row = vec![r.t.to_string()];
        push_opt(&mut row, r.anemometer);
        push_opt(&mut row, arr(r.accel));
        push_opt(&mut row, arr(r.gyro));
        push_opt(&mut row, arr(r.mag));
        push_opt(&mut row, r.pressure.map(|p| [p]));
        push_opt(&mut row, r.esc);
        push_opt(&mut row, r.voltage.map(|v| [v]));
        push_opt(&mut row, r.current.map(|c| [c]));
        if with_truth {
            let g = r.truth.as_ref().expect("checked above");
            push_opt(&mut row, arr(Some(g.position)));
            push_opt(&mut row, arr(Some(g.velocity)));
            push_opt(&mut row, arr(Some(g.acceleration)));
            push_opt(&mut row, Some(g.quaternion));
            row.push(g.status.as_index().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

pub fn write_dataset(path: &Path, records: &[FlightRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(std::io::BufWriter::new(file), records).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

struct RowParser<'a> {
    path: &'a Path,
    row: usize,
    fields: &'a csv::StringRecord,
}

impl RowParser<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Data {
            path: self.path.to_path_buf(),
            row: self.row,
            message: message.into(),
        }
    }

    fn cell(&self, col: usize, name: &str) -> Result<Option<f64>> {
        let s = self.fields.get(col).unwrap_or("").trim();
        if s.is_empty() {
            return Ok(None);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| self.err(format!("column {name}: cannot parse {s:?} as a number")))?;
        if !v.is_finite() {
            return Err(self.err(format!("column {name}: non-finite value {s}")));
        }
        Ok(Some(v))
    }

    /// A group of cells that must be all present or all empty.
    fn group<const N: usize>(&self, start: usize, names: &[&str]) -> Result<Option<[f64; N]>> {
        let mut out = [0.0; N];
        let mut present = 0;
        for (j, o) in out.iter_mut().enumerate() {
            if let Some(v) = self.cell(start + j, names[start + j])? {
                *o = v;
                present += 1;
            }
        }
        match present {
            0 => Ok(None),
            p if p == N => Ok(Some(out)),
            _ => Err(self.err(format!(
                "columns {}..{} are partially filled",
                names[start],
                names[start + N - 1]
            ))),
        }
    }
}

/// Parse a flight log. `path` only labels errors.
pub fn read_records<R: BufRead>(mut input: R, path: &Path) -> Result<Vec<FlightRecord>> {
    let data_err = |row: usize, message: String| Error::Data {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut first = String::new();
    input.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let first = first.trim_end();
    if first != schema_line() {
        return Err(if first.starts_with(&format!("# {SCHEMA_NAME} ")) {
            data_err(0, format!("schema version mismatch: found {first:?}, this build reads v{SCHEMA_VERSION}"))
        } else {
            data_err(0, format!("missing schema line {:?}", schema_line()))
        });
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(false).from_reader(input);
    let mut rows = reader.records();
    let head = match rows.next() {
        Some(h) => h?,
        None => return Err(data_err(0, "missing header row".into())),
    };
    let names: Vec<&str> = head.iter().collect();
    let with_truth = if names == header(true) {
        true
    } else if names == header(false) {
        false
    } else {
        return Err(data_err(
            0,
            format!("unexpected header {:?}; expected {:?} optionally followed by ground-truth columns", names, header(false)),
        ));
    };
    let mut out = Vec::new();
    let mut prev_t: Option<f64> = None;
    for (i, rec) in rows.enumerate() {
        let fields = rec?;
        let p = RowParser {
            path,
            row: i + 1,
            fields: &fields,
        };
        let t = p.cell(0, "t")?.ok_or_else(|| p.err("missing timestamp"))?;
        if let Some(pt) = prev_t {
            if !(t > pt) {
                return Err(p.err(format!("timestamp {t} does not increase (previous {pt})")));
            }
        }
        let ticks = t * BASE_RATE_HZ;
        if (ticks - ticks.round()).abs() > 1e-6 * ticks.abs().max(1.0) {
            return Err(p.err(format!("timestamp {t} is off the {BASE_RATE_HZ} Hz grid")));
        }
        prev_t = Some(t);
        let v3 = |a: Option<[f64; 3]>| a.map(Vec3::from);
        let truth = if with_truth {
            let pos = p.group::<3>(21, &names)?;
            let vel = p.group::<3>(24, &names)?;
            let acc = p.group::<3>(27, &names)?;
            let q = p.group::<4>(30, &names)?;
            let st = p.cell(34, "status")?;
            match (pos, vel, acc, q, st) {
                (Some(pos), Some(vel), Some(acc), Some(q), Some(st)) => {
                    let status = match st {
                        s if s == 0.0 => FlightStatus::OnGround,
                        s if s == 1.0 => FlightStatus::InAir,
                        s => return Err(p.err(format!("status must be 0 or 1, got {s}"))),
                    };
                    Some(GroundTruth {
                        position: pos.into(),
                        velocity: vel.into(),
                        acceleration: acc.into(),
                        quaternion: q,
                        status,
                    })
                }
                (None, None, None, None, None) => None,
                _ => return Err(p.err("ground-truth columns are partially filled")),
            }
        } else {
            None
        };
        out.push(FlightRecord {
            t,
            anemometer: p.group::<4>(1, &names)?,
            accel: v3(p.group::<3>(5, &names)?),
            gyro: v3(p.group::<3>(8, &names)?),
            mag: v3(p.group::<3>(11, &names)?),
            pressure: p.group::<1>(14, &names)?.map(|v| v[0]),
            esc: p.group::<4>(15, &names)?,
            voltage: p.group::<1>(19, &names)?.map(|v| v[0]),
            current: p.group::<1>(20, &names)?.map(|v| v[0]),
            truth,
        });
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<FlightRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file), path)
}
