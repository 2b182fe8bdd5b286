//! Per-tick feature matrices for the three networks and sliding-window batching.

use serde::{Deserialize, Serialize};

use super::network::{build_paper_networks, NetworkSpec, ACCELERATION_INPUTS, STATUS_INPUTS, VELOCITY_INPUTS};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::estimators::{pressure_to_altitude, AtmosphereParams};
use crate::geometry::{Rotation, Vec3};
use crate::record::FlightRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Velocity,
    Acceleration,
    Status,
}

impl NetworkKind {
    pub const ALL: [NetworkKind; 3] = [NetworkKind::Velocity, NetworkKind::Acceleration, NetworkKind::Status];

    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Velocity => "velocity",
            NetworkKind::Acceleration => "acceleration",
            NetworkKind::Status => "status",
        }
    }

    pub fn spec(self) -> NetworkSpec {
        let [v, a, s] = build_paper_networks();
        match self {
            NetworkKind::Velocity => v,
            NetworkKind::Acceleration => a,
            NetworkKind::Status => s,
        }
    }

    pub fn input_channels(self) -> usize {
        match self {
            NetworkKind::Velocity => VELOCITY_INPUTS,
            NetworkKind::Acceleration => ACCELERATION_INPUTS,
            NetworkKind::Status => STATUS_INPUTS,
        }
    }

    pub fn output_channels(self) -> usize {
        match self {
            NetworkKind::Status => 2,
            _ => 3,
        }
    }

    /// Channels replaced by their offset from the window's first sample.
    pub fn shifted_channels(self) -> Vec<usize> {
        match self {
            NetworkKind::Status => vec![STATUS_BARO_CHANNEL],
            _ => Vec::new(),
        }
    }
}

impl std::str::FromStr for NetworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "velocity" => Ok(NetworkKind::Velocity),
            "acceleration" => Ok(NetworkKind::Acceleration),
            "status" => Ok(NetworkKind::Status),
            other => Err(Error::Config(format!(
                "unknown network {other:?}; expected velocity, acceleration or status"
            ))),
        }
    }
}

/// Index of the barometric altitude channel in the status input.
pub const STATUS_BARO_CHANNEL: usize = 5;
/// Boxcar length for the accelerometer and gyro magnitude channels, samples.
const MAGNITUDE_WINDOW: usize = 20;

/// Sample-and-hold of sparse channels onto the base grid.
struct Held<const N: usize> {
    value: [f64; N],
}

impl<const N: usize> Held<N> {
    fn new() -> Self {
        Self { value: [0.0; N] }
    }

    fn update(&mut self, v: Option<[f64; N]>) -> [f64; N] {
        if let Some(v) = v {
            self.value = v;
        }
        self.value
    }
}

struct Boxcar {
    buf: std::collections::VecDeque<f64>,
    sum: f64,
    len: usize,
}

impl Boxcar {
    fn new(len: usize) -> Self {
        Self {
            buf: std::collections::VecDeque::with_capacity(len + 1),
            sum: 0.0,
            len,
        }
    }

    fn push(&mut self, v: f64) -> f64 {
        self.buf.push_back(v);
        self.sum += v;
        if self.buf.len() > self.len {
            self.sum -= self.buf.pop_front().unwrap_or(0.0);
        }
        self.sum / self.buf.len() as f64
    }
}

fn vec3(v: Option<Vec3>) -> Option<[f64; 3]> {
    v.map(|v| [v.x, v.y, v.z])
}

/// Row-major `(N, C)` inputs and optional `(N, K)` targets of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionFeatures {
    pub kind: NetworkKind,
    pub t: Vec<f64>,
    pub inputs: Vec<f64>,
    pub targets: Option<Vec<f64>>,
}

impl SessionFeatures {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.kind.input_channels()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.channels();
        &self.inputs[i * c..(i + 1) * c]
    }
}

/// Incremental feature extraction, one record at a time. Used offline by
/// [`session_features`] and online by the odometry loop, where the attitude
/// estimate for the acceleration input only exists as the stream advances.
pub struct FeatureBuilder {
    features: SessionFeatures,
    atmosphere: AtmosphereParams,
    anem: Held<4>,
    gyro: Held<3>,
    accel: Held<3>,
    esc: Held<4>,
    voltage: Held<1>,
    current: Held<1>,
    baro: Held<1>,
    accel_mag: Boxcar,
    gyro_mag: Boxcar,
}

impl FeatureBuilder {
    /// `with_targets` keeps ground-truth targets; every pushed record must
    /// then carry truth.
    pub fn new(kind: NetworkKind, atmosphere: &AtmosphereParams, with_targets: bool) -> Self {
        Self {
            features: SessionFeatures {
                kind,
                t: Vec::new(),
                inputs: Vec::new(),
                targets: with_targets.then(Vec::new),
            },
            atmosphere: *atmosphere,
            anem: Held::new(),
            gyro: Held::new(),
            accel: Held::new(),
            esc: Held::new(),
            voltage: Held::new(),
            current: Held::new(),
            baro: Held::new(),
            accel_mag: Boxcar::new(MAGNITUDE_WINDOW),
            gyro_mag: Boxcar::new(MAGNITUDE_WINDOW),
        }
    }

    pub fn features(&self) -> &SessionFeatures {
        &self.features
    }

    pub fn finish(self) -> SessionFeatures {
        self.features
    }

    /// Append the feature row of `rec`. `attitude` overrides the ground-truth
    /// orientation used by the acceleration input.
    pub fn push(&mut self, rec: &FlightRecord, attitude: Option<&Rotation>) -> Result<()> {
        let i = self.features.t.len();
        let kind = self.features.kind;
        let a = self.anem.update(rec.anemometer);
        let g = self.gyro.update(vec3(rec.gyro));
        let e = self.esc.update(rec.esc);
        let v = self.voltage.update(rec.voltage.map(|x| [x]))[0];
        let cur = self.current.update(rec.current.map(|x| [x]))[0];
        let inputs = &mut self.features.inputs;
        match kind {
            NetworkKind::Velocity => {
                inputs.extend_from_slice(&a);
                inputs.extend_from_slice(&g);
            }
            NetworkKind::Acceleration => {
                let q = match attitude {
                    Some(att) => att.to_quaternion(),
                    None => rec
                        .truth
                        .as_ref()
                        .map(|t| t.quaternion)
                        .ok_or_else(|| Error::Dataset(format!("record {i} has no attitude for the acceleration input")))?,
                };
                inputs.extend_from_slice(&a);
                inputs.extend_from_slice(&e);
                inputs.extend_from_slice(&q);
                inputs.push(v);
                inputs.push(cur);
            }
            NetworkKind::Status => {
                let h = match rec.pressure {
                    Some(p) => Some([pressure_to_altitude(p, &self.atmosphere)?]),
                    None => None,
                };
                let h = self.baro.update(h)[0];
                let am = self.accel.update(vec3(rec.accel));
                let acc_norm = Vec3::from(am).norm();
                inputs.extend_from_slice(&[
                    0.5 * (a[2] + a[3]),
                    a[2] - a[3],
                    e.iter().sum::<f64>() / 4.0,
                    v,
                    cur,
                    h,
                    self.accel_mag.push(acc_norm),
                    self.gyro_mag.push(Vec3::from(g).norm()),
                ]);
            }
        }
        if let Some(out) = self.features.targets.as_mut() {
            let truth = rec
                .truth
                .as_ref()
                .ok_or_else(|| Error::Dataset(format!("record {i} has no ground truth for the training target")))?;
            match kind {
                NetworkKind::Velocity => out.extend(truth.body_velocity().iter()),
                NetworkKind::Acceleration => out.extend(truth.acceleration.iter()),
                NetworkKind::Status => {
                    let mut one_hot = [0.0; 2];
                    one_hot[truth.status.as_index()] = 1.0;
                    out.extend_from_slice(&one_hot);
                }
            }
        }
        self.features.t.push(rec.t);
        Ok(())
    }
}

/// Feature rows for one session. `attitude` supplies the orientation used by
/// the acceleration network (one per record); ground truth is used when it is
/// `None`. Targets are kept when every record carries ground truth.
pub fn session_features(
    kind: NetworkKind,
    records: &[FlightRecord],
    atmosphere: &AtmosphereParams,
    attitude: Option<&[Rotation]>,
) -> Result<SessionFeatures> {
    if let Some(a) = attitude {
        if a.len() != records.len() {
            return Err(Error::Shape(format!(
                "{} attitude samples for {} records",
                a.len(),
                records.len()
            )));
        }
    }
    let has_truth = records.iter().all(|r| r.truth.is_some());
    let mut builder = FeatureBuilder::new(kind, atmosphere, has_truth);
    for (i, rec) in records.iter().enumerate() {
        builder.push(rec, attitude.map(|a| &a[i]))?;
    }
    Ok(builder.finish())
}

/// Normalised `(1, window, C)` input of the window ending at sample `end`.
pub fn window_input(features: &SessionFeatures, end: usize, window: usize, norm: &Normalization) -> Result<Tensor> {
    if end + 1 < window || end >= features.len() {
        return Err(Error::EmptyBatch(format!(
            "no full window of {window} samples ends at sample {end}"
        )));
    }
    let c = features.channels();
    let mut data = vec![0.0; window * c];
    raw_window(features, end, window, &features.kind.shifted_channels(), &mut data);
    normalize_rows(&mut data, c, norm);
    Tensor::new(vec![1, window, c], data)
}

fn raw_window(s: &SessionFeatures, end: usize, window: usize, shifted: &[usize], out: &mut [f64]) {
    let c = s.channels();
    let start = end + 1 - window;
    out.copy_from_slice(&s.inputs[start * c..(end + 1) * c]);
    for &ch in shifted {
        let first = out[ch];
        for row in out.chunks_exact_mut(c) {
            row[ch] -= first;
        }
    }
}

fn normalize_rows(data: &mut [f64], c: usize, norm: &Normalization) {
    for row in data.chunks_exact_mut(c) {
        for j in 0..c {
            row[j] = (row[j] - norm.input_mean[j]) / norm.input_std[j];
        }
    }
}

/// Per-channel affine scaling frozen from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
}

impl Normalization {
    pub fn identity(inputs: usize, outputs: usize) -> Self {
        Self {
            input_mean: vec![0.0; inputs],
            input_std: vec![1.0; inputs],
            output_mean: vec![0.0; outputs],
            output_std: vec![1.0; outputs],
        }
    }

    pub fn validate(&self, inputs: usize, outputs: usize) -> Result<()> {
        let ok = self.input_mean.len() == inputs
            && self.input_std.len() == inputs
            && self.output_mean.len() == outputs
            && self.output_std.len() == outputs
            && self.input_std.iter().chain(&self.output_std).all(|s| *s > 0.0 && s.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "normalisation constants must cover {inputs} inputs and {outputs} outputs with positive scales"
            )))
        }
    }

    pub fn denormalize_output(&self, y: &mut [f64]) {
        let k = self.output_mean.len();
        for row in y.chunks_exact_mut(k) {
            for j in 0..k {
                row[j] = row[j] * self.output_std[j] + self.output_mean[j];
            }
        }
    }
}

fn mean_std(sum: &[f64], sq: &[f64], n: f64) -> (Vec<f64>, Vec<f64>) {
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| {
            let var = (q / n - m * m).max(0.0);
            if var.sqrt() < 1e-9 {
                1.0
            } else {
                var.sqrt()
            }
        })
        .collect();
    (mean, std)
}

/// Sliding windows over whole sessions. A window never spans two sessions;
/// its target is the value at its last sample.
#[derive(Debug, Clone)]
pub struct WindowSet {
    pub sessions: Vec<SessionFeatures>,
    pub window: usize,
    /// `(session, last sample index)` of every window.
    pub ends: Vec<(usize, usize)>,
    shifted: Vec<usize>,
}

/// Windows of `window` samples every `stride` samples. Fails with an
/// empty-batch error when no session is long enough.
pub fn make_windows(sessions: Vec<SessionFeatures>, window: usize, stride: usize) -> Result<WindowSet> {
    if window == 0 || stride == 0 {
        return Err(Error::Config("window and stride must be positive".into()));
    }
    let Some(kind) = sessions.first().map(|s| s.kind) else {
        return Err(Error::EmptyBatch("no sessions".into()));
    };
    if sessions.iter().any(|s| s.kind != kind) {
        return Err(Error::Dataset("sessions mix feature layouts of different networks".into()));
    }
    let mut ends = Vec::new();
    for (si, s) in sessions.iter().enumerate() {
        if s.len() >= window {
            ends.extend((window - 1..s.len()).step_by(stride).map(|e| (si, e)));
        }
    }
    if ends.is_empty() {
        return Err(Error::EmptyBatch(format!(
            "no session holds a full window of {window} samples"
        )));
    }
    Ok(WindowSet {
        sessions,
        window,
        ends,
        shifted: kind.shifted_channels(),
    })
}

impl WindowSet {
    pub fn kind(&self) -> NetworkKind {
        self.sessions[0].kind
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn has_targets(&self) -> bool {
        self.sessions.iter().all(|s| s.targets.is_some())
    }

    /// Raw (unnormalised) window `w` written into `out`, with shifted channels
    /// taken relative to the first sample.
    fn raw_window(&self, w: usize, out: &mut [f64]) {
        let (si, end) = self.ends[w];
        raw_window(&self.sessions[si], end, self.window, &self.shifted, out);
    }

    pub fn target(&self, w: usize) -> Option<&[f64]> {
        let (si, end) = self.ends[w];
        let k = self.kind().output_channels();
        self.sessions[si].targets.as_ref().map(|t| &t[end * k..(end + 1) * k])
    }

    /// Scaling from at most `max_windows` evenly spaced windows.
    pub fn fit_normalization(&self, normalize_outputs: bool, max_windows: usize) -> Normalization {
        let kind = self.kind();
        let (c, k) = (kind.input_channels(), kind.output_channels());
        let step = self.len().div_ceil(max_windows.max(1)).max(1);
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut buf = vec![0.0; self.window * c];
        let mut rows = 0.0;
        let (mut osum, mut osq, mut outs) = (vec![0.0; k], vec![0.0; k], 0.0);
        for w in (0..self.len()).step_by(step) {
            self.raw_window(w, &mut buf);
            for row in buf.chunks_exact(c) {
                for j in 0..c {
                    sum[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
            }
            rows += self.window as f64;
            if let Some(y) = self.target(w) {
                for j in 0..k {
                    osum[j] += y[j];
                    osq[j] += y[j] * y[j];
                }
                outs += 1.0;
            }
        }
        let (input_mean, input_std) = mean_std(&sum, &sq, rows);
        let (output_mean, output_std) = if normalize_outputs && outs > 0.0 && kind != NetworkKind::Status {
            mean_std(&osum, &osq, outs)
        } else {
            (vec![0.0; k], vec![1.0; k])
        };
        Normalization {
            input_mean,
            input_std,
            output_mean,
            output_std,
        }
    }

    /// Normalised `(B, T, C)` inputs for the windows in `idx`.
    pub fn inputs(&self, idx: &[usize], norm: &Normalization) -> Tensor {
        let c = self.kind().input_channels();
        let per = self.window * c;
        let mut data = vec![0.0; idx.len() * per];
        for (chunk, &w) in data.chunks_exact_mut(per).zip(idx) {
            self.raw_window(w, chunk);
            normalize_rows(chunk, c, norm);
        }
        Tensor::new(vec![idx.len(), self.window, c], data).expect("window size is consistent")
    }

    /// Normalised `(B, K)` targets for the windows in `idx`.
    pub fn targets(&self, idx: &[usize], norm: &Normalization) -> Result<Tensor> {
        let k = self.kind().output_channels();
        let mut data = Vec::with_capacity(idx.len() * k);
        for &w in idx {
            let y = self
                .target(w)
                .ok_or_else(|| Error::Dataset("windows have no ground-truth targets".into()))?;
            for j in 0..k {
                data.push((y[j] - norm.output_mean[j]) / norm.output_std[j]);
            }
        }
        Tensor::new(vec![idx.len(), k], data)
    }

    pub fn end_time(&self, w: usize) -> f64 {
        let (si, end) = self.ends[w];
        self.sessions[si].t[end]
    }
}
