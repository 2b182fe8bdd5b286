use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, gru_backward, gru_forward, softmax_backward,
    softmax_rows, GruCache, GruGrads, GruParams,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d { filters: usize, kernel: usize, activation: Activation },
    Gru { units: usize, return_sequences: bool },
    Dense { units: usize, activation: Activation },
}

/// Ordered layer graph with its input contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input_channels: usize,
    /// Window length in base-grid samples.
    pub sequence_length: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.sequence_length == 0 {
            return Err(Error::Config(format!("network {}: empty input contract", self.name)));
        }
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv1d { filters, kernel, activation } => {
                    if filters == 0 || kernel == 0 || activation == Activation::Softmax {
                        return Err(Error::Config(format!("network {}: layer {i} is not a valid conv1d", self.name)));
                    }
                }
                LayerSpec::Gru { units, .. } => {
                    if units == 0 {
                        return Err(Error::Config(format!("network {}: layer {i} has zero units", self.name)));
                    }
                }
                LayerSpec::Dense { units, activation } => {
                    if units == 0 || i + 1 != n || activation == Activation::Relu {
                        return Err(Error::Config(format!(
                            "network {}: a dense head must be the final layer with linear or softmax output",
                            self.name
                        )));
                    }
                }
            }
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Dense { .. })) {
            return Err(Error::Config(format!("network {} must end in a dense layer", self.name)));
        }
        Ok(())
    }

    pub fn output_units(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { units, .. }) => *units,
            _ => 0,
        }
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self.layers.last(), Some(LayerSpec::Dense { activation: Activation::Softmax, .. }))
    }

    /// `(name, shape)` of every parameter array, per layer.
    pub fn parameter_shapes(&self) -> Vec<Vec<(&'static str, Vec<usize>)>> {
        let mut c = self.input_channels;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let shapes = match *layer {
                LayerSpec::Conv1d { filters, kernel, .. } => {
                    let s = vec![("kernel", vec![kernel, c, filters]), ("bias", vec![filters])];
                    c = filters;
                    s
                }
                LayerSpec::Gru { units, .. } => {
                    let s = vec![
                        ("w_z", vec![c, units]),
                        ("w_r", vec![c, units]),
                        ("w_h", vec![c, units]),
                        ("u_z", vec![units, units]),
                        ("u_r", vec![units, units]),
                        ("u_h", vec![units, units]),
                        ("b_z", vec![units]),
                        ("b_r", vec![units]),
                        ("b_h", vec![units]),
                    ];
                    c = units;
                    s
                }
                LayerSpec::Dense { units, .. } => {
                    let s = vec![("kernel", vec![c, units]), ("bias", vec![units])];
                    c = units;
                    s
                }
            };
            out.push(shapes);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .flatten()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// SHA-256 of the canonical JSON encoding of the layout.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("spec serialises");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One named parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Parameters of every layer, in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub layers: Vec<Vec<Param>>,
}

impl Weights {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .parameter_shapes()
            .into_iter()
            .map(|shapes| {
                shapes
                    .into_iter()
                    .map(|(name, shape)| Param {
                        name: name.to_string(),
                        data: vec![0.0; shape.iter().product()],
                        shape,
                    })
                    .collect()
            })
            .collect();
        Self { layers }
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn glorot(spec: &NetworkSpec, seed: u64) -> Self {
        let mut w = Self::zeros(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (layer, lspec) in w.layers.iter_mut().zip(&spec.layers) {
            for p in layer.iter_mut() {
                if p.shape.len() < 2 {
                    continue;
                }
                let (fan_in, fan_out) = match (lspec, p.shape.as_slice()) {
                    (LayerSpec::Conv1d { .. }, &[k, cin, cout]) => (k * cin, k * cout),
                    (_, &[a, b]) => (a, b),
                    _ => unreachable!("parameter ranks are fixed by the layer kind"),
                };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                for v in p.data.iter_mut() {
                    *v = dist.sample(&mut rng);
                }
            }
        }
        w
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = spec.parameter_shapes();
        if expected.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "network {} has {} layers, weights have {}",
                spec.name,
                expected.len(),
                self.layers.len()
            )));
        }
        for (i, (exp, got)) in expected.iter().zip(&self.layers).enumerate() {
            if exp.len() != got.len() {
                return Err(Error::Shape(format!("layer {i}: expected {} parameter arrays", exp.len())));
            }
            for ((name, shape), p) in exp.iter().zip(got) {
                let len: usize = shape.iter().product();
                if p.name != *name || p.shape != *shape || p.data.len() != len {
                    return Err(Error::Shape(format!(
                        "layer {i}: parameter {} with shape {:?} does not match {name} {shape:?}",
                        p.name, p.shape
                    )));
                }
                if p.data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical(format!("layer {i}: parameter {name} is not finite")));
                }
            }
        }
        Ok(())
    }

    pub fn flat_len(&self) -> usize {
        self.layers.iter().flatten().map(|p| p.data.len()).sum()
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flatten().flat_map(|p| p.data.iter())
    }

    pub fn iter_flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flatten().flat_map(|p| p.data.iter_mut())
    }

    pub fn scale(&mut self, s: f64) {
        self.iter_flat_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &Weights) {
        for (a, b) in self.iter_flat_mut().zip(other.iter_flat()) {
            *a += b;
        }
    }

    /// SHA-256 over the little-endian bytes of every parameter.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.iter_flat() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn data<'a>(layer: &'a [Param], i: usize) -> &'a [f64] {
    &layer[i].data
}

fn gru_params(layer: &[Param]) -> GruParams<'_> {
    GruParams {
        w: [data(layer, 0), data(layer, 1), data(layer, 2)],
        u: [data(layer, 3), data(layer, 4), data(layer, 5)],
        b: [data(layer, 6), data(layer, 7), data(layer, 8)],
    }
}

fn gru_grads(layer: &mut [Param]) -> GruGrads<'_> {
    let [wz, wr, wh, uz, ur, uh, bz, br, bh] = layer else {
        unreachable!("gru layers carry nine arrays")
    };
    GruGrads {
        w: [&mut wz.data, &mut wr.data, &mut wh.data],
        u: [&mut uz.data, &mut ur.data, &mut uh.data],
        b: [&mut bz.data, &mut br.data, &mut bh.data],
    }
}

/// Activations of a forward pass; `acts[0]` is the input and `acts[i + 1]`
/// the output of layer `i`.
pub struct Trace {
    pub acts: Vec<Tensor>,
    gru: Vec<Option<GruCache>>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.acts.last().expect("trace holds the input")
    }
}

fn check_input(spec: &NetworkSpec, x: &Tensor) -> Result<()> {
    let (_, _, c) = x.dims3()?;
    if c != spec.input_channels || x.shape().len() != 3 {
        return Err(Error::Shape(format!(
            "network {} expects (B, T, {}) input, got {:?}",
            spec.name,
            spec.input_channels,
            x.shape()
        )));
    }
    Ok(())
}

/// Forward pass keeping what the reverse pass needs.
pub fn forward_trace(spec: &NetworkSpec, w: &Weights, x: Tensor) -> Result<Trace> {
    check_input(spec, &x)?;
    let mut acts = Vec::with_capacity(spec.layers.len() + 1);
    let mut gru = Vec::with_capacity(spec.layers.len());
    acts.push(x);
    for (lspec, layer) in spec.layers.iter().zip(&w.layers) {
        let input = acts.last().expect("input present");
        let (out, cache) = match *lspec {
            LayerSpec::Conv1d { filters, kernel, activation } => (
                conv1d_forward(input, data(layer, 0), data(layer, 1), kernel, filters, activation == Activation::Relu)?,
                None,
            ),
            LayerSpec::Gru { units, return_sequences } => {
                let (out, cache) = gru_forward(input, units, &gru_params(layer), return_sequences)?;
                (out, Some(cache))
            }
            LayerSpec::Dense { units, activation } => {
                let mut out = dense_forward(input, data(layer, 0), data(layer, 1), units)?;
                if activation == Activation::Softmax {
                    softmax_rows(&mut out)?;
                }
                (out, None)
            }
        };
        acts.push(out);
        gru.push(cache);
    }
    Ok(Trace { acts, gru })
}

/// Network output `(B, K)` for a `(B, T, C)` input.
pub fn network_forward(spec: &NetworkSpec, w: &Weights, x: &Tensor) -> Result<Tensor> {
    let trace = forward_trace(spec, w, x.clone())?;
    Ok(trace.acts.into_iter().last().expect("output present"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean over batch and output channels of the squared error.
    Mse,
    /// Mean over the batch of `−Σ y·log p` on softmax outputs.
    CrossEntropy,
}

/// Loss value and its gradient on the network output (or, for cross-entropy
/// on a softmax head, directly on the logits). `normaliser` is the number of
/// samples the mean is taken over, which may exceed this batch when the
/// gradient is accumulated over micro-batches.
fn loss_and_seed(output: &Tensor, target: &Tensor, loss: Loss, normaliser: usize) -> Result<(f64, Tensor, bool)> {
    if output.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "target shape {:?} differs from output {:?}",
            target.shape(),
            output.shape()
        )));
    }
    let (_, _, k) = output.dims3()?;
    let o = output.data();
    let y = target.data();
    match loss {
        Loss::Mse => {
            let denom = (normaliser * k) as f64;
            let mut total = 0.0;
            let mut grad = vec![0.0; o.len()];
            for i in 0..o.len() {
                let d = o[i] - y[i];
                total += d * d;
                grad[i] = 2.0 * d / denom;
            }
            Ok((total / denom, Tensor::new(output.shape().to_vec(), grad)?, false))
        }
        Loss::CrossEntropy => {
            let denom = normaliser as f64;
            let mut total = 0.0;
            let mut grad = vec![0.0; o.len()];
            for i in 0..o.len() {
                if y[i] != 0.0 {
                    total -= y[i] * o[i].max(1e-300).ln();
                }
                grad[i] = (o[i] - y[i]) / denom;
            }
            Ok((total / denom, Tensor::new(output.shape().to_vec(), grad)?, true))
        }
    }
}

/// Mean loss of network outputs against targets.
pub fn loss_value(output: &Tensor, target: &Tensor, loss: Loss) -> Result<f64> {
    let (b, _, _) = output.dims3()?;
    Ok(loss_and_seed(output, target, loss, b)?.0)
}

/// Loss of a batch without gradients.
pub fn batch_loss(spec: &NetworkSpec, w: &Weights, x: &Tensor, y: &Tensor, loss: Loss) -> Result<f64> {
    let out = network_forward(spec, w, x)?;
    let (b, _, _) = out.dims3()?;
    Ok(loss_and_seed(&out, y, loss, b)?.0)
}

/// Mean batch loss and exact reverse-mode gradients, accumulated into
/// `grads`. The loss is normalised by `normaliser` samples.
pub fn accumulate_gradients(
    spec: &NetworkSpec,
    w: &Weights,
    x: Tensor,
    y: &Tensor,
    loss: Loss,
    normaliser: usize,
    grads: &mut Weights,
) -> Result<f64> {
    if loss == Loss::CrossEntropy && !spec.is_classifier() {
        return Err(Error::Config("cross-entropy needs a softmax head".into()));
    }
    let trace = forward_trace(spec, w, x)?;
    let (value, seed, on_logits) = loss_and_seed(trace.output(), y, loss, normaliser)?;
    let n = spec.layers.len();
    let mut grad = seed;
    for i in (0..n).rev() {
        let input = &trace.acts[i];
        let output = &trace.acts[i + 1];
        let layer = &w.layers[i];
        let glayer = &mut grads.layers[i];
        grad = match spec.layers[i] {
            LayerSpec::Conv1d { kernel, activation, .. } => {
                let (gk, gb) = glayer.split_at_mut(1);
                conv1d_backward(
                    input,
                    output,
                    &grad,
                    data(layer, 0),
                    kernel,
                    activation == Activation::Relu,
                    &mut gk[0].data,
                    &mut gb[0].data,
                )?
            }
            LayerSpec::Gru { units, .. } => {
                let cache = trace.gru[i].as_ref().expect("gru cache recorded");
                gru_backward(input, cache, &grad, units, &gru_params(layer), &mut gru_grads(glayer))?
            }
            LayerSpec::Dense { units, activation } => {
                let d_logits = if activation == Activation::Softmax && !on_logits {
                    softmax_backward(output, &grad)?
                } else {
                    grad
                };
                let (gk, gb) = glayer.split_at_mut(1);
                dense_backward(input, &d_logits, data(layer, 0), units, &mut gk[0].data, &mut gb[0].data)?
            }
        };
    }
    Ok(value)
}

/// Mean batch loss and its gradients.
pub fn network_gradients(spec: &NetworkSpec, w: &Weights, x: &Tensor, y: &Tensor, loss: Loss) -> Result<(f64, Weights)> {
    let (b, _, _) = x.dims3()?;
    let mut grads = Weights::zeros(spec);
    let value = accumulate_gradients(spec, w, x.clone(), y, loss, b, &mut grads)?;
    Ok((value, grads))
}

/// Channels of the velocity network input.
pub const VELOCITY_INPUTS: usize = 7;
/// Channels of the acceleration network input.
pub const ACCELERATION_INPUTS: usize = 14;
/// Channels of the flight-status network input.
pub const STATUS_INPUTS: usize = 8;

/// Velocity, acceleration and flight-status network layouts.
pub fn build_paper_networks() -> [NetworkSpec; 3] {
    let relu = Activation::Relu;
    let velocity = NetworkSpec {
        name: "velocity".into(),
        input_channels: VELOCITY_INPUTS,
        sequence_length: 400,
        layers: vec![
            LayerSpec::Conv1d { filters: 16, kernel: 5, activation: relu },
            LayerSpec::Conv1d { filters: 16, kernel: 5, activation: relu },
            LayerSpec::Gru { units: 16, return_sequences: true },
            LayerSpec::Gru { units: 16, return_sequences: true },
            LayerSpec::Dense { units: 3, activation: Activation::Linear },
        ],
    };
    let acceleration = NetworkSpec {
        name: "acceleration".into(),
        input_channels: ACCELERATION_INPUTS,
        sequence_length: 200,
        layers: vec![
            LayerSpec::Conv1d { filters: 5, kernel: 12, activation: relu },
            LayerSpec::Conv1d { filters: 5, kernel: 12, activation: relu },
            LayerSpec::Gru { units: 12, return_sequences: true },
            LayerSpec::Gru { units: 12, return_sequences: false },
            LayerSpec::Dense { units: 3, activation: Activation::Linear },
        ],
    };
    let status = NetworkSpec {
        name: "status".into(),
        input_channels: STATUS_INPUTS,
        sequence_length: 200,
        layers: vec![
            LayerSpec::Conv1d { filters: 4, kernel: 5, activation: relu },
            LayerSpec::Gru { units: 6, return_sequences: false },
            LayerSpec::Dense { units: 2, activation: Activation::Softmax },
        ],
    };
    [velocity, acceleration, status]
}
