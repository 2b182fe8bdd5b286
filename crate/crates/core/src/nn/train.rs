use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{NetworkKind, Normalization, WindowSet};
use super::model::Model;
use super::network::{accumulate_gradients, loss_value, network_forward, Loss, NetworkSpec, Weights};
use super::optim::{adam_clr_step, AdamState, CyclicSchedule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Windows per gradient evaluation inside a batch; bounds cache memory.
    pub micro_batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub base_lr: f64,
    pub max_lr: f64,
    /// Length of one triangular learning-rate cycle, epochs.
    pub cycle_epochs: usize,
    /// Samples between consecutive training window ends.
    pub stride: usize,
    /// Samples between consecutive validation window ends.
    pub validation_stride: usize,
    pub seed: u64,
    pub normalize_outputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            micro_batch: 64,
            max_epochs: 100,
            patience: 10,
            base_lr: 1e-4,
            max_lr: 3e-3,
            cycle_epochs: 8,
            stride: 1,
            validation_stride: 1,
            seed: 0,
            normalize_outputs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.micro_batch == 0 || self.max_epochs == 0 || self.cycle_epochs == 0 {
            return Err(Error::Config("training sizes and cycle length must be positive".into()));
        }
        if self.stride == 0 || self.validation_stride == 0 {
            return Err(Error::Config("training.stride and training.validation_stride must be positive".into()));
        }
        CyclicSchedule {
            base_lr: self.base_lr,
            max_lr: self.max_lr,
            cycle_steps: 1,
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
    /// Per-axis RMSE for regressors, frame accuracy for the classifier.
    pub val_metric: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Validation quality in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    /// Per-axis RMSE of the denormalised prediction (regressors).
    pub rmse: Vec<f64>,
    /// Fraction of windows whose most probable class is correct (classifier).
    pub accuracy: Option<f64>,
}

pub fn loss_for(kind: NetworkKind) -> Loss {
    match kind {
        NetworkKind::Status => Loss::CrossEntropy,
        _ => Loss::Mse,
    }
}

/// Loss and metrics of `model` over every window of `set`.
pub fn evaluate(model: &Model, set: &WindowSet, chunk: usize) -> Result<Evaluation> {
    let idx: Vec<usize> = (0..set.len()).collect();
    evaluate_parts(&model.spec, &model.weights, &model.normalization, set, &idx, chunk)
}

fn evaluate_parts(
    spec: &NetworkSpec,
    weights: &Weights,
    norm: &Normalization,
    set: &WindowSet,
    idx: &[usize],
    chunk: usize,
) -> Result<Evaluation> {
    let loss = if spec.is_classifier() { Loss::CrossEntropy } else { Loss::Mse };
    let k = spec.output_units();
    let mut total = 0.0;
    let mut sq = vec![0.0; k];
    let mut correct = 0usize;
    let argmax = |v: &[f64]| (0..k).fold(0, |best, j| if v[j] > v[best] { j } else { best });
    for part in idx.chunks(chunk.max(1)) {
        let x = set.inputs(part, norm);
        let y = set.targets(part, norm)?;
        let mut pred = network_forward(spec, weights, &x)?;
        total += loss_value(&pred, &y, loss)? * part.len() as f64;
        norm.denormalize_output(pred.data_mut());
        for (pi, &w) in part.iter().enumerate() {
            let truth = set.target(w).expect("targets checked above");
            let p = &pred.data()[pi * k..(pi + 1) * k];
            for j in 0..k {
                sq[j] += (p[j] - truth[j]).powi(2);
            }
            if argmax(p) == argmax(truth) {
                correct += 1;
            }
        }
    }
    let n = idx.len() as f64;
    let classifier = spec.is_classifier();
    Ok(Evaluation {
        loss: total / n,
        rmse: if classifier { Vec::new() } else { sq.iter().map(|s| (s / n).sqrt()).collect() },
        accuracy: classifier.then(|| correct as f64 / n),
    })
}

fn metric(e: &Evaluation) -> Vec<f64> {
    match e.accuracy {
        Some(a) => vec![a],
        None => e.rmse.clone(),
    }
}

/// Mini-batch Adam with the triangular cyclic rate and early stopping on the
/// validation loss. Returns the weights of the best validation epoch.
pub fn train(kind: NetworkKind, train_set: &WindowSet, val_set: &WindowSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_spec(kind, &kind.spec(), train_set, val_set, cfg)
}

/// [`train`] for an arbitrary layer layout.
pub fn train_spec(
    kind: NetworkKind,
    spec: &NetworkSpec,
    train_set: &WindowSet,
    val_set: &WindowSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if train_set.kind() != kind || val_set.kind() != kind {
        return Err(Error::Dataset("window sets were built for a different network".into()));
    }
    if train_set.window != spec.sequence_length || val_set.window != spec.sequence_length {
        return Err(Error::Shape(format!(
            "{} network needs windows of {} samples",
            spec.name, spec.sequence_length
        )));
    }
    if !train_set.has_targets() || !val_set.has_targets() {
        return Err(Error::Dataset("training needs ground-truth targets".into()));
    }
    let loss = loss_for(kind);
    let normalization: Normalization = train_set.fit_normalization(cfg.normalize_outputs, 20_000);
    let mut weights = Weights::glorot(spec, cfg.seed);
    let mut adam = AdamState::new(&weights);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_b47c);

    let mut order: Vec<usize> = (0..train_set.len()).step_by(cfg.stride).collect();
    let val_idx: Vec<usize> = (0..val_set.len()).step_by(cfg.validation_stride).collect();
    let steps_per_epoch = order.len().div_ceil(cfg.batch_size);
    let schedule = CyclicSchedule {
        base_lr: cfg.base_lr,
        max_lr: cfg.max_lr,
        cycle_steps: cfg.cycle_epochs * steps_per_epoch,
    };

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Weights)> = None;
    let mut step = 0usize;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let lr0 = schedule.lr(step);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Weights::zeros(spec);
            let mut batch_value = 0.0;
            for micro in batch.chunks(cfg.micro_batch) {
                let x = train_set.inputs(micro, &normalization);
                let y = train_set.targets(micro, &normalization)?;
                batch_value += accumulate_gradients(spec, &weights, x, &y, loss, batch.len(), &mut grads)?;
            }
            if !batch_value.is_finite() || grads.iter_flat().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "{} training diverged at epoch {epoch}, step {step}: loss {batch_value}",
                    spec.name
                )));
            }
            adam_clr_step(&mut weights, &grads, step, &schedule, &mut adam);
            epoch_loss += batch_value * batch.len() as f64;
            step += 1;
        }
        let train_loss = epoch_loss / order.len() as f64;

        let eval = evaluate_parts(spec, &weights, &normalization, val_set, &val_idx, cfg.micro_batch.max(128))?;
        let val_loss = eval.loss;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!("{} validation loss is {val_loss} at epoch {epoch}", spec.name)));
        }
        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, weights.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        log::info!(
            "{} epoch {epoch}: train {train_loss:.6} val {val_loss:.6} lr {lr0:.2e}{}",
            spec.name,
            if improved { " *" } else { "" }
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: lr0,
            val_metric: metric(&eval),
        });
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, weights) = best.expect("at least one epoch ran");
    let model = Model::new(kind, spec.clone(), weights, normalization)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::data::{make_windows, SessionFeatures};
    use crate::nn::network::{Activation, LayerSpec};

    /// Velocity-shaped features with a constant target of 0.7 on every axis.
    fn constant_sessions(n: usize, seed: u64) -> Vec<SessionFeatures> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        vec![SessionFeatures {
            kind: NetworkKind::Velocity,
            t: (0..n).map(|i| i as f64 / 400.0).collect(),
            inputs: (0..n * 7).map(|_| rng.random_range(-1.0..1.0)).collect(),
            targets: Some(vec![0.7; n * 3]),
        }]
    }

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            name: "tiny".into(),
            input_channels: 7,
            sequence_length: 16,
            layers: vec![
                LayerSpec::Conv1d { filters: 4, kernel: 3, activation: Activation::Relu },
                LayerSpec::Gru { units: 4, return_sequences: false },
                LayerSpec::Dense { units: 3, activation: Activation::Linear },
            ],
        }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            micro_batch: 16,
            max_epochs: 50,
            patience: 10,
            base_lr: 1e-3,
            max_lr: 2e-2,
            cycle_epochs: 8,
            stride: 2,
            validation_stride: 1,
            seed: 3,
            normalize_outputs: false,
        }
    }

    #[test]
    fn constant_target_is_learned() {
        let train_set = make_windows(constant_sessions(400, 1), 16, 1).unwrap();
        let val_set = make_windows(constant_sessions(200, 2), 16, 1).unwrap();
        let c = TrainConfig {
            batch_size: 16,
            stride: 1,
            ..cfg()
        };
        let out = train_spec(NetworkKind::Velocity, &tiny_spec(), &train_set, &val_set, &c).unwrap();
        assert!(out.history.len() <= 50);
        let best = out.history[out.best_epoch].val_loss;
        assert!(best < 1e-4, "best validation MSE {best}");
    }

    #[test]
    fn training_is_deterministic() {
        let train_set = make_windows(constant_sessions(300, 4), 16, 1).unwrap();
        let val_set = make_windows(constant_sessions(100, 5), 16, 1).unwrap();
        let c = TrainConfig { max_epochs: 4, ..cfg() };
        let a = train_spec(NetworkKind::Velocity, &tiny_spec(), &train_set, &val_set, &c).unwrap();
        let b = train_spec(NetworkKind::Velocity, &tiny_spec(), &train_set, &val_set, &c).unwrap();
        assert_eq!(a.model.weights.checksum(), b.model.weights.checksum());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn learning_rate_history_is_a_triangle() {
        let train_set = make_windows(constant_sessions(300, 6), 16, 1).unwrap();
        let val_set = make_windows(constant_sessions(100, 7), 16, 1).unwrap();
        let c = TrainConfig {
            max_epochs: 17,
            patience: 100,
            ..cfg()
        };
        let out = train_spec(NetworkKind::Velocity, &tiny_spec(), &train_set, &val_set, &c).unwrap();
        let lr: Vec<f64> = out.history.iter().map(|h| h.lr).collect();
        assert_eq!(lr[0], c.base_lr);
        assert!((lr[4] - c.max_lr).abs() < 1e-15);
        assert_eq!(lr[8], c.base_lr);
        assert_eq!(lr[16], c.base_lr);
        for e in 0..4 {
            assert!(lr[e + 1] > lr[e] && lr[e + 5] < lr[e + 4]);
        }
    }

    #[test]
    fn early_stopping_respects_patience() {
        let train_set = make_windows(constant_sessions(300, 8), 16, 1).unwrap();
        let val_set = make_windows(constant_sessions(100, 9), 16, 1).unwrap();
        let c = TrainConfig {
            max_epochs: 200,
            patience: 3,
            ..cfg()
        };
        let out = train_spec(NetworkKind::Velocity, &tiny_spec(), &train_set, &val_set, &c).unwrap();
        let last = out.history.last().unwrap().epoch;
        assert!(last < 199 && last - out.best_epoch <= 3);
        assert_eq!(last - out.best_epoch, 3);
    }

    #[test]
    fn divergence_is_reported() {
        let mut bad = constant_sessions(300, 10);
        for v in &mut bad[0].targets.as_mut().unwrap()[501..507] {
            *v = f64::NAN;
        }
        let train_set = make_windows(bad, 16, 1).unwrap();
        let val_set = make_windows(constant_sessions(100, 11), 16, 1).unwrap();
        let err = train_spec(NetworkKind::Velocity, &tiny_spec(), &train_set, &val_set, &cfg()).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
    }
}
