//! Minimal sequence-model engine: 1-D convolution, GRU and dense layers with
//! exact gradients, Adam with a triangular cyclic rate, sliding-window
//! batching and the velocity, acceleration and flight-status networks.

pub mod data;
pub mod layers;
pub mod model;
pub mod network;
pub mod optim;
pub mod tensor;
pub mod train;

pub use data::{make_windows, session_features, window_input, FeatureBuilder, NetworkKind, Normalization, SessionFeatures, WindowSet};
pub use model::Model;
pub use network::{
    batch_loss, build_paper_networks, network_forward, network_gradients, Activation, LayerSpec, Loss, NetworkSpec,
    Weights,
};
pub use optim::{adam_clr_step, AdamState, CyclicSchedule};
pub use tensor::Tensor;
pub use train::{evaluate, train, train_spec, EpochRecord, Evaluation, TrainConfig, TrainOutcome};
