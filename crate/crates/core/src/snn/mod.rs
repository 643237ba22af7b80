//! Integrate-and-fire convolutional networks trained with surrogate
//! gradients through time, plus the dense (ReLU) reference network built
//! from the same description.
//!
//! Activations are `[C, T·B, H, W]` tensors so each convolution runs as a
//! single GEMM over all time steps; only the IF scan is sequential in time.

pub mod config;
pub mod conv;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod neuron;
pub mod optim;
pub mod params;
pub mod real;
pub mod tensor;
pub mod train;

pub use config::{InputGeometry, LayerSpec, ModelKind, NetworkConfig, Plan, SewFunction, Stage};
pub use gradcheck::{check_gradients, GradCheck};
pub use loss::{accumulate, argmax, cross_entropy, softmax_cross_entropy};
pub use network::{
    backward, forward, forward_tensor, ForwardTrace, SpikeCount, SynapseActivity, SynapseRole,
    SynapseShape, SynapticLayer,
};
pub use neuron::{if_step, surrogate, surrogate_grad, InputTiming, ResetMode, SpikeFn};
pub use optim::{cosine_lr, Sgd};
pub use params::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    NetworkParams, Param,
};
pub use real::Real;
pub use tensor::Tensor;
pub use train::{evaluate, train_epoch, EpochStats, Evaluation, TrainConfig};
