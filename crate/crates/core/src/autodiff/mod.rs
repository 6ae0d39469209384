//! Reverse-mode autodiff engine and the constrained toy CycleGAN built on it.

pub mod checkpoint;
pub mod graph;
pub mod loss;
pub mod net;
pub mod scalar;
pub mod train;

pub use checkpoint::{load_checkpoint, load_generator, save_checkpoint, Checkpoint};
pub use graph::{AutodiffError, Gradients, Graph, Shape, TensorId};
pub use loss::{
    constraint_losses, cycle_loss, lsgan_losses, scale_to_intensity, ConstraintLosses,
    LsganLosses,
};
pub use net::{forward_inference, BoundNet, Layer, Param, TinyNet};
pub use scalar::Scalar;
pub use train::{
    generate_polar, generated_c2_fraction, train, ConfigError, StepRecord, TrainConfig,
    TrainError, TrainLog, TrainResult,
};
