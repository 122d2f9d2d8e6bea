//! Reverse-mode differentiation over matrices, the three networks, optimizers
//! and checkpoints.

mod checkpoint;
mod matrix;
mod network;
mod optim;
mod params;
mod tape;

pub use checkpoint::{Checkpoint, CheckpointKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use matrix::Matrix;
pub use network::{Autoencoder, Generator, LatentCode, NetworkSpec, Normalization};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind, Schedule};
pub use params::{Gradients, Param, ParamShape, ParamStore};
pub use tape::{Activation, Backward, NodeId, StoreId, Tape};
