//! Minimal neural network toolkit: a reverse-mode tape, GIN layers,
//! optimizers, gradient checking and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use checkpoint::{load_encoder, save_encoder, Checkpoint};
pub use gradcheck::{fd_check, FdReport};
pub use layers::{
    encoder_forward, gin_edge_layer, gin_layer, mlp_forward, readout, EmbeddingMode, GraphBatch, Pooling,
};
pub use optim::{Adam, AdamConfig, Optimizer, Sgd};
pub use params::{Activation, EncoderConfig, EncoderParams, GinLayer, Linear, Mlp, Params};
pub use tape::{GradientSet, Reduction, Tape, Var};
