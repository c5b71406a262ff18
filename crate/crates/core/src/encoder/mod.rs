//! Per-modality feed-forward encoders and their training.
//!
//! Each modality has its own MLP (tanh hidden layers, linear output). The
//! contrastive gradient with respect to the embeddings is pushed back through
//! both networks by hand and applied with decoupled-weight-decay Adam. Batches
//! hold `P` identities with `K` segments each, no two from the same video.

mod adamw;
mod mlp;
mod train;

pub use adamw::{adamw_step, OptimState};
pub use mlp::{backward, encode, EncoderArch, EncoderParams, Layer, Mlp};
pub use train::{
    initial_params, resume, sample_batch, sample_batch_indices, train, Dataset, StepLog, TrainConfig, TrainOutcome,
};
