//! The interaction-aware refinement network: proximity ordering, recurrent
//! embedding, bilinear self-attention and a shared MLP head.

mod checkpoint;
mod config;
pub mod gradsuite;
mod model;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{ModelConfig, OrderMode};
pub use model::{
    accumulate_gradients, apply_attention, param_count, train_pass, Architecture, AttentionParams, ForwardCache, PiNet,
    TrainPass,
};
pub use train::{context_free, evaluate, refine_all, train, train_with, EpochRecord};
