//! Interaction-aware refinement of multi-person 3D pose estimates.
//!
//! The crate is organised bottom-up:
//!
//! * [`skeleton`]: poses, scenes, normalization statistics, proximity ordering
//!   and the JSON scene format.
//! * [`nn`]: a small f64 numeric kernel with hand-written gradients (linear,
//!   GRU stacks, row softmax, L1), Adam with a poly schedule and a
//!   finite-difference gradient checker.
//! * [`pinet`]: the refinement network (bidirectional GRU embedding,
//!   self-attention, shared MLP head), its training loop and checkpoints.
//! * [`metrics`]: 3DPCK, MPJPE and PA-MPJPE with Procrustes alignment.
//! * [`synth`]: a seeded generator of interacting scenes with a known
//!   corruption model.

pub mod error;
pub mod metrics;
pub mod nn;
pub mod pinet;
pub mod skeleton;
pub mod synth;

pub use error::{Error, Result};
pub use metrics::{MetricComparison, MetricReport, SimilarityTransform};
pub use nn::{Param, ParamId, ParameterStore, Tensor2, TrainConfig};
pub use pinet::{Checkpoint, ModelConfig, OrderMode, PiNet};
pub use skeleton::{NormStats, Ordering, Person, Pose, Scene, Vec3};
pub use synth::{GenConfig, NoiseConfig};
