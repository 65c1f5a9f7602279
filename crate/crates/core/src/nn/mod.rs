//! Minimal differentiable numeric kernel: every layer has a forward rule and
//! a hand-derived backward rule, checked against finite differences.

pub mod gradcheck;
pub mod gru;
pub mod layers;
pub mod optim;
pub mod param;
pub mod tensor;

pub use gradcheck::{grad_check, Evaluation, GradCheckConfig, GradCheckReport, Objective};
pub use gru::{bi_gru_stack, gru_cell, GruDirection, GruLayer, GruStack, StackCache};
pub use layers::{l1_loss, l1_loss_grad, linear, linear_backward, relu, relu_backward, softmax_rows, softmax_rows_backward};
pub use optim::{adam_step, poly_lr, TrainConfig};
pub use param::{InitKind, Param, ParamId, ParameterStore, PRNG_ALGORITHM};
pub use tensor::Tensor2;
