//! Dense tensors, the encoder/head network with exact backpropagation, plain SGD,
//! a central-difference gradient oracle and the checkpoint text format.

mod checkpoint;
mod finite_diff;
mod mlp;
mod tensor;

pub use checkpoint::Checkpoint;
pub use finite_diff::finite_diff_grad;
pub use mlp::{
    encoder_len, init_encoder, init_head, mlp_backward, mlp_forward, mlp_loss_and_grad, sgd_step,
    Architecture, GradientVector, ModelParams,
};
pub use tensor::Tensor2;
