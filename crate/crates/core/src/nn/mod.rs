//! Minimal numerical kernel shared by the drowsiness classifier and the
//! Q-networks: dense and Elman layers with explicit reverse-mode gradients,
//! inverted dropout, MSE / logistic losses, L2 penalties and Adam.

mod layers;
mod matrix;
mod optim;
pub mod weights;

pub use layers::{
    glorot_uniform, orthogonal, rnn_forward, sigmoid, Activation, Dense, Dropout, Mlp, MlpTrace, RecurrentCell,
    RecurrentTrace,
};
pub use matrix::Matrix;
pub use optim::{add_l2_penalty, backward_and_step, loss_and_grad, AdamState, LossKind, Model};
