pub mod agent;
pub mod capsule;
pub mod detector;
pub mod ecg;
pub mod env;
pub mod error;
pub mod nn;
pub mod scalar;
pub mod textio;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = nn::Matrix<f64>;
pub type QNetwork64 = agent::QNetwork<f64>;
pub type DqnAgent64 = agent::DqnAgent<f64>;
pub type DrowsyRnn64 = detector::DrowsyRnn<f64>;
pub type TrainedDetector64 = detector::TrainedDetector<f64>;
