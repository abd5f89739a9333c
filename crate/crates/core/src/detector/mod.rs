//! Recurrent drowsiness classifier over capsule sequences.

mod infer;
mod model;
mod snapshot;
mod standardize;
mod train;

pub use infer::{publish_all, sliding_predict, window_stride, DEFAULT_WINDOW_OVERLAP};
pub use model::{batch_steps, DetectorConfig, DrowsyRnn};
pub use snapshot::{Prediction, PredictionSnapshot};
pub use standardize::Standardizer;
pub use train::{
    cross_validate, cross_validate_with, separable_fixture, stratified_folds, stratified_split, train_detector,
    BinaryMetrics, CvReport, EpochStats, FoldResult, TrainedDetector, DETECTOR_FILE, MODEL_FILE, STANDARDIZER_FILE,
};
