use std::sync::Arc;

use crate::capsule::{capsule_sequence, Window, WindowKind};
use crate::ecg::{rr_series, EcgRecording};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::snapshot::{Prediction, PredictionSnapshot};
use super::train::TrainedDetector;

/// Default inference overlap between consecutive windows.
pub const DEFAULT_WINDOW_OVERLAP: f64 = 0.75;

/// Window stride in samples for overlap `m_prime`.
pub fn window_stride(window_samples: usize, m_prime: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&m_prime) {
        return Err(Error::Config(format!("window overlap {m_prime} outside [0, 1)")));
    }
    Ok(((window_samples as f64 * (1.0 - m_prime)).round() as usize).max(1))
}

/// Classifies every window position of a raw recording. Windows that cannot be
/// featurized yield invalid predictions, which snapshots ignore.
pub fn sliding_predict<T: Scalar>(rec: &EcgRecording, detector: &TrainedDetector<T>, m_prime: f64) -> Result<Vec<Prediction>> {
    let len = detector.window_samples;
    let stride = window_stride(len, m_prime)?;
    if rec.len() < len {
        return Ok(Vec::new());
    }
    let fs = rec.sample_rate_hz();
    let rr = rr_series(rec);
    let mut out = Vec::new();
    let mut start = 0;
    while start + len <= rec.len() {
        let timestamp = (start + len) as f64 / fs as f64;
        let window = Window {
            kind: WindowKind::Nsrw,
            start_sample: start,
            length_samples: len,
            pair: 0,
        };
        let seq = rr
            .as_ref()
            .ok()
            .and_then(|rr| capsule_sequence(rr, &window, &detector.capsule, fs).ok());
        out.push(match seq {
            Some(seq) => {
                let p = detector.predict(&[&seq])?[0];
                Prediction::from_probability(p, detector.config.decision_threshold, timestamp)
            }
            None => Prediction::invalid(timestamp),
        });
        start += stride;
    }
    Ok(out)
}

/// Publishes predictions in order, as a detector thread would.
pub fn publish_all(predictions: &[Prediction], snapshot: &Arc<PredictionSnapshot>) {
    for p in predictions {
        snapshot.publish(*p);
    }
}
