use std::sync::Mutex;

/// One classifier output for a window of ECG.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub theta: u8,
    /// Window end (s from recording start).
    pub timestamp_s: f64,
    /// False when the window could not be featurized.
    pub valid: bool,
}

impl Prediction {
    pub fn from_probability(probability: f64, threshold: f64, timestamp_s: f64) -> Self {
        Prediction {
            probability,
            theta: u8::from(probability >= threshold),
            timestamp_s,
            valid: true,
        }
    }

    pub fn invalid(timestamp_s: f64) -> Self {
        Prediction {
            probability: f64::NAN,
            theta: 0,
            timestamp_s,
            valid: false,
        }
    }
}

/// Single-slot, last-writer-wins cell shared between a detector thread and the
/// environment. Invalid predictions leave the previous state in place.
#[derive(Debug, Default)]
pub struct PredictionSnapshot {
    slot: Mutex<Option<Prediction>>,
}

impl PredictionSnapshot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, p: Prediction) {
        if !p.valid {
            return;
        }
        *self.slot.lock().unwrap_or_else(|e| e.into_inner()) = Some(p);
    }

    pub fn latest(&self) -> Option<Prediction> {
        *self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Current drowsiness flag, 0 before the first valid prediction.
    pub fn theta(&self) -> u8 {
        self.latest().map_or(0, |p| p.theta)
    }
}
