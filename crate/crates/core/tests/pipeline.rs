use std::sync::Arc;

use hrvbrake_core::capsule::{build_dataset, extract_windows, CapsuleConfig, WindowParams};
use hrvbrake_core::detector::{publish_all, sliding_predict, train_detector, DetectorConfig, PredictionSnapshot};
use hrvbrake_core::ecg::{rr_series, synth};

#[test]
fn synthetic_recording_to_live_predictions() {
    let rec = synth::drowsy_recording(8, 400.0, 150.0, 128, 11).unwrap();
    let rr = rr_series(&rec).unwrap();
    assert_eq!(rr.flagged_count(), 0);
    let windows = extract_windows(&rec, &WindowParams::default()).unwrap();
    assert_eq!(windows.len(), 16);
    let cfg = CapsuleConfig::parse_label("C6400_N6_M72").unwrap();
    let data = build_dataset(&rr, &windows, &cfg, 128).unwrap();
    assert_eq!(data.len(), 16);
    let refs: Vec<_> = data.iter().collect();
    let det = train_detector::<f64>(&refs, &DetectorConfig::default(), 3).unwrap();
    let probs = det.predict(&refs).unwrap();
    let correct = probs.iter().zip(&data).filter(|(&p, q)| det.classify(p) == q.label).count();
    assert!(correct >= 14, "{correct}/16");

    let preds = sliding_predict(&rec, &det, 0.75).unwrap();
    let expected = (rec.len() - 15_360) / 3840 + 1;
    assert_eq!(preds.len(), expected);
    assert!(preds.iter().all(|p| !p.valid || (0.0..=1.0).contains(&p.probability)));
    // a window lying wholly in the drowsy stretch before each press is flagged
    for &e in rec.events() {
        let t = e as f64 / 128.0;
        let p = preds.iter().find(|p| p.timestamp_s <= t && p.timestamp_s >= t - 30.0).unwrap();
        assert_eq!(p.theta, 1, "event at {e}");
    }
    // drowsy first half, alert second half
    let probe = synth::segmented_recording(&[(600.0, true), (600.0, false)], 128, 5).unwrap();
    let preds = sliding_predict(&probe, &det, 0.75).unwrap();
    for p in preds.iter().filter(|p| p.timestamp_s <= 600.0) {
        assert_eq!(p.theta, 1, "early window ending at {}", p.timestamp_s);
    }
    for p in preds.iter().filter(|p| p.timestamp_s >= 720.0) {
        assert_eq!(p.theta, 0, "late window ending at {}", p.timestamp_s);
    }

    let snap = Arc::new(PredictionSnapshot::new());
    publish_all(&preds, &snap);
    assert_eq!(snap.latest().map(|p| p.timestamp_s), preds.iter().rev().find(|p| p.valid).map(|p| p.timestamp_s));
}

#[test]
fn short_recording_has_no_windows() {
    let rec = synth::drowsy_recording(1, 50.0, 20.0, 128, 1).unwrap();
    let data = hrvbrake_core::detector::separable_fixture(4, CapsuleConfig::parse_label("C6400_N6_M72").unwrap(), 15_360, 1);
    let refs: Vec<_> = data.iter().collect();
    let cfg = DetectorConfig { max_epochs: 1, ..Default::default() };
    let det = train_detector::<f64>(&refs, &cfg, 1).unwrap();
    assert!(sliding_predict(&rec, &det, 0.75).unwrap().is_empty());
}
