//! Synthetic ECG with known R-peak positions, for tests and demos.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;

use super::EcgRecording;

/// Parameters of a synthetic single-lead trace.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    pub mean_rr_ms: f64,
    /// Standard deviation of independent beat-to-beat jitter.
    pub rr_jitter_ms: f64,
    /// Amplitude of the 0.1 Hz RR modulation.
    pub lf_amp_ms: f64,
    /// Amplitude of the 0.25 Hz (respiratory) RR modulation.
    pub hf_amp_ms: f64,
    /// Signal-to-noise ratio of added white noise; `None` for a clean trace.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            sample_rate_hz: 128,
            duration_s: 60.0,
            mean_rr_ms: 800.0,
            rr_jitter_ms: 20.0,
            lf_amp_ms: 30.0,
            hf_amp_ms: 25.0,
            snr_db: Some(20.0),
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticEcg {
    pub samples: Vec<f64>,
    /// Sample index of every R apex.
    pub peak_indices: Vec<usize>,
    /// Scheduled beat-to-beat intervals.
    pub rr_ms: Vec<f64>,
}

// (offset s, amplitude mV, width s) of P, Q, R, S, T
const T_WAVE: usize = 4;
const WAVES: [(f64, f64, f64); 5] = [
    (-0.20, 0.15, 0.025),
    (-0.03, -0.12, 0.010),
    (0.0, 1.00, 0.012),
    (0.03, -0.25, 0.010),
    (0.28, 0.30, 0.045),
];

/// RR sequence modulated at 0.1 Hz and 0.25 Hz, with Gaussian jitter.
pub fn rr_schedule(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let jitter = Normal::new(0.0, spec.rr_jitter_ms.max(0.0)).expect("finite std");
    let mut t = 0.5;
    let mut out = Vec::new();
    while t < spec.duration_s {
        let rr = spec.mean_rr_ms
            + spec.lf_amp_ms * (2.0 * PI * 0.1 * t).sin()
            + spec.hf_amp_ms * (2.0 * PI * 0.25 * t).sin()
            + jitter.sample(rng);
        let rr = rr.clamp(300.0, 2000.0);
        out.push(rr);
        t += rr / 1000.0;
    }
    out
}

/// Renders beats at the given intervals; the first R apex sits at 0.5 s.
pub fn render(rr_ms: &[f64], sample_rate_hz: u32, n_samples: usize, snr_db: Option<f64>, rng: &mut ChaCha8Rng) -> SyntheticEcg {
    let fs = sample_rate_hz as f64;
    let mut samples = vec![0.0; n_samples];
    let mut peak_indices = Vec::new();
    let mut used = Vec::new();
    let mut t = 0.5;
    let mut k = 0;
    loop {
        let idx = (t * fs).round() as usize;
        if idx >= n_samples {
            break;
        }
        peak_indices.push(idx);
        let rr = rr_ms.get(k).copied().unwrap_or(1000.0);
        // the T wave follows the R apex more closely at fast rates
        let qt = (rr / 1000.0).sqrt();
        for (w, &(off, amp, width)) in WAVES.iter().enumerate() {
            let centre = t + if w == T_WAVE { off * qt } else { off };
            let lo = ((centre - 4.0 * width) * fs).floor().max(0.0) as usize;
            let hi = (((centre + 4.0 * width) * fs).ceil() as usize).min(n_samples.saturating_sub(1));
            for (i, s) in samples.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let z = (i as f64 / fs - centre) / width;
                *s += amp * (-0.5 * z * z).exp();
            }
        }
        if k < rr_ms.len() {
            used.push(rr);
        }
        t += rr / 1000.0;
        k += 1;
    }
    if let Some(snr) = snr_db {
        let mean = samples.iter().sum::<f64>() / n_samples.max(1) as f64;
        let power = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_samples.max(1) as f64;
        let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("finite std");
            samples.iter_mut().for_each(|v| *v += noise.sample(rng));
        }
    }
    used.truncate(peak_indices.len().saturating_sub(1));
    SyntheticEcg {
        samples,
        peak_indices,
        rr_ms: used,
    }
}

pub fn synthesize(spec: &SynthSpec) -> SyntheticEcg {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rr = rr_schedule(spec, &mut rng);
    let n = (spec.duration_s * spec.sample_rate_hz as f64).round() as usize;
    render(&rr, spec.sample_rate_hz, n, spec.snr_db, &mut rng)
}

/// Drowsy rhythm: slower and more variable than the alert one.
fn rhythm<F: Fn(f64) -> bool>(duration_s: f64, drowsy_at: F, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rr = Vec::new();
    let mut t = 0.5;
    while t < duration_s {
        let (mean, lf, hf, sd) = if drowsy_at(t) { (980.0, 60.0, 70.0, 35.0) } else { (760.0, 25.0, 15.0, 12.0) };
        let x = mean + lf * (2.0 * PI * 0.1 * t).sin() + hf * (2.0 * PI * 0.25 * t).sin() + sd * jitter.sample(rng);
        let x = x.clamp(300.0, 2000.0);
        rr.push(x);
        t += x / 1000.0;
    }
    rr
}

/// A recording whose heart rhythm slows and becomes more variable over the
/// `lead_s` seconds before each of `n_events` button presses.
pub fn drowsy_recording(n_events: usize, spacing_s: f64, lead_s: f64, sample_rate_hz: u32, seed: u64) -> Result<EcgRecording> {
    let fs = sample_rate_hz as f64;
    let duration = spacing_s * (n_events as f64 + 1.0);
    let event_times: Vec<f64> = (1..=n_events).map(|i| i as f64 * spacing_s).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rr = rhythm(duration, |t| event_times.iter().any(|&e| t >= e - lead_s && t < e), &mut rng);
    let n = (duration * fs).round() as usize;
    let ecg = render(&rr, sample_rate_hz, n, Some(25.0), &mut rng);
    let events = event_times.iter().map(|&e| (e * fs).round() as usize).collect();
    EcgRecording::new(ecg.samples, sample_rate_hz, 16, events)
}

/// Consecutive stretches of drowsy (`true`) or alert rhythm, without events.
pub fn segmented_recording(segments: &[(f64, bool)], sample_rate_hz: u32, seed: u64) -> Result<EcgRecording> {
    let mut bounds = Vec::with_capacity(segments.len());
    let mut end = 0.0;
    for &(d, drowsy) in segments {
        end += d;
        bounds.push((end, drowsy));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rr = rhythm(end, |t| bounds.iter().find(|b| t < b.0).is_some_and(|b| b.1), &mut rng);
    let n = (end * sample_rate_hz as f64).round() as usize;
    let ecg = render(&rr, sample_rate_hz, n, Some(25.0), &mut rng);
    EcgRecording::new(ecg.samples, sample_rate_hz, 16, Vec::new())
}
