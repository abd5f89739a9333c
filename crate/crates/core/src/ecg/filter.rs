//! Zero-phase Butterworth filtering as cascaded biquads run forward and backward.

use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::EcgRecording;

/// Edge padding on each side, in seconds. Recordings must be longer than this.
pub const WARMUP_S: f64 = 2.0;

/// Second-order section `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Second-order Butterworth low-pass via the bilinear transform with prewarping.
    pub fn lowpass(cutoff_hz: f64, fs: f64) -> Biquad {
        let k = (PI * cutoff_hz / fs).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    pub fn highpass(cutoff_hz: f64, fs: f64) -> Biquad {
        let k = (PI * cutoff_hz / fs).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        Biquad {
            b: [norm, -2.0 * norm, norm],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Magnitude response at `f` Hz.
    pub fn gain_at(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let z1 = (w.cos(), -w.sin());
        let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0, self.b[1] * z1.1 + self.b[2] * z2.1);
        let den = (1.0 + self.a[0] * z1.0 + self.a[1] * z2.0, self.a[0] * z1.1 + self.a[1] * z2.1);
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }

    /// Transposed direct form II with state primed for a constant input `x0`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let g = self.dc_gain();
        let mut z2 = (self.b[2] - self.a[1] * g) * x0;
        let mut z1 = (self.b[1] - self.a[0] * g) * x0 + z2;
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * y + z2;
            z2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

/// Pass band of the ECG filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterSpec {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            low_hz: 0.5,
            high_hz: 40.0,
        }
    }
}

impl FilterSpec {
    pub fn sections(&self, fs: f64) -> Vec<Biquad> {
        let mut s = vec![Biquad::highpass(self.low_hz, fs)];
        // the low-pass edge is only meaningful below Nyquist
        if self.high_hz < 0.5 * fs {
            s.push(Biquad::lowpass(self.high_hz, fs));
        }
        s
    }
}

fn run_cascade(sections: &[Biquad], x: &mut [f64]) {
    for s in sections {
        s.run(x);
    }
}

/// Zero-phase filtering with odd reflection at both edges.
pub(crate) fn filtfilt(sections: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let pad = pad.min(n.saturating_sub(1));
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (x[0], x[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));
    run_cascade(sections, &mut ext);
    ext.reverse();
    run_cascade(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Band-pass filters raw samples and removes the remaining mean.
pub fn filter_signal(samples: &[f64], sample_rate_hz: u32, spec: FilterSpec) -> Result<Vec<f64>> {
    let fs = sample_rate_hz as f64;
    let pad = (WARMUP_S * fs).ceil() as usize;
    if samples.len() <= pad {
        return Err(Error::TooShort {
            len: samples.len(),
            required: pad + 1,
        });
    }
    if !(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz && spec.low_hz < 0.5 * fs) {
        return Err(Error::Config(format!(
            "pass band [{}, {}] Hz invalid at {fs} Hz",
            spec.low_hz, spec.high_hz
        )));
    }
    let mut y = filtfilt(&spec.sections(fs), samples, pad);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter_mut().for_each(|v| *v -= mean);
    Ok(y)
}

/// 0.5-40 Hz zero-phase band-pass; length and metadata are preserved.
pub fn bandpass_filter(rec: &EcgRecording) -> Result<EcgRecording> {
    rec.with_samples(filter_signal(rec.samples(), rec.sample_rate_hz(), FilterSpec::default())?)
}
