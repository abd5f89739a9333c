//! Time- and frequency-domain HRV features of an RR interval series.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const MIN_INTERVALS: usize = 30;
pub const FEATURE_COUNT: usize = 7;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] =
    ["mean_rr_ms", "sdnn_ms", "rmssd_ms", "pnn50_pct", "lf_power", "hf_power", "lfhf_ratio"];

const RESAMPLE_HZ: f64 = 4.0;
const SEGMENT: usize = 256;
const NFFT: usize = 1024;
pub(crate) const LF_BAND: (f64, f64) = (0.04, 0.15);
pub(crate) const HF_BAND: (f64, f64) = (0.15, 0.40);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HrvFeatureVector {
    pub mean_rr_ms: f64,
    pub sdnn_ms: f64,
    pub rmssd_ms: f64,
    pub pnn50_pct: f64,
    /// ms^2
    pub lf_power: f64,
    /// ms^2
    pub hf_power: f64,
    /// `None` when the HF power is zero.
    pub lfhf_ratio: Option<f64>,
}

impl HrvFeatureVector {
    /// Features in [`FEATURE_NAMES`] order; `None` if the ratio is undefined.
    pub fn to_row(&self) -> Option<[f64; FEATURE_COUNT]> {
        Some([
            self.mean_rr_ms,
            self.sdnn_ms,
            self.rmssd_ms,
            self.pnn50_pct,
            self.lf_power,
            self.hf_power,
            self.lfhf_ratio?,
        ])
    }
}

/// Natural cubic spline through `(x, y)` evaluated at `at` (all inside `[x0, xn]`).
fn natural_spline(x: &[f64], y: &[f64], at: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n > 2 {
        // tridiagonal system for the second derivatives, Thomas algorithm
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 1..n - 1 {
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            upper[i] = h[i];
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        for i in 2..n - 1 {
            let w = h[i - 1] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
        }
    }
    let mut k = 0;
    at.iter()
        .map(|&t| {
            while k + 2 < n && t > x[k + 1] {
                k += 1;
            }
            let h = x[k + 1] - x[k];
            let a = (x[k + 1] - t) / h;
            let b = (t - x[k]) / h;
            a * y[k] + b * y[k + 1] + ((a * a * a - a) * m[k] + (b * b * b - b) * m[k + 1]) * h * h / 6.0
        })
        .collect()
}

/// Welch PSD (ms^2/Hz) of the tachogram resampled at 4 Hz: frequencies and densities.
pub fn tachogram_psd(intervals_ms: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut t = Vec::with_capacity(intervals_ms.len());
    let mut acc = 0.0;
    for &rr in intervals_ms {
        acc += rr / 1000.0;
        t.push(acc);
    }
    let samples = ((t[t.len() - 1] - t[0]) * RESAMPLE_HZ).floor() as usize + 1;
    let grid: Vec<f64> = (0..samples).map(|i| t[0] + i as f64 / RESAMPLE_HZ).collect();
    let x = natural_spline(&t, intervals_ms, &grid);

    let seg = SEGMENT.min(x.len());
    let step = (seg / 2).max(1);
    let window: Vec<f64> = (0..seg)
        .map(|i| if seg > 1 { 0.5 - 0.5 * (2.0 * PI * i as f64 / (seg - 1) as f64).cos() } else { 1.0 })
        .collect();
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let bins = NFFT / 2 + 1;
    let mut psd = vec![0.0; bins];
    let mut segments = 0;
    let mut start = 0;
    while start + seg <= x.len() {
        let chunk = &x[start..start + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        let mut buf = vec![Complex::new(0.0, 0.0); NFFT];
        for (i, (&v, &w)) in chunk.iter().zip(&window).enumerate() {
            buf[i] = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            let one_sided = if k == 0 || k == NFFT / 2 { 1.0 } else { 2.0 };
            *p += one_sided * buf[k].norm_sqr() / (RESAMPLE_HZ * wpow);
        }
        segments += 1;
        start += step;
    }
    psd.iter_mut().for_each(|p| *p /= segments.max(1) as f64);
    let freqs = (0..bins).map(|k| k as f64 * RESAMPLE_HZ / NFFT as f64).collect();
    (freqs, psd)
}

pub(crate) fn band_power(freqs: &[f64], psd: &[f64], band: (f64, f64)) -> f64 {
    let df = RESAMPLE_HZ / NFFT as f64;
    freqs
        .iter()
        .zip(psd)
        .filter(|(&f, _)| f >= band.0 && f < band.1)
        .map(|(_, &p)| p * df)
        .sum()
}

pub fn mean_rr(intervals_ms: &[f64]) -> f64 {
    intervals_ms.iter().sum::<f64>() / intervals_ms.len() as f64
}

/// Population standard deviation.
pub fn sdnn(intervals_ms: &[f64]) -> f64 {
    let mean = mean_rr(intervals_ms);
    (intervals_ms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / intervals_ms.len() as f64).sqrt()
}

pub fn rmssd(intervals_ms: &[f64]) -> f64 {
    let n = intervals_ms.len().saturating_sub(1);
    (intervals_ms.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / n as f64).sqrt()
}

/// Percentage of successive differences strictly above 50 ms.
pub fn pnn50(intervals_ms: &[f64]) -> f64 {
    let n = intervals_ms.len().saturating_sub(1);
    100.0 * intervals_ms.windows(2).filter(|w| (w[1] - w[0]).abs() > 50.0).count() as f64 / n as f64
}

/// Needs at least [`MIN_INTERVALS`] intervals.
pub fn hrv_features(intervals_ms: &[f64]) -> Result<HrvFeatureVector> {
    let n = intervals_ms.len();
    if n < MIN_INTERVALS {
        return Err(Error::UnderSampled {
            intervals: n,
            required: MIN_INTERVALS,
        });
    }
    if let Some(x) = intervals_ms.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::Validation(format!("RR interval {x} is not positive")));
    }
    let mean = mean_rr(intervals_ms);
    let (freqs, psd) = tachogram_psd(intervals_ms);
    // interpolation round-off on a flat series is not spectral power
    let floor = 1e-12 * mean * mean;
    let lf = Some(band_power(&freqs, &psd, LF_BAND)).filter(|&p| p > floor).unwrap_or(0.0);
    let hf = Some(band_power(&freqs, &psd, HF_BAND)).filter(|&p| p > floor).unwrap_or(0.0);
    Ok(HrvFeatureVector {
        mean_rr_ms: mean,
        sdnn_ms: sdnn(intervals_ms),
        rmssd_ms: rmssd(intervals_ms),
        pnn50_pct: pnn50(intervals_ms),
        lf_power: lf,
        hf_power: hf,
        lfhf_ratio: (hf > 0.0).then(|| lf / hf),
    })
}
