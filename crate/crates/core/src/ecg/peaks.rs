//! Pan-Tompkins style QRS detection: QRS-band emphasis, five-point derivative,
//! squaring, moving-window integration and adaptive thresholds with search-back.

use crate::error::{Error, Result};

use super::filter::{filtfilt, Biquad};
use super::{EcgRecording, RrSeries};

pub const REFRACTORY_MS: f64 = 200.0;
const MIN_DURATION_S: f64 = 10.0;
const INTEGRATION_MS: f64 = 150.0;
const T_WAVE_MS: f64 = 360.0;
const REFINE_MS: f64 = 100.0;

fn ms_to_samples(ms: f64, fs: f64) -> usize {
    (ms * fs / 1000.0).round().max(1.0) as usize
}

/// Five-point derivative, centred.
fn derivative(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    for i in 2..n.saturating_sub(2) {
        d[i] = (2.0 * x[i + 2] + x[i + 1] - x[i - 1] - 2.0 * x[i - 2]) / 8.0;
    }
    d
}

/// Centred moving average of width `w`.
fn integrate(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    let half = w / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + w - half).min(n);
            (prefix[hi] - prefix[lo]) / w as f64
        })
        .collect()
}

fn local_maxima(x: &[f64]) -> Vec<usize> {
    (1..x.len().saturating_sub(1))
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
        .collect()
}

fn max_abs_in(x: &[f64], centre: usize, half: usize) -> f64 {
    let lo = centre.saturating_sub(half);
    let hi = (centre + half + 1).min(x.len());
    x[lo..hi].iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

struct Thresholds {
    spki: f64,
    npki: f64,
}

impl Thresholds {
    fn level(&self) -> f64 {
        self.npki + 0.25 * (self.spki - self.npki)
    }
}

/// R-peak sample indices of a band-passed ECG.
pub fn detect_peaks_in(x: &[f64], sample_rate_hz: u32) -> Result<Vec<usize>> {
    let fs = sample_rate_hz as f64;
    let required = (MIN_DURATION_S * fs).ceil() as usize;
    if x.len() < required {
        return Err(Error::TooShort { len: x.len(), required });
    }
    let mut sections = vec![Biquad::highpass(5.0, fs)];
    if 15.0 < 0.5 * fs {
        sections.push(Biquad::lowpass(15.0, fs));
    }
    let qrs = filtfilt(&sections, x, ms_to_samples(1000.0, fs));
    let slope = derivative(&qrs);
    let squared: Vec<f64> = slope.iter().map(|v| v * v).collect();
    let mwi = integrate(&squared, ms_to_samples(INTEGRATION_MS, fs));

    let refractory = ms_to_samples(REFRACTORY_MS, fs);
    let t_wave = ms_to_samples(T_WAVE_MS, fs);
    let slope_half = ms_to_samples(75.0, fs);
    let learn = ((2.0 * fs) as usize).min(mwi.len());
    let head = &mwi[..learn];
    let mut th = Thresholds {
        spki: 0.25 * head.iter().fold(0.0f64, |m, &v| m.max(v)),
        npki: 0.5 * head.iter().sum::<f64>() / learn.max(1) as f64,
    };

    let candidates = local_maxima(&mwi);
    let mut beats: Vec<usize> = Vec::new();
    let mut last_slope = 0.0;
    let mut rr_recent: Vec<usize> = Vec::new();
    let mut ci = 0;
    while ci < candidates.len() {
        let c = candidates[ci];
        ci += 1;
        let peak = mwi[c];
        if peak <= th.level() {
            th.npki = 0.125 * peak + 0.875 * th.npki;
            continue;
        }
        let s = max_abs_in(&slope, c, slope_half);
        if let Some(&prev) = beats.last() {
            let gap = c - prev;
            if gap < refractory {
                if peak > mwi[prev] {
                    *beats.last_mut().expect("non-empty") = c;
                    last_slope = s;
                }
                continue;
            }
            if gap < t_wave && s < 0.5 * last_slope {
                th.npki = 0.125 * peak + 0.875 * th.npki;
                continue;
            }
            // search back for a missed beat when the gap is unusually long
            if rr_recent.len() >= 2 {
                let mean_rr = rr_recent.iter().sum::<usize>() as f64 / rr_recent.len() as f64;
                if gap as f64 > 1.66 * mean_rr {
                    let half_level = 0.5 * th.level();
                    let missed = candidates
                        .iter()
                        .copied()
                        .filter(|&m| m >= prev + refractory && m + refractory <= c && mwi[m] > half_level)
                        .max_by(|&a, &b| mwi[a].total_cmp(&mwi[b]).then(b.cmp(&a)));
                    if let Some(m) = missed {
                        th.spki = 0.25 * mwi[m] + 0.75 * th.spki;
                        rr_recent.push(m - prev);
                        beats.push(m);
                    }
                }
            }
            let prev = *beats.last().expect("non-empty");
            rr_recent.push(c - prev);
            if rr_recent.len() > 8 {
                rr_recent.remove(0);
            }
        }
        th.spki = 0.125 * peak + 0.875 * th.spki;
        last_slope = s;
        beats.push(c);
    }

    // move each detection onto the R apex of the filtered trace
    let half = ms_to_samples(REFINE_MS, fs);
    let mut peaks: Vec<usize> = Vec::with_capacity(beats.len());
    for b in beats {
        let lo = b.saturating_sub(half);
        let hi = (b + half + 1).min(x.len());
        let mut best = lo;
        for i in lo..hi {
            if x[i] > x[best] {
                best = i;
            }
        }
        match peaks.last_mut() {
            Some(last) if best < *last + refractory => {
                if x[best] > x[*last] {
                    *last = best;
                }
            }
            _ => peaks.push(best),
        }
    }
    if peaks.len() < 2 {
        return Err(Error::InsufficientPeaks);
    }
    Ok(peaks)
}

/// R-peaks and RR intervals of a filtered recording.
pub fn detect_r_peaks(rec: &EcgRecording) -> Result<RrSeries> {
    let peaks = detect_peaks_in(rec.samples(), rec.sample_rate_hz())?;
    RrSeries::from_peaks(peaks, rec.sample_rate_hz())
}
