//! ECG recordings, band-pass filtering, R-peak detection and RR series.

mod filter;
mod peaks;
pub mod synth;

use std::path::Path;

use crate::error::{Error, Result};
use crate::textio;

pub use filter::{bandpass_filter, filter_signal, Biquad, FilterSpec, WARMUP_S};
pub use peaks::{detect_r_peaks, detect_peaks_in, REFRACTORY_MS};

/// Plausible RR range (ms); intervals outside it are flagged, not removed.
pub const RR_VALID_MS: (f64, f64) = (250.0, 2500.0);

/// Single-lead ECG with drowsiness button presses as sample indices.
#[derive(Clone, Debug, PartialEq)]
pub struct EcgRecording {
    samples: Vec<f64>,
    sample_rate_hz: u32,
    resolution_bits: u32,
    events: Vec<usize>,
}

impl EcgRecording {
    /// Events are sorted and deduplicated; every event must index a sample.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32, resolution_bits: u32, mut events: Vec<usize>) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("sample {i} is not finite")));
        }
        events.sort_unstable();
        events.dedup();
        if let Some(&e) = events.iter().find(|&&e| e >= samples.len()) {
            return Err(Error::Validation(format!(
                "event index {e} outside recording of {} samples",
                samples.len()
            )));
        }
        Ok(EcgRecording {
            samples,
            sample_rate_hz,
            resolution_bits,
            events,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn resolution_bits(&self) -> u32 {
        self.resolution_bits
    }

    pub fn events(&self) -> &[usize] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Same metadata, new samples (used by filters).
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        EcgRecording::new(samples, self.sample_rate_hz, self.resolution_bits, self.events.clone())
    }

    /// Samples `[start, end)` with events re-based; events outside are dropped.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.samples.len() {
            return Err(Error::Validation(format!(
                "slice [{start}, {end}) outside recording of {} samples",
                self.samples.len()
            )));
        }
        let events = self
            .events
            .iter()
            .filter(|&&e| e >= start && e < end)
            .map(|&e| e - start)
            .collect();
        EcgRecording::new(self.samples[start..end].to_vec(), self.sample_rate_hz, self.resolution_bits, events)
    }
}

/// Peak positions and the intervals between them.
#[derive(Clone, Debug, PartialEq)]
pub struct RrSeries {
    pub peak_indices: Vec<usize>,
    pub intervals_ms: Vec<f64>,
    /// `true` where the interval lies outside [`RR_VALID_MS`].
    pub out_of_range: Vec<bool>,
    pub origin_window: Option<String>,
}

impl RrSeries {
    pub fn from_peaks(peak_indices: Vec<usize>, sample_rate_hz: u32) -> Result<Self> {
        if peak_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("peak indices must be strictly increasing".into()));
        }
        let ms_per_sample = 1000.0 / sample_rate_hz as f64;
        let intervals_ms: Vec<f64> = peak_indices.windows(2).map(|w| (w[1] - w[0]) as f64 * ms_per_sample).collect();
        Ok(RrSeries::from_intervals(peak_indices, intervals_ms))
    }

    fn from_intervals(peak_indices: Vec<usize>, intervals_ms: Vec<f64>) -> Self {
        let out_of_range = intervals_ms
            .iter()
            .map(|&x| !(RR_VALID_MS.0..=RR_VALID_MS.1).contains(&x))
            .collect();
        RrSeries {
            peak_indices,
            intervals_ms,
            out_of_range,
            origin_window: None,
        }
    }

    /// Interval-only series; `peak_indices` stays empty.
    pub fn from_intervals_ms(intervals_ms: Vec<f64>) -> Self {
        RrSeries::from_intervals(Vec::new(), intervals_ms)
    }

    pub fn len(&self) -> usize {
        self.intervals_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals_ms.is_empty()
    }

    pub fn flagged_count(&self) -> usize {
        self.out_of_range.iter().filter(|&&f| f).count()
    }

    /// Intervals whose both bounding peaks lie in `[start, end)`.
    pub fn restricted(&self, start: usize, end: usize) -> RrSeries {
        let keep: Vec<usize> = self.peak_indices.iter().copied().filter(|&p| p >= start && p < end).collect();
        let first = self.peak_indices.iter().position(|&p| p >= start).unwrap_or(self.peak_indices.len());
        let n = keep.len().saturating_sub(1);
        RrSeries {
            intervals_ms: self.intervals_ms[first.min(self.intervals_ms.len())..][..n].to_vec(),
            out_of_range: self.out_of_range[first.min(self.out_of_range.len())..][..n].to_vec(),
            peak_indices: keep,
            origin_window: self.origin_window.clone(),
        }
    }
}

/// Band-pass filters a raw recording and detects its R-peaks.
pub fn rr_series(rec: &EcgRecording) -> Result<RrSeries> {
    detect_r_peaks(&bandpass_filter(rec)?)
}

/// Sidecar metadata: `sample_rate_hz=<int>` and `resolution_bits=<int>`.
pub fn read_meta(path: &Path) -> Result<(u32, u32)> {
    let text = textio::read_to_string(path)?;
    let mut rate = None;
    let mut bits = 16;
    for (line, key, value) in textio::key_values(&text, path)? {
        let parse = || value.parse::<u32>().map_err(|e| Error::parse(path, line, format!("{key}: {e}")));
        match key.as_str() {
            "sample_rate_hz" => rate = Some(parse()?),
            "resolution_bits" => bits = parse()?,
            other => return Err(Error::parse(path, line, format!("unknown key '{other}'"))),
        }
    }
    let rate = rate.ok_or_else(|| Error::parse(path, 0, "missing key 'sample_rate_hz'"))?;
    Ok((rate, bits))
}

fn read_column<T: std::str::FromStr>(path: &Path) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let text = textio::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        out.push(s.parse::<T>().map_err(|e| Error::parse(path, i + 1, format!("{s:?}: {e}")))?);
    }
    Ok(out)
}

/// Loads one sample per line and, optionally, one event index per line.
pub fn load_recording(path_signal: &Path, path_events: Option<&Path>, sample_rate_hz: u32) -> Result<EcgRecording> {
    load_recording_with_bits(path_signal, path_events, sample_rate_hz, 16)
}

pub fn load_recording_with_bits(
    path_signal: &Path,
    path_events: Option<&Path>,
    sample_rate_hz: u32,
    resolution_bits: u32,
) -> Result<EcgRecording> {
    let samples: Vec<f64> = read_column(path_signal)?;
    let events: Vec<usize> = match path_events {
        Some(p) => read_column(p)?,
        None => Vec::new(),
    };
    EcgRecording::new(samples, sample_rate_hz, resolution_bits, events)
}

/// Loads a recording whose sample rate and resolution come from a sidecar file.
pub fn load_with_meta(path_signal: &Path, path_events: Option<&Path>, path_meta: &Path) -> Result<EcgRecording> {
    let (rate, bits) = read_meta(path_meta)?;
    load_recording_with_bits(path_signal, path_events, rate, bits)
}

pub fn save_recording(rec: &EcgRecording, path_signal: &Path, path_events: &Path, path_meta: &Path) -> Result<()> {
    let mut s = String::with_capacity(rec.len() * 12);
    for x in rec.samples() {
        s.push_str(&format!("{x}\n"));
    }
    textio::write_atomic(path_signal, &s)?;
    let ev: String = rec.events().iter().map(|e| format!("{e}\n")).collect();
    textio::write_atomic(path_events, &ev)?;
    textio::write_atomic(
        path_meta,
        &format!("sample_rate_hz={}\nresolution_bits={}\n", rec.sample_rate_hz(), rec.resolution_bits()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let sig = dir.path().join("sig.txt");
        fs::write(&sig, "0.1\n0.2\n0.1").unwrap();
        let rec = load_recording(&sig, None, 128).unwrap();
        assert_eq!(rec.len(), 3);
        assert!(rec.events().is_empty());
    }

    #[test]
    fn events_are_sorted_and_deduplicated() {
        let dir = tempfile::tempdir().unwrap();
        let sig = dir.path().join("sig.txt");
        let ev = dir.path().join("ev.txt");
        fs::write(&sig, "0\n".repeat(200)).unwrap();
        fs::write(&ev, "100\n100\n50\n").unwrap();
        let rec = load_recording(&sig, Some(&ev), 128).unwrap();
        assert_eq!(rec.events(), &[50, 100]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let sig = dir.path().join("sig.txt");
        fs::write(&sig, "0.1\nabc\n").unwrap();
        let e = load_recording(&sig, None, 128).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
    }

    #[test]
    fn event_out_of_range() {
        let e = EcgRecording::new(vec![0.0; 10], 128, 16, vec![10]).unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
    }

    #[test]
    fn two_hours_at_128_hz() {
        let rec = EcgRecording::new(vec![0.0; 2 * 3600 * 128], 128, 16, vec![]).unwrap();
        assert_eq!(rec.len(), 921_600);
        assert_eq!(rec.duration_s(), 7200.0);
    }

    #[test]
    fn meta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rec = EcgRecording::new(vec![0.25, -1.5, 3.0], 250, 12, vec![1]).unwrap();
        let (s, e, m) = (dir.path().join("s"), dir.path().join("e"), dir.path().join("m"));
        save_recording(&rec, &s, &e, &m).unwrap();
        assert_eq!(load_with_meta(&s, Some(&e), &m).unwrap(), rec);
    }

    #[test]
    fn rr_from_peaks_flags_outliers() {
        let rr = RrSeries::from_peaks(vec![0, 128, 160, 600], 128).unwrap();
        assert_eq!(rr.intervals_ms, vec![1000.0, 250.0, 3437.5]);
        assert_eq!(rr.out_of_range, vec![false, false, true]);
        assert!(RrSeries::from_peaks(vec![5, 5], 128).is_err());
    }

    #[test]
    fn restriction_keeps_inner_intervals() {
        let rr = RrSeries::from_peaks(vec![0, 100, 200, 300, 400], 100).unwrap();
        let r = rr.restricted(50, 350);
        assert_eq!(r.peak_indices, vec![100, 200, 300]);
        assert_eq!(r.intervals_ms, vec![1000.0, 1000.0]);
    }
}
