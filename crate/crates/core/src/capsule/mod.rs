//! DEW/NSRW window extraction, CNM capsule configurations and capsule slicing.

mod dataset;
mod hrv;

use std::ops::Range;

use crate::ecg::EcgRecording;
use crate::error::{Error, Result};

pub use dataset::{
    build_dataset, capsule_sequence, load_dataset, save_dataset, dataset_from_text, dataset_to_text, CapsuleSequence,
    DATASET_FORMAT_VERSION,
};
pub use hrv::{hrv_features, mean_rr, pnn50, rmssd, sdnn, tachogram_psd, HrvFeatureVector, FEATURE_COUNT, FEATURE_NAMES, MIN_INTERVALS};

/// Default window length: 120 s at 128 Hz.
pub const DEFAULT_WINDOW_SAMPLES: usize = 15_360;
pub const N_RANGE: (usize, usize) = (2, 200);
pub const C_RANGE_S: (u32, u32) = (40, 120);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WindowKind {
    /// Drowsiness event window, label 1.
    Dew,
    /// Normal sinus rhythm window, label 0.
    Nsrw,
}

impl WindowKind {
    pub fn label(self) -> u8 {
        match self {
            WindowKind::Dew => 1,
            WindowKind::Nsrw => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WindowKind::Dew => "DEW",
            WindowKind::Nsrw => "NSRW",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "DEW" => Some(WindowKind::Dew),
            "NSRW" => Some(WindowKind::Nsrw),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub kind: WindowKind,
    pub start_sample: usize,
    pub length_samples: usize,
    /// DEW and NSRW windows sharing a pair index were selected together.
    pub pair: usize,
}

impl Window {
    pub fn end_sample(&self) -> usize {
        self.start_sample + self.length_samples
    }

    pub fn range(&self) -> Range<usize> {
        self.start_sample..self.end_sample()
    }

    fn overlaps(&self, other: &Range<usize>) -> bool {
        self.start_sample < other.end && other.start < self.end_sample()
    }
}

/// Where a DEW sits relative to its button press.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Anchor {
    /// The window ends at the event.
    End,
    /// The event is in the middle of the window.
    Centered,
}

impl Anchor {
    pub fn as_str(self) -> &'static str {
        match self {
            Anchor::End => "end",
            Anchor::Centered => "centered",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "end" => Some(Anchor::End),
            "centered" => Some(Anchor::Centered),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowParams {
    pub length_samples: usize,
    pub min_gap_s: f64,
    pub anchor: Anchor,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            length_samples: DEFAULT_WINDOW_SAMPLES,
            min_gap_s: 120.0,
            anchor: Anchor::End,
        }
    }
}

/// Events at least `min_gap_s` after the preceding event; the first always qualifies.
pub fn qualifying_events(events: &[usize], sample_rate_hz: u32, min_gap_s: f64) -> Vec<usize> {
    let gap = min_gap_s * sample_rate_hz as f64;
    events
        .iter()
        .enumerate()
        .filter(|&(i, &e)| i == 0 || (e - events[i - 1]) as f64 >= gap)
        .map(|(_, &e)| e)
        .collect()
}

fn dew_start(event: usize, len: usize, anchor: Anchor) -> Option<usize> {
    match anchor {
        Anchor::End => event.checked_sub(len),
        Anchor::Centered => event.checked_sub(len / 2),
    }
}

/// One DEW per qualifying event that fits in the recording, each paired with an
/// event-free NSRW; the result lists every DEW followed by its NSRW.
pub fn extract_windows(rec: &EcgRecording, params: &WindowParams) -> Result<Vec<Window>> {
    let len = params.length_samples;
    if len == 0 || len > rec.len() {
        return Err(Error::Validation(format!(
            "window length {len} must be in [1, {}]",
            rec.len()
        )));
    }
    let fs = rec.sample_rate_hz();
    let gap = (params.min_gap_s * fs as f64).ceil() as usize;
    let mut dews: Vec<Window> = Vec::new();
    for e in qualifying_events(rec.events(), fs, params.min_gap_s) {
        let Some(start) = dew_start(e, len, params.anchor) else { continue };
        if start + len > rec.len() || dews.iter().any(|d| d.overlaps(&(start..start + len))) {
            continue;
        }
        dews.push(Window {
            kind: WindowKind::Dew,
            start_sample: start,
            length_samples: len,
            pair: dews.len(),
        });
    }
    if dews.is_empty() {
        return Ok(Vec::new());
    }

    // Regions a normal window may not touch: each event +/- the gap, and every DEW.
    let mut blocked: Vec<Range<usize>> = rec
        .events()
        .iter()
        .map(|&e| e.saturating_sub(gap)..(e + gap + 1).min(rec.len()))
        .chain(dews.iter().map(Window::range))
        .collect();
    blocked.sort_by_key(|r| r.start);
    let mut slots: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for b in blocked.iter().chain(std::iter::once(&(rec.len()..rec.len()))) {
        while cursor + len <= b.start {
            slots.push(cursor);
            cursor += len;
        }
        cursor = cursor.max(b.end);
    }
    if slots.len() < dews.len() {
        return Err(Error::CannotBalance(format!(
            "{} drowsy windows but room for only {} event-free windows",
            dews.len(),
            slots.len()
        )));
    }

    let mut out = Vec::with_capacity(2 * dews.len());
    let mut used = vec![false; slots.len()];
    for d in dews {
        // the free slot nearest in time to the DEW
        let pick = (0..slots.len())
            .filter(|&i| !used[i])
            .min_by_key(|&i| slots[i].abs_diff(d.start_sample))
            .expect("enough slots");
        used[pick] = true;
        let pair = d.pair;
        out.push(d);
        out.push(Window {
            kind: WindowKind::Nsrw,
            start_sample: slots[pick],
            length_samples: len,
            pair,
        });
    }
    Ok(out)
}

/// Capsule size, count and overlap; the overlap is kept in whole percent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CapsuleConfig {
    pub c: usize,
    pub n: usize,
    pub m_pct: u32,
}

impl CapsuleConfig {
    pub fn m(&self) -> f64 {
        self.m_pct as f64 / 100.0
    }

    pub fn label(&self) -> String {
        format!("C{}_N{}_M{}", self.c, self.n, self.m_pct)
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("capsule label '{s}' is not of the form C<int>_N<int>_M<int>"));
        let mut parts = s.split('_');
        let mut field = |prefix: char| -> Result<u64> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(prefix))
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)
        };
        let (c, n, m) = (field('C')?, field('N')?, field('M')?);
        if parts.next().is_some() || m == 0 || m >= 100 {
            return Err(bad());
        }
        Ok(CapsuleConfig {
            c: c as usize,
            n: n as usize,
            m_pct: m as u32,
        })
    }

    /// Whether this configuration tiles `l` samples at its whole-percent overlap.
    pub fn is_valid_for(&self, l: usize) -> bool {
        matches!(compute_overlap(self.c, self.n, l), Ok(Some(m)) if (m * 100.0).round() as u32 == self.m_pct)
    }
}

/// `M = (C*N - L) / ((N - 1) * C)`, or `None` when M is outside (0, 1) or not a
/// whole percentage.
pub fn compute_overlap(c: usize, n: usize, l: usize) -> Result<Option<f64>> {
    if n < 2 {
        return Err(Error::Config(format!("capsule count must be at least 2, got {n}")));
    }
    if c == 0 || c * n < l {
        return Ok(None);
    }
    let m = (c * n - l) as f64 / ((n - 1) * c) as f64;
    if !(m > 0.0 && m < 1.0) {
        return Ok(None);
    }
    let pct = 100.0 * m;
    if (pct - pct.round()).abs() < 1e-9 {
        Ok(Some(pct.round() / 100.0))
    } else {
        Ok(None)
    }
}

/// Every valid configuration over whole-second capsule sizes, sorted by label.
pub fn enumerate_configs(l: usize, sample_rate_hz: u32, n_range: (usize, usize), c_range_s: (u32, u32)) -> Vec<CapsuleConfig> {
    let mut out = Vec::new();
    for secs in c_range_s.0..=c_range_s.1 {
        let c = secs as usize * sample_rate_hz as usize;
        for n in n_range.0.max(2)..=n_range.1 {
            if let Ok(Some(m)) = compute_overlap(c, n, l) {
                out.push(CapsuleConfig {
                    c,
                    n,
                    m_pct: (m * 100.0).round() as u32,
                });
            }
        }
    }
    out.sort_by_key(|cfg| cfg.label());
    out
}

/// Default enumeration: 120 s windows at 128 Hz.
pub fn default_configs() -> Vec<CapsuleConfig> {
    enumerate_configs(DEFAULT_WINDOW_SAMPLES, 128, N_RANGE, C_RANGE_S)
}

/// Capsule start offsets within a window of `l` samples; capsule `i` starts at
/// `round(i * C * (1 - M))`.
pub fn capsule_starts(cfg: &CapsuleConfig, l: usize) -> Result<Vec<usize>> {
    let step = cfg.c as f64 * (100 - cfg.m_pct) as f64 / 100.0;
    let starts: Vec<usize> = (0..cfg.n).map(|i| (i as f64 * step).round() as usize).collect();
    let end = starts.last().map_or(0, |s| s + cfg.c);
    if end.abs_diff(l) > 1 {
        return Err(Error::NonTiling {
            label: cfg.label(),
            end,
            len: l,
        });
    }
    Ok(starts)
}

/// Absolute sample ranges of the `N` capsules of `w`.
pub fn slice_capsules(w: &Window, cfg: &CapsuleConfig) -> Result<Vec<Range<usize>>> {
    Ok(capsule_starts(cfg, w.length_samples)?
        .into_iter()
        .map(|s| {
            let start = w.start_sample + s;
            start..(start + cfg.c).min(w.end_sample())
        })
        .collect())
}
