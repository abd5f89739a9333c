use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::ecg::RrSeries;
use crate::error::{Error, Result};
use crate::textio;

use super::hrv::{hrv_features, FEATURE_COUNT};
use super::{slice_capsules, CapsuleConfig, Window, WindowKind};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Shortest capsule, in seconds, that still supports the LF band.
const MIN_CAPSULE_S: f64 = 40.0;

/// `N` feature rows for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleSequence {
    pub config: CapsuleConfig,
    pub rows: Vec<[f64; FEATURE_COUNT]>,
    pub label: u8,
    pub source_window: Window,
}

/// Featurizes every capsule of `window` from the recording-wide RR series.
/// A capsule with flagged intervals or an undefined LF/HF ratio invalidates the sequence.
pub fn capsule_sequence(rr: &RrSeries, window: &Window, cfg: &CapsuleConfig, sample_rate_hz: u32) -> Result<CapsuleSequence> {
    if (cfg.c as f64) < MIN_CAPSULE_S * sample_rate_hz as f64 {
        return Err(Error::Config(format!(
            "capsule {} is shorter than {MIN_CAPSULE_S} s",
            cfg.label()
        )));
    }
    let mut rows = Vec::with_capacity(cfg.n);
    for range in slice_capsules(window, cfg)? {
        let part = rr.restricted(range.start, range.end);
        if part.flagged_count() > 0 {
            return Err(Error::Validation(format!(
                "capsule at sample {} has {} implausible RR intervals",
                range.start,
                part.flagged_count()
            )));
        }
        let f = hrv_features(&part.intervals_ms)?;
        let row = f
            .to_row()
            .ok_or_else(|| Error::Validation(format!("capsule at sample {} has no HF power", range.start)))?;
        rows.push(row);
    }
    Ok(CapsuleSequence {
        config: *cfg,
        rows,
        label: window.kind.label(),
        source_window: window.clone(),
    })
}

/// One sequence per window; when either window of a DEW/NSRW pair is invalid both are dropped.
pub fn build_dataset(rr: &RrSeries, windows: &[Window], cfg: &CapsuleConfig, sample_rate_hz: u32) -> Result<Vec<CapsuleSequence>> {
    let mut pairs: BTreeMap<usize, Vec<Option<CapsuleSequence>>> = BTreeMap::new();
    for w in windows {
        pairs.entry(w.pair).or_default().push(capsule_sequence(rr, w, cfg, sample_rate_hz).ok());
    }
    let mut out = Vec::new();
    for members in pairs.into_values() {
        let complete = members.len() == 2 && members.iter().all(Option::is_some);
        if complete {
            out.extend(members.into_iter().flatten());
        }
    }
    if out.is_empty() {
        return Err(Error::Validation(format!(
            "no valid capsule sequences for {} from {} windows",
            cfg.label(),
            windows.len()
        )));
    }
    Ok(out)
}

/// Header line, then per sequence a `seq,...` line followed by its rows.
pub fn dataset_to_text(seqs: &[CapsuleSequence]) -> String {
    let mut s = format!("format_version={DATASET_FORMAT_VERSION}\n");
    for q in seqs {
        let w = &q.source_window;
        let _ = writeln!(
            s,
            "seq,{},{},{},{},{},{}",
            q.config.label(),
            q.label,
            w.kind.as_str(),
            w.start_sample,
            w.length_samples,
            w.pair
        );
        for row in &q.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
    }
    s
}

pub fn dataset_from_text(text: &str, path: &Path) -> Result<Vec<CapsuleSequence>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, l)) if l == format!("format_version={DATASET_FORMAT_VERSION}") => {}
        _ => return Err(Error::parse(path, 1, format!("expected format_version={DATASET_FORMAT_VERSION}"))),
    }
    let mut out: Vec<CapsuleSequence> = Vec::new();
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("seq,") {
            let f: Vec<&str> = rest.split(',').collect();
            if f.len() != 6 {
                return Err(Error::parse(path, ln, "sequence header needs 6 fields"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(path, ln, format!("{s:?}: {e}")));
            let config = CapsuleConfig::parse_label(f[0]).map_err(|e| Error::parse(path, ln, e.to_string()))?;
            let kind = WindowKind::parse(f[2]).ok_or_else(|| Error::parse(path, ln, format!("unknown window kind {:?}", f[2])))?;
            let label = int(f[1])?;
            if label != kind.label() as usize {
                return Err(Error::parse(path, ln, "label does not match window kind"));
            }
            out.push(CapsuleSequence {
                config,
                rows: Vec::with_capacity(config.n),
                label: label as u8,
                source_window: Window {
                    kind,
                    start_sample: int(f[3])?,
                    length_samples: int(f[4])?,
                    pair: int(f[5])?,
                },
            });
            continue;
        }
        let seq = out
            .last_mut()
            .ok_or_else(|| Error::parse(path, ln, "feature row before any sequence header"))?;
        let mut row = [0.0f64; FEATURE_COUNT];
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != FEATURE_COUNT {
            return Err(Error::parse(path, ln, format!("expected {FEATURE_COUNT} features, got {}", cells.len())));
        }
        for (slot, c) in row.iter_mut().zip(cells) {
            *slot = c.parse().map_err(|e| Error::parse(path, ln, format!("{c:?}: {e}")))?;
            if !slot.is_finite() {
                return Err(Error::parse(path, ln, "non-finite feature"));
            }
        }
        seq.rows.push(row);
    }
    if let Some(q) = out.iter().find(|q| q.rows.len() != q.config.n) {
        return Err(Error::parse(
            path,
            0,
            format!("sequence {} has {} rows, expected {}", q.config.label(), q.rows.len(), q.config.n),
        ));
    }
    Ok(out)
}

pub fn save_dataset(seqs: &[CapsuleSequence], path: &Path) -> Result<()> {
    textio::write_atomic(path, &dataset_to_text(seqs))
}

pub fn load_dataset(path: &Path) -> Result<Vec<CapsuleSequence>> {
    dataset_from_text(&textio::read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_rr(seconds: usize, fs: u32, wobble: f64) -> RrSeries {
        let mut peaks = Vec::new();
        let mut t = 0.5;
        while t < seconds as f64 {
            peaks.push((t * fs as f64).round() as usize);
            t += 0.78125 + wobble * (2.0 * std::f64::consts::PI * 0.25 * t).sin();
        }
        RrSeries::from_peaks(peaks, fs).unwrap()
    }

    fn windows(n: usize) -> Vec<Window> {
        (0..n)
            .flat_map(|p| {
                [WindowKind::Dew, WindowKind::Nsrw].map(|kind| Window {
                    kind,
                    start_sample: (2 * p + usize::from(kind == WindowKind::Nsrw)) * 15_360,
                    length_samples: 15_360,
                    pair: p,
                })
            })
            .collect()
    }

    #[test]
    fn balanced_and_shaped() {
        let rr = synthetic_rr(8 * 120 + 10, 128, 0.04);
        let cfg = CapsuleConfig::parse_label("C6400_N6_M72").unwrap();
        let ds = build_dataset(&rr, &windows(4), &cfg, 128).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.iter().filter(|q| q.label == 1).count(), 4);
        assert!(ds.iter().all(|q| q.rows.len() == 6));
    }

    #[test]
    fn invalid_window_drops_its_pair() {
        let mut rr = synthetic_rr(8 * 120 + 10, 128, 0.04);
        // an implausible interval inside the first DEW
        rr.out_of_range[5] = true;
        let cfg = CapsuleConfig::parse_label("C6400_N6_M72").unwrap();
        let ds = build_dataset(&rr, &windows(4), &cfg, 128).unwrap();
        assert_eq!(ds.len(), 6);
        assert!(ds.iter().all(|q| q.source_window.pair != 0));
    }

    #[test]
    fn all_invalid_is_error() {
        let rr = synthetic_rr(8 * 120 + 10, 128, 0.0);
        let cfg = CapsuleConfig::parse_label("C6400_N6_M72").unwrap();
        assert!(build_dataset(&rr, &windows(4), &cfg, 128).is_err());
    }

    #[test]
    fn text_round_trip() {
        let rr = synthetic_rr(4 * 120 + 10, 128, 0.04);
        let cfg = CapsuleConfig::parse_label("C10240_N2_M50").unwrap();
        let ds = build_dataset(&rr, &windows(2), &cfg, 128).unwrap();
        let text = dataset_to_text(&ds);
        assert!(text.starts_with("format_version=1\n"));
        assert_eq!(dataset_from_text(&text, Path::new("x")).unwrap(), ds);
    }
}
