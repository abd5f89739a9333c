//! Episode scenarios: initial spacing, lead speed profile and drowsiness schedule.
//! A scenario is fully determined by its seed and the environment config, and can
//! be written to and read back from a key=value file for paired replays.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::textio;

use super::config::EnvConfig;

pub(crate) const LEAD_STREAM: u64 = 0;
pub(crate) const DROWSY_STREAM: u64 = 1;
pub(crate) const RADAR_STREAM: u64 = 2;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One piece of the lead profile: from `start_s` on, the lead tracks `target`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeadSegment {
    pub start_s: f64,
    pub target: f64,
}

/// Half-open drowsy interval `[start_s, end_s)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DrowsyInterval {
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub spacing: f64,
    /// Sorted by start; the first segment starts at 0 and also sets the lead's initial speed.
    pub lead_segments: Vec<LeadSegment>,
    pub drowsy_intervals: Vec<DrowsyInterval>,
}

impl Scenario {
    pub fn sample(cfg: &EnvConfig, seed: u64) -> Scenario {
        let mut rng = stream_rng(seed, LEAD_STREAM);
        let spacing = if cfg.spacing_max > cfg.spacing_min {
            rng.gen_range(cfg.spacing_min..=cfg.spacing_max)
        } else {
            cfg.spacing_min
        };
        let lead = &cfg.lead;
        let count = rng.gen_range(lead.min_segments..=lead.max_segments);
        let mut starts: Vec<f64> = (1..count).map(|_| rng.gen_range(0.0..cfg.horizon)).collect();
        starts.sort_by(f64::total_cmp);
        starts.insert(0, 0.0);
        let lead_segments = starts
            .into_iter()
            .map(|start_s| LeadSegment {
                start_s,
                target: if lead.max_speed > lead.min_speed {
                    rng.gen_range(lead.min_speed..=lead.max_speed)
                } else {
                    lead.min_speed
                },
            })
            .collect();

        let mut rng = stream_rng(seed, DROWSY_STREAM);
        let alert = Exp::new(1.0 / cfg.mean_alert_s).expect("positive mean");
        let drowsy = Exp::new(1.0 / cfg.mean_drowsy_s).expect("positive mean");
        let mut drowsy_intervals = Vec::new();
        let mut t = alert.sample(&mut rng);
        while t < cfg.horizon {
            let end = (t + drowsy.sample(&mut rng)).min(cfg.horizon);
            drowsy_intervals.push(DrowsyInterval { start_s: t, end_s: end });
            t = end + alert.sample(&mut rng);
        }

        Scenario {
            seed,
            spacing,
            lead_segments,
            drowsy_intervals,
        }
    }

    pub fn lead_initial_speed(&self) -> f64 {
        self.lead_segments.first().map_or(0.0, |s| s.target)
    }

    pub fn lead_target(&self, t: f64) -> f64 {
        self.lead_segments
            .iter()
            .take_while(|s| s.start_s <= t)
            .last()
            .map_or_else(|| self.lead_initial_speed(), |s| s.target)
    }

    pub fn scheduled_theta(&self, t: f64) -> u8 {
        u8::from(self.drowsy_intervals.iter().any(|iv| iv.start_s <= t && t < iv.end_s))
    }

    pub fn validate(&self, cfg: &EnvConfig) -> Result<()> {
        if !(self.spacing.is_finite() && self.spacing >= cfg.collision_distance) {
            return Err(Error::Validation(format!(
                "scenario spacing {} m below collision distance {} m",
                self.spacing, cfg.collision_distance
            )));
        }
        match self.lead_segments.first() {
            Some(s) if s.start_s == 0.0 => {}
            _ => return Err(Error::Validation("lead profile must start with a segment at 0 s".into())),
        }
        if self.lead_segments.windows(2).any(|w| w[1].start_s < w[0].start_s)
            || self.lead_segments.iter().any(|s| !(s.target >= 0.0 && s.target.is_finite()))
        {
            return Err(Error::Validation("lead segments must be sorted with non-negative targets".into()));
        }
        if self.drowsy_intervals.iter().any(|iv| !(iv.start_s < iv.end_s))
            || self.drowsy_intervals.windows(2).any(|w| w[1].start_s < w[0].end_s)
        {
            return Err(Error::Validation("drowsy intervals must be non-empty, sorted and disjoint".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "spacing_m={}", self.spacing);
        let segs: Vec<String> = self.lead_segments.iter().map(|s| format!("{}:{}", s.start_s, s.target)).collect();
        let _ = writeln!(out, "lead_segments={}", segs.join(";"));
        let ivs: Vec<String> = self
            .drowsy_intervals
            .iter()
            .map(|iv| format!("{}:{}", iv.start_s, iv.end_s))
            .collect();
        let _ = writeln!(out, "drowsy_intervals={}", ivs.join(";"));
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Scenario> {
        let mut seed = None;
        let mut spacing = None;
        let mut lead_segments = None;
        let mut drowsy_intervals = None;
        for (line, key, value) in textio::key_values(text, path)? {
            let err = |m: String| Error::parse(path, line, m);
            match key.as_str() {
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| err(format!("seed: {e}")))?),
                "spacing_m" => spacing = Some(value.parse::<f64>().map_err(|e| err(format!("spacing_m: {e}")))?),
                "lead_segments" => {
                    let pairs = parse_pairs(&value).map_err(|m| err(format!("lead_segments: {m}")))?;
                    lead_segments = Some(pairs.into_iter().map(|(start_s, target)| LeadSegment { start_s, target }).collect());
                }
                "drowsy_intervals" => {
                    let pairs = parse_pairs(&value).map_err(|m| err(format!("drowsy_intervals: {m}")))?;
                    drowsy_intervals = Some(pairs.into_iter().map(|(start_s, end_s)| DrowsyInterval { start_s, end_s }).collect());
                }
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        let missing = |k: &str| Error::parse(path, 0, format!("missing key '{k}'"));
        Ok(Scenario {
            seed: seed.ok_or_else(|| missing("seed"))?,
            spacing: spacing.ok_or_else(|| missing("spacing_m"))?,
            lead_segments: lead_segments.ok_or_else(|| missing("lead_segments"))?,
            drowsy_intervals: drowsy_intervals.unwrap_or_default(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        textio::write_atomic(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        Scenario::from_text(&textio::read_to_string(path)?, path)
    }
}

fn parse_pairs(value: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(';')
        .map(|item| {
            let (a, b) = item.split_once(':').ok_or_else(|| format!("'{item}' is not a:b"))?;
            let a = a.trim().parse::<f64>().map_err(|e| format!("'{a}': {e}"))?;
            let b = b.trim().parse::<f64>().map_err(|e| format!("'{b}': {e}"))?;
            Ok((a, b))
        })
        .collect()
}
