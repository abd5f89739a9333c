use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textio;

/// Per-feature z-scoring; zero-variance features are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `false` for dropped features.
    pub keep: Vec<bool>,
}

impl Standardizer {
    /// Population statistics of each column of `rows`.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Validation("cannot fit a standardizer on zero rows".into()));
        };
        let f = first.len();
        if rows.iter().any(|r| r.len() != f) {
            return Err(Error::Shape("rows of unequal length".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; f];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let keep = std
            .iter()
            .zip(&mean)
            .map(|(s, m)| *s > 1e-12 * (1.0 + m.abs()))
            .collect();
        Ok(Standardizer { mean, std, keep })
    }

    pub fn input_features(&self) -> usize {
        self.mean.len()
    }

    pub fn output_features(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .zip(&self.keep)
            .filter(|(_, &k)| k)
            .map(|(((x, m), s), _)| (x - m) / s)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("format_version=1\n");
        for ((m, sd), k) in self.mean.iter().zip(&self.std).zip(&self.keep) {
            let _ = writeln!(s, "{m:e},{sd:e},{}", u8::from(*k));
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "format_version=1")) => {}
            _ => return Err(Error::parse(path, 1, "expected format_version=1")),
        }
        let mut out = Standardizer {
            mean: Vec::new(),
            std: Vec::new(),
            keep: Vec::new(),
        };
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(Error::parse(path, i + 1, "expected mean,std,keep"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(path, i + 1, format!("{s:?}: {e}")));
            out.mean.push(num(f[0])?);
            out.std.push(num(f[1])?);
            out.keep.push(match f[2] {
                "1" => true,
                "0" => false,
                other => return Err(Error::parse(path, i + 1, format!("keep flag {other:?}"))),
            });
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        textio::write_atomic(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Standardizer::from_text(&textio::read_to_string(path)?, path)
    }
}
