//! Small helpers shared by the plain-text file formats.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(contents.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Parses `key=value` lines, skipping blanks and `#` comments. Returns
/// `(line_number, key, value)` triples in file order.
pub fn key_values(text: &str, path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i + 1, format!("expected key=value, got {line:?}")))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Formats a float for CSV output. Fixed precision keeps files byte-stable.
pub fn fmt_f64(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        return "0.000000".to_string();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_skip_comments() {
        let kv = key_values("# header\na=1\n\n b = two # trailing\n", Path::new("x")).unwrap();
        assert_eq!(kv, vec![(2, "a".into(), "1".into()), (4, "b".into(), "two".into())]);
        let err = key_values("a=1\nnonsense\n", Path::new("cfg.txt")).unwrap_err();
        assert!(err.to_string().contains("cfg.txt:2"));
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, "a\n").unwrap();
        write_atomic(&p, "b\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "b\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn negative_zero_is_normalised() {
        assert_eq!(fmt_f64(-0.0), "0.000000");
        assert_eq!(fmt_f64(-1e-9), "0.000000");
    }
}
