//! Run directories: a manifest written up front, then atomically written artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hrvbrake_core::textio;
use hrvbrake_core::{Error, Result};
use sha1::{Digest, Sha1};

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Git blob id of `bytes`.
pub fn git_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().fold(String::with_capacity(40), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(git_hash(&bytes))
}

pub struct RunDirectory {
    root: PathBuf,
    command: String,
    seed: u64,
    config: String,
    inputs: Vec<(String, String)>,
    artifacts: Vec<(String, String)>,
}

impl RunDirectory {
    /// Creates `root`. A directory that already holds a manifest is refused.
    pub fn create(root: &Path, command: &str, seed: u64, config_snapshot: String) -> Result<Self> {
        if root.join(MANIFEST_FILE).exists() {
            return Err(Error::Io {
                path: root.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::AlreadyExists, "run directory already holds a manifest"),
            });
        }
        fs::create_dir_all(root).map_err(|e| Error::Io {
            path: root.to_path_buf(),
            source: e,
        })?;
        Ok(RunDirectory {
            root: root.to_path_buf(),
            command: command.into(),
            seed,
            config: config_snapshot,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Records an input file by content hash.
    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let hash = hash_file(path)?;
        self.inputs.push((role.into(), format!("{hash} {}", path.display())));
        Ok(())
    }

    /// Records a generated input by a description instead of a file.
    pub fn add_input_note(&mut self, role: &str, note: &str) {
        self.inputs.push((role.into(), note.into()));
    }

    fn manifest(&self, status: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command={}", self.command);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "status={status}");
        for (role, v) in &self.inputs {
            let _ = writeln!(s, "input.{role}={v}");
        }
        for line in self.config.lines() {
            let _ = writeln!(s, "config.{line}");
        }
        for (i, (rel, hash)) in self.artifacts.iter().enumerate() {
            let _ = writeln!(s, "artifact.{i}={hash} {rel}");
        }
        s
    }

    pub fn write_manifest(&self) -> Result<()> {
        textio::write_atomic(&self.root.join(MANIFEST_FILE), &self.manifest("running"))
    }

    pub fn finish(&self) -> Result<()> {
        textio::write_atomic(&self.root.join(MANIFEST_FILE), &self.manifest("complete"))
    }

    /// Writes `contents` to `rel` under the run directory.
    pub fn write(&mut self, rel: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
        textio::write_atomic(&path, contents)?;
        self.artifacts.push((rel.into(), git_hash(contents.as_bytes())));
        Ok(path)
    }

    /// Records files some other writer already placed under `rel`.
    pub fn record_dir(&mut self, rel: &str) -> Result<()> {
        let dir = self.root.join(rel);
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for n in names {
            let p = dir.join(&n);
            if p.is_file() {
                self.artifacts.push((format!("{rel}/{n}"), hash_file(&p)?));
            }
        }
        Ok(())
    }
}

/// Manifest lines of an existing run as `(key, value)` pairs.
pub fn read_manifest(run: &Path) -> Result<Vec<(String, String)>> {
    let path = run.join(MANIFEST_FILE);
    let text = textio::read_to_string(&path)?;
    Ok(textio::key_values(&text, &path)?.into_iter().map(|(_, k, v)| (k, v)).collect())
}

pub fn manifest_value<'a>(manifest: &'a [(String, String)], key: &str) -> Option<&'a str> {
    manifest.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn git_blob_ids() {
        assert_eq!(git_hash(b""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
        assert_eq!(git_hash(b"hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
    }

    #[test]
    fn manifest_precedes_results_and_lists_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("run");
        let mut run = RunDirectory::create(&root, "demo", 3, "a=1\n".into()).unwrap();
        run.write_manifest().unwrap();
        let m = read_manifest(&root).unwrap();
        assert_eq!(manifest_value(&m, "status"), Some("running"));
        assert_eq!(manifest_value(&m, "config.a"), Some("1"));
        run.write("out/x.csv", "hello\n").unwrap();
        run.finish().unwrap();
        let m = read_manifest(&root).unwrap();
        assert_eq!(manifest_value(&m, "status"), Some("complete"));
        assert_eq!(manifest_value(&m, "artifact.0"), Some("ce013625030ba8dba906f756967f9e9ca394464a out/x.csv"));
        assert!(RunDirectory::create(&root, "demo", 3, String::new()).is_err());
    }
}
