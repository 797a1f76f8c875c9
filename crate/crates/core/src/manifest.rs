//! Reproducibility record written next to every output set.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl OutputDigest {
    pub fn of(path: &Path) -> io::Result<Self> {
        let data = fs::read(path)?;
        Ok(OutputDigest {
            path: path.to_path_buf(),
            bytes: data.len() as u64,
            sha256: sha256_hex(&data),
        })
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputDigest>,
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value, seed: Option<u64>, started: DateTime<Utc>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            config,
            seed,
            started_at: timestamp(started),
            finished_at: timestamp(started),
            outputs: Vec::new(),
        }
    }

    /// Digests `paths` as they are on disk now and stamps the finish time.
    pub fn finish(mut self, paths: &[PathBuf]) -> io::Result<Self> {
        self.outputs = paths.iter().map(|p| OutputDigest::of(p)).collect::<io::Result<_>>()?;
        self.finished_at = timestamp(Utc::now());
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(path, json + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_match_file_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        fs::write(&path, "abc").unwrap();
        let m = RunManifest::new("allocate", serde_json::json!({}), None, Utc::now())
            .finish(std::slice::from_ref(&path))
            .unwrap();
        assert_eq!(m.outputs[0].bytes, 3);
        assert_eq!(
            m.outputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        m.write(&dir.path().join("manifest.json")).unwrap();
    }
}
