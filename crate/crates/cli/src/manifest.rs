//! Run record written next to every artifact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, PipelineConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Arguments as given, after the program name.
    pub args: Vec<String>,
    pub config: BTreeMap<&'static str, String>,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Vec<InputDigest>,
    pub stages: Vec<StageTiming>,
    /// Stage-specific counters such as rule or candidate counts.
    pub counts: BTreeMap<String, u64>,
}

pub fn digest_file(path: &Path) -> io::Result<InputDigest> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok(InputDigest { path: path.to_owned(), bytes, sha256: hex(&hasher.finalize()) })
}

impl Manifest {
    pub fn new(command: &str, config: &PipelineConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            args: std::env::args().skip(1).collect(),
            config: config.entries(),
            config_hash: config.hash(),
            seed: config.seed,
            threads: config.threads,
            inputs: Vec::new(),
            stages: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    /// Digests every regular file; directories are digested file by file in
    /// name order.
    pub fn add_input(&mut self, path: &Path) -> io::Result<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
                .map(|e| e.map(|e| e.path()))
                .collect::<io::Result<_>>()?;
            entries.sort();
            for entry in entries.iter().filter(|p| p.is_file()) {
                self.inputs.push(digest_file(entry)?);
            }
            Ok(())
        } else {
            self.inputs.push(digest_file(path)?);
            Ok(())
        }
    }

    pub fn count(&mut self, key: &str, value: usize) {
        self.counts.insert(key.to_owned(), value as u64);
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTiming { stage: stage.to_owned(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self).map_err(io::Error::from)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)
    }
}
