//! Report files and the run manifest.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

/// Files produced by one experiment, held in memory until the run succeeds.
#[derive(Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    /// Failed property checks; the run exits with status 4 when non-empty.
    pub violations: Vec<String>,
}

impl Outputs {
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.files.push((name.into(), bytes));
        Ok(())
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<(), Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(|e| Failure::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
        self.files.push((name.into(), bytes));
        Ok(())
    }

    pub fn svg(&mut self, name: &str, body: String) {
        self.files.push((name.into(), body.into_bytes()));
    }

    pub fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(what());
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Serialize)]
struct FileEntry<'a> {
    name: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    experiment: &'a str,
    config_sha256: String,
    seed: Option<u64>,
    files: Vec<FileEntry<'a>>,
    violations: &'a [String],
}

/// Write every file and the manifest into `dir`.
pub fn write_all(dir: &Path, experiment: &str, config: &[u8], seed: Option<u64>, out: &Outputs) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for (name, bytes) in &out.files {
        fs::write(dir.join(name), bytes).map_err(io)?;
    }
    let manifest = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment,
        config_sha256: sha256_hex(config),
        seed,
        files: out
            .files
            .iter()
            .map(|(name, bytes)| FileEntry {
                name,
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            })
            .collect(),
        violations: &out.violations,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Failure::Io(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(dir.join(MANIFEST), bytes).map_err(io)
}
