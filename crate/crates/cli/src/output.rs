use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crysplas::io::write_file;
use crysplas::Result;

/// Collects artifacts written to the output directory and their hashes.
pub struct Outputs {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize, A: Serialize> {
    toolkit_version: &'static str,
    format_version: &'static str,
    command: &'a A,
    config: &'a C,
    seed: u64,
    artifacts: &'a BTreeMap<String, String>,
}

pub fn json_bytes<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), hashes: BTreeMap::new() }
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_file(&self.dir.join(name), bytes)?;
        self.hashes.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        self.bytes(name, &json_bytes(value)?)
    }

    /// Writes through a buffer so the hash covers exactly what is on disk.
    pub fn with<F: FnOnce(&mut Vec<u8>) -> Result<()>>(&mut self, name: &str, f: F) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.bytes(name, &buf)
    }

    pub fn manifest<C: Serialize, A: Serialize>(&self, command: &A, config: &C, seed: u64) -> Result<()> {
        let m = Manifest {
            toolkit_version: env!("CARGO_PKG_VERSION"),
            format_version: crysplas::FORMAT_VERSION,
            command,
            config,
            seed,
            artifacts: &self.hashes,
        };
        write_file(&self.dir.join("manifest.json"), &json_bytes(&m)?)
    }
}
