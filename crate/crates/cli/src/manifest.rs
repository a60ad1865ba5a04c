//! Run manifest: config fingerprint, seed and per-output checksums, so two
//! runs with identical config and seed can be compared file by file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub struct Manifest {
    verb: String,
    config_sha256: String,
    seed: u64,
    outputs: Vec<(String, String, usize)>,
    started: std::time::Instant,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

impl Manifest {
    pub fn new(verb: &str, config_text: &str, seed: u64) -> Self {
        Self {
            verb: verb.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            outputs: Vec::new(),
            started: std::time::Instant::now(),
        }
    }

    /// Write one output file atomically (temp + rename) and record its
    /// checksum.
    pub fn write_output(&mut self, dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let path = dir.join(name);
        let tmp = dir.join(format!(".tmp-{name}"));
        std::fs::write(&tmp, contents)
            .with_context(|| format!("cannot write {}", tmp.display()))?;
        std::fs::rename(&tmp, &path)
            .with_context(|| format!("cannot move output into place at {}", path.display()))?;
        self.outputs.push((name.to_string(), sha256_hex(contents.as_bytes()), contents.len()));
        Ok(path)
    }

    /// Write the manifest itself (last, after all outputs).
    pub fn finish(self, dir: &Path) -> Result<PathBuf> {
        let mut out = String::new();
        let _ = writeln!(out, "# run manifest");
        let _ = writeln!(out, "verb = {}", self.verb);
        let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "config_sha256 = {}", self.config_sha256);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "elapsed_ms = {}", self.started.elapsed().as_millis());
        let _ = writeln!(out, "[outputs]");
        let _ = writeln!(out, "name\tsha256\tbytes");
        for (name, sha, bytes) in &self.outputs {
            let _ = writeln!(out, "{name}\t{sha}\t{bytes}");
        }
        let path = dir.join("run_manifest.txt");
        let tmp = dir.join(".tmp-run_manifest.txt");
        std::fs::write(&tmp, &out)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }
}
