use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    /// Path relative to the output directory.
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Collects files written into one output directory together with their checksums.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    records: Vec<OutputRecord>,
}

impl OutputSet {
    pub fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            records: Vec::new(),
        }
    }

    /// Renders `body` into memory, writes it to `dir/name` and records its SHA-256.
    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        std::fs::write(self.dir.join(name), &buf)?;
        let digest = Sha256::digest(&buf);
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.records.push(OutputRecord {
            file: name.to_string(),
            bytes: buf.len(),
            sha256,
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn records(&self) -> &[OutputRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<OutputRecord> {
        self.records
    }
}
