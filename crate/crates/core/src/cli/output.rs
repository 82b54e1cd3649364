use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Object id of `bytes` as git computes it in its SHA-256 object format.
pub(crate) fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files written by one command, with their content hashes.
pub(crate) struct Outputs {
    dir: Option<PathBuf>,
    hashes: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Summary<'a, R> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    outputs: &'a BTreeMap<String, String>,
    report: &'a R,
}

impl Outputs {
    pub(crate) fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), hashes: BTreeMap::new() })
    }

    pub(crate) fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        fs::write(dir.join(name), &bytes)?;
        self.hashes.insert(name.to_string(), content_hash(&bytes));
        Ok(())
    }

    pub(crate) fn write_summary<R: Serialize>(
        &mut self,
        dir: &Path,
        command: &str,
        config: &[u8],
        seed: u64,
        report: &R,
    ) -> Result<()> {
        let summary = Summary { command, config_sha256: sha256(config), seed, outputs: &self.hashes, report };
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        fs::write(dir.join("summary.json"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_git_blob_id_format() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            content_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }
}
