//! Writing artifacts with provenance.

use std::fs;
use std::path::Path;

use corrlab::corpus::LabeledCorpus;
use corrlab::provenance::{sha256_hex, Provenance};
use corrlab::Result;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// JSON report with its provenance header first.
#[derive(Debug, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub provenance: &'a Provenance,
    #[serde(flatten)]
    pub body: T,
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_report<T: Serialize>(path: &Path, provenance: &Provenance, body: T) -> Result<()> {
    write_json(path, &Report { provenance, body })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Reads a JSON config; any schema problem is a configuration error.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| corrlab::Error::Config(format!("{}: {e}", path.display())))
}

/// SHA-256 of a corpus's matrices in item order, in the payload layout.
pub fn corpus_digest(corpus: &LabeledCorpus) -> String {
    let mut bytes = Vec::with_capacity(corpus.len() * corpus.dim * corpus.dim * 8);
    for item in &corpus.items {
        bytes.extend(item.matrix.as_symmetric().to_le_bytes());
    }
    sha256_hex(&bytes)
}
