use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::Seed;

pub const TOOL_NAME: &str = "corrlab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where an artifact came from: tool version, hash of the configuration
/// that produced it, and the master seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: Seed,
}

impl Provenance {
    pub fn new(config_sha256: impl Into<String>, seed: Seed) -> Self {
        Provenance {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            config_sha256: config_sha256.into(),
            seed,
        }
    }

    /// Provenance for a configuration value, hashed through its canonical JSON.
    pub fn for_config<T: Serialize>(config: &T, seed: Seed) -> Self {
        Self::new(config_hash(config), seed)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the compact JSON encoding (struct fields serialize in
/// declaration order, so the encoding is stable).
pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("configuration serializes"))
}
