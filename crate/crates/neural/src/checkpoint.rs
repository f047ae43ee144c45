//! NNCK v1 checkpoints: `model.json` describing the network plus
//! `weights.f32le`, the parameters concatenated in layer order as
//! little-endian `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adam::AdamConfig;
use crate::error::{Error, Result};
use crate::layer::LayerSpec;
use crate::network::Network;
use crate::tensor::Tensor;

pub const FORMAT: &str = "NNCK";
pub const VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub param_shapes: Vec<Vec<usize>>,
    pub parameter_count: usize,
    pub optimizer: Option<AdamConfig>,
    pub seed: u64,
    pub step_count: u64,
    pub weights_sha256: String,
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub fn weights_bytes(net: &Network<f32>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(net.parameter_count() * 4);
    for p in net.params() {
        for v in p.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn save(
    dir: &Path,
    net: &Network<f32>,
    optimizer: Option<AdamConfig>,
    step_count: u64,
    extra: serde_json::Value,
) -> Result<CheckpointMeta> {
    fs::create_dir_all(dir)?;
    let bytes = weights_bytes(net);
    let meta = CheckpointMeta {
        format: FORMAT.into(),
        version: VERSION,
        input_shape: net.input_shape().to_vec(),
        layers: net.layers().to_vec(),
        param_shapes: net.params().iter().map(|p| p.shape().to_vec()).collect(),
        parameter_count: net.parameter_count(),
        optimizer,
        seed: net.seed(),
        step_count,
        weights_sha256: hex::encode(Sha256::digest(&bytes)),
        extra,
    };
    fs::write(dir.join(WEIGHTS_FILE), &bytes)?;
    fs::write(dir.join(MODEL_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

pub fn load(dir: &Path) -> Result<(Network<f32>, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(dir.join(MODEL_FILE))?)?;
    if meta.format != FORMAT || meta.version != VERSION {
        return Err(Error::UnsupportedVersion(format!("{} v{}", meta.format, meta.version)));
    }
    let bytes = fs::read(dir.join(WEIGHTS_FILE))?;
    if hex::encode(Sha256::digest(&bytes)) != meta.weights_sha256 {
        return Err(Error::CorruptData("weights checksum mismatch".into()));
    }
    let mut net = Network::<f32>::new(&meta.input_shape, meta.layers.clone(), meta.seed)?;
    let expected: usize = net.parameter_count();
    if bytes.len() != expected * 4 {
        return Err(Error::CorruptData(format!(
            "expected {} weight bytes, found {}",
            expected * 4,
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let params = net
        .params()
        .iter()
        .map(|p| Tensor::from_vec(p.shape(), values.by_ref().take(p.len()).collect()))
        .collect::<Result<Vec<_>>>()?;
    net.set_params(params)?;
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net() -> Network<f32> {
        Network::new(
            &[5],
            vec![
                LayerSpec::Dense { input: 5, output: 8 },
                LayerSpec::LeakyReLU { alpha: 0.2 },
                LayerSpec::Dense { input: 8, output: 1 },
                LayerSpec::Sigmoid,
            ],
            77,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let net = small_net();
        save(dir.path(), &net, Some(AdamConfig::default()), 12, serde_json::json!({"k": 1})).unwrap();
        let (back, meta) = load(dir.path()).unwrap();
        assert_eq!(weights_bytes(&back), weights_bytes(&net));
        assert_eq!(meta.step_count, 12);
        assert_eq!(meta.extra["k"], 1);
        assert_eq!(back.layers(), net.layers());
    }

    #[test]
    fn truncated_weights_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &small_net(), None, 0, serde_json::Value::Null).unwrap();
        let path = dir.path().join(WEIGHTS_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::CorruptData(_))));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &small_net(), None, 0, serde_json::Value::Null).unwrap();
        let path = dir.path().join(MODEL_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 2");
        fs::write(&path, text).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::UnsupportedVersion(_))));
    }
}
