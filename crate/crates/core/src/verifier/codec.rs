//! Binary model format.
//!
//! ```text
//! "RISV" | version: u16 LE | header_len: u32 LE | header: JSON | params: f32 LE
//! ```
//!
//! Parameters are layer-major; within a layer the `fan_out × fan_in` weight
//! matrix comes row by row, followed by the bias.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{param_count_for, Layer, Mlp};
use super::{TrainConfig, VerifierError, VerifierModel};
use crate::features::NormStats;

pub const MAGIC: &[u8; 4] = b"RISV";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activations {
    pub hidden: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub dims: Vec<usize>,
    pub activation: Activations,
    pub threshold: f64,
    pub norm_stats: NormStats,
    pub train_config: Option<TrainConfig>,
    pub param_count: usize,
    pub seed: Option<u64>,
    /// SHA-256 (hex) of the parameter payload.
    pub param_digest: String,
    /// Digest of the run manifest that produced the model, when known.
    #[serde(default)]
    pub manifest_digest: Option<String>,
}

fn payload(net: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(net.param_count() * 4);
    for layer in &net.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest identifying a model's parameters; matches `param_digest` in the
/// file header.
pub fn model_digest(model: &VerifierModel) -> String {
    hex_digest(&payload(model.network()))
}

pub fn header_for(model: &VerifierModel, manifest_digest: Option<String>) -> ModelHeader {
    ModelHeader {
        dims: model.dims(),
        activation: Activations { hidden: "relu".into(), output: "sigmoid".into() },
        threshold: model.decision_threshold,
        norm_stats: model.norm_stats.clone(),
        train_config: model.train_config.clone(),
        param_count: model.param_count(),
        seed: model.seed,
        param_digest: model_digest(model),
        manifest_digest,
    }
}

pub fn write_model<W: Write>(
    mut w: W,
    model: &VerifierModel,
    manifest_digest: Option<String>,
) -> Result<(), VerifierError> {
    let header = serde_json::to_vec(&header_for(model, manifest_digest)).map_err(std::io::Error::from)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&payload(model.network()))?;
    w.flush()?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> VerifierError {
    VerifierError::CorruptModel(msg.into())
}

/// Decodes a model file image, returning the model and its header.
pub fn read_model(bytes: &[u8]) -> Result<(VerifierModel, ModelHeader), VerifierError> {
    if bytes.len() < 10 || &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(VerifierError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let header_end = 10usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| corrupt("header extends past end of file"))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[10..header_end])
        .map_err(|e| corrupt(format!("header: {e}")))?;

    if header.dims.len() < 2 || header.dims.contains(&0) {
        return Err(corrupt("invalid layer dims"));
    }
    let expected = param_count_for(&header.dims);
    if header.param_count != expected {
        return Err(corrupt(format!("header param_count {} but dims imply {expected}", header.param_count)));
    }
    let params = &bytes[header_end..];
    if params.len() != expected * 4 {
        return Err(corrupt(format!("payload holds {} bytes, expected {}", params.len(), expected * 4)));
    }
    if hex_digest(params) != header.param_digest {
        return Err(corrupt("parameter digest mismatch"));
    }

    let mut values = params
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let layers = header
        .dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = Array2::from_shape_vec((fan_out, fan_in), values.by_ref().take(fan_in * fan_out).collect())
                .expect("payload length checked");
            let bias = Array1::from_iter(values.by_ref().take(fan_out));
            Layer { weights, bias }
        })
        .collect();
    let mut model = VerifierModel::new(Mlp { layers }, header.norm_stats.clone(), header.threshold)
        .map_err(|e| corrupt(e.to_string()))?;
    model.train_config = header.train_config.clone();
    model.seed = header.seed;
    Ok((model, header))
}

pub fn save(path: impl AsRef<Path>, model: &VerifierModel, manifest_digest: Option<String>) -> Result<(), VerifierError> {
    let mut buf = Vec::new();
    write_model(&mut buf, model, manifest_digest)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(VerifierModel, ModelHeader), VerifierError> {
    read_model(&fs::read(path)?)
}
