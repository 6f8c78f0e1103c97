//! Hybrid feature vectors for the distilled verifier: a 384-dim text
//! embedding followed by seven structural metrics.

use std::hash::Hasher;
use std::sync::LazyLock;

use fnv::FnvHasher;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::trace::ReasoningTrace;

pub const EMBEDDING_DIM: usize = 384;
pub const STRUCTURAL_DIM: usize = 7;
pub const FEATURE_DIM: usize = EMBEDDING_DIM + STRUCTURAL_DIM;

pub const STRUCTURAL_NAMES: [&str; STRUCTURAL_DIM] = [
    "step_count",
    "total_chars",
    "mean_step_chars",
    "std_step_chars",
    "numeric_token_count",
    "arithmetic_symbol_count",
    "has_final_answer",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite feature value at position {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuralFeatures {
    pub step_count: f64,
    pub total_chars: f64,
    pub mean_step_chars: f64,
    pub std_step_chars: f64,
    pub numeric_token_count: f64,
    pub arithmetic_symbol_count: f64,
    pub has_final_answer: f64,
}

impl StructuralFeatures {
    pub fn to_array(&self) -> [f64; STRUCTURAL_DIM] {
        [
            self.step_count,
            self.total_chars,
            self.mean_step_chars,
            self.std_step_chars,
            self.numeric_token_count,
            self.arithmetic_symbol_count,
            self.has_final_answer,
        ]
    }

    pub fn from_array(a: [f64; STRUCTURAL_DIM]) -> Self {
        StructuralFeatures {
            step_count: a[0],
            total_chars: a[1],
            mean_step_chars: a[2],
            std_step_chars: a[3],
            numeric_token_count: a[4],
            arithmetic_symbol_count: a[5],
            has_final_answer: a[6],
        }
    }
}

static NUMERIC_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:[.,]\d+)*").unwrap());

fn is_arithmetic_symbol(c: char) -> bool {
    matches!(c, '+' | '-' | '\u{2212}' | '*' | '\u{00d7}' | '/' | '=' | '%')
}

/// Structural metrics computed over the parsed step texts. Character counts
/// are Unicode scalar values; the standard deviation is the population one.
pub fn structural_features(trace: &ReasoningTrace) -> StructuralFeatures {
    let lengths: Vec<f64> = trace.steps.iter().map(|s| s.text.chars().count() as f64).collect();
    let n = lengths.len() as f64;
    let total: f64 = lengths.iter().sum();
    let mean = if lengths.is_empty() { 0.0 } else { total / n };
    let std = if lengths.len() <= 1 {
        0.0
    } else {
        (lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt()
    };
    let (numeric, symbols) = trace.steps.iter().fold((0usize, 0usize), |(num, sym), s| {
        (
            num + NUMERIC_TOKEN.find_iter(&s.text).count(),
            sym + s.text.chars().filter(|&c| is_arithmetic_symbol(c)).count(),
        )
    });
    StructuralFeatures {
        step_count: n,
        total_chars: total,
        mean_step_chars: mean,
        std_step_chars: std,
        numeric_token_count: numeric as f64,
        arithmetic_symbol_count: symbols as f64,
        has_final_answer: if trace.final_answer.is_some() { 1.0 } else { 0.0 },
    }
}

/// Lowercased alphanumeric tokens; everything else separates.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// 64-bit FNV-1a of the token's UTF-8 bytes.
pub fn token_hash(token: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    h.finish()
}

/// Deterministic stand-in for a sentence encoder: signed feature hashing of
/// tokens into 384 bins (bin = hash mod 384, negative when bit 63 is set),
/// then L2 normalization. Inputs without tokens, or whose signed counts
/// cancel exactly, map to the zero vector.
pub fn fallback_embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBEDDING_DIM];
    for token in tokenize(text) {
        let h = token_hash(&token);
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[(h % EMBEDDING_DIM as u64) as usize] += sign;
    }
    l2_normalize(&mut v);
    v
}

/// Scales a vector to unit L2 norm in place; zero vectors are left alone.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Per-dimension z-scoring statistics for the structural block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; STRUCTURAL_DIM],
    pub std: [f64; STRUCTURAL_DIM],
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats { mean: [0.0; STRUCTURAL_DIM], std: [1.0; STRUCTURAL_DIM] }
    }
}

impl NormStats {
    /// Population mean and standard deviation per dimension. Zero-variance
    /// dimensions get `std = 1`.
    pub fn fit(rows: &[[f64; STRUCTURAL_DIM]]) -> Self {
        if rows.is_empty() {
            return NormStats::default();
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; STRUCTURAL_DIM];
        let mut std = [0.0; STRUCTURAL_DIM];
        for j in 0..STRUCTURAL_DIM {
            mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        NormStats { mean, std }
    }

    pub fn apply(&self, raw: &[f64; STRUCTURAL_DIM]) -> [f64; STRUCTURAL_DIM] {
        std::array::from_fn(|j| (raw[j] - self.mean[j]) / self.std[j])
    }
}

/// A 391-value model input: embedding (unchanged) then z-scored structural
/// metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.len() != FEATURE_DIM {
            return Err(FeatureError::DimensionMismatch { expected: FEATURE_DIM, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite(i));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn assemble_features(
    embedding: &[f64],
    structural: &StructuralFeatures,
    norm: &NormStats,
) -> Result<FeatureVector, FeatureError> {
    if embedding.len() != EMBEDDING_DIM {
        return Err(FeatureError::DimensionMismatch { expected: EMBEDDING_DIM, got: embedding.len() });
    }
    let mut values = Vec::with_capacity(FEATURE_DIM);
    values.extend_from_slice(embedding);
    values.extend_from_slice(&norm.apply(&structural.to_array()));
    FeatureVector::new(values)
}

/// Splits an unnormalized 391-value row (as stored in feature dumps) into its
/// embedding and structural parts.
pub fn split_raw(raw: &[f64]) -> Result<(&[f64], StructuralFeatures), FeatureError> {
    if raw.len() != FEATURE_DIM {
        return Err(FeatureError::DimensionMismatch { expected: FEATURE_DIM, got: raw.len() });
    }
    let (emb, structural) = raw.split_at(EMBEDDING_DIM);
    Ok((emb, StructuralFeatures::from_array(structural.try_into().unwrap())))
}

/// Concatenates an embedding with unnormalized structural metrics.
pub fn raw_row(embedding: &[f64], structural: &StructuralFeatures) -> Vec<f64> {
    let mut row = Vec::with_capacity(FEATURE_DIM);
    row.extend_from_slice(embedding);
    row.extend_from_slice(&structural.to_array());
    row
}

/// One line of a feature dump. `features` holds the embedding followed by
/// the unnormalized structural metrics; the model applies its own z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub record_id: String,
    pub features: Vec<f64>,
    pub label: u8,
}
