//! The distilled verifier: a focal-loss MLP that predicts the judge panel's
//! flawed flag from hybrid features.

mod codec;
pub mod focal;
mod metrics;
pub mod network;
mod split;
mod train;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::features::{assemble_features, split_raw, FeatureError, FeatureVector, NormStats, FEATURE_DIM};

pub use codec::{
    header_for, load, model_digest, read_model, save, write_model, Activations, ModelHeader, FORMAT_VERSION,
    MAGIC,
};
pub use focal::{focal_loss, sigmoid};
pub use metrics::EvalReport;
pub use network::{param_count_for, Gradients, Layer, Mlp};
pub use split::stratified_split;
pub use train::{train, EpochRecord, Example, TrainHistory};

/// Layer widths of the canonical verifier.
pub const CANONICAL_DIMS: [usize; 5] = [FEATURE_DIM, 512, 256, 128, 1];

#[derive(Debug, thiserror::Error)]
pub enum VerifierError {
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    InvalidRatio(f64),
    #[error("data contains a single class")]
    SingleClass,
    #[error("need at least {needed} examples per class in the {split} split")]
    TooFewExamples { split: &'static str, needed: usize },
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<FeatureError> for VerifierError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::DimensionMismatch { expected, got } => {
                VerifierError::DimensionMismatch { expected, got }
            }
            FeatureError::NonFinite(i) => {
                VerifierError::InvalidConfig(format!("non-finite feature at position {i}"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 2.0,
            alpha: 0.25,
            learning_rate: 5e-4,
            weight_decay: 0.01,
            batch_size: 64,
            max_epochs: 200,
            early_stop_patience: 10,
            val_fraction: 0.1,
            seed: 0,
            hidden: CANONICAL_DIMS[1..CANONICAL_DIMS.len() - 1].to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VerifierError> {
        let bad = |m: &str| Err(VerifierError::InvalidConfig(m.to_string()));
        if !(self.gamma >= 0.0) {
            return bad("gamma must be non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate must be positive and weight_decay non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![FEATURE_DIM];
        dims.extend_from_slice(&self.hidden);
        dims.push(1);
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    pub flagged: bool,
}

/// A trained verifier. Parameters sit on the `f32` grid so that the binary
/// format reproduces them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifierModel {
    network: Mlp,
    pub norm_stats: NormStats,
    pub decision_threshold: f64,
    pub train_config: Option<TrainConfig>,
    pub seed: Option<u64>,
}

impl VerifierModel {
    pub fn new(mut network: Mlp, norm_stats: NormStats, decision_threshold: f64) -> Result<Self, VerifierError> {
        if network.input_dim() != FEATURE_DIM {
            return Err(VerifierError::DimensionMismatch { expected: FEATURE_DIM, got: network.input_dim() });
        }
        if network.layers.last().map(Layer::fan_out) != Some(1) {
            return Err(VerifierError::InvalidConfig("output layer must have width 1".into()));
        }
        if !network.is_finite() {
            return Err(VerifierError::InvalidConfig("non-finite parameters".into()));
        }
        if !(0.0..=1.0).contains(&decision_threshold) {
            return Err(VerifierError::InvalidConfig(format!("threshold {decision_threshold}")));
        }
        network.quantize_f32();
        Ok(VerifierModel { network, norm_stats, decision_threshold, train_config: None, seed: None })
    }

    pub fn network(&self) -> &Mlp {
        &self.network
    }

    pub fn dims(&self) -> Vec<usize> {
        self.network.dims()
    }

    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    /// Flawed-class probability for an assembled feature vector.
    pub fn forward(&self, features: &FeatureVector) -> f64 {
        sigmoid(self.network.logit(ArrayView1::from(features.as_slice())))
    }

    pub fn forward_slice(&self, features: &[f64]) -> Result<f64, VerifierError> {
        if features.len() != FEATURE_DIM {
            return Err(VerifierError::DimensionMismatch { expected: FEATURE_DIM, got: features.len() });
        }
        Ok(sigmoid(self.network.logit(ArrayView1::from(features))))
    }

    /// Probabilities for a batch, in input order.
    pub fn forward_batch(&self, batch: &[FeatureVector]) -> Vec<f64> {
        if batch.is_empty() {
            return Vec::new();
        }
        let mut x = Array2::zeros((batch.len(), FEATURE_DIM));
        for (mut row, fv) in x.rows_mut().into_iter().zip(batch) {
            row.assign(&ArrayView1::from(fv.as_slice()));
        }
        self.network.probabilities(x.view()).to_vec()
    }

    /// Z-scores the structural block of an unnormalized row with this
    /// model's statistics.
    pub fn normalize_raw(&self, raw: &[f64]) -> Result<FeatureVector, VerifierError> {
        let (embedding, structural) = split_raw(raw)?;
        Ok(assemble_features(embedding, &structural, &self.norm_stats)?)
    }

    pub fn predict(&self, features: &FeatureVector, threshold: Option<f64>) -> Prediction {
        let probability = self.forward(features);
        let threshold = threshold.unwrap_or(self.decision_threshold);
        Prediction { probability, flagged: probability >= threshold }
    }

    /// Scores a labeled set at the model's decision threshold.
    pub fn evaluate(&self, test: &[Example]) -> Result<EvalReport, VerifierError> {
        let features = test
            .iter()
            .map(|e| self.normalize_raw(&e.features))
            .collect::<Result<Vec<_>, _>>()?;
        let predicted: Vec<bool> = self
            .forward_batch(&features)
            .into_iter()
            .map(|p| p >= self.decision_threshold)
            .collect();
        let actual: Vec<bool> = test.iter().map(|e| e.label).collect();
        Ok(EvalReport::from_predictions(&predicted, &actual, self.decision_threshold))
    }
}
