//! Mini-batch AdamW training with early stopping on validation macro-F1.

use ndarray::{Array2, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::metrics::EvalReport;
use super::network::{Layer, Mlp};
use super::split::stratified_split;
use super::{TrainConfig, VerifierError, VerifierModel};
use crate::features::{split_raw, NormStats, FEATURE_DIM, STRUCTURAL_DIM};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;
const DECISION_THRESHOLD: f64 = 0.5;

/// One training example: an unnormalized 391-value row and its flawed label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub stopped_early: bool,
}

struct AdamW {
    first: Vec<Layer>,
    second: Vec<Layer>,
    step: i32,
}

impl AdamW {
    fn new(net: &Mlp) -> Self {
        let zeros = || net.layers.iter().map(|l| Layer::zeros(l.fan_in(), l.fan_out())).collect();
        AdamW { first: zeros(), second: zeros(), step: 0 }
    }

    /// Adam moment update with weight decay decoupled from the gradient, as
    /// `p ← p − lr·(m̂/(√v̂ + ε) + λ·p)`, applied to weights and biases alike.
    fn apply(&mut self, net: &mut Mlp, grads: &[Layer], lr: f64, decay: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let step = (*m / c1) / ((*v / c2).sqrt() + EPSILON);
            *p -= lr * (step + decay * *p);
        };
        for (i, layer) in net.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weights)
                .and(&mut self.first[i].weights)
                .and(&mut self.second[i].weights)
                .and(&grads[i].weights)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&mut self.first[i].bias)
                .and(&mut self.second[i].bias)
                .and(&grads[i].bias)
                .for_each(update);
        }
    }
}

fn design_matrix(rows: &[&Example], norm: &NormStats) -> Result<Array2<f64>, VerifierError> {
    let mut x = Array2::zeros((rows.len(), FEATURE_DIM));
    for (mut out, ex) in x.rows_mut().into_iter().zip(rows) {
        let (embedding, structural) = split_raw(&ex.features)?;
        let z = norm.apply(&structural.to_array());
        out.iter_mut()
            .zip(embedding.iter().chain(z.iter()))
            .for_each(|(o, v)| *o = *v);
    }
    Ok(x)
}

fn macro_f1(net: &Mlp, x: &Array2<f64>, labels: &[bool]) -> f64 {
    let predicted: Vec<bool> = net
        .probabilities(x.view())
        .iter()
        .map(|&p| p >= DECISION_THRESHOLD)
        .collect();
    EvalReport::from_predictions(&predicted, labels, DECISION_THRESHOLD).macro_f1
}

/// Trains a verifier on unnormalized examples.
///
/// A stratified `val_fraction` slice is held out for early stopping. Norm
/// statistics come from the remaining training rows. The returned model
/// carries the parameters of the epoch with the best validation macro-F1.
pub fn train(data: &[Example], config: &TrainConfig) -> Result<(VerifierModel, TrainHistory), VerifierError> {
    config.validate()?;
    if let Some(bad) = data.iter().find(|e| e.features.len() != FEATURE_DIM) {
        return Err(VerifierError::DimensionMismatch { expected: FEATURE_DIM, got: bad.features.len() });
    }
    let labels: Vec<bool> = data.iter().map(|e| e.label).collect();
    let (train_idx, val_idx) = stratified_split(&labels, 1.0 - config.val_fraction, config.seed)?;
    for (name, idx) in [("train", &train_idx), ("validation", &val_idx)] {
        let pos = idx.iter().filter(|&&i| labels[i]).count();
        if pos < 2 || idx.len() - pos < 2 {
            return Err(VerifierError::TooFewExamples { split: name, needed: 2 });
        }
    }

    let train_rows: Vec<&Example> = train_idx.iter().map(|&i| &data[i]).collect();
    let val_rows: Vec<&Example> = val_idx.iter().map(|&i| &data[i]).collect();
    let structural: Vec<[f64; STRUCTURAL_DIM]> = train_rows
        .iter()
        .map(|e| Ok(split_raw(&e.features)?.1.to_array()))
        .collect::<Result<_, VerifierError>>()?;
    let norm = NormStats::fit(&structural);
    let x_train = design_matrix(&train_rows, &norm)?;
    let y_train: Vec<bool> = train_rows.iter().map(|e| e.label).collect();
    let x_val = design_matrix(&val_rows, &norm)?;
    let y_val: Vec<bool> = val_rows.iter().map(|e| e.label).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Mlp::he_uniform(&config.dims(), &mut rng);
    let mut optimizer = AdamW::new(&net);

    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: 0, best_val_macro_f1: f64::NEG_INFINITY, stopped_early: false };
    let mut best = net.clone();
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = x_train.select(ndarray::Axis(0), chunk);
            let yb: Vec<bool> = chunk.iter().map(|&i| y_train[i]).collect();
            let (loss, grads) = net.loss_and_gradients(xb.view(), &yb, config.gamma, config.alpha);
            if !loss.is_finite() {
                return Err(VerifierError::NonFiniteLoss { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            optimizer.apply(&mut net, &grads.layers, config.learning_rate, config.weight_decay);
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_f1 = macro_f1(&net, &x_val, &y_val);
        debug!(epoch, train_loss, val_f1, "epoch finished");
        history.epochs.push(EpochRecord { epoch, train_loss, val_macro_f1: val_f1 });

        if val_f1 > history.best_val_macro_f1 {
            history.best_val_macro_f1 = val_f1;
            history.best_epoch = epoch;
            best = net.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                history.stopped_early = true;
                break;
            }
        }
    }

    let mut model = VerifierModel::new(best, norm, DECISION_THRESHOLD)?;
    model.train_config = Some(config.clone());
    model.seed = Some(config.seed);
    Ok((model, history))
}
