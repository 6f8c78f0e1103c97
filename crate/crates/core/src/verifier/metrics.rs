//! Confusion-matrix metrics with "flawed" as the positive class.

use serde::{Deserialize, Serialize};
use tracing::warn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub threshold: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    pub precision_flawed: f64,
    pub recall_flawed: f64,
    pub f1_flawed: f64,
    pub precision_clean: f64,
    pub recall_clean: f64,
    pub f1_clean: f64,
    pub macro_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

/// F1 as `2TP / (2TP + FP + FN)`; an empty class (no predictions and no
/// members) scores 0.
fn f1(tp: usize, fp: usize, fn_: usize, class: &str) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        warn!(class, "F1 undefined: no predictions and no members; using 0");
        return 0.0;
    }
    (2 * tp) as f64 / den as f64
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize, threshold: f64) -> Self {
        let f1_flawed = f1(tp, fp, fn_, "flawed");
        let f1_clean = f1(tn, fn_, fp, "clean");
        EvalReport {
            n: tp + fp + fn_ + tn,
            threshold,
            true_positive: tp,
            false_positive: fp,
            false_negative: fn_,
            true_negative: tn,
            precision_flawed: ratio(tp, tp + fp),
            recall_flawed: ratio(tp, tp + fn_),
            f1_flawed,
            precision_clean: ratio(tn, tn + fn_),
            recall_clean: ratio(tn, tn + fp),
            f1_clean,
            macro_f1: (f1_flawed + f1_clean) / 2.0,
        }
    }

    pub fn from_predictions(predicted: &[bool], actual: &[bool], threshold: f64) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        EvalReport::from_counts(tp, fp, fn_, tn, threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_confusion_fixture() {
        let r = EvalReport::from_counts(8, 2, 2, 8, 0.5);
        assert_eq!(r.precision_flawed, 0.8);
        assert_eq!(r.recall_flawed, 0.8);
        assert_eq!(r.f1_flawed, 0.8);
        assert_eq!(r.f1_clean, 0.8);
        assert_eq!(r.macro_f1, 0.8);
    }

    #[test]
    fn perfect_and_degenerate_predictors() {
        let actual = [true, false, true, false, false];
        assert_eq!(EvalReport::from_predictions(&actual, &actual, 0.5).macro_f1, 1.0);
        let all_clean = EvalReport::from_predictions(&[false; 5], &actual, 0.5);
        assert_eq!(all_clean.f1_flawed, 0.0);
        assert_eq!(all_clean.precision_flawed, 0.0);
        assert_eq!(all_clean.macro_f1, all_clean.f1_clean / 2.0);
    }
}
