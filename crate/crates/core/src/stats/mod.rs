//! Statistical battery over scored traces.
//!
//! [`agreement`] and [`effect`] hold the scalar statistics; [`tables`] builds
//! the corpus-level tables (RWR rates, threshold sweep, error deltas, effect
//! sizes) from scored traces.

pub mod agreement;
pub mod effect;
pub mod tables;

pub use agreement::{fleiss_kappa, RatingMatrix};
pub use effect::{cohens_d, normal_cdf, pearson_r, posthoc_power};
pub use tables::{
    effect_sizes, error_delta_table, error_position, mean_error_position, misuse_ris_correlation,
    normalized_position, panel_kappa, rwr_table, threshold_sweep, EffectRow, ErrorDeltaRow,
    ErrorDeltaTable, RwrRow, RwrTable, SweepPoint, DEFAULT_SWEEP, DELTA_CATEGORIES,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("degenerate rating matrix: {0}")]
    DegenerateMatrix(String),
    #[error("samples need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("pooled variance is zero")]
    ZeroVariance,
    #[error("input is constant")]
    ConstantInput,
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no Baseline labels to compare against")]
    MissingBaseline,
    #[error("step index {index} outside 1..={n_steps}")]
    IndexOutOfRange { index: u32, n_steps: usize },
    #[error("empty corpus")]
    EmptyCorpus,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}
