//! Corpus-level tables built from scored traces.

use std::collections::BTreeMap;

use serde::Serialize;

use super::agreement::{fleiss_kappa, RatingMatrix};
use super::effect::{cohens_d, pearson_r, posthoc_power};
use super::{mean, StatsError};
use crate::judging::{ErrorCategory, ScoredTrace, SCORE_LEVELS};
use crate::trace::{Condition, Dataset};

pub const DEFAULT_SWEEP: [f64; 5] = [0.70, 0.75, 0.80, 0.85, 0.90];

/// Categories shown in the error-delta table; `Other` is excluded and the
/// remaining three are renormalized to 100%.
pub const DELTA_CATEGORIES: [ErrorCategory; 3] = [
    ErrorCategory::CalculationError,
    ErrorCategory::Hallucination,
    ErrorCategory::LogicalLeap,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RwrRow {
    pub model: String,
    pub dataset: Dataset,
    pub n_traces: usize,
    pub correct_count: usize,
    pub flawed_given_correct_count: usize,
    /// `None` when the row has no correct answers.
    pub rwr_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RwrTable {
    pub threshold: f64,
    pub rows: Vec<RwrRow>,
    /// Unweighted mean of each model's row rates.
    pub model_averages: Vec<(String, Option<f64>)>,
    /// Unweighted mean of each dataset's column rates.
    pub dataset_averages: Vec<(Dataset, Option<f64>)>,
    pub overall_average: Option<f64>,
}

fn mean_of_present(rates: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = rates.flatten().collect();
    (!present.is_empty()).then(|| mean(&present))
}

/// Right-for-wrong-reasons rates per (model, dataset): the share of correct
/// answers whose RIS is strictly below `threshold`. Traces without a grade
/// count as incorrect.
pub fn rwr_table(scored: &[ScoredTrace], threshold: f64) -> RwrTable {
    let mut cells: BTreeMap<(String, Dataset), (usize, usize, usize)> = BTreeMap::new();
    for s in scored {
        let cell = cells.entry((s.trace.model.clone(), s.trace.dataset)).or_default();
        cell.0 += 1;
        if s.trace.is_correct() {
            cell.1 += 1;
            if s.flawed_at(threshold) {
                cell.2 += 1;
            }
        }
    }
    let rows: Vec<RwrRow> = cells
        .into_iter()
        .map(|((model, dataset), (n, correct, flawed))| RwrRow {
            model,
            dataset,
            n_traces: n,
            correct_count: correct,
            flawed_given_correct_count: flawed,
            rwr_rate: (correct > 0).then(|| flawed as f64 / correct as f64),
        })
        .collect();

    let mut by_model: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    let mut by_dataset: BTreeMap<Dataset, Vec<Option<f64>>> = BTreeMap::new();
    for r in &rows {
        by_model.entry(&r.model).or_default().push(r.rwr_rate);
        by_dataset.entry(r.dataset).or_default().push(r.rwr_rate);
    }
    let model_averages = by_model
        .into_iter()
        .map(|(m, rates)| (m.to_string(), mean_of_present(rates.into_iter())))
        .collect();
    let dataset_averages = by_dataset
        .into_iter()
        .map(|(d, rates)| (d, mean_of_present(rates.into_iter())))
        .collect();
    let overall_average = mean_of_present(rows.iter().map(|r| r.rwr_rate));
    RwrTable { threshold, rows, model_averages, dataset_averages, overall_average }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub flagged: usize,
    pub total: usize,
    pub flagged_fraction: f64,
    /// RWR rate over the whole corpus at this threshold.
    pub rwr_rate: Option<f64>,
}

/// Flagged fraction and pooled RWR rate at each threshold, sorted ascending.
pub fn threshold_sweep(scored: &[ScoredTrace], thresholds: &[f64]) -> Result<Vec<SweepPoint>, StatsError> {
    if scored.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    let correct = scored.iter().filter(|s| s.trace.is_correct()).count();
    Ok(ts
        .into_iter()
        .map(|t| {
            let flagged = scored.iter().filter(|s| s.flawed_at(t)).count();
            let rwr = scored.iter().filter(|s| s.is_rwr(t)).count();
            SweepPoint {
                threshold: t,
                flagged,
                total: scored.len(),
                flagged_fraction: flagged as f64 / scored.len() as f64,
                rwr_rate: (correct > 0).then(|| rwr as f64 / correct as f64),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorDeltaRow {
    pub condition: Condition,
    /// Labels among the three tabulated categories.
    pub counted: usize,
    pub other: usize,
    /// Percent per [`DELTA_CATEGORIES`]; `None` with no tabulated labels.
    pub percent: Option<[f64; 3]>,
    /// Percentage-point change from Baseline.
    pub delta_pp: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorDeltaTable {
    /// Baseline first, then the interventions present, in condition order.
    pub rows: Vec<ErrorDeltaRow>,
}

/// Error-type distribution per condition and its change from Baseline.
pub fn error_delta_table(
    labels: &BTreeMap<Condition, Vec<ErrorCategory>>,
) -> Result<ErrorDeltaTable, StatsError> {
    let distribution = |cats: &[ErrorCategory]| {
        let counts = DELTA_CATEGORIES.map(|c| cats.iter().filter(|&&x| x == c).count());
        let counted: usize = counts.iter().sum();
        let percent = (counted > 0).then(|| counts.map(|k| 100.0 * k as f64 / counted as f64));
        (counted, cats.len() - counted, percent)
    };
    let (b_counted, b_other, baseline) = labels
        .get(&Condition::Baseline)
        .map(|c| distribution(c))
        .filter(|(_, _, p)| p.is_some())
        .ok_or(StatsError::MissingBaseline)?;
    let baseline = baseline.unwrap();

    let mut rows = vec![ErrorDeltaRow {
        condition: Condition::Baseline,
        counted: b_counted,
        other: b_other,
        percent: Some(baseline),
        delta_pp: Some([0.0; 3]),
    }];
    for cond in Condition::INTERVENTIONS {
        let Some(cats) = labels.get(&cond) else { continue };
        let (counted, other, percent) = distribution(cats);
        let delta_pp = percent.map(|p| [0, 1, 2].map(|i| p[i] - baseline[i]));
        rows.push(ErrorDeltaRow { condition: cond, counted, other, percent, delta_pp });
    }
    Ok(ErrorDeltaTable { rows })
}

/// Normalized position of step `index` (1-based) among `n_steps`:
/// `(index - 1) / (n_steps - 1)`, or 0.5 for a single-step trace.
pub fn normalized_position(index: u32, n_steps: usize) -> Result<f64, StatsError> {
    if index == 0 || index as usize > n_steps {
        return Err(StatsError::IndexOutOfRange { index, n_steps });
    }
    Ok(if n_steps == 1 { 0.5 } else { (index - 1) as f64 / (n_steps - 1) as f64 })
}

pub fn error_position(trace: &ScoredTrace, flawed_step_index: u32) -> Result<f64, StatsError> {
    normalized_position(flawed_step_index, trace.trace.steps.len())
}

/// Mean normalized position of flawed steps per condition.
pub fn mean_error_position(scored: &[ScoredTrace]) -> BTreeMap<Condition, f64> {
    let mut acc: BTreeMap<Condition, Vec<f64>> = BTreeMap::new();
    for s in scored {
        for idx in s.flawed_step_indices() {
            if let Ok(p) = error_position(s, idx) {
                acc.entry(s.trace.condition).or_default().push(p);
            }
        }
    }
    acc.into_iter().map(|(c, ps)| (c, mean(&ps))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRow {
    pub model: String,
    pub dataset: Dataset,
    pub intervention: Condition,
    /// `None` when either group is too small or has zero pooled variance.
    pub d: Option<f64>,
    pub n_treatment: usize,
    pub n_baseline: usize,
    pub power: Option<f64>,
}

/// Cohen's d of RIS for each intervention against the Baseline of the same
/// (model, dataset), with post-hoc power at `alpha`.
pub fn effect_sizes(scored: &[ScoredTrace], alpha: f64) -> Vec<EffectRow> {
    let mut groups: BTreeMap<(String, Dataset, Condition), Vec<f64>> = BTreeMap::new();
    for s in scored {
        groups
            .entry((s.trace.model.clone(), s.trace.dataset, s.trace.condition))
            .or_default()
            .push(s.ris);
    }
    let mut rows = Vec::new();
    for ((model, dataset, cond), treatment) in &groups {
        if *cond == Condition::Baseline {
            continue;
        }
        let Some(baseline) = groups.get(&(model.clone(), *dataset, Condition::Baseline)) else {
            continue;
        };
        let d = cohens_d(treatment, baseline).ok();
        rows.push(EffectRow {
            model: model.clone(),
            dataset: *dataset,
            intervention: *cond,
            d,
            n_treatment: treatment.len(),
            n_baseline: baseline.len(),
            power: d.map(|d| posthoc_power(d, treatment.len(), baseline.len(), alpha)),
        });
    }
    rows
}

/// Fleiss' kappa across the judge panel over every scored step. Steps whose
/// panel size differs from the first step's are skipped.
pub fn panel_kappa(scored: &[ScoredTrace]) -> Result<f64, StatsError> {
    let items: Vec<Vec<f64>> = scored
        .iter()
        .flat_map(|s| s.verdicts.iter().map(|v| v.per_judge_scores.clone()))
        .collect();
    let size = items.first().map(Vec::len).ok_or(StatsError::EmptyCorpus)?;
    let items: Vec<Vec<f64>> = items.into_iter().filter(|i| i.len() == size).collect();
    let m = RatingMatrix::from_ratings(&items, &SCORE_LEVELS)?;
    Ok(fleiss_kappa(&m))
}

/// Correlation between per-trace context-misuse fraction and RIS over the
/// RAG traces that carry misuse labels.
pub fn misuse_ris_correlation(scored: &[ScoredTrace]) -> Result<f64, StatsError> {
    let (x, y): (Vec<f64>, Vec<f64>) = scored
        .iter()
        .filter(|s| s.trace.condition == Condition::Rag)
        .filter_map(|s| s.misuse_fraction().map(|f| (f, s.ris)))
        .unzip();
    pearson_r(&x, &y)
}
