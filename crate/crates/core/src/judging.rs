//! Judge prompts, verdict parsing, majority voting and the Reasoning
//! Integrity Score (RIS).
//!
//! Everything here is pure; the network side lives in the gateway crate.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::trace::ReasoningTrace;

/// Default flawed-trace threshold: a trace is flawed when `ris < 0.8`.
pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// The three step scores a judge can award.
pub const SCORE_LEVELS: [f64; 3] = [0.0, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RubricMode {
    /// Yes/No verdicts mapped to 1.0/0.0.
    Binary,
    /// 1.0 (fully correct), 0.5 (partial flaw), 0.0 (wrong).
    #[default]
    ThreeLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCategory {
    CalculationError,
    Hallucination,
    LogicalLeap,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::CalculationError,
        ErrorCategory::Hallucination,
        ErrorCategory::LogicalLeap,
        ErrorCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::CalculationError => "CalculationError",
            ErrorCategory::Hallucination => "Hallucination",
            ErrorCategory::LogicalLeap => "LogicalLeap",
            ErrorCategory::Other => "Other",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MisuseVerdict {
    Misapplication,
    Correct,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgingError {
    #[error("unparseable verdict: {0:?}")]
    UnparseableVerdict(String),
    #[error("trace `{0}` has no steps to score")]
    EmptyTrace(String),
    #[error("{verdicts} verdicts for {steps} steps")]
    VerdictCountMismatch { steps: usize, verdicts: usize },
}

// Judge prompt templates. Substitution is literal: values are spliced in
// once and never re-scanned for placeholders.

pub fn render_step_judgment_prompt(context: &str, step: &str, mode: RubricMode) -> String {
    match mode {
        RubricMode::Binary => format!(
            "You are a strict verifier. Your task is to determine if the 'Generated Step' is logically and factually supported by the 'Context'.\n\
             Context: {context}\n\
             Generated Step: {step}\n\
             Is the 'Generated Step' fully and correctly supported by the 'Context'? Respond with only 'Yes' or 'No'."
        ),
        RubricMode::ThreeLevel => format!(
            "You are a strict verifier. Your task is to grade whether the 'Generated Step' is logically and factually supported by the 'Context'.\n\
             Context: {context}\n\
             Generated Step: {step}\n\
             Grade the 'Generated Step' on this rubric: 1.0 (fully correct), 0.5 (partial flaw), 0.0 (wrong). Respond with only '1.0', '0.5', or '0.0'."
        ),
    }
}

pub fn render_error_classification_prompt(context: &str, step: &str) -> String {
    format!(
        "You are an error analyst. The 'Generated Step' was deemed flawed (incorrect). Given the 'Context', classify the primary error in the 'Generated Step'.\n\
         Categories: [1. Factual Error, 2. Logical Leap, 3. Numerical Miscalculation, 4. Other]\n\
         Context: {context}\n\
         Generated Step: {step}\n\
         Output only the category name."
    )
}

pub fn render_misuse_prompt(context: &str, step: &str) -> String {
    format!(
        "You are an error analyst. Determine if the 'Generated Step' misuses the 'Context'.\n\
         Misapplication: references context but uses it incorrectly (e.g., logical error, misquote, misinterpretation).\n\
         Correct: uses the context correctly.\n\
         Irrelevant: does not use the context at all.\n\
         Context: {context}\n\
         Generated Step: {step}\n\
         Respond with only 'Misapplication', 'Correct', or 'Irrelevant'."
    )
}

/// Builds the judge-facing context for step `step_pos` (0-based): the
/// question, any retrieved context, and the steps that precede it.
pub fn step_context(
    question: &str,
    retrieved: Option<&str>,
    trace: &ReasoningTrace,
    step_pos: usize,
) -> String {
    let mut out = format!("Question: {question}");
    if let Some(ctx) = retrieved.filter(|c| !c.trim().is_empty()) {
        out.push_str("\nRetrieved context: ");
        out.push_str(ctx);
    }
    if step_pos > 0 {
        out.push_str("\nPrevious steps:");
        for step in &trace.steps[..step_pos] {
            out.push_str(&format!("\nStep {}: {}", step.index, step.text));
        }
    }
    out
}

static YES_NO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").unwrap());

/// Maps a raw judge response to a step score.
pub fn parse_verdict(raw: &str, mode: RubricMode) -> Result<f64, JudgingError> {
    let unparseable = || JudgingError::UnparseableVerdict(raw.to_string());
    match mode {
        RubricMode::Binary => {
            let m = YES_NO.find(raw).ok_or_else(unparseable)?;
            Ok(if m.as_str().eq_ignore_ascii_case("yes") { 1.0 } else { 0.0 })
        }
        RubricMode::ThreeLevel => NUMBER
            .find_iter(raw)
            .find_map(|m| {
                let (int, frac) = m.as_str().split_once('.')?;
                if !frac.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                let frac = frac.trim_end_matches('0');
                match (int, frac) {
                    ("1", "") => Some(1.0),
                    ("0", "5") => Some(0.5),
                    ("0", "") => Some(0.0),
                    _ => None,
                }
            })
            .ok_or_else(unparseable),
    }
}

fn level(score: f64) -> usize {
    ((score * 2.0).round() as i64).clamp(0, 2) as usize
}

/// Majority vote over one step's panel scores.
///
/// A level held by at least `ceil(n/2)` judges wins. With no such level, or
/// two of them (an even split), the lower median is returned; for an odd
/// panel that is the ordinary median. Panics on an empty panel.
pub fn aggregate_verdicts(scores: &[f64]) -> f64 {
    assert!(!scores.is_empty(), "aggregate_verdicts needs at least one score");
    let n = scores.len();
    let mut counts = [0usize; 3];
    for &s in scores {
        counts[level(s)] += 1;
    }
    let quorum = n.div_ceil(2);
    let winners: Vec<usize> = (0..3).filter(|&l| counts[l] >= quorum).collect();
    if let [only] = winners[..] {
        return SCORE_LEVELS[only];
    }
    let mut sorted: Vec<usize> = scores.iter().map(|&s| level(s)).collect();
    sorted.sort_unstable();
    SCORE_LEVELS[sorted[(n - 1) / 2]]
}

/// Maps an error-analyst response onto the error taxonomy.
pub fn parse_error_category(raw: &str) -> Result<ErrorCategory, JudgingError> {
    static PATTERNS: LazyLock<Vec<(Regex, ErrorCategory)>> = LazyLock::new(|| {
        [
            (r"(?i)\bnumerical\s+miscalculation\b", ErrorCategory::CalculationError),
            (r"(?i)\bcalculation\s+error\b", ErrorCategory::CalculationError),
            (r"(?i)\bfactual\s+error\b", ErrorCategory::Hallucination),
            (r"(?i)\bhallucination\b", ErrorCategory::Hallucination),
            (r"(?i)\blogical\s+leap\b", ErrorCategory::LogicalLeap),
            (r"(?i)\bother\b", ErrorCategory::Other),
        ]
        .into_iter()
        .map(|(p, c)| (Regex::new(p).unwrap(), c))
        .collect()
    });
    PATTERNS
        .iter()
        .filter_map(|(re, cat)| re.find(raw).map(|m| (m.start(), *cat)))
        .min_by_key(|&(pos, _)| pos)
        .map(|(_, cat)| cat)
        .ok_or_else(|| JudgingError::UnparseableVerdict(raw.to_string()))
}

/// Strict match of a misuse response against the three allowed words,
/// ignoring case, surrounding whitespace, quotes and trailing punctuation.
pub fn parse_misuse_verdict(raw: &str) -> Result<MisuseVerdict, JudgingError> {
    let word = raw.trim_matches(|c: char| c.is_whitespace() || "'\"`*.!".contains(c));
    [
        ("misapplication", MisuseVerdict::Misapplication),
        ("correct", MisuseVerdict::Correct),
        ("irrelevant", MisuseVerdict::Irrelevant),
    ]
    .into_iter()
    .find(|(w, _)| word.eq_ignore_ascii_case(w))
    .map(|(_, v)| v)
    .ok_or_else(|| JudgingError::UnparseableVerdict(raw.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub step_index: u32,
    pub per_judge_scores: Vec<f64>,
    pub aggregate: f64,
    pub raw_responses: Vec<String>,
}

impl StepVerdict {
    pub fn from_scores(step_index: u32, scores: Vec<f64>, raw_responses: Vec<String>) -> Self {
        let aggregate = aggregate_verdicts(&scores);
        StepVerdict { step_index, per_judge_scores: scores, aggregate, raw_responses }
    }
}

/// A label attached to one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLabel<T> {
    pub step_index: u32,
    pub label: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrace {
    pub trace: ReasoningTrace,
    pub verdicts: Vec<StepVerdict>,
    pub ris: f64,
    pub threshold: f64,
    pub flawed: bool,
    #[serde(default)]
    pub error_labels: Option<Vec<StepLabel<ErrorCategory>>>,
    #[serde(default)]
    pub misuse_labels: Option<Vec<StepLabel<MisuseVerdict>>>,
}

/// Mean of step aggregates.
pub fn reasoning_integrity_score(aggregates: &[f64]) -> f64 {
    aggregates.iter().sum::<f64>() / aggregates.len() as f64
}

impl ScoredTrace {
    pub fn from_verdicts(
        trace: ReasoningTrace,
        verdicts: Vec<StepVerdict>,
        threshold: f64,
    ) -> Result<Self, JudgingError> {
        if trace.steps.is_empty() || verdicts.is_empty() {
            return Err(JudgingError::EmptyTrace(trace.record_id));
        }
        if verdicts.len() != trace.steps.len() {
            return Err(JudgingError::VerdictCountMismatch {
                steps: trace.steps.len(),
                verdicts: verdicts.len(),
            });
        }
        let aggregates: Vec<f64> = verdicts.iter().map(|v| v.aggregate).collect();
        let ris = reasoning_integrity_score(&aggregates);
        Ok(ScoredTrace {
            trace,
            verdicts,
            ris,
            threshold,
            flawed: ris < threshold,
            error_labels: None,
            misuse_labels: None,
        })
    }

    /// Re-evaluates the flawed flag at another threshold.
    pub fn flawed_at(&self, threshold: f64) -> bool {
        self.ris < threshold
    }

    pub fn is_rwr(&self, threshold: f64) -> bool {
        self.trace.is_correct() && self.flawed_at(threshold)
    }

    /// Indices of steps whose aggregate fell short of full credit.
    pub fn flawed_step_indices(&self) -> Vec<u32> {
        self.verdicts.iter().filter(|v| v.aggregate < 1.0).map(|v| v.step_index).collect()
    }

    /// Fraction of context-referencing steps (`Misapplication` or `Correct`)
    /// that misapply the context. Zero when no step references it; `None`
    /// when the trace was never classified.
    pub fn misuse_fraction(&self) -> Option<f64> {
        let labels = self.misuse_labels.as_ref()?;
        let mis = labels.iter().filter(|l| l.label == MisuseVerdict::Misapplication).count();
        let referencing = mis + labels.iter().filter(|l| l.label == MisuseVerdict::Correct).count();
        Some(if referencing == 0 { 0.0 } else { mis as f64 / referencing as f64 })
    }
}
