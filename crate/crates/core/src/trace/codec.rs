//! JSONL codecs for task records and reasoning traces.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;

use super::{Condition, Dataset, ReasoningStep, ReasoningTrace, TaskRecord};
use crate::jsonl::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("record `{0}`: {1}")]
    InvalidRecord(String, &'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<JsonlError> for CodecError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Parse { line, message } => CodecError::Parse { line, message },
            JsonlError::Io(e) => CodecError::Io(e),
        }
    }
}

/// On-disk shape of a trace line; validated into [`ReasoningTrace`].
#[derive(Deserialize)]
pub(super) struct TraceWire {
    record_id: String,
    dataset: Dataset,
    model: String,
    condition: Condition,
    raw_output: String,
    steps: Vec<StepWire>,
    #[serde(default)]
    final_answer: Option<String>,
    #[serde(default)]
    answer_correct: Option<bool>,
}

#[derive(Deserialize)]
struct StepWire {
    index: u32,
    text: String,
}

impl TryFrom<TraceWire> for ReasoningTrace {
    type Error = String;

    fn try_from(w: TraceWire) -> Result<Self, Self::Error> {
        if w.final_answer.is_none() && w.answer_correct.is_some() {
            return Err("answer_correct present without final_answer".into());
        }
        let mut cursor = 0;
        let mut steps = Vec::with_capacity(w.steps.len());
        for (expected, step) in (1u32..).zip(w.steps) {
            if step.index != expected {
                return Err(format!("step index {} where {expected} was expected", step.index));
            }
            if step.text.trim().is_empty() {
                return Err(format!("step {expected} has empty text"));
            }
            // Recover the span by scanning forward; hand-edited steps that no
            // longer occur in the raw output get an empty span at the cursor.
            let span = match w.raw_output[cursor..].find(&step.text) {
                Some(offset) => (cursor + offset, cursor + offset + step.text.len()),
                None => (cursor, cursor),
            };
            cursor = span.1;
            steps.push(ReasoningStep { index: step.index, text: step.text, char_span: span });
        }
        Ok(ReasoningTrace {
            record_id: w.record_id,
            dataset: w.dataset,
            model: w.model,
            condition: w.condition,
            raw_output: w.raw_output,
            steps,
            final_answer: w.final_answer,
            answer_correct: w.answer_correct,
        })
    }
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<ReasoningTrace>, CodecError> {
    Ok(jsonl::read(path)?)
}

pub fn write_traces(path: impl AsRef<Path>, traces: &[ReasoningTrace]) -> Result<(), CodecError> {
    Ok(jsonl::write(path, traces)?)
}

/// Reads task records, enforcing unique non-empty ids and non-empty gold
/// answers.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<TaskRecord>, CodecError> {
    let records: Vec<TaskRecord> = jsonl::read(path)?;
    let mut seen = HashSet::new();
    for r in &records {
        if r.id.is_empty() {
            return Err(CodecError::InvalidRecord(r.id.clone(), "empty id"));
        }
        if r.gold_answer.trim().is_empty() {
            return Err(CodecError::InvalidRecord(r.id.clone(), "empty gold_answer"));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(CodecError::DuplicateId(r.id.clone()));
        }
    }
    Ok(records)
}

pub fn write_records(path: impl AsRef<Path>, records: &[TaskRecord]) -> Result<(), CodecError> {
    Ok(jsonl::write(path, records)?)
}
