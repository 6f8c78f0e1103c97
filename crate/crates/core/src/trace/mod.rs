//! Domain model for benchmark records and step-structured reasoning traces.

mod answer;
mod codec;
mod parse;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use answer::{check_answer, extract_final_answer, normalize_answer, parse_number};
pub use codec::{read_records, read_traces, write_records, write_traces, CodecError};
pub use parse::{parse_steps, reassemble};
pub use prompt::{render_generation_prompt, PromptError, BASE_SYSTEM_PROMPT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "GSM8K")]
    Gsm8k,
    #[serde(rename = "HotpotQA")]
    HotpotQa,
    #[serde(rename = "ARC")]
    Arc,
    Other,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Gsm8k => "GSM8K",
            Dataset::HotpotQa => "HotpotQA",
            Dataset::Arc => "ARC",
            Dataset::Other => "Other",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Generation condition: the baseline prompt or one of three interventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    Baseline,
    #[serde(rename = "RAG")]
    Rag,
    SelfCritique,
    Verification,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Baseline,
        Condition::Rag,
        Condition::SelfCritique,
        Condition::Verification,
    ];

    pub const INTERVENTIONS: [Condition; 3] =
        [Condition::Rag, Condition::SelfCritique, Condition::Verification];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "Baseline",
            Condition::Rag => "RAG",
            Condition::SelfCritique => "SelfCritique",
            Condition::Verification => "Verification",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown condition `{s}`"))
    }
}

/// One benchmark question with its gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: String,
    pub dataset: Dataset,
    pub question: String,
    pub gold_answer: String,
    /// Oracle retrieval snippets used by the RAG condition.
    #[serde(default)]
    pub context: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningStep {
    /// 1-based position after renumbering.
    pub index: u32,
    pub text: String,
    /// Byte range of `text` inside the raw output. Not serialized; recovered
    /// from the raw output when a trace file is read.
    #[serde(skip)]
    pub char_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "codec::TraceWire")]
pub struct ReasoningTrace {
    pub record_id: String,
    pub dataset: Dataset,
    pub model: String,
    pub condition: Condition,
    pub raw_output: String,
    pub steps: Vec<ReasoningStep>,
    pub final_answer: Option<String>,
    pub answer_correct: Option<bool>,
}

impl ReasoningTrace {
    /// Builds a trace from a model's raw completion, grading it against the
    /// record's gold answer.
    pub fn from_output(
        record: &TaskRecord,
        model: impl Into<String>,
        condition: Condition,
        raw_output: impl Into<String>,
    ) -> Self {
        let raw_output = raw_output.into();
        let steps = parse_steps(&raw_output);
        let final_answer = extract_final_answer(&raw_output);
        let answer_correct = final_answer
            .as_deref()
            .map(|answer| check_answer(answer, &record.gold_answer));
        ReasoningTrace {
            record_id: record.id.clone(),
            dataset: record.dataset,
            model: model.into(),
            condition,
            raw_output,
            steps,
            final_answer,
            answer_correct,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.answer_correct == Some(true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub system: String,
    pub user: String,
}
