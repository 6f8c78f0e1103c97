//! Generation prompts for the baseline and the three interventions.

use super::{Condition, PromptPair, TaskRecord};

pub const BASE_SYSTEM_PROMPT: &str = "Solve the user's request step by step. For math problems, put the final answer in brackets [like this]. For multiple-choice questions, put the final answer (e.g., [A] or [1]) in brackets.";

const VERIFICATION_PREFIX: &str = "Verify each step before proceeding.";
const SELF_CRITIQUE_SUFFIX: &str = "After solving, review your reasoning for any flaws.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("record `{0}` has no context; the RAG condition needs one")]
    MissingContext(String),
}

pub fn render_generation_prompt(
    record: &TaskRecord,
    condition: Condition,
) -> Result<PromptPair, PromptError> {
    let question = record.question.as_str();
    let pair = match condition {
        Condition::Baseline => PromptPair {
            system: BASE_SYSTEM_PROMPT.to_string(),
            user: question.to_string(),
        },
        Condition::Verification => PromptPair {
            system: format!("{VERIFICATION_PREFIX} {BASE_SYSTEM_PROMPT}"),
            user: question.to_string(),
        },
        Condition::SelfCritique => PromptPair {
            system: format!("{BASE_SYSTEM_PROMPT}  {SELF_CRITIQUE_SUFFIX}"),
            user: question.to_string(),
        },
        Condition::Rag => {
            let context = record
                .context
                .as_deref()
                .filter(|c| !c.trim().is_empty())
                .ok_or_else(|| PromptError::MissingContext(record.id.clone()))?;
            PromptPair {
                system: BASE_SYSTEM_PROMPT.to_string(),
                user: format!("Context: {context}  {question}"),
            }
        }
    };
    Ok(pair)
}
