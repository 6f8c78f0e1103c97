//! The LLM judge panel: per-step scoring, error classification and context
//! misuse labelling, all routed through the verdict cache.

use std::path::PathBuf;
use std::sync::Arc;

use futures::future::try_join_all;
use ris_core::judging::{
    parse_error_category, parse_misuse_verdict, parse_verdict, render_error_classification_prompt,
    render_misuse_prompt, render_step_judgment_prompt, step_context, JudgingError, StepLabel,
};
use ris_core::trace::PromptError;
use ris_core::{
    Condition, ErrorCategory, MisuseVerdict, ReasoningTrace, RubricMode, ScoredTrace, StepVerdict, TaskRecord,
};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tracing::{debug, warn};

use crate::cache::{cache_key, VerdictCache};
use crate::transport::{ChatMessage, ChatRequest, ChatTransport, RetryPolicy};
use crate::GatewayError;

pub const MAX_JUDGES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSpec {
    pub model: String,
    /// Endpoint base; falls back to the panel-wide `api_base`.
    #[serde(default)]
    pub base: Option<String>,
    #[serde(default)]
    pub temperature: f64,
}

impl JudgeSpec {
    pub fn new(model: impl Into<String>) -> Self {
        JudgeSpec { model: model.into(), base: None, temperature: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub judges: Vec<JudgeSpec>,
    pub rubric_mode: RubricMode,
    pub max_in_flight: usize,
    pub api_base: Option<String>,
    pub retry: RetryPolicy,
    pub cache_path: Option<PathBuf>,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            judges: ["gpt-4o-mini", "claude-3-5-sonnet", "gemini-1.5-flash"].map(JudgeSpec::new).to_vec(),
            rubric_mode: RubricMode::ThreeLevel,
            max_in_flight: 8,
            api_base: None,
            retry: RetryPolicy::default(),
            cache_path: None,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let n = self.judges.len();
        if !(1..=MAX_JUDGES).contains(&n) {
            return Err(GatewayError::Config(format!("panel needs 1 to {MAX_JUDGES} judges, got {n}")));
        }
        if self.rubric_mode == RubricMode::Binary && n % 2 == 0 {
            return Err(GatewayError::Config(format!("binary rubric needs an odd panel, got {n} judges")));
        }
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        if let Some(j) = self.judges.iter().find(|j| j.base.is_none() && self.api_base.is_none()) {
            return Err(GatewayError::Config(format!(
                "judge `{}` has no endpoint base (set it per judge, in api_base, or via RIS_API_BASE)",
                j.model
            )));
        }
        Ok(())
    }
}

/// Most frequent label; ties go to whichever tied label the earliest judge
/// gave. Panics on an empty slice.
pub fn majority_label<T: Copy + PartialEq>(labels: &[T]) -> T {
    let count = |l: &T| labels.iter().filter(|x| *x == l).count();
    let best = labels.iter().map(count).max().expect("majority_label needs at least one label");
    *labels.iter().find(|l| count(l) == best).unwrap()
}

pub struct JudgePanel {
    config: JudgeConfig,
    transport: Arc<dyn ChatTransport>,
    cache: VerdictCache,
    permits: Semaphore,
}

impl JudgePanel {
    /// Validates the config and opens the cache file, if one is configured.
    pub fn new(config: JudgeConfig, transport: Arc<dyn ChatTransport>) -> Result<Self, GatewayError> {
        config.validate()?;
        let cache = match &config.cache_path {
            Some(path) => VerdictCache::open(path)?,
            None => VerdictCache::in_memory(),
        };
        let permits = Semaphore::new(config.max_in_flight);
        Ok(JudgePanel { config, transport, cache, permits })
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    pub fn cache(&self) -> &VerdictCache {
        &self.cache
    }

    /// Sends `prompt` to judge `judge` (panel position) unless the cache
    /// already holds the answer.
    pub async fn query_judge(&self, judge: usize, prompt: &str) -> Result<String, GatewayError> {
        self.query_keyed(judge, prompt, cache_key(&self.config.judges[judge].model, prompt)).await
    }

    async fn query_keyed(&self, judge: usize, prompt: &str, key: String) -> Result<String, GatewayError> {
        let spec = &self.config.judges[judge];
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let base = spec.base.as_deref().or(self.config.api_base.as_deref()).expect("validated");
        let request = ChatRequest {
            model: spec.model.clone(),
            messages: vec![ChatMessage::user(prompt)],
            temperature: spec.temperature,
        };
        let response = {
            let _permit = self.permits.acquire().await.expect("semaphore is never closed");
            self.transport.complete(base, &request).await?
        };
        self.cache.insert(&key, &spec.model, &response)?;
        Ok(response)
    }

    /// One judge's score for one step. An unparseable answer earns one
    /// re-query (cached under its own key so warm reruns stay offline); a
    /// second failure scores 0.0.
    async fn step_score(&self, judge: usize, prompt: &str) -> Result<(f64, String), GatewayError> {
        let mode = self.config.rubric_mode;
        let raw = self.query_judge(judge, prompt).await?;
        let first = match parse_verdict(&raw, mode) {
            Ok(score) => return Ok((score, raw)),
            Err(e) => e,
        };
        let model = &self.config.judges[judge].model;
        debug!(judge = %model, "re-querying after {first}");
        let retry_key = cache_key(model, &format!("{prompt}\0retry"));
        let raw = self.query_keyed(judge, prompt, retry_key).await?;
        match parse_verdict(&raw, mode) {
            Ok(score) => Ok((score, raw)),
            Err(e) => {
                warn!(judge = %model, "{e} after retry; scoring 0.0");
                Ok((0.0, raw))
            }
        }
    }

    fn retrieved<'a>(record: &'a TaskRecord, trace: &ReasoningTrace) -> Option<&'a str> {
        (trace.condition == Condition::Rag).then_some(record.context.as_deref()).flatten()
    }

    /// Judges every step with the full panel and aggregates by majority vote.
    pub async fn score_trace(
        &self,
        record: &TaskRecord,
        trace: ReasoningTrace,
        threshold: f64,
    ) -> Result<ScoredTrace, GatewayError> {
        if trace.steps.is_empty() {
            return Err(JudgingError::EmptyTrace(trace.record_id.clone()).into());
        }
        let retrieved = Self::retrieved(record, &trace);
        let prompts: Vec<String> = (0..trace.steps.len())
            .map(|pos| {
                let ctx = step_context(&record.question, retrieved, &trace, pos);
                render_step_judgment_prompt(&ctx, &trace.steps[pos].text, self.config.rubric_mode)
            })
            .collect();
        let n_judges = self.config.judges.len();
        let scores = try_join_all(
            prompts
                .iter()
                .flat_map(|p| (0..n_judges).map(move |j| (j, p)))
                .map(|(j, p)| self.step_score(j, p)),
        )
        .await?;
        let verdicts = trace
            .steps
            .iter()
            .zip(scores.chunks(n_judges))
            .map(|(step, panel)| {
                let (s, raw): (Vec<f64>, Vec<String>) = panel.iter().cloned().unzip();
                StepVerdict::from_scores(step.index, s, raw)
            })
            .collect();
        Ok(ScoredTrace::from_verdicts(trace, verdicts, threshold)?)
    }

    /// Scores many traces concurrently; the semaphore bounds total in-flight
    /// requests. Results come back in input order.
    pub async fn score_all(
        &self,
        items: &[(TaskRecord, ReasoningTrace)],
        threshold: f64,
    ) -> Vec<Result<ScoredTrace, GatewayError>> {
        futures::future::join_all(items.iter().map(|(r, t)| self.score_trace(r, t.clone(), threshold))).await
    }

    /// Panel label for an error-classification prompt.
    pub async fn classify_error(&self, context: &str, step: &str) -> Result<ErrorCategory, GatewayError> {
        let prompt = render_error_classification_prompt(context, step);
        let labels = try_join_all((0..self.config.judges.len()).map(|j| {
            let prompt = &prompt;
            async move {
                let raw = self.query_judge(j, prompt).await?;
                Ok::<_, GatewayError>(parse_error_category(&raw).unwrap_or_else(|e| {
                    warn!(judge = %self.config.judges[j].model, "{e}; labelling Other");
                    ErrorCategory::Other
                }))
            }
        }))
        .await?;
        Ok(majority_label(&labels))
    }

    pub async fn classify_misuse(&self, context: &str, step: &str) -> Result<MisuseVerdict, GatewayError> {
        let prompt = render_misuse_prompt(context, step);
        let labels = try_join_all((0..self.config.judges.len()).map(|j| {
            let prompt = &prompt;
            async move {
                let raw = self.query_judge(j, prompt).await?;
                Ok::<_, GatewayError>(parse_misuse_verdict(&raw).unwrap_or_else(|e| {
                    warn!(judge = %self.config.judges[j].model, "{e}; labelling Irrelevant");
                    MisuseVerdict::Irrelevant
                }))
            }
        }))
        .await?;
        Ok(majority_label(&labels))
    }

    /// Attaches error labels to every step that fell short of full credit
    /// and, for RAG traces, misuse labels to every step.
    pub async fn classify(&self, record: &TaskRecord, scored: &mut ScoredTrace) -> Result<(), GatewayError> {
        let trace = &scored.trace;
        let retrieved = Self::retrieved(record, trace);
        let flawed: Vec<(usize, u32)> = scored
            .verdicts
            .iter()
            .enumerate()
            .filter(|(_, v)| v.aggregate < 1.0)
            .map(|(pos, v)| (pos, v.step_index))
            .collect();
        let errors = try_join_all(flawed.iter().map(|&(pos, index)| {
            let ctx = step_context(&record.question, retrieved, trace, pos);
            async move {
                let label = self.classify_error(&ctx, &trace.steps[pos].text).await?;
                Ok::<_, GatewayError>(StepLabel { step_index: index, label })
            }
        }))
        .await?;

        let misuse = if trace.condition == Condition::Rag {
            let context = record
                .context
                .as_deref()
                .filter(|c| !c.trim().is_empty())
                .ok_or_else(|| PromptError::MissingContext(record.id.clone()))?;
            let labels = try_join_all(trace.steps.iter().map(|step| async move {
                let label = self.classify_misuse(context, &step.text).await?;
                Ok::<_, GatewayError>(StepLabel { step_index: step.index, label })
            }))
            .await?;
            Some(labels)
        } else {
            None
        };
        scored.error_labels = Some(errors);
        scored.misuse_labels = misuse;
        Ok(())
    }
}
