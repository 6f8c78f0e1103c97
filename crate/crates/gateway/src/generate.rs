//! Trace generation: renders the condition's prompt pair, sends it to the
//! generator endpoint and parses the completion into a graded trace.

use std::sync::Arc;

use ris_core::trace::render_generation_prompt;
use ris_core::{Condition, ReasoningTrace, TaskRecord};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::transport::{ChatMessage, ChatRequest, ChatTransport, RetryPolicy};
use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Generator models; every model runs every (condition, record) cell.
    pub models: Vec<String>,
    pub conditions: Vec<Condition>,
    pub api_base: Option<String>,
    pub temperature: f64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            models: vec!["mistral-7b-instruct".into()],
            conditions: Condition::ALL.to_vec(),
            api_base: None,
            temperature: 0.7,
            max_in_flight: 8,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct Generator {
    base: String,
    temperature: f64,
    transport: Arc<dyn ChatTransport>,
    permits: Semaphore,
}

impl Generator {
    pub fn new(
        base: impl Into<String>,
        temperature: f64,
        max_in_flight: usize,
        transport: Arc<dyn ChatTransport>,
    ) -> Self {
        Generator { base: base.into(), temperature, transport, permits: Semaphore::new(max_in_flight.max(1)) }
    }

    pub async fn generate_trace(
        &self,
        model: &str,
        record: &TaskRecord,
        condition: Condition,
    ) -> Result<ReasoningTrace, GatewayError> {
        let prompt = render_generation_prompt(record, condition)?;
        let request = ChatRequest {
            model: model.to_string(),
            messages: vec![ChatMessage::system(prompt.system), ChatMessage::user(prompt.user)],
            temperature: self.temperature,
        };
        let raw = {
            let _permit = self.permits.acquire().await.expect("semaphore is never closed");
            self.transport.complete(&self.base, &request).await?
        };
        Ok(ReasoningTrace::from_output(record, model, condition, raw))
    }

    /// The full models × conditions × records grid, in that nesting order.
    pub async fn generate_grid(
        &self,
        models: &[String],
        conditions: &[Condition],
        records: &[TaskRecord],
    ) -> Vec<Result<ReasoningTrace, GatewayError>> {
        let cells = models
            .iter()
            .flat_map(|m| conditions.iter().flat_map(move |&c| records.iter().map(move |r| (m, c, r))));
        futures::future::join_all(cells.map(|(m, c, r)| self.generate_trace(m, r, c))).await
    }
}
