//! Chat-completion wire protocol and the retrying HTTP transport.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Exponential backoff: attempt `k` (0-based) waits `base_delay_ms · 2^k`
/// before the next try, capped at `max_delay_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_delay_ms: 500, max_delay_ms: 8_000, timeout_ms: 60_000 }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Anything that can answer a chat-completion request. The HTTP transport is
/// the production implementation; tests substitute in-process fakes.
#[async_trait]
pub trait ChatTransport: Send + Sync {
    async fn complete(&self, base: &str, request: &ChatRequest) -> Result<String, GatewayError>;
}

/// reqwest-backed transport with bearer auth and retry on connection
/// failures, 429 and 5xx responses.
#[derive(Clone)]
pub struct HttpTransport {
    client: reqwest::Client,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpTransport {
    pub fn new(api_key: Option<String>, retry: RetryPolicy) -> Result<Self, GatewayError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(retry.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpTransport { client, api_key, retry })
    }

    /// Reads the bearer token from `RIS_API_KEY`.
    pub fn from_env(retry: RetryPolicy) -> Result<Self, GatewayError> {
        Self::new(std::env::var("RIS_API_KEY").ok().filter(|k| !k.is_empty()), retry)
    }

    /// POSTs `body` as JSON and returns the response bytes of the first
    /// successful attempt.
    pub(crate) async fn post_json<B: Serialize + ?Sized>(
        &self,
        url: &str,
        body: &B,
    ) -> Result<Vec<u8>, GatewayError> {
        post_with_retry(&self.client, self.api_key.as_deref(), &self.retry, url, body).await
    }
}

pub(crate) async fn post_with_retry<B: Serialize + ?Sized>(
    client: &reqwest::Client,
    api_key: Option<&str>,
    retry: &RetryPolicy,
    url: &str,
    body: &B,
) -> Result<Vec<u8>, GatewayError> {
    let max_attempts = retry.max_attempts.max(1);
    let mut last_error = String::new();
    let mut rate_limited = false;
    for attempt in 0..max_attempts {
        if attempt > 0 {
            tokio::time::sleep(retry.delay(attempt - 1)).await;
        }
        let mut req = client.post(url).json(body);
        if let Some(key) = api_key {
            req = req.bearer_auth(key);
        }
        match req.send().await {
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    return resp.bytes().await.map(|b| b.to_vec()).map_err(|e| GatewayError::Transport {
                        attempts: attempt + 1,
                        message: format!("reading body from {url}: {e}"),
                    });
                }
                let text = resp.text().await.unwrap_or_default();
                rate_limited = status.as_u16() == 429;
                last_error = format!("{url} returned {status}: {}", text.chars().take(200).collect::<String>());
                if !(rate_limited || status.is_server_error()) {
                    return Err(GatewayError::Transport { attempts: attempt + 1, message: last_error });
                }
                debug!(%url, %status, attempt, "retryable status");
            }
            Err(e) => {
                rate_limited = false;
                last_error = format!("{url}: {e}");
                debug!(%url, attempt, error = %e, "request failed");
            }
        }
    }
    warn!(%url, attempts = max_attempts, "giving up: {last_error}");
    if rate_limited {
        Err(GatewayError::RateLimited { attempts: max_attempts })
    } else {
        Err(GatewayError::Transport { attempts: max_attempts, message: last_error })
    }
}

#[async_trait]
impl ChatTransport for HttpTransport {
    async fn complete(&self, base: &str, request: &ChatRequest) -> Result<String, GatewayError> {
        let url = format!("{}/chat/completions", base.trim_end_matches('/'));
        let bytes = self.post_json(&url, request).await?;
        let invalid = |message: String| GatewayError::InvalidResponse { endpoint: url.clone(), message };
        let parsed: ChatResponse = serde_json::from_slice(&bytes).map_err(|e| invalid(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| invalid("no choices[0].message.content".into()))
    }
}
