//! Client for the embedding-provider protocol: `POST {base}/v1/embed` with
//! `{"texts": [...]}`, answered by `{"vectors": [[f32; 384]...], "dim", "model"}`.

use futures::future::try_join_all;
use ris_core::features::{l2_normalize, EMBEDDING_DIM};
use serde::{Deserialize, Serialize};

use crate::transport::{post_with_retry, RetryPolicy};
use crate::GatewayError;

/// Texts per request; larger inputs are split and sent concurrently.
pub const EMBED_BATCH: usize = 64;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

#[derive(Clone)]
pub struct EmbeddingClient {
    client: reqwest::Client,
    url: String,
    retry: RetryPolicy,
}

impl EmbeddingClient {
    pub fn new(base: &str, retry: RetryPolicy) -> Result<Self, GatewayError> {
        let client = reqwest::Client::builder()
            .timeout(std::time::Duration::from_millis(retry.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(EmbeddingClient { client, url: format!("{}/v1/embed", base.trim_end_matches('/')), retry })
    }

    /// Unit-norm 384-dim vectors, one per text, in input order.
    pub async fn fetch_embedding(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let batches = try_join_all(texts.chunks(EMBED_BATCH).map(|chunk| self.fetch_batch(chunk))).await?;
        Ok(batches.into_iter().flatten().collect())
    }

    async fn fetch_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let bytes = post_with_retry(&self.client, None, &self.retry, &self.url, &EmbedRequest { texts }).await?;
        let invalid = |message: String| GatewayError::InvalidResponse { endpoint: self.url.clone(), message };
        let resp: EmbedResponse = serde_json::from_slice(&bytes).map_err(|e| invalid(e.to_string()))?;
        if resp.dim != EMBEDDING_DIM {
            return Err(GatewayError::DimensionMismatch { expected: EMBEDDING_DIM, got: resp.dim });
        }
        if resp.vectors.len() != texts.len() {
            return Err(invalid(format!("{} vectors for {} texts", resp.vectors.len(), texts.len())));
        }
        resp.vectors
            .into_iter()
            .map(|mut v| {
                if v.len() != EMBEDDING_DIM {
                    return Err(GatewayError::DimensionMismatch { expected: EMBEDDING_DIM, got: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(invalid("non-finite embedding component".into()));
                }
                l2_normalize(&mut v);
                Ok(v)
            })
            .collect()
    }
}
