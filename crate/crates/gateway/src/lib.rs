//! Network side of the pipeline: chat-completion transport with retries, the
//! on-disk verdict cache, the judge panel, trace generation and the
//! embedding-provider client.
//!
//! All judging logic that does not touch the network (prompt rendering,
//! verdict parsing, voting, RIS) lives in `ris_core::judging`; this crate only
//! moves text to and from endpoints.

mod cache;
mod embed;
mod error;
mod generate;
mod panel;
mod transport;

pub use cache::{cache_key, CacheEntry, VerdictCache};
pub use embed::{EmbeddingClient, EMBED_BATCH};
pub use error::GatewayError;
pub use generate::{GenerationConfig, Generator};
pub use panel::{majority_label, JudgeConfig, JudgePanel, JudgeSpec};
pub use transport::{ChatMessage, ChatRequest, ChatTransport, HttpTransport, RetryPolicy};
