//! Core library for auditing step-structured reasoning traces.
//!
//! The crate is network-free. It covers:
//!
//! - [`trace`]: the domain model, step parsing, answer extraction, prompt
//!   rendering and the JSONL codecs for records and traces.
//! - [`judging`]: judge prompt templates, verdict parsing, majority voting and
//!   the Reasoning Integrity Score (RIS).
//! - [`stats`]: agreement, effect-size, correlation and power statistics plus
//!   the corpus-level tables built from scored traces.
//! - [`features`]: structural metrics, the hashing embedder and feature
//!   assembly for the distilled verifier.
//! - [`verifier`]: the focal-loss MLP, its trainer, evaluation metrics and the
//!   binary model format.

pub mod features;
pub mod jsonl;
pub mod judging;
pub mod stats;
pub mod trace;
pub mod verifier;

pub use features::{FeatureVector, NormStats, StructuralFeatures};
pub use judging::{ErrorCategory, MisuseVerdict, RubricMode, ScoredTrace, StepVerdict};
pub use trace::{Condition, Dataset, PromptPair, ReasoningStep, ReasoningTrace, TaskRecord};
pub use verifier::{EvalReport, TrainConfig, VerifierModel};
