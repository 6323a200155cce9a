//! Prompt optimization by Monte Carlo Tree Search over error-feedback edits.
//!
//! The search treats each candidate prompt as a state and each piece of
//! LLM-written error feedback as an action. Rewards are validation accuracy
//! of a base model prompted with the state. A memory bank of summarized
//! feedback and local resampling of freshly expanded prompts keep the search
//! from fixating on instance-specific edits.
//!
//! # Modules
//! - [`search`]: tree, UCT selection, backpropagation and the search loop.
//! - [`transitions`]: meta-prompt templates, action generation, prompt rewrites, resampling.
//! - [`memory`]: the feedback memory bank.
//! - [`gateway`]: the LLM boundary (HTTP, replay and scripted backends, cache, retry).
//! - [`eval`]: datasets, evaluation prompts, response parsing and accuracy scoring.
//! - [`landscape`]: a scripted model with a planted keyword optimum, for tests and benchmarks.

pub mod eval;
pub mod gateway;
pub mod landscape;
pub mod memory;
pub mod search;
pub mod transitions;

pub use eval::{Dataset, EvalReport, Label, LabeledSample, Prediction, ParseStatus};
pub use gateway::{Gateway, GatewayError, GenerationRequest, GenerationResponse, LlmRoleConfig, Role};
pub use memory::MemoryState;
pub use search::{
    run_search, Checkpoint, SearchConfig, SearchError, SearchResult, SearchTree, StateId, ActionId,
};
pub use transitions::{TemplateName, TemplateSet};
