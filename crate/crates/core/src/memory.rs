//! Memory bank of historical error feedback.
//!
//! Feedback is appended as the search expands nodes. Once enough entries have
//! piled up since the last summary, the whole history is re-summarized by an
//! LLM and the summary becomes the guidance fed into prompt rewrites.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::gateway::{Gateway, Role};
use crate::transitions::{Bindings, TemplateName, TemplateSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("feedback text is empty")]
    EmptyFeedback,
    #[error("summarize threshold must be at least 1")]
    ZeroThreshold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub index: u64,
    pub text: String,
    pub epoch: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryState {
    pub entries: Vec<FeedbackEntry>,
    pub summary: String,
    pub summarized_through: u64,
}

impl MemoryState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn max_index(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.index)
    }

    pub fn unsummarized(&self) -> u64 {
        self.max_index() - self.summarized_through
    }

    pub fn record_feedback(&mut self, text: &str, epoch: u64) -> Result<u64, MemoryError> {
        if text.trim().is_empty() {
            return Err(MemoryError::EmptyFeedback);
        }
        let index = self.max_index() + 1;
        self.entries.push(FeedbackEntry {
            index,
            text: text.to_string(),
            epoch,
        });
        Ok(index)
    }

    /// The summarization meta-prompt over every entry.
    pub fn render_summary_prompt(&self, templates: &TemplateSet) -> Result<String, crate::transitions::TemplateError> {
        let mut b = Bindings::new();
        for e in &self.entries {
            b.items.push(
                [
                    ("index".to_string(), e.index.to_string()),
                    ("Historical errors".to_string(), e.text.clone()),
                ]
                .into_iter()
                .collect(),
            );
        }
        templates.render(TemplateName::MemorySummarize, &b)
    }

    /// Re-summarizes all entries when at least `threshold` are new since the
    /// last summary. Returns whether a summary was written. Backend failures
    /// leave the memory untouched.
    pub fn maybe_summarize(
        &mut self,
        gateway: &Gateway,
        role: Role,
        templates: &TemplateSet,
        threshold: u64,
    ) -> Result<bool, MemoryError> {
        if threshold == 0 {
            return Err(MemoryError::ZeroThreshold);
        }
        if self.unsummarized() < threshold {
            return Ok(false);
        }
        let prompt = match self.render_summary_prompt(templates) {
            Ok(p) => p,
            Err(e) => {
                warn!(error = %e, "cannot render memory summary prompt");
                return Ok(false);
            }
        };
        let reply = gateway.request(role, prompt).and_then(|r| gateway.complete(&r));
        match reply {
            Ok(r) if !r.text.trim().is_empty() => {
                self.summary = r.text.trim().to_string();
                self.summarized_through = self.max_index();
                Ok(true)
            }
            Ok(_) => {
                warn!("memory summary came back empty, keeping previous state");
                Ok(false)
            }
            Err(e) => {
                warn!(error = %e, "memory summarization failed, keeping previous state");
                Ok(false)
            }
        }
    }

    /// The summary when there is one, else the `max_raw` most recent entries
    /// as a numbered list, oldest first.
    pub fn guidance_text(&self, max_raw: usize) -> String {
        if !self.summary.is_empty() {
            return self.summary.clone();
        }
        let skip = self.entries.len().saturating_sub(max_raw);
        self.entries[skip..]
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{}. {}", i + 1, e.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}
