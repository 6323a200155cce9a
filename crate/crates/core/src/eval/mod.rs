//! Labeled news data, evaluation prompts, response parsing and accuracy.
//!
//! A prompt's reward is the base model's exact accuracy on the validation
//! subset. Samples travel in batches of at most `batch_size` per call; a batch
//! whose reply leaves any answer unparsed is re-asked once, and whatever is
//! still unparsed counts as wrong.

mod dataset;
mod parse;
mod prompts;

use std::collections::BTreeMap;
use std::path::PathBuf;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, GenerationRequest, Role};
use crate::transitions::{Bindings, TemplateError, TemplateName, TemplateSet};

pub use dataset::{Dataset, Label, LabeledSample, Provenance, SamplingRecord};
pub use parse::{first_label_token, parse_eval_response, ParseStatus, ParsedAnswer};
pub use prompts::{build_eval_prompt, single_input, EvalMode};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    BadLine { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("validation fraction {0} is outside (0, 1]")]
    BadFraction(f64),
    #[error("{mode:?} mode cannot take {count} sample(s)")]
    ModeMismatch { mode: EvalMode, count: usize },
    #[error("prediction {position} is for `{found}` but sample is `{expected}`")]
    IdMismatch {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("nothing to score")]
    NothingToScore,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub predicted: Option<Label>,
    pub rationale: String,
    pub parse_status: ParseStatus,
}

impl Prediction {
    pub fn new(sample_id: impl Into<String>, answer: ParsedAnswer) -> Self {
        Self {
            sample_id: sample_id.into(),
            predicted: answer.predicted,
            rationale: answer.rationale,
            parse_status: answer.status,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub total: u64,
    pub correct: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub correct: u64,
    pub total: u64,
    /// Exact `correct / total`.
    pub accuracy: Ratio<u64>,
    pub accuracy_value: f64,
    pub per_class: BTreeMap<Label, ClassCounts>,
    /// Malformed plus missing answers.
    pub malformed_count: u64,
    pub error_strings: Vec<String>,
}

/// Counts correct predictions. Unparsed answers are wrong.
pub fn score_accuracy(predictions: &[Prediction], samples: &[LabeledSample]) -> Result<EvalReport, EvalError> {
    if samples.is_empty() || predictions.is_empty() {
        return Err(EvalError::NothingToScore);
    }
    if predictions.len() != samples.len() {
        return Err(EvalError::IdMismatch {
            position: predictions.len().min(samples.len()),
            expected: samples.get(predictions.len()).map(|s| s.id.clone()).unwrap_or_default(),
            found: predictions.get(samples.len()).map(|p| p.sample_id.clone()).unwrap_or_default(),
        });
    }
    let mut correct = 0u64;
    let mut malformed = 0u64;
    let mut per_class: BTreeMap<Label, ClassCounts> = BTreeMap::new();
    for (i, (p, s)) in predictions.iter().zip(samples).enumerate() {
        if p.sample_id != s.id {
            return Err(EvalError::IdMismatch {
                position: i,
                expected: s.id.clone(),
                found: p.sample_id.clone(),
            });
        }
        let class = per_class.entry(s.label).or_default();
        class.total += 1;
        if p.parse_status != ParseStatus::Ok {
            malformed += 1;
        } else if p.predicted == Some(s.label) {
            correct += 1;
            class.correct += 1;
        }
    }
    let total = samples.len() as u64;
    Ok(EvalReport {
        correct,
        total,
        accuracy: Ratio::new(correct, total),
        accuracy_value: correct as f64 / total as f64,
        per_class,
        malformed_count: malformed,
        error_strings: Vec::new(),
    })
}

pub fn is_error(p: &Prediction, s: &LabeledSample) -> bool {
    p.parse_status != ParseStatus::Ok || p.predicted != Some(s.label)
}

/// One error-string block per wrong or unparsed answer, in sample order, at
/// most `cap` blocks.
pub fn collect_error_strings(
    templates: &TemplateSet,
    predictions: &[Prediction],
    samples: &[LabeledSample],
    prompt: &str,
    cap: usize,
) -> Result<Vec<String>, EvalError> {
    let mut out = Vec::new();
    for (i, (p, s)) in predictions.iter().zip(samples).enumerate() {
        if out.len() >= cap {
            break;
        }
        if !is_error(p, s) {
            continue;
        }
        let response = if p.rationale.is_empty() { "(no answer)".to_string() } else { p.rationale.clone() };
        out.push(templates.render(
            TemplateName::ErrorString,
            &Bindings::new()
                .set("index", (i + 1).to_string())
                .set("input format", single_input(templates, prompt, &s.text)?)
                .set("response", response)
                .set("label", s.label.option_text())
                .set("prediction", p.predicted.map_or("unparsed", Label::option_text)),
        )?);
    }
    Ok(out)
}

/// Outcome of scoring one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub predictions: Vec<Prediction>,
}

/// One line of the comment export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub id: String,
    /// `"real"`, `"fake"` or `"unparsed"`.
    pub result: String,
    pub reason: String,
}

/// Runs the base model over samples with a given prompt.
pub struct Evaluator<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
    /// 1 selects single-sample prompts; larger values batch.
    pub batch_size: usize,
    pub error_cap: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(gateway: &'a Gateway, templates: &'a TemplateSet, batch_size: usize) -> Self {
        Self {
            gateway,
            templates,
            batch_size: batch_size.max(1),
            error_cap: batch_size.max(1),
        }
    }

    fn mode(&self) -> EvalMode {
        if self.batch_size == 1 {
            EvalMode::Single
        } else {
            EvalMode::BatchEval
        }
    }

    fn run_batches(
        &self,
        prompt: &str,
        samples: &[LabeledSample],
        mode: EvalMode,
        reask: bool,
    ) -> Result<Vec<Prediction>, EvalError> {
        let chunks: Vec<&[LabeledSample]> = samples.chunks(self.batch_size).collect();
        let requests = chunks
            .iter()
            .map(|c| {
                let text = build_eval_prompt(self.templates, prompt, c, mode, self.batch_size)?;
                Ok(self.gateway.request(Role::Base, text)?)
            })
            .collect::<Result<Vec<GenerationRequest>, EvalError>>()?;
        let replies = self.gateway.complete_all(&requests, true);

        let mut parsed: Vec<Vec<ParsedAnswer>> = Vec::with_capacity(chunks.len());
        let mut retry_idx = Vec::new();
        for (i, (reply, chunk)) in replies.into_iter().zip(&chunks).enumerate() {
            let answers = parse_eval_response(&reply?.text, mode, chunk.len());
            if reask && answers.iter().any(|a| a.status != ParseStatus::Ok) {
                retry_idx.push(i);
            }
            parsed.push(answers);
        }
        if !retry_idx.is_empty() {
            let retries: Vec<GenerationRequest> = retry_idx
                .iter()
                .map(|&i| {
                    let mut r = requests[i].clone();
                    r.attempt = 1;
                    r
                })
                .collect();
            for (&i, reply) in retry_idx.iter().zip(self.gateway.complete_all(&retries, false)) {
                parsed[i] = parse_eval_response(&reply?.text, mode, chunks[i].len());
            }
        }
        Ok(parsed
            .into_iter()
            .flatten()
            .zip(samples)
            .map(|(a, s)| Prediction::new(s.id.clone(), a))
            .collect())
    }

    /// Scores `prompt` on `samples` and collects error strings.
    pub fn evaluate(&self, prompt: &str, samples: &[LabeledSample]) -> Result<EvalOutcome, EvalError> {
        if samples.is_empty() {
            return Err(EvalError::NothingToScore);
        }
        let predictions = self.run_batches(prompt, samples, self.mode(), true)?;
        let mut report = score_accuracy(&predictions, samples)?;
        report.error_strings = collect_error_strings(self.templates, &predictions, samples, prompt, self.error_cap)?;
        Ok(EvalOutcome { report, predictions })
    }

    /// Asks for a verdict plus a reason for every sample.
    pub fn comment(&self, prompt: &str, samples: &[LabeledSample]) -> Result<Vec<CommentRecord>, EvalError> {
        if samples.is_empty() {
            return Err(EvalError::NothingToScore);
        }
        let predictions = self.run_batches(prompt, samples, EvalMode::BatchComment, false)?;
        Ok(predictions
            .into_iter()
            .map(|p| CommentRecord {
                id: p.sample_id,
                result: p.predicted.map_or("unparsed", Label::as_str).to_string(),
                reason: p.rationale,
            })
            .collect())
    }
}
