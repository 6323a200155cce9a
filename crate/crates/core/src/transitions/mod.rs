//! Actions, transitions and resampling.
//!
//! An action is error feedback written by the actor model after seeing the
//! examples a prompt got wrong. A transition asks the optimizer model to
//! rewrite the prompt given that feedback, the prompts along the current path
//! and the memory bank's guidance. None of these functions touch the search
//! tree.

mod blocks;
mod templates;

use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::warn;

use crate::gateway::{Gateway, GatewayError, Role};

pub use blocks::{parse_prompt_blocks, wrap_prompt_blocks, PromptBlocks, END, START};
pub use templates::{Bindings, TemplateError, TemplateName, TemplateSet, ALLOWED_PLACEHOLDERS};

#[derive(Debug, Error)]
pub enum TransitionError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("actor response contained no suggestions")]
    NoSuggestions,
    #[error("optimizer returned no <START>...<END> prompt after {attempts} attempt(s)")]
    NoPrompts { attempts: u32 },
    #[error("steps_per_gradient must be at least 1")]
    ZeroSteps,
}

/// Feedback proposed by the actor, before it is attached to the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionProposal {
    pub feedback_text: String,
    pub source_error_digest: String,
}

/// Result of one actor call.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActionBatch {
    pub actions: Vec<ActionProposal>,
    /// No errors to fix: the state is terminal.
    pub terminal: bool,
    /// Fewer suggestion blocks than requested were found.
    pub short: bool,
}

/// Inputs that shape a rewrite beyond the current prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionContext {
    /// Root first, current prompt last.
    pub trajectory_prompts: Vec<String>,
    pub memory_guidance: String,
    pub steps_per_gradient: usize,
}

/// A rewritten prompt one level below its parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePrompt {
    pub text: String,
    pub depth: usize,
}

pub fn error_digest(error_strings: &[String]) -> String {
    let mut h = Sha256::new();
    for e in error_strings {
        h.update((e.len() as u64).to_le_bytes());
        h.update(e.as_bytes());
    }
    hex::encode(h.finalize())
}

pub(crate) fn join_error_strings(error_strings: &[String]) -> String {
    format!("\n{}\n", error_strings.join("\n\n"))
}

/// Oldest first, one numbered line per prompt.
pub fn render_trajectory(prompts: &[String]) -> String {
    prompts
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{}. {p}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn ordinal_item(line: &str) -> Option<&str> {
    let t = line.trim_start();
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 3 {
        return None;
    }
    let rest = &t[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    Some(rest.trim())
}

/// Splits an actor reply into at most `d` suggestion blocks.
///
/// Lines starting with an ordinal (`1.`, `2)`) open items; following lines
/// belong to the open item. More than `d` items are grouped into `d`
/// contiguous runs. With no numbered items the whole reply is one block.
pub fn split_suggestions(response: &str, d: usize) -> Vec<String> {
    let mut items: Vec<Vec<&str>> = Vec::new();
    for line in response.lines() {
        if let Some(first) = ordinal_item(line) {
            items.push(vec![first]);
        } else if let Some(open) = items.last_mut() {
            if !line.trim().is_empty() {
                open.push(line.trim());
            }
        }
    }
    let items: Vec<String> = items
        .into_iter()
        .map(|lines| lines.join("\n").trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        let whole = response.trim();
        return if whole.is_empty() || d == 0 { Vec::new() } else { vec![whole.to_string()] };
    }
    if items.len() <= d {
        return items;
    }
    let (base, extra) = (items.len() / d, items.len() % d);
    let mut out = Vec::with_capacity(d);
    let mut it = items.into_iter();
    for g in 0..d {
        let size = base + usize::from(g < extra);
        out.push(it.by_ref().take(size).collect::<Vec<_>>().join("\n"));
    }
    out
}

/// Asks the actor for feedback on the examples `prompt` got wrong.
pub fn generate_actions(
    gateway: &Gateway,
    templates: &TemplateSet,
    prompt: &str,
    error_strings: &[String],
    d: usize,
) -> Result<ActionBatch, TransitionError> {
    if error_strings.is_empty() {
        return Ok(ActionBatch { terminal: true, ..Default::default() });
    }
    let text = templates.render(
        TemplateName::ErrorFeedback,
        &Bindings::new()
            .set("prompt", prompt)
            .set("error strings", join_error_strings(error_strings)),
    )?;
    let response = gateway.complete(&gateway.request(Role::Actor, text)?)?;
    let blocks = split_suggestions(&response.text, d.max(1));
    if blocks.is_empty() {
        return Err(TransitionError::NoSuggestions);
    }
    let short = blocks.len() < d;
    if short {
        warn!(wanted = d, got = blocks.len(), "actor returned fewer suggestions than requested");
    }
    let digest = error_digest(error_strings);
    Ok(ActionBatch {
        actions: blocks
            .into_iter()
            .map(|feedback_text| ActionProposal {
                feedback_text,
                source_error_digest: digest.clone(),
            })
            .collect(),
        terminal: false,
        short,
    })
}

/// Renders the state-transit meta-prompt for one action.
pub fn render_transition(
    templates: &TemplateSet,
    prompt: &str,
    error_strings: &[String],
    feedback: &str,
    ctx: &TransitionContext,
) -> Result<String, TemplateError> {
    templates.render(
        TemplateName::StateTransit,
        &Bindings::new()
            .set("prompt", prompt)
            .set("error strings", join_error_strings(error_strings))
            .set("error feedback", feedback)
            .set("trajectory prompts", format!("\n{}\n", render_trajectory(&ctx.trajectory_prompts)))
            .set("Memory", ctx.memory_guidance.clone())
            .set("steps_per_gradient", ctx.steps_per_gradient.to_string()),
    )
}

/// Rewrites `prompt` by applying one piece of feedback. One optimizer call,
/// plus one uncached retry if the reply has no wrapped prompt.
pub fn apply_transition(
    gateway: &Gateway,
    templates: &TemplateSet,
    prompt: &str,
    depth: usize,
    error_strings: &[String],
    feedback: &str,
    ctx: &TransitionContext,
) -> Result<Vec<CandidatePrompt>, TransitionError> {
    if ctx.steps_per_gradient == 0 {
        return Err(TransitionError::ZeroSteps);
    }
    let text = render_transition(templates, prompt, error_strings, feedback, ctx)?;
    let mut request = gateway.request(Role::Optimizer, text)?;
    let mut parsed = parse_prompt_blocks(&gateway.complete(&request)?.text);
    if parsed.blocks.is_empty() {
        warn!("optimizer reply had no wrapped prompt, retrying once");
        request.attempt = 1;
        parsed = parse_prompt_blocks(&gateway.complete_fresh(&request)?.text);
    }
    if parsed.blocks.is_empty() {
        return Err(TransitionError::NoPrompts { attempts: 2 });
    }
    Ok(parsed
        .blocks
        .into_iter()
        .map(|text| CandidatePrompt { text, depth: depth + 1 })
        .collect())
}

/// Outcome of resampling around a freshly advanced prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleOutcome {
    pub text: String,
    pub reward: f64,
    /// A variant beat the original.
    pub replaced: bool,
    pub variants_evaluated: usize,
    /// Every variant was lost to a failure or parse error.
    pub warned: bool,
}

/// Generates `d1` meaning-preserving variants of `prompt` and keeps the best
/// of the original and the variants. The original wins ties; among variants
/// the earliest wins.
pub fn resample_state<E>(
    gateway: &Gateway,
    templates: &TemplateSet,
    prompt: &str,
    reward: f64,
    d1: usize,
    mut reward_fn: impl FnMut(&str) -> Result<f64, E>,
) -> Result<ResampleOutcome, TemplateError>
where
    E: std::fmt::Display,
{
    let mut best = ResampleOutcome {
        text: prompt.to_string(),
        reward,
        replaced: false,
        variants_evaluated: 0,
        warned: false,
    };
    if d1 == 0 {
        return Ok(best);
    }
    let text = templates.render(
        TemplateName::Resample,
        &Bindings::new().set("num", d1.to_string()).set("prompt", prompt),
    )?;
    let reply = gateway
        .request(Role::Optimizer, text)
        .and_then(|r| gateway.complete(&r));
    let variants = match reply {
        Ok(r) => parse_prompt_blocks(&r.text).blocks,
        Err(e) => {
            warn!(error = %e, "resampling call failed, keeping original");
            Vec::new()
        }
    };
    for variant in variants.into_iter().take(d1) {
        match reward_fn(&variant) {
            Ok(r) => {
                best.variants_evaluated += 1;
                if r > best.reward {
                    best.text = variant;
                    best.reward = r;
                    best.replaced = true;
                }
            }
            Err(e) => warn!(error = %e, "dropping variant that failed evaluation"),
        }
    }
    if best.variants_evaluated == 0 {
        warn!("no usable resampled variant, keeping original");
        best.warned = true;
    }
    Ok(best)
}
