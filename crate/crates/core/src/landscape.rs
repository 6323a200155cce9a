//! A scripted model with a planted optimum.
//!
//! Every sample in a [`synthetic_dataset`] names one focus keyword. The
//! scripted base model classifies a sample correctly exactly when the prompt
//! mentions that sample's keyword, so on a balanced subset the reward is the
//! fraction of target keywords in the prompt. The actor suggests keywords it
//! sees in misclassified samples but is sometimes distracted by
//! instance-specific details; the optimizer applies suggestions and
//! occasionally loses earlier guidance while rewriting; memory summaries
//! surface the most frequently suggested terms; resampling produces small
//! perturbations, some of which add a relevant term.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::sync::Arc;

use crate::eval::{Dataset, Label, LabeledSample};
use crate::gateway::{BackendKind, Gateway, LlmRoleConfig, Role, Script, ScriptCall, ScriptedBackend};
use crate::search::SearchConfig;

pub const DEFAULT_KEYWORDS: [&str; 5] = [
    "source attribution",
    "emotional tone",
    "internal consistency",
    "verifiable evidence",
    "headline exaggeration",
];

const ENTITIES: [&str; 8] = [
    "Mayor Ellison",
    "the Harbor Street bakery",
    "Coach Ramirez",
    "the river festival",
    "Dr. Okafor",
    "the night train",
    "councillor Brandt",
    "the county fair",
];

/// Neutral journalism vocabulary the resampler may borrow from.
const NEUTRAL_TERMS: [&str; 5] = ["publication date", "author byline", "reader comments", "photo credits", "word choice"];

const REAL_CUE: &str = "officials confirmed the figures in a public statement";
const FAKE_CUE: &str = "a viral post claims a secret cover-up";

/// Fraction of `keywords` present in `prompt` (case-insensitive).
pub fn keyword_fraction(prompt: &str, keywords: &[String]) -> f64 {
    let lower = prompt.to_lowercase();
    let hits = keywords.iter().filter(|k| lower.contains(&k.to_lowercase())).count();
    hits as f64 / keywords.len().max(1) as f64
}

/// `per_keyword` samples for each keyword, labels alternating, every keyword
/// equally represented.
pub fn synthetic_dataset(keywords: &[String], per_keyword: usize) -> Dataset {
    let mut samples = Vec::new();
    for j in 0..per_keyword {
        for (k, kw) in keywords.iter().enumerate() {
            let n = samples.len();
            let label = if (j + k) % 2 == 0 { Label::Real } else { Label::Fake };
            let cue = if label == Label::Real { REAL_CUE } else { FAKE_CUE };
            samples.push(LabeledSample {
                id: format!("syn-{n:03}"),
                text: format!("{} {cue}. Focus: {kw}", ENTITIES[n % ENTITIES.len()]),
                label,
            });
        }
    }
    Dataset::new(samples).expect("generated ids are unique")
}

/// A gateway that answers every role from `landscape`.
pub fn landscape_gateway(landscape: KeywordLandscape, seed: u64) -> Gateway {
    let backend = Arc::new(ScriptedBackend::new(Arc::new(landscape), seed));
    Role::ALL.into_iter().fold(Gateway::new(), |gw, r| {
        gw.with_role(LlmRoleConfig::default_for(r).with_backend(BackendKind::Scripted), backend.clone())
    })
}

/// Default hyperparameters, scored on the whole (balanced) dataset so the
/// reward equals the keyword fraction exactly.
pub fn benchmark_config(seed: u64) -> SearchConfig {
    SearchConfig {
        validation_fraction: 1.0,
        rng_seed: seed,
        ..SearchConfig::default()
    }
}

/// Scripted responses for all three roles over the planted landscape.
#[derive(Debug, Clone)]
pub struct KeywordLandscape {
    pub keywords: Vec<String>,
    /// Chance that one actor suggestion is an instance-specific distraction.
    pub distractor_rate: f64,
    /// Chance that a rewrite drops one earlier guidance sentence.
    pub drop_rate: f64,
    /// Chance that a resampled variant borrows a term from the vocabulary.
    pub explore_rate: f64,
}

impl Default for KeywordLandscape {
    fn default() -> Self {
        Self {
            keywords: DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            distractor_rate: 0.8,
            drop_rate: 0.6,
            explore_rate: 0.5,
        }
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let Some(i) = text.find(start) else { return "" };
    let rest = &text[i + start.len()..];
    match rest.find(end) {
        Some(j) => &rest[..j],
        None => rest,
    }
}

fn quoted_terms(text: &str) -> Vec<String> {
    text.split('"')
        .skip(1)
        .step_by(2)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn rng_for(call: &ScriptCall<'_>, salt: u64) -> ChaCha8Rng {
    let head = u64::from_str_radix(&call.digest[..16.min(call.digest.len())], 16).unwrap_or(0);
    ChaCha8Rng::seed_from_u64(head ^ call.seed.rotate_left(17) ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Splits a prompt into its leading text and the appended guidance sentences.
fn split_guidance(prompt: &str) -> (String, Vec<String>) {
    let mut parts = prompt.split(" Consider ");
    let base = parts.next().unwrap_or("").to_string();
    (base, parts.map(|s| s.trim_end_matches('.').to_string()).collect())
}

fn join_guidance(base: &str, terms: &[String]) -> String {
    let mut out = base.to_string();
    for t in terms {
        out.push_str(&format!(" Consider {t}."));
    }
    out
}

impl KeywordLandscape {
    fn focus<'a>(&'a self, news: &str) -> Option<&'a String> {
        let lower = news.to_lowercase();
        self.keywords.iter().find(|k| lower.contains(&k.to_lowercase()))
    }

    fn judge(&self, header: &str, news: &str) -> Label {
        let truth = if news.contains("confirmed") { Label::Real } else { Label::Fake };
        match self.focus(news) {
            Some(k) if !header.to_lowercase().contains(&k.to_lowercase()) => match truth {
                Label::Real => Label::Fake,
                Label::Fake => Label::Real,
            },
            _ => truth,
        }
    }

    fn numbered_sections<'a>(body: &'a str, marker: &str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut i = 1;
        while let Some(start) = body.find(&format!("{marker} {i}: ")) {
            let from = start + format!("{marker} {i}: ").len();
            let rest = &body[from..];
            let end = rest.find(&format!("\n\n{marker} {}: ", i + 1)).unwrap_or(rest.len());
            out.push(&rest[..end]);
            i += 1;
        }
        out
    }

    fn base(&self, prompt: &str) -> String {
        if prompt.contains("questions as input") {
            let header = prompt.split("\n\nYou will receive").next().unwrap_or("");
            Self::numbered_sections(prompt, "question")
                .iter()
                .enumerate()
                .map(|(i, q)| {
                    let option = match self.judge(header, q) {
                        Label::Real => "A",
                        Label::Fake => "B",
                    };
                    format!("For Question {}: [{option}]", i + 1)
                })
                .collect::<Vec<_>>()
                .join("\n")
        } else if prompt.contains("sentences from the news") {
            let header = prompt.split("\n\nYou will receive").next().unwrap_or("");
            Self::numbered_sections(prompt, "news and social media message")
                .iter()
                .enumerate()
                .map(|(i, news)| {
                    let verdict = self.judge(header, news);
                    let reason = match (verdict, self.focus(news)) {
                        (Label::Real, Some(k)) => format!("the report holds up on {k}"),
                        (Label::Fake, Some(k)) => format!("the report fails on {k}"),
                        (Label::Real, None) => "the report reads as routine coverage".into(),
                        (Label::Fake, None) => "the report reads as a rumor".into(),
                    };
                    format!("For Text {}: [Result: {}. Reason: {reason}]", i + 1, verdict.option_text())
                })
                .collect::<Vec<_>>()
                .join("\n")
        } else {
            let header = prompt.split("\n\nNews or social media message: ").next().unwrap_or("");
            let news = between(prompt, "News or social media message: ", "\n\nOptions:");
            let option = match self.judge(header, news) {
                Label::Real => "A",
                Label::Fake => "B",
            };
            format!("The message seems plausible enough.\n<answer>{option}</answer>")
        }
    }

    fn actor(&self, call: &ScriptCall<'_>) -> String {
        let current = between(call.prompt, "My current prompt is: ", "\nBut this prompt gets");
        let errors = between(call.prompt, "examples wrong: ", "\nPlease carefully examine");
        let current_lower = current.to_lowercase();
        let errors_lower = errors.to_lowercase();
        let missing: Vec<&String> = self
            .keywords
            .iter()
            .filter(|k| errors_lower.contains(&k.to_lowercase()) && !current_lower.contains(&k.to_lowercase()))
            .collect();
        let entities: Vec<&str> = ENTITIES.iter().copied().filter(|e| errors.contains(e)).collect();
        let mut rng = rng_for(call, 1);
        let mut lines = vec!["The prompt gives the model no concrete criteria, so it guesses.".to_string()];
        for i in 1..=3 {
            let distracted = missing.is_empty() || rng.random_bool(self.distractor_rate);
            let line = match (distracted, entities.choose(&mut rng)) {
                (true, Some(e)) => format!("{i}. Mention \"{e}\" explicitly when judging such stories."),
                (true, None) | (false, _) => match missing.choose(&mut rng) {
                    Some(k) => format!("{i}. Tell the model to weigh \"{k}\" before deciding."),
                    None => format!("{i}. Ask the model to read the message twice."),
                },
            };
            lines.push(line);
        }
        lines.join("\n")
    }

    fn transit(&self, call: &ScriptCall<'_>) -> String {
        let current = between(call.prompt, "My current prompt is: ", "\nBut this prompt gets");
        let feedback = between(call.prompt, "the reasons are: ", "\nThere is a list of former prompts");
        let memory = between(call.prompt, "errors and suggestions: ", "\nBased on the above information");
        let steps: usize = between(call.prompt, "please write ", " new prompts")
            .trim()
            .parse()
            .unwrap_or(1);
        let memory_terms = quoted_terms(memory);
        let mut blocks = Vec::new();
        for b in 0..steps.max(1) {
            let mut rng = rng_for(call, 10 + b as u64);
            let (base, mut terms) = split_guidance(current);
            if !terms.is_empty() && rng.random_bool(self.drop_rate) {
                let i = rng.random_range(0..terms.len());
                terms.remove(i);
            }
            for t in quoted_terms(feedback) {
                if !terms.contains(&t) {
                    terms.push(t);
                }
            }
            if let Some(t) = memory_terms.iter().find(|t| !terms.contains(t)) {
                terms.push(t.clone());
            }
            blocks.push(format!("<START>{}<END>", join_guidance(&base, &terms)));
        }
        blocks.join("\n")
    }

    fn resample(&self, call: &ScriptCall<'_>) -> String {
        let num: usize = between(call.prompt, "Generate ", " variants").trim().parse().unwrap_or(1);
        let original = between(call.prompt, "variants of the prompt ", " while preserving the original meaning");
        let mut out = Vec::new();
        for v in 0..num {
            let mut rng = rng_for(call, 100 + v as u64);
            let (base, mut terms) = split_guidance(original);
            terms.shuffle(&mut rng);
            if !terms.is_empty() && rng.random_bool(0.3) {
                terms.pop();
            }
            if rng.random_bool(self.explore_rate) {
                let pool: Vec<&str> = self
                    .keywords
                    .iter()
                    .map(String::as_str)
                    .chain(NEUTRAL_TERMS)
                    .collect();
                let t = pool.choose(&mut rng).expect("non-empty pool").to_string();
                if !terms.contains(&t) {
                    terms.push(t);
                }
            }
            out.push(format!("<START>{}<END>", join_guidance(&base, &terms)));
        }
        out.join("\n")
    }

    fn summarize(&self, prompt: &str) -> String {
        let mut counts: Vec<(String, usize)> = Vec::new();
        for t in quoted_terms(prompt) {
            match counts.iter_mut().find(|(x, _)| *x == t) {
                Some((_, c)) => *c += 1,
                None => counts.push((t, 1)),
            }
        }
        counts.sort_by_key(|c| std::cmp::Reverse(c.1));
        counts
            .into_iter()
            .take(3)
            .map(|(t, _)| format!("- Errors keep pointing at \"{t}\"."))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Script for KeywordLandscape {
    fn respond(&self, call: &ScriptCall<'_>) -> String {
        match call.role {
            Role::Base => self.base(call.prompt),
            Role::Actor => self.actor(call),
            Role::Optimizer if call.prompt.starts_with("Summarize the following") => self.summarize(call.prompt),
            Role::Optimizer if call.prompt.starts_with("Generate ") => self.resample(call),
            Role::Optimizer => self.transit(call),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Evaluator;
    use crate::transitions::TemplateSet;

    fn gateway(seed: u64) -> Gateway {
        landscape_gateway(KeywordLandscape::default(), seed)
    }

    #[test]
    fn reward_equals_keyword_fraction_on_balanced_data() {
        let land = KeywordLandscape::default();
        let ds = synthetic_dataset(&land.keywords, 4);
        let gw = gateway(1);
        let ts = TemplateSet::default();
        for batch in [1, 32] {
            let ev = Evaluator::new(&gw, &ts, batch);
            for prompt in [
                "Judge the news.",
                "Judge the news. Consider emotional tone.",
                "Judge. Consider emotional tone. Consider source attribution. Consider verifiable evidence.",
                "Consider source attribution, emotional tone, internal consistency, verifiable evidence and headline exaggeration.",
            ] {
                let r = ev.evaluate(prompt, &ds.samples).unwrap().report;
                assert_eq!(r.accuracy_value, keyword_fraction(prompt, &land.keywords), "{prompt} batch {batch}");
            }
        }
    }

    #[test]
    fn initial_prompt_scores_zero() {
        let land = KeywordLandscape::default();
        let initial = TemplateSet::default().body(crate::transitions::TemplateName::Initial).to_string();
        assert_eq!(keyword_fraction(&initial, &land.keywords), 0.0);
    }

    #[test]
    fn guidance_round_trips() {
        let (base, terms) = split_guidance("Judge it. Consider a. Consider b c.");
        assert_eq!(base, "Judge it.");
        assert_eq!(terms, vec!["a", "b c"]);
        assert_eq!(join_guidance(&base, &terms), "Judge it. Consider a. Consider b c.");
    }
}
