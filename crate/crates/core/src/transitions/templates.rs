//! Meta-prompt templates.
//!
//! Bodies use `{name}` placeholders. A body whose final paragraph is a lone
//! `...` line has a repeated item: the paragraph just before the `...` (it
//! must mention `{index}`) is rendered once per item, and the items are joined
//! by blank lines. `{index}` is bound automatically to the 1-based position.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ALLOWED_PLACEHOLDERS: &[&str] = &[
    "prompt",
    "news",
    "error strings",
    "error feedback",
    "trajectory prompts",
    "Memory",
    "steps_per_gradient",
    "batch_size",
    "num",
    "index",
    "response",
    "label",
    "prediction",
    "input format",
    "Historical errors",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Initial,
    InputFormat,
    ErrorString,
    ErrorFeedback,
    StateTransit,
    MemorySummarize,
    BatchEval,
    BatchComment,
    Resample,
}

impl TemplateName {
    pub const ALL: [TemplateName; 9] = [
        TemplateName::Initial,
        TemplateName::InputFormat,
        TemplateName::ErrorString,
        TemplateName::ErrorFeedback,
        TemplateName::StateTransit,
        TemplateName::MemorySummarize,
        TemplateName::BatchEval,
        TemplateName::BatchComment,
        TemplateName::Resample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Initial => "initial",
            TemplateName::InputFormat => "input_format",
            TemplateName::ErrorString => "error_string",
            TemplateName::ErrorFeedback => "error_feedback",
            TemplateName::StateTransit => "state_transit",
            TemplateName::MemorySummarize => "memory_summarize",
            TemplateName::BatchEval => "batch_eval",
            TemplateName::BatchComment => "batch_comment",
            TemplateName::Resample => "resample",
        }
    }

    pub fn default_body(self) -> &'static str {
        match self {
            TemplateName::Initial => INITIAL,
            TemplateName::InputFormat => INPUT_FORMAT,
            TemplateName::ErrorString => ERROR_STRING,
            TemplateName::ErrorFeedback => ERROR_FEEDBACK,
            TemplateName::StateTransit => STATE_TRANSIT,
            TemplateName::MemorySummarize => MEMORY_SUMMARIZE,
            TemplateName::BatchEval => BATCH_EVAL,
            TemplateName::BatchComment => BATCH_COMMENT,
            TemplateName::Resample => RESAMPLE,
        }
    }
}

impl std::fmt::Display for TemplateName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| TemplateError::UnknownTemplate(s.to_string()))
    }
}

const INITIAL: &str = "Please use your knowledge of journalism to determine the authenticity of the input news or social media message, and briefly explain the reason for your judgment.";

const INPUT_FORMAT: &str = "{prompt}

News or social media message: {news}.

Options:
A:True
B. False

At the end show the answer option between <answer> and </answer>.";

const ERROR_STRING: &str = "The index of error news or social media message is: {index}
The model's input is: {input format}
The model's response is: {response}
The correct label is: {label}
The model's prediction is: {prediction}";

const ERROR_FEEDBACK: &str = "I am writing prompts for a large language model designed to detect fake news.
My current prompt is: {prompt}
But this prompt gets the following examples wrong: {error strings}
Please carefully examine each wrong example and its incorrect answer. Provide detailed reasons explaining why the prompt leads to the incorrect answer.
Finally, based on these reasons, summarize and list specific suggestions for improving the prompt according to the following guidelines:
1.The suggestions should focus on how to modify the prompt to help the model classify better, without relying on external knowledge or inputting more information.
2.The suggestions should avoid overfitting specific incorrect examples, ensuring generalizability to different news examples.";

const STATE_TRANSIT: &str = "I am writing prompts for a large language model designed to detect fake news.
My current prompt is: {prompt}
But this prompt gets the following examples wrong: {error strings}
Based on these errors, the problems with this prompt and the reasons are: {error feedback}
There is a list of former prompts including the current prompt, and each prompt is modified from its former prompts: {trajectory prompts}
Please consider the following potential causes of model classification errors and suggestions: {Memory}
Based on the above information, please write {steps_per_gradient} new prompts following these guidelines:
1. The new prompts should solve the current prompt's problems.
2. The new prompts should consider the list of prompts and evolve based on the current prompt.
3. Each new prompt should be wrapped with <START> and <END>.
The new prompts are:";

const MEMORY_SUMMARIZE: &str = "Summarize the following reasons and suggestions concisely, focusing on key information. If there are multiple key points, summarize them in bullet points. The reason for the error and recommendation is:

Number {index}:
Reasons and Suggestions: {Historical errors}

...";

const BATCH_COMMENT: &str = "{prompt}

You will receive {batch_size} sentences from the news and social media message dataset as input. The format of the provided sentences is as follows:
Text 1: xxxxxx
Text 2: xxxxxx
...
Please generate the output according to the following format, with the result and reason enclosed in []:
For Text 1: [Result: X. Reason: xxxxxx]
For Text 2: [Result: X. Reason: xxxxxx]
...
Where X is 'True' or 'False,' and 'xxxxxx' is your reasoning for determining the authenticity of the news or social media message.
Ensure that you generate {batch_size} evaluations. Make sure to output {batch_size} lines of text, with each line containing a separate evaluation. Do not combine the evaluation results for each text. Ensure that each sentence receives an individual evaluation.

news and social media message {index}: {news}

...";

const BATCH_EVAL: &str = "{prompt}

You will receive {batch_size} questions as input. The format of the provided questions is as follows:
Question 1: xxxxxx
Question 2: xxxxxx
...
Please generate the output according to the following format, with the answer enclosed in []:
For Question 1: [xxxxxx]
For Question 2: [xxxxxx]
...
Ensure that you generate {batch_size} answers, with each question receiving a separate response. Do not combine the answers for each question. Ensure that only one answer is provided for each question.

question {index}: {input format}

...";

const RESAMPLE: &str = "Generate {num} variants of the prompt {prompt} while preserving the original meaning. Each new prompt should be wrapped with <START> and <END>.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` uses placeholder `{{{placeholder}}}`, which is not bound")]
    Unbound { template: TemplateName, placeholder: String },
    #[error("template `{template}` uses placeholder `{{{placeholder}}}`, which is not allowed")]
    Disallowed { template: TemplateName, placeholder: String },
    #[error("template `{template}` has a repeated item but no items were supplied")]
    NoItems { template: TemplateName },
    #[error("template override file: {0}")]
    Override(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Parsed {
    head: Vec<Segment>,
    item: Option<Vec<Segment>>,
}

fn segments(body: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let next_open = after.find('{');
        match close {
            Some(c) if next_open.is_none_or(|o| o > c) && c > 0 => {
                text.push_str(&rest[..open]);
                if !text.is_empty() {
                    out.push(Segment::Text(std::mem::take(&mut text)));
                }
                out.push(Segment::Slot(after[..c].to_string()));
                rest = &after[c + 1..];
            }
            _ => {
                text.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        out.push(Segment::Text(text));
    }
    out
}

fn parse_body(body: &str) -> Parsed {
    if let Some(before) = body.strip_suffix("\n\n...") {
        if let Some(split) = before.rfind("\n\n") {
            let item = &before[split + 2..];
            if item.contains("{index}") {
                return Parsed {
                    head: segments(&before[..split + 2]),
                    item: Some(segments(item)),
                };
            }
        }
    }
    Parsed { head: segments(body), item: None }
}

fn slots(parsed: &Parsed) -> impl Iterator<Item = &str> {
    parsed
        .head
        .iter()
        .chain(parsed.item.iter().flatten())
        .filter_map(|s| match s {
            Segment::Slot(name) => Some(name.as_str()),
            Segment::Text(_) => None,
        })
}

/// Placeholder values for one render. `items` feeds the repeated section.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings {
    pub values: BTreeMap<String, String>,
    pub items: Vec<BTreeMap<String, String>>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.values.insert(name.to_string(), value.into());
        self
    }

    pub fn item(mut self, values: impl IntoIterator<Item = (&'static str, String)>) -> Self {
        self.items
            .push(values.into_iter().map(|(k, v)| (k.to_string(), v)).collect());
        self
    }
}

/// The full set of meta-prompts, defaults plus any overrides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    bodies: BTreeMap<TemplateName, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            bodies: TemplateName::ALL
                .into_iter()
                .map(|n| (n, n.default_body().to_string()))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Overrides are a JSON object of template name to body; missing names
    /// keep their defaults.
    pub fn from_override_json(json: &str) -> Result<Self, TemplateError> {
        let map: BTreeMap<String, String> =
            serde_json::from_str(json).map_err(|e| TemplateError::Override(e.to_string()))?;
        let mut set = Self::default();
        for (name, body) in map {
            let name: TemplateName = name.parse()?;
            set.set_body(name, body)?;
        }
        Ok(set)
    }

    pub fn from_override_file(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TemplateError::Override(format!("{}: {e}", path.display())))?;
        Self::from_override_json(&text)
    }

    pub fn set_body(&mut self, name: TemplateName, body: String) -> Result<(), TemplateError> {
        let parsed = parse_body(&body);
        let allowed: BTreeSet<&str> = ALLOWED_PLACEHOLDERS.iter().copied().collect();
        if let Some(bad) = slots(&parsed).find(|s| !allowed.contains(s)) {
            return Err(TemplateError::Disallowed {
                template: name,
                placeholder: bad.to_string(),
            });
        }
        self.bodies.insert(name, body);
        Ok(())
    }

    pub fn body(&self, name: TemplateName) -> &str {
        &self.bodies[&name]
    }

    /// Placeholders the template uses, in order of first appearance.
    pub fn placeholders(&self, name: TemplateName) -> Vec<String> {
        let parsed = parse_body(self.body(name));
        let mut seen = Vec::<String>::new();
        for s in slots(&parsed) {
            if !seen.iter().any(|x| x == s) {
                seen.push(s.to_string());
            }
        }
        seen
    }

    pub fn render_named(&self, name: &str, bindings: &Bindings) -> Result<String, TemplateError> {
        self.render(name.parse()?, bindings)
    }

    /// Substitutes every placeholder verbatim. Bound values are not rescanned.
    pub fn render(&self, name: TemplateName, bindings: &Bindings) -> Result<String, TemplateError> {
        let parsed = parse_body(self.body(name));
        let mut out = String::new();
        fill(&parsed.head, name, |k| bindings.values.get(k), &mut out)?;
        if let Some(item) = &parsed.item {
            if bindings.items.is_empty() {
                return Err(TemplateError::NoItems { template: name });
            }
            for (i, values) in bindings.items.iter().enumerate() {
                if i > 0 {
                    out.push_str("\n\n");
                }
                let index = (i + 1).to_string();
                fill(
                    item,
                    name,
                    |k| {
                        values
                            .get(k)
                            .or_else(|| (k == "index").then_some(&index))
                            .or_else(|| bindings.values.get(k))
                    },
                    &mut out,
                )?;
            }
        }
        Ok(out)
    }
}

fn fill<'a>(
    segs: &[Segment],
    template: TemplateName,
    lookup: impl Fn(&str) -> Option<&'a String>,
    out: &mut String,
) -> Result<(), TemplateError> {
    for seg in segs {
        match seg {
            Segment::Text(t) => out.push_str(t),
            Segment::Slot(name) => {
                let value = lookup(name).ok_or_else(|| TemplateError::Unbound {
                    template,
                    placeholder: name.clone(),
                })?;
                out.push_str(value);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn initial_prompt_renders_without_bindings() {
        let text = TemplateSet::default().render(TemplateName::Initial, &Bindings::new()).unwrap();
        assert!(text.starts_with("Please use your knowledge of journalism"));
    }

    #[test]
    fn input_format_has_answer_tags() {
        let text = TemplateSet::default()
            .render(
                TemplateName::InputFormat,
                &Bindings::new().set("prompt", "P").set("news", "N"),
            )
            .unwrap();
        assert!(text.contains("<answer>") && text.contains("</answer>"));
        assert!(text.contains("A:True"));
        assert!(text.starts_with("P\n\nNews or social media message: N."));
    }

    #[test]
    fn state_transit_requires_memory() {
        let b = Bindings::new()
            .set("prompt", "p")
            .set("error strings", "e")
            .set("error feedback", "f")
            .set("trajectory prompts", "t")
            .set("steps_per_gradient", "1");
        let err = TemplateSet::default().render(TemplateName::StateTransit, &b).unwrap_err();
        assert_eq!(
            err,
            TemplateError::Unbound {
                template: TemplateName::StateTransit,
                placeholder: "Memory".into()
            }
        );
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(matches!(
            TemplateSet::default().render_named("nope", &Bindings::new()),
            Err(TemplateError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn default_placeholders_are_allowed() {
        let set = TemplateSet::default();
        for name in TemplateName::ALL {
            for p in set.placeholders(name) {
                assert!(ALLOWED_PLACEHOLDERS.contains(&p.as_str()), "{name}: {p}");
            }
        }
    }

    #[test]
    fn repeated_items_are_numbered() {
        let b = Bindings::new()
            .item([("Historical errors", "first".to_string())])
            .item([("Historical errors", "second".to_string())]);
        let text = TemplateSet::default().render(TemplateName::MemorySummarize, &b).unwrap();
        assert!(text.contains("Number 1:\nReasons and Suggestions: first"));
        assert!(text.ends_with("Number 2:\nReasons and Suggestions: second"));
        assert!(!text.contains("..."));
    }

    #[test]
    fn override_with_unknown_placeholder_is_rejected() {
        let err = TemplateSet::from_override_json(r#"{"initial": "Judge {vibes}."}"#).unwrap_err();
        assert!(matches!(err, TemplateError::Disallowed { .. }));
    }

    #[test]
    fn override_replaces_only_named_template() {
        let set = TemplateSet::from_override_json(r#"{"initial": "Decide whether {news} is true."}"#).unwrap();
        assert_eq!(set.body(TemplateName::Initial), "Decide whether {news} is true.");
        assert_eq!(set.body(TemplateName::Resample), RESAMPLE);
    }

    #[test]
    fn stray_braces_are_literal() {
        let mut set = TemplateSet::default();
        set.set_body(TemplateName::Initial, "a { b {prompt} c }".into()).unwrap();
        let out = set
            .render(TemplateName::Initial, &Bindings::new().set("prompt", "X"))
            .unwrap();
        assert_eq!(out, "a { b X c }");
    }

    proptest! {
        #[test]
        fn rendering_is_injective(a in ".{0,40}", b in ".{0,40}") {
            prop_assume!(a != b);
            let set = TemplateSet::default();
            let ra = set.render(TemplateName::Resample, &Bindings::new().set("num", "2").set("prompt", a.clone())).unwrap();
            let rb = set.render(TemplateName::Resample, &Bindings::new().set("num", "2").set("prompt", b.clone())).unwrap();
            prop_assert_ne!(ra, rb);
        }

        #[test]
        fn bound_values_are_not_rescanned(v in "[{}a-z ]{0,30}") {
            let out = TemplateSet::default()
                .render(TemplateName::InputFormat, &Bindings::new().set("prompt", v.clone()).set("news", "n"))
                .unwrap();
            prop_assert!(out.starts_with(&v));
        }
    }
}
