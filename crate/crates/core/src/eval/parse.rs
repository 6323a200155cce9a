//! Response parsers. They never fail: problems are reported through
//! [`ParseStatus`].

use serde::{Deserialize, Serialize};

use super::{EvalMode, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Malformed,
    Missing,
}

/// One parsed answer, before it is tied to a sample id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub predicted: Option<Label>,
    pub rationale: String,
    pub status: ParseStatus,
}

impl ParsedAnswer {
    fn ok(label: Label, rationale: String) -> Self {
        Self { predicted: Some(label), rationale, status: ParseStatus::Ok }
    }

    fn malformed(rationale: String) -> Self {
        Self { predicted: None, rationale, status: ParseStatus::Malformed }
    }

    fn missing() -> Self {
        Self { predicted: None, rationale: String::new(), status: ParseStatus::Missing }
    }
}

/// First word that names an option: `A`/`True` is real, `B`/`False` is fake.
pub fn first_label_token(text: &str) -> Option<Label> {
    text.split(|c: char| !c.is_alphanumeric()).find_map(|w| {
        if w.eq_ignore_ascii_case("a") || w.eq_ignore_ascii_case("true") {
            Some(Label::Real)
        } else if w.eq_ignore_ascii_case("b") || w.eq_ignore_ascii_case("false") {
            Some(Label::Fake)
        } else {
            None
        }
    })
}

/// Byte offsets of `needle` (ASCII, lowercase) in `lowered`, which must be
/// `text.to_ascii_lowercase()` so offsets line up with the original.
fn find_from(lowered: &str, needle: &str, from: usize) -> Option<usize> {
    lowered[from..].find(needle).map(|i| i + from)
}

fn parse_single(text: &str) -> ParsedAnswer {
    let lowered = text.to_ascii_lowercase();
    let Some(open) = lowered.find("<answer>") else {
        let mut a = ParsedAnswer::missing();
        a.rationale = text.trim().to_string();
        return a;
    };
    let start = open + "<answer>".len();
    let Some(close) = find_from(&lowered, "</answer>", start) else {
        return ParsedAnswer::malformed(text.trim().to_string());
    };
    match first_label_token(&text[start..close]) {
        Some(label) => ParsedAnswer::ok(label, text.trim().to_string()),
        None => ParsedAnswer::malformed(text.trim().to_string()),
    }
}

/// Text following each `marker` occurrence, up to the next occurrence of
/// `stop` (or the end).
fn segments<'a>(text: &'a str, lowered: &str, marker: &str, stop: &str) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(at) = find_from(lowered, marker, pos) {
        let start = at + marker.len();
        let end = find_from(lowered, stop, start).unwrap_or(text.len());
        out.push(&text[start..end]);
        pos = start;
    }
    out
}

fn bracketed(segment: &str) -> Option<&str> {
    let open = segment.find('[')?;
    let rest = &segment[open + 1..];
    let close = rest.rfind(']')?;
    Some(&rest[..close])
}

fn parse_batch_eval(text: &str, n: usize) -> Vec<ParsedAnswer> {
    let lowered = text.to_ascii_lowercase();
    (1..=n)
        .map(|i| {
            let segs = segments(text, &lowered, &format!("for question {i}:"), "for question ");
            if segs.is_empty() {
                return ParsedAnswer::missing();
            }
            for seg in &segs {
                let candidate = bracketed(seg).unwrap_or_else(|| seg.lines().next().unwrap_or(""));
                if let Some(label) = first_label_token(candidate) {
                    return ParsedAnswer::ok(label, seg.trim().to_string());
                }
            }
            ParsedAnswer::malformed(segs[0].trim().to_string())
        })
        .collect()
}

fn parse_comment(seg: &str) -> ParsedAnswer {
    let body = bracketed(seg).unwrap_or(seg);
    let lowered = body.to_ascii_lowercase();
    let reason = lowered
        .find("reason:")
        .map(|at| body[at + "reason:".len()..].trim().to_string())
        .unwrap_or_default();
    let result = lowered.find("result:").and_then(|at| {
        let after = &body[at + "result:".len()..];
        let until = after.to_ascii_lowercase().find("reason:").unwrap_or(after.len());
        first_label_token(&after[..until])
    });
    match result {
        Some(label) => ParsedAnswer::ok(label, reason),
        None => ParsedAnswer::malformed(reason),
    }
}

fn parse_batch_comment(text: &str, n: usize) -> Vec<ParsedAnswer> {
    let lowered = text.to_ascii_lowercase();
    (1..=n)
        .map(|i| {
            let segs = segments(text, &lowered, &format!("for text {i}:"), "for text ");
            if segs.is_empty() {
                return ParsedAnswer::missing();
            }
            let parsed: Vec<_> = segs.iter().map(|s| parse_comment(s)).collect();
            parsed
                .iter()
                .find(|p| p.status == ParseStatus::Ok)
                .cloned()
                .unwrap_or_else(|| parsed[0].clone())
        })
        .collect()
}

/// Parses a model reply into exactly `n` answers (exactly one in single mode).
pub fn parse_eval_response(text: &str, mode: EvalMode, n: usize) -> Vec<ParsedAnswer> {
    match mode {
        EvalMode::Single if n == 0 => Vec::new(),
        EvalMode::Single => std::iter::once(parse_single(text))
            .chain((1..n).map(|_| ParsedAnswer::missing()))
            .collect(),
        EvalMode::BatchEval => parse_batch_eval(text, n),
        EvalMode::BatchComment => parse_batch_comment(text, n),
    }
}
