use serde::{Deserialize, Serialize};

use super::{EvalError, LabeledSample};
use crate::transitions::{Bindings, TemplateName, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// One sample, answer between `<answer>` tags.
    Single,
    /// Numbered questions, bracketed answers.
    BatchEval,
    /// Numbered texts, bracketed result plus reason.
    BatchComment,
}

/// The base model's input for one sample under `prompt`.
pub fn single_input(templates: &TemplateSet, prompt: &str, news: &str) -> Result<String, EvalError> {
    Ok(templates.render(
        TemplateName::InputFormat,
        &Bindings::new().set("prompt", prompt).set("news", news),
    )?)
}

/// Builds the classification prompt for `samples`. Single mode takes exactly
/// one sample; the batch modes take between one and `max_batch`.
pub fn build_eval_prompt(
    templates: &TemplateSet,
    prompt: &str,
    samples: &[LabeledSample],
    mode: EvalMode,
    max_batch: usize,
) -> Result<String, EvalError> {
    let count_ok = match mode {
        EvalMode::Single => samples.len() == 1,
        EvalMode::BatchEval | EvalMode::BatchComment => !samples.is_empty() && samples.len() <= max_batch.max(1),
    };
    if !count_ok {
        return Err(EvalError::ModeMismatch {
            mode,
            count: samples.len(),
        });
    }
    match mode {
        EvalMode::Single => single_input(templates, prompt, &samples[0].text),
        EvalMode::BatchEval => {
            let mut b = Bindings::new()
                .set("prompt", prompt)
                .set("batch_size", samples.len().to_string());
            for s in samples {
                // The prompt already heads the batch, so each question carries
                // only the news and the options.
                let question = single_input(templates, "", &s.text)?;
                b = b.item([("input format", question.trim_start().to_string())]);
            }
            Ok(templates.render(TemplateName::BatchEval, &b)?)
        }
        EvalMode::BatchComment => {
            let mut b = Bindings::new()
                .set("prompt", prompt)
                .set("batch_size", samples.len().to_string());
            for s in samples {
                b = b.item([("news", s.text.clone())]);
            }
            Ok(templates.render(TemplateName::BatchComment, &b)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Label;

    fn samples(n: usize) -> Vec<LabeledSample> {
        (0..n)
            .map(|i| LabeledSample {
                id: format!("s{i}"),
                text: format!("story number {i}"),
                label: Label::Real,
            })
            .collect()
    }

    #[test]
    fn single_has_options_and_tags() {
        let t = build_eval_prompt(&TemplateSet::default(), "P", &samples(1), EvalMode::Single, 32).unwrap();
        assert!(t.contains("A:True"));
        assert!(t.contains("<answer>") && t.contains("</answer>"));
    }

    #[test]
    fn batch_eval_numbers_questions() {
        let t = build_eval_prompt(&TemplateSet::default(), "P", &samples(2), EvalMode::BatchEval, 32).unwrap();
        assert!(t.contains("question 1: News or social media message: story number 0."));
        assert!(t.contains("question 2: News or social media message: story number 1."));
        assert!(t.contains("You will receive 2 questions"));
        assert!(t.starts_with("P\n\n"));
    }

    #[test]
    fn batch_comment_has_result_format() {
        let t = build_eval_prompt(&TemplateSet::default(), "P", &samples(2), EvalMode::BatchComment, 32).unwrap();
        assert!(t.contains("Result: X. Reason: xxxxxx"));
        assert!(t.contains("news and social media message 2: story number 1"));
    }

    #[test]
    fn count_mismatch_rejected() {
        let ts = TemplateSet::default();
        assert!(build_eval_prompt(&ts, "P", &samples(2), EvalMode::Single, 32).is_err());
        assert!(build_eval_prompt(&ts, "P", &samples(0), EvalMode::BatchEval, 32).is_err());
        assert!(build_eval_prompt(&ts, "P", &samples(3), EvalMode::BatchEval, 2).is_err());
    }
}
