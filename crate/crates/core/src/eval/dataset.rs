use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }

    /// The answer option that asserts this label (`A:True` is real news).
    pub fn option_text(self) -> &'static str {
        match self {
            Label::Real => "True",
            Label::Fake => "False",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: String,
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRecord {
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<PathBuf>,
    pub sampling: Option<SamplingRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub provenance: Provenance,
}

#[derive(Deserialize)]
struct RawSample {
    id: String,
    text: String,
    label: String,
}

impl Dataset {
    /// In-memory dataset; ids must be unique.
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self, EvalError> {
        check_unique(&samples)?;
        Ok(Self {
            samples,
            provenance: Provenance::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut ds = Self::parse_jsonl(&text)?;
        ds.provenance.source = Some(path.to_path_buf());
        Ok(ds)
    }

    /// JSON Lines, one `{"id", "text", "label"}` object per line. Blank lines
    /// are skipped; line numbers in errors are 1-based.
    pub fn parse_jsonl(text: &str) -> Result<Self, EvalError> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawSample = serde_json::from_str(line).map_err(|e| EvalError::BadLine {
                line: line_no,
                message: e.to_string(),
            })?;
            let label = match raw.label.as_str() {
                "real" => Label::Real,
                "fake" => Label::Fake,
                other => {
                    return Err(EvalError::BadLine {
                        line: line_no,
                        message: format!("unknown label `{other}` (expected \"real\" or \"fake\")"),
                    })
                }
            };
            if raw.text.trim().is_empty() {
                return Err(EvalError::BadLine {
                    line: line_no,
                    message: "empty text".into(),
                });
            }
            samples.push(LabeledSample {
                id: raw.id,
                text: raw.text,
                label,
            });
        }
        if samples.is_empty() {
            return Err(EvalError::EmptyDataset);
        }
        Self::new(samples)
    }

    pub fn to_jsonl(&self) -> String {
        self.samples
            .iter()
            .map(|s| serde_json::to_string(s).expect("sample serializes") + "\n")
            .collect()
    }

    /// Draws `max(1, floor(fraction * n))` samples without replacement. The
    /// subset keeps dataset order.
    pub fn sample_validation(&self, fraction: f64, seed: u64) -> Result<Dataset, EvalError> {
        if self.samples.is_empty() {
            return Err(EvalError::EmptyDataset);
        }
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(EvalError::BadFraction(fraction));
        }
        let n = self.samples.len();
        let k = ((fraction * n as f64).floor() as usize).clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, n, k).into_vec();
        picked.sort_unstable();
        Ok(Dataset {
            samples: picked.into_iter().map(|i| self.samples[i].clone()).collect(),
            provenance: Provenance {
                source: self.provenance.source.clone(),
                sampling: Some(SamplingRecord { fraction, seed }),
            },
        })
    }
}

fn check_unique(samples: &[LabeledSample]) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            return Err(EvalError::DuplicateId(s.id.clone()));
        }
    }
    Ok(())
}
