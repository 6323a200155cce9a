use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{rough_tokens, Backend, BackendReply, GatewayError, GenerationRequest, LlmRoleConfig};

/// One line of a fixture file: `{"digest": <64-hex>, "response": <text>}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub digest: String,
    pub response: String,
}

pub(crate) fn read_fixtures(path: &Path) -> Result<Vec<FixtureRecord>, GatewayError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: FixtureRecord = serde_json::from_str(line).map_err(|e| GatewayError::Fixture {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.digest.len() != 64 || !record.digest.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(GatewayError::Fixture {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("digest `{}` is not 64 hex characters", record.digest),
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Answers from recorded fixtures; a request with no fixture is an error.
#[derive(Debug, Default, Clone)]
pub struct ReplayBackend {
    fixtures: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::from_records(read_fixtures(path)?))
    }

    /// Earlier records win when a digest repeats.
    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        let mut fixtures = HashMap::new();
        for r in records {
            fixtures.entry(r.digest).or_insert(r.response);
        }
        Self { fixtures }
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn tag(&self) -> &str {
        "replay"
    }

    fn generate(
        &self,
        _config: &LlmRoleConfig,
        request: &GenerationRequest,
        digest: &str,
    ) -> Result<BackendReply, GatewayError> {
        let text = self
            .fixtures
            .get(digest)
            .ok_or_else(|| GatewayError::FixtureMiss { digest: digest.to_string() })?;
        Ok(BackendReply {
            text: text.clone(),
            prompt_tokens: rough_tokens(&request.prompt),
            completion_tokens: rough_tokens(text),
        })
    }
}
