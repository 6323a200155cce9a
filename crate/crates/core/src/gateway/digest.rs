use sha2::{Digest, Sha256};

use super::GenerationRequest;

/// SHA-256 over the canonical request form: role, model, temperature rounded
/// to 1e-6, then the raw prompt bytes. `max_tokens` and `attempt` are not part
/// of the key.
pub fn canonical_digest(request: &GenerationRequest) -> String {
    let micro = (request.temperature * 1e6).round() as i64;
    let mut hasher = Sha256::new();
    hasher.update(b"promptmcts-request/1\n");
    hasher.update(format!("role={}\n", request.role.as_str()).as_bytes());
    hasher.update(format!("model={}\n", request.model_name).as_bytes());
    hasher.update(format!("temperature_micro={micro}\n").as_bytes());
    hasher.update(format!("prompt_len={}\n", request.prompt.len()).as_bytes());
    hasher.update(request.prompt.as_bytes());
    hex::encode(hasher.finalize())
}
