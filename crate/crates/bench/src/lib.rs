//! Inputs shared by the criterion benches.

use promptmcts_core::search::UctCandidate;

/// `n` children with spread-out values and visit counts.
pub fn uct_candidates(n: usize) -> Vec<UctCandidate> {
    (0..n)
        .map(|i| UctCandidate {
            q: ((i * 37) % 101) as f64 / 100.0,
            visits: 1 + (i as u64 * 13) % 97,
        })
        .collect()
}

/// A well-formed batch reply for `n` questions.
pub fn batch_reply(n: usize) -> String {
    (1..=n)
        .map(|i| format!("For Question {i}: [{}]", if i % 2 == 0 { "B" } else { "A" }))
        .collect::<Vec<_>>()
        .join("\n")
}
