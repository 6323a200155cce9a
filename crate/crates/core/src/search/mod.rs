//! Monte Carlo Tree Search over prompts.
//!
//! Each epoch descends from the root: UCT picks among existing children,
//! leaves are expanded into `expand_width` rewritten prompts, the best child
//! is taken greedily (and optionally swapped for a better resampled variant),
//! until the depth limit or a terminal state. The path's rewards are then
//! backpropagated into `Q`.

mod checkpoint;
mod config;
mod engine;
mod tree;

pub use checkpoint::{Checkpoint, CheckpointError, EdgeRecordOut, NodeRecord, FORMAT_VERSION};
pub use config::{ConfigError, SearchConfig};
pub use engine::{run_search, EpochLog, SearchError, SearchResult};
pub use tree::{
    argmax_first, uct_choose, uct_score, ActionEdge, ActionId, EdgeRecord, PromptState, SearchNode, SearchTree,
    StateId, Trajectory, TrajectoryStep, TreeError, UctCandidate,
};
