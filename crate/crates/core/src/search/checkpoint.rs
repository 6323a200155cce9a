//! The `tree.json` checkpoint format.
//!
//! Nodes and edges are listed in creation order. A node's children are the
//! edges whose `parent_state_id` is that node, in `action_id` order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::SearchConfig;
use super::tree::{ActionEdge, ActionId, EdgeRecord, PromptState, SearchNode, SearchTree, StateId, Trajectory};
use crate::memory::MemoryState;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub state_id: StateId,
    pub text: String,
    pub depth: usize,
    pub cached_reward: Option<f64>,
    pub parent_action: Option<ActionId>,
    pub visit_count: u64,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecordOut {
    pub action_id: ActionId,
    pub parent_state_id: StateId,
    pub child_state_id: StateId,
    pub feedback_text: String,
    pub source_error_digest: String,
    #[serde(rename = "Q")]
    pub q: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub seed: u64,
    pub config: SearchConfig,
    pub epochs_completed: usize,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecordOut>,
    pub trajectories: Vec<Trajectory>,
    pub memory: MemoryState,
}

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("checkpoint JSON: {0}")]
    Json(String),
    #[error("unsupported format_version {0}")]
    Version(u32),
    #[error("node at position {position} has state_id {found}")]
    NodeOrder { position: usize, found: StateId },
    #[error("edge at position {position} has action_id {found}")]
    EdgeOrder { position: usize, found: ActionId },
    #[error("edge {edge} points to missing state {state}")]
    DanglingEdge { edge: ActionId, state: StateId },
    #[error("node {node}: {reason}")]
    BadNode { node: StateId, reason: String },
    #[error("trajectory {index}: {reason}")]
    BadTrajectory { index: usize, reason: String },
    #[error("checkpoint has no nodes")]
    Empty,
}

impl Checkpoint {
    pub fn from_tree(tree: &SearchTree, config: &SearchConfig, memory: &MemoryState, epochs_completed: usize) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            seed: config.rng_seed,
            config: config.clone(),
            epochs_completed,
            nodes: tree
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    state_id: n.state.state_id,
                    text: n.state.text.clone(),
                    depth: n.state.depth,
                    cached_reward: n.state.cached_reward,
                    parent_action: n.state.parent_action,
                    visit_count: n.visit_count,
                    terminal: n.terminal,
                })
                .collect(),
            edges: tree
                .edges
                .iter()
                .map(|e| EdgeRecordOut {
                    action_id: e.action.action_id,
                    parent_state_id: e.parent,
                    child_state_id: e.child,
                    feedback_text: e.action.feedback_text.clone(),
                    source_error_digest: e.action.source_error_digest.clone(),
                    q: e.q,
                    r: e.reward,
                })
                .collect(),
            trajectories: tree.trajectories.clone(),
            memory: memory.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let cp: Checkpoint = serde_json::from_str(text).map_err(|e| CheckpointError::Json(e.to_string()))?;
        if cp.format_version != FORMAT_VERSION {
            return Err(CheckpointError::Version(cp.format_version));
        }
        Ok(cp)
    }

    /// Rebuilds the tree, checking every structural invariant on the way.
    pub fn to_tree(&self) -> Result<SearchTree, CheckpointError> {
        if self.nodes.is_empty() {
            return Err(CheckpointError::Empty);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.state_id.0 as usize != i {
                return Err(CheckpointError::NodeOrder { position: i, found: n.state_id });
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.action_id.0 as usize != i {
                return Err(CheckpointError::EdgeOrder { position: i, found: e.action_id });
            }
            for s in [e.parent_state_id, e.child_state_id] {
                if s.0 as usize >= self.nodes.len() {
                    return Err(CheckpointError::DanglingEdge { edge: e.action_id, state: s });
                }
            }
        }

        let mut nodes: Vec<SearchNode> = self
            .nodes
            .iter()
            .map(|n| SearchNode {
                state: PromptState {
                    state_id: n.state_id,
                    text: n.text.clone(),
                    depth: n.depth,
                    cached_reward: n.cached_reward,
                    parent_action: n.parent_action,
                },
                parent: None,
                children: Vec::new(),
                visit_count: n.visit_count,
                terminal: n.terminal,
            })
            .collect();

        let root = &nodes[0];
        if root.state.depth != 0 || root.state.parent_action.is_some() {
            return Err(CheckpointError::BadNode {
                node: StateId(0),
                reason: "root must have depth 0 and no parent action".into(),
            });
        }
        let mut incoming = vec![0usize; nodes.len()];
        for e in &self.edges {
            let (p, c) = (e.parent_state_id.0 as usize, e.child_state_id.0 as usize);
            incoming[c] += 1;
            if c == 0 || c <= p {
                return Err(CheckpointError::BadNode {
                    node: e.child_state_id,
                    reason: format!("edge {} must point to a later state than its parent", e.action_id),
                });
            }
            if nodes[c].state.parent_action != Some(e.action_id) {
                return Err(CheckpointError::BadNode {
                    node: e.child_state_id,
                    reason: format!("parent_action does not match edge {}", e.action_id),
                });
            }
            if nodes[c].state.depth != nodes[p].state.depth + 1 {
                return Err(CheckpointError::BadNode {
                    node: e.child_state_id,
                    reason: "depth is not parent depth + 1".into(),
                });
            }
            nodes[c].parent = Some(e.parent_state_id);
            nodes[p].children.push(e.action_id);
        }
        for (i, n) in nodes.iter().enumerate().skip(1) {
            if incoming[i] != 1 {
                return Err(CheckpointError::BadNode {
                    node: n.state.state_id,
                    reason: format!("has {} incoming edges", incoming[i]),
                });
            }
        }

        let edges: Vec<EdgeRecord> = self
            .edges
            .iter()
            .map(|e| EdgeRecord {
                action: ActionEdge {
                    action_id: e.action_id,
                    feedback_text: e.feedback_text.clone(),
                    source_error_digest: e.source_error_digest.clone(),
                },
                parent: e.parent_state_id,
                child: e.child_state_id,
                reward: e.r,
                q: e.q,
            })
            .collect();

        let mut tree = SearchTree {
            nodes,
            edges,
            trajectories: Vec::new(),
            edge_index: vec![Vec::new(); self.edges.len()],
        };
        for (index, t) in self.trajectories.iter().enumerate() {
            let mut at = tree.root();
            for (s, step) in t.steps.iter().enumerate() {
                let edge = tree.edges.get(step.action_id.0 as usize).ok_or_else(|| CheckpointError::BadTrajectory {
                    index,
                    reason: format!("unknown action {}", step.action_id),
                })?;
                if step.state_id != at || edge.parent != at {
                    return Err(CheckpointError::BadTrajectory {
                        index,
                        reason: format!("step {s} does not continue the path"),
                    });
                }
                at = edge.child;
                tree.edge_index[step.action_id.0 as usize].push((index, s));
            }
            if t.steps.is_empty() {
                return Err(CheckpointError::BadTrajectory { index, reason: "empty".into() });
            }
        }
        tree.trajectories = self.trajectories.clone();
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::tree::TrajectoryStep;

    fn sample_tree() -> SearchTree {
        let mut t = SearchTree::new("root");
        t.set_reward(t.root(), 0.2).unwrap();
        let (a, s1) = t.add_child(t.root(), "fb1", "d1", "child one", 0.4).unwrap();
        let (b, _) = t.add_child(s1, "fb2", "d2", "grandchild", 0.6).unwrap();
        t.add_child(t.root(), "fb3", "d3", "child two", 0.1).unwrap();
        t.backpropagate(Trajectory {
            steps: vec![
                TrajectoryStep { state_id: t.root(), action_id: a, reward: 0.4 },
                TrajectoryStep { state_id: s1, action_id: b, reward: 0.6 },
            ],
        })
        .unwrap();
        t
    }

    #[test]
    fn round_trip_reproduces_tree() {
        let tree = sample_tree();
        let cp = Checkpoint::from_tree(&tree, &SearchConfig::default(), &MemoryState::new(), 1);
        let back = Checkpoint::from_json(&cp.to_json()).unwrap();
        assert_eq!(back, cp);
        assert_eq!(back.to_tree().unwrap(), tree);
    }

    #[test]
    fn dangling_child_is_named() {
        let mut cp = Checkpoint::from_tree(&sample_tree(), &SearchConfig::default(), &MemoryState::new(), 1);
        cp.edges[1].child_state_id = StateId(42);
        assert_eq!(
            cp.to_tree().unwrap_err(),
            CheckpointError::DanglingEdge { edge: ActionId(1), state: StateId(42) }
        );
    }

    #[test]
    fn wrong_depth_is_rejected() {
        let mut cp = Checkpoint::from_tree(&sample_tree(), &SearchConfig::default(), &MemoryState::new(), 1);
        cp.nodes[2].depth = 5;
        assert!(matches!(cp.to_tree(), Err(CheckpointError::BadNode { node: StateId(2), .. })));
    }

    #[test]
    fn field_names_are_stable() {
        let cp = Checkpoint::from_tree(&sample_tree(), &SearchConfig::default(), &MemoryState::new(), 1);
        let v: serde_json::Value = serde_json::from_str(&cp.to_json()).unwrap();
        for key in ["format_version", "seed", "config", "epochs_completed", "nodes", "edges", "trajectories", "memory"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let edge = &v["edges"][0];
        for key in ["action_id", "parent_state_id", "child_state_id", "feedback_text", "source_error_digest", "Q", "r"] {
            assert!(edge.get(key).is_some(), "{key}");
        }
        let node = &v["nodes"][0];
        for key in ["state_id", "text", "depth", "cached_reward", "parent_action", "visit_count", "terminal"] {
            assert!(node.get(key).is_some(), "{key}");
        }
        assert!(v["trajectories"][0][0].get("reward").is_some());
    }
}
