//! The search tree: prompts as states, feedback as actions.
//!
//! Nodes and edges live in arenas indexed by their ids, so id order is
//! creation order. Every tie in the search is broken by that order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u32);

impl std::fmt::Display for StateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl std::fmt::Display for ActionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "a{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptState {
    pub state_id: StateId,
    pub text: String,
    pub depth: usize,
    pub cached_reward: Option<f64>,
    pub parent_action: Option<ActionId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEdge {
    pub action_id: ActionId,
    pub feedback_text: String,
    pub source_error_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub state: PromptState,
    pub parent: Option<StateId>,
    /// Outgoing actions in creation order.
    pub children: Vec<ActionId>,
    pub visit_count: u64,
    /// No errors left to fix; never expanded.
    pub terminal: bool,
}

/// An action together with its endpoints, `r(s, a)` and `Q(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub action: ActionEdge,
    pub parent: StateId,
    pub child: StateId,
    pub reward: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state_id: StateId,
    pub action_id: ActionId,
    pub reward: f64,
}

/// One root-to-terminal path: the state left, the action taken, and the
/// immediate reward of the state reached.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TreeError {
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("unknown action {0}")]
    UnknownAction(ActionId),
    #[error("state {0} has no children")]
    Leaf(StateId),
    #[error("state {0} has never been visited")]
    Unvisited(StateId),
    #[error("no candidates to choose from")]
    NoCandidates,
    #[error("state {0} has no cached reward")]
    NotEvaluated(StateId),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectory step {step} does not continue the path: {reason}")]
    BrokenPath { step: usize, reason: String },
    #[error("state {state} is at depth {depth}, the limit is {limit}")]
    DepthLimit { state: StateId, depth: usize, limit: usize },
    #[error("feedback text is empty")]
    EmptyFeedback,
    #[error("prompt text is empty")]
    EmptyPrompt,
    #[error("no state has been evaluated")]
    NothingEvaluated,
}

/// `Q + k * sqrt(ln N(s) / N(child))`.
pub fn uct_score(q: f64, parent_visits: u64, child_visits: u64, k: f64) -> f64 {
    q + k * ((parent_visits as f64).ln() / child_visits as f64).sqrt()
}

/// One child as seen by [`uct_choose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UctCandidate {
    pub q: f64,
    pub visits: u64,
}

/// Index of the child to descend into. Unvisited children come first (the
/// earliest one); otherwise the highest UCT score wins, earliest on ties.
pub fn uct_choose(candidates: &[UctCandidate], parent_visits: u64, k: f64) -> Option<usize> {
    if candidates.is_empty() {
        return None;
    }
    if let Some(i) = candidates.iter().position(|c| c.visits == 0) {
        return Some(i);
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let s = uct_score(c.q, parent_visits, c.visits, k);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    Some(best)
}

/// Index of the highest reward, earliest on ties.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTree {
    pub(crate) nodes: Vec<SearchNode>,
    pub(crate) edges: Vec<EdgeRecord>,
    pub(crate) trajectories: Vec<Trajectory>,
    /// For each edge, the (trajectory, step) positions that traverse it.
    pub(crate) edge_index: Vec<Vec<(usize, usize)>>,
}

impl SearchTree {
    pub fn new(root_text: impl Into<String>) -> Self {
        Self {
            nodes: vec![SearchNode {
                state: PromptState {
                    state_id: StateId(0),
                    text: root_text.into(),
                    depth: 0,
                    cached_reward: None,
                    parent_action: None,
                },
                parent: None,
                children: Vec::new(),
                visit_count: 0,
                terminal: false,
            }],
            edges: Vec::new(),
            trajectories: Vec::new(),
            edge_index: Vec::new(),
        }
    }

    pub fn root(&self) -> StateId {
        StateId(0)
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.state.depth).max().unwrap_or(0)
    }

    pub fn node(&self, id: StateId) -> Result<&SearchNode, TreeError> {
        self.nodes.get(id.0 as usize).ok_or(TreeError::UnknownState(id))
    }

    fn node_mut(&mut self, id: StateId) -> Result<&mut SearchNode, TreeError> {
        self.nodes.get_mut(id.0 as usize).ok_or(TreeError::UnknownState(id))
    }

    pub fn edge(&self, id: ActionId) -> Result<&EdgeRecord, TreeError> {
        self.edges.get(id.0 as usize).ok_or(TreeError::UnknownAction(id))
    }

    pub fn is_leaf(&self, id: StateId) -> Result<bool, TreeError> {
        Ok(self.node(id)?.children.is_empty())
    }

    pub fn set_reward(&mut self, id: StateId, reward: f64) -> Result<(), TreeError> {
        self.node_mut(id)?.state.cached_reward = Some(reward);
        Ok(())
    }

    pub fn mark_terminal(&mut self, id: StateId) -> Result<(), TreeError> {
        self.node_mut(id)?.terminal = true;
        Ok(())
    }

    /// Attaches a new child reached by `feedback`, with immediate reward `reward`.
    pub fn add_child(
        &mut self,
        parent: StateId,
        feedback: &str,
        source_error_digest: &str,
        text: impl Into<String>,
        reward: f64,
    ) -> Result<(ActionId, StateId), TreeError> {
        let text = text.into();
        if feedback.trim().is_empty() {
            return Err(TreeError::EmptyFeedback);
        }
        if text.trim().is_empty() {
            return Err(TreeError::EmptyPrompt);
        }
        let depth = self.node(parent)?.state.depth + 1;
        let action_id = ActionId(self.edges.len() as u32);
        let state_id = StateId(self.nodes.len() as u32);
        self.nodes.push(SearchNode {
            state: PromptState {
                state_id,
                text,
                depth,
                cached_reward: Some(reward),
                parent_action: Some(action_id),
            },
            parent: Some(parent),
            children: Vec::new(),
            visit_count: 0,
            terminal: false,
        });
        self.edges.push(EdgeRecord {
            action: ActionEdge {
                action_id,
                feedback_text: feedback.to_string(),
                source_error_digest: source_error_digest.to_string(),
            },
            parent,
            child: state_id,
            reward,
            q: 0.0,
        });
        self.edge_index.push(Vec::new());
        self.node_mut(parent)?.children.push(action_id);
        Ok((action_id, state_id))
    }

    /// Swaps a state's prompt for a better-scoring variant; the reward on the
    /// incoming edge follows.
    pub fn replace_state(&mut self, id: StateId, text: impl Into<String>, reward: f64) -> Result<(), TreeError> {
        let node = self.node_mut(id)?;
        node.state.text = text.into();
        node.state.cached_reward = Some(reward);
        if let Some(a) = node.state.parent_action {
            self.edges[a.0 as usize].reward = reward;
        }
        Ok(())
    }

    /// UCT choice among the children of `id`.
    pub fn uct_select(&self, id: StateId, k: f64) -> Result<ActionId, TreeError> {
        let node = self.node(id)?;
        if node.children.is_empty() {
            return Err(TreeError::Leaf(id));
        }
        let candidates: Vec<UctCandidate> = node
            .children
            .iter()
            .map(|&a| {
                let e = &self.edges[a.0 as usize];
                UctCandidate {
                    q: e.q,
                    visits: self.nodes[e.child.0 as usize].visit_count,
                }
            })
            .collect();
        if node.visit_count == 0 && candidates.iter().all(|c| c.visits > 0) {
            return Err(TreeError::Unvisited(id));
        }
        let i = uct_choose(&candidates, node.visit_count, k).ok_or(TreeError::Leaf(id))?;
        Ok(node.children[i])
    }

    /// The child with the highest immediate reward, earliest on ties.
    pub fn greedy_advance(&self, children: &[StateId]) -> Result<StateId, TreeError> {
        let rewards = children
            .iter()
            .map(|&c| self.node(c)?.state.cached_reward.ok_or(TreeError::NotEvaluated(c)))
            .collect::<Result<Vec<_>, _>>()?;
        argmax_first(&rewards)
            .map(|i| children[i])
            .ok_or(TreeError::NoCandidates)
    }

    /// Counts an iteration that never left the root.
    pub fn visit_root(&mut self) {
        self.nodes[0].visit_count += 1;
    }

    fn check_trajectory(&self, trajectory: &Trajectory) -> Result<(), TreeError> {
        let Some(first) = trajectory.steps.first() else {
            return Err(TreeError::EmptyTrajectory);
        };
        if first.state_id != self.root() {
            return Err(TreeError::BrokenPath {
                step: 0,
                reason: format!("starts at {} instead of the root", first.state_id),
            });
        }
        let mut at = self.root();
        for (i, step) in trajectory.steps.iter().enumerate() {
            self.node(step.state_id)?;
            let edge = self.edge(step.action_id)?;
            if step.state_id != at {
                return Err(TreeError::BrokenPath {
                    step: i,
                    reason: format!("expected {at}, found {}", step.state_id),
                });
            }
            if edge.parent != step.state_id {
                return Err(TreeError::BrokenPath {
                    step: i,
                    reason: format!("{} does not leave {}", step.action_id, step.state_id),
                });
            }
            at = edge.child;
        }
        Ok(())
    }

    /// Mean, over stored trajectories through `action`, of the reward sum from
    /// that step to the trajectory's end.
    pub(crate) fn recompute_q(&self, action: ActionId) -> f64 {
        let uses = &self.edge_index[action.0 as usize];
        if uses.is_empty() {
            return 0.0;
        }
        let total: f64 = uses
            .iter()
            .map(|&(t, s)| self.trajectories[t].steps[s..].iter().map(|x| x.reward).sum::<f64>())
            .sum();
        total / uses.len() as f64
    }

    /// Stores the trajectory, refreshes `Q` on every edge it used, and counts
    /// one visit for every node on the path.
    pub fn backpropagate(&mut self, trajectory: Trajectory) -> Result<(), TreeError> {
        self.check_trajectory(&trajectory)?;
        let t = self.trajectories.len();
        for (s, step) in trajectory.steps.iter().enumerate() {
            self.edge_index[step.action_id.0 as usize].push((t, s));
        }
        let path: Vec<ActionId> = trajectory.steps.iter().map(|s| s.action_id).collect();
        self.trajectories.push(trajectory);
        self.nodes[0].visit_count += 1;
        for a in path {
            let q = self.recompute_q(a);
            let edge = &mut self.edges[a.0 as usize];
            edge.q = q;
            let child = edge.child;
            self.nodes[child.0 as usize].visit_count += 1;
        }
        Ok(())
    }

    /// The evaluated state with the highest reward; shallower, then earlier,
    /// wins ties.
    pub fn select_best(&self) -> Result<&PromptState, TreeError> {
        let mut best: Option<&PromptState> = None;
        for n in &self.nodes {
            let Some(r) = n.state.cached_reward else { continue };
            let better = match best {
                None => true,
                Some(b) => {
                    let br = b.cached_reward.unwrap_or(f64::NEG_INFINITY);
                    r > br || (r == br && n.state.depth < b.depth)
                }
            };
            if better {
                best = Some(&n.state);
            }
        }
        best.ok_or(TreeError::NothingEvaluated)
    }

    /// States from the root down to `id`.
    pub fn path_to(&self, id: StateId) -> Result<Vec<StateId>, TreeError> {
        let mut path = vec![id];
        let mut at = self.node(id)?;
        while let Some(p) = at.parent {
            path.push(p);
            at = self.node(p)?;
        }
        path.reverse();
        Ok(path)
    }

    pub fn prompts_to(&self, id: StateId) -> Result<Vec<String>, TreeError> {
        self.path_to(id)?
            .into_iter()
            .map(|s| Ok(self.node(s)?.state.text.clone()))
            .collect()
    }
}
