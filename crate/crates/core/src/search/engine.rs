use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info, warn};

use super::checkpoint::Checkpoint;
use super::config::{ConfigError, SearchConfig};
use super::tree::{PromptState, SearchTree, StateId, Trajectory, TrajectoryStep, TreeError};
use crate::eval::{Dataset, EvalError, Evaluator};
use crate::gateway::{Gateway, Role, RoleStats};
use crate::memory::MemoryState;
use crate::transitions::{
    apply_transition, generate_actions, resample_state, TemplateName, TemplateSet, TransitionContext, TransitionError,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(#[from] ConfigError),
    #[error("role `{0}` is not configured")]
    MissingRole(Role),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("expansion of {state} failed: {reason}")]
    Expansion { state: StateId, reason: String },
    #[error("search stopped during epoch {epoch}: {source}")]
    Interrupted {
        epoch: usize,
        #[source]
        source: Box<SearchError>,
        /// Tree and memory as they stood when the failure surfaced.
        checkpoint: Box<Checkpoint>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub path_len: usize,
    pub leaf_reward: f64,
    pub best_reward: f64,
    pub node_count: usize,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub config: SearchConfig,
    pub tree: SearchTree,
    pub memory: MemoryState,
    pub best: PromptState,
    pub initial_reward: f64,
    pub epochs: Vec<EpochLog>,
    pub llm_calls: BTreeMap<Role, RoleStats>,
    pub warnings: u64,
    pub validation_size: usize,
}

impl SearchResult {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_tree(&self.tree, &self.config, &self.memory, self.epochs.len())
    }
}

#[derive(Clone)]
struct Scored {
    reward: f64,
    errors: Vec<String>,
}

struct Search<'a> {
    config: &'a SearchConfig,
    gateway: &'a Gateway,
    templates: &'a TemplateSet,
    evaluator: Evaluator<'a>,
    validation: Dataset,
    tree: SearchTree,
    memory: MemoryState,
    scores: HashMap<String, Scored>,
    warnings: u64,
    epoch: usize,
}

impl<'a> Search<'a> {
    fn score(&mut self, prompt: &str) -> Result<Scored, EvalError> {
        if let Some(s) = self.scores.get(prompt) {
            return Ok(s.clone());
        }
        let outcome = self.evaluator.evaluate(prompt, &self.validation.samples)?;
        let scored = Scored {
            reward: outcome.report.accuracy_value,
            errors: outcome.report.error_strings,
        };
        self.scores.insert(prompt.to_string(), scored.clone());
        Ok(scored)
    }

    /// Expands a leaf. Returns the new children (none if the state turned out
    /// to be terminal). On error the tree is unchanged.
    fn expand(&mut self, id: StateId) -> Result<Vec<StateId>, SearchError> {
        let node = self.tree.node(id)?;
        if node.state.depth >= self.config.depth_limit {
            return Err(TreeError::DepthLimit {
                state: id,
                depth: node.state.depth,
                limit: self.config.depth_limit,
            }
            .into());
        }
        if !node.children.is_empty() {
            return Err(SearchError::Expansion {
                state: id,
                reason: "state already has children".into(),
            });
        }
        let text = node.state.text.clone();
        let parent = self.score(&text)?;
        self.tree.set_reward(id, parent.reward)?;

        let batch = generate_actions(self.gateway, self.templates, &text, &parent.errors, self.config.expand_width)?;
        if batch.terminal {
            self.tree.mark_terminal(id)?;
            return Ok(Vec::new());
        }
        if batch.short {
            self.warnings += 1;
        }

        let trajectory_prompts = self.tree.prompts_to(id)?;
        let depth = self.tree.node(id)?.state.depth;
        let mut staged = Vec::new();
        for action in batch.actions {
            if self.config.use_memory {
                self.memory
                    .record_feedback(&action.feedback_text, self.epoch as u64)
                    .map_err(|e| SearchError::Expansion { state: id, reason: e.to_string() })?;
                if !self
                    .memory
                    .maybe_summarize(self.gateway, Role::Optimizer, self.templates, self.config.summarize_threshold)
                    .map_err(|e| SearchError::Expansion { state: id, reason: e.to_string() })?
                    && self.memory.unsummarized() >= self.config.summarize_threshold
                {
                    self.warnings += 1;
                }
            }
            let ctx = TransitionContext {
                trajectory_prompts: trajectory_prompts.clone(),
                memory_guidance: if self.config.use_memory {
                    self.memory.guidance_text(self.config.memory_max_raw)
                } else {
                    String::new()
                },
                steps_per_gradient: 1,
            };
            match apply_transition(self.gateway, self.templates, &text, depth, &parent.errors, &action.feedback_text, &ctx) {
                Ok(candidates) => staged.push((action, candidates.into_iter().next().expect("non-empty").text)),
                Err(TransitionError::NoPrompts { .. }) => {
                    warn!(state = %id, "dropping action whose rewrite could not be parsed");
                    self.warnings += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        if staged.is_empty() {
            return Err(SearchError::Expansion {
                state: id,
                reason: "no action produced a parseable prompt".into(),
            });
        }

        let mut scored = Vec::with_capacity(staged.len());
        for (action, child_text) in staged {
            let reward = self.score(&child_text)?.reward;
            scored.push((action, child_text, reward));
        }
        let mut children = Vec::with_capacity(scored.len());
        for (action, child_text, reward) in scored {
            let (_, child) =
                self.tree
                    .add_child(id, &action.feedback_text, &action.source_error_digest, child_text, reward)?;
            children.push(child);
        }
        Ok(children)
    }

    /// Replaces `id` with its best resampled variant when one scores higher.
    fn resample(&mut self, id: StateId) -> Result<(), SearchError> {
        let node = self.tree.node(id)?;
        let text = node.state.text.clone();
        let reward = node.state.cached_reward.ok_or(TreeError::NotEvaluated(id))?;
        let (gateway, templates, d1) = (self.gateway, self.templates, self.config.resample_width);
        let outcome = resample_state(gateway, templates, &text, reward, d1, |v| self.score(v).map(|s| s.reward))
            .map_err(TransitionError::from)?;
        if outcome.warned {
            self.warnings += 1;
        }
        if outcome.replaced {
            debug!(state = %id, from = reward, to = outcome.reward, "resampled variant replaces state");
            self.tree.replace_state(id, outcome.text, outcome.reward)?;
        }
        Ok(())
    }

    fn is_early_stop(&self, id: StateId) -> Result<bool, SearchError> {
        let reward = self.tree.node(id)?.state.cached_reward;
        Ok(matches!((self.config.early_stop_reward, reward), (Some(t), Some(r)) if r >= t))
    }

    fn run_epoch(&mut self) -> Result<EpochLog, SearchError> {
        let mut at = self.tree.root();
        let mut steps = Vec::new();
        loop {
            let node = self.tree.node(at)?;
            if node.state.depth >= self.config.depth_limit || node.terminal {
                break;
            }
            let child = if node.children.is_empty() {
                let children = self.expand(at)?;
                if children.is_empty() {
                    break;
                }
                let best = self.tree.greedy_advance(&children)?;
                if self.config.resample_width > 0 {
                    self.resample(best)?;
                }
                best
            } else {
                let action = self.tree.uct_select(at, self.config.exploration_weight)?;
                self.tree.edge(action)?.child
            };
            let action = self.tree.node(child)?.state.parent_action.expect("child has a parent action");
            steps.push(TrajectoryStep {
                state_id: at,
                action_id: action,
                reward: self.tree.edge(action)?.reward,
            });
            at = child;
            if self.is_early_stop(at)? {
                break;
            }
        }
        let path_len = steps.len();
        if steps.is_empty() {
            self.tree.visit_root();
        } else {
            self.tree.backpropagate(Trajectory { steps })?;
        }
        Ok(EpochLog {
            epoch: self.epoch,
            path_len,
            leaf_reward: self.tree.node(at)?.state.cached_reward.unwrap_or(0.0),
            best_reward: self.tree.select_best()?.cached_reward.unwrap_or(0.0),
            node_count: self.tree.node_count(),
        })
    }
}

/// Runs the full search and returns the tree with its best prompt.
///
/// The validation subset is drawn once from `dataset` with the configured
/// fraction and seed. `initial_prompt` defaults to the built-in journalism
/// prompt.
pub fn run_search(
    config: &SearchConfig,
    dataset: &Dataset,
    gateway: &Gateway,
    templates: &TemplateSet,
    initial_prompt: Option<&str>,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    for role in Role::ALL {
        gateway.role_config(role).map_err(|_| SearchError::MissingRole(role))?;
    }
    let validation = dataset.sample_validation(config.validation_fraction, config.rng_seed)?;
    let initial = initial_prompt
        .map(str::to_string)
        .unwrap_or_else(|| templates.body(TemplateName::Initial).to_string());

    let mut evaluator = Evaluator::new(gateway, templates, config.batch_size);
    evaluator.error_cap = config.batch_size;
    let mut search = Search {
        config,
        gateway,
        templates,
        evaluator,
        validation,
        tree: SearchTree::new(initial.clone()),
        memory: MemoryState::new(),
        scores: HashMap::new(),
        warnings: 0,
        epoch: 0,
    };

    let interrupted = |s: &Search<'_>, epoch: usize, e: SearchError| SearchError::Interrupted {
        epoch,
        source: Box::new(e),
        checkpoint: Box::new(Checkpoint::from_tree(&s.tree, config, &s.memory, epoch)),
    };

    let initial_reward = match search.score(&initial) {
        Ok(s) => s.reward,
        Err(e) => return Err(interrupted(&search, 0, e.into())),
    };
    search.tree.set_reward(search.tree.root(), initial_reward)?;
    info!(reward = initial_reward, validation = search.validation.len(), "initial prompt scored");

    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        search.epoch = epoch;
        match search.run_epoch() {
            Ok(log) => {
                info!(epoch, best = log.best_reward, nodes = log.node_count, "epoch done");
                epochs.push(log);
            }
            Err(e) => return Err(interrupted(&search, epoch, e)),
        }
    }

    let best = search.tree.select_best()?.clone();
    Ok(SearchResult {
        config: config.clone(),
        best,
        initial_reward,
        epochs,
        llm_calls: gateway.stats(),
        warnings: search.warnings,
        validation_size: search.validation.len(),
        tree: search.tree,
        memory: search.memory,
    })
}
