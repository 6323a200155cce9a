use std::collections::BTreeMap;
use std::fmt::Write;

use promptmcts_core::gateway::RoleStats;
use promptmcts_core::search::{EpochLog, SearchTree};
use promptmcts_core::{Role, StateId};

fn reward(r: Option<f64>) -> String {
    r.map_or_else(|| "unevaluated".to_string(), |r| format!("{r:.4}"))
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("    {l}\n")).collect()
}

/// Root-to-best path with per-edge `Q`, `r` and `N`, then the best prompt.
/// Pure in the tree, so identical checkpoints render identically.
pub fn render_tree_report(tree: &SearchTree) -> Result<String, promptmcts_core::search::TreeError> {
    let best = tree.select_best()?;
    let path = tree.path_to(best.state_id)?;
    let mut out = String::new();
    let root = tree.node(StateId(0))?;
    writeln!(out, "best path ({} states)", path.len()).unwrap();
    writeln!(out, "{}  depth 0  reward {}  N={}", root.state.state_id, reward(root.state.cached_reward), root.visit_count)
        .unwrap();
    for &id in &path[1..] {
        let node = tree.node(id)?;
        let action = node.state.parent_action.expect("non-root state has a parent action");
        let edge = tree.edge(action)?;
        writeln!(
            out,
            "  {action}  Q={:.4}  r={:.4}  N={}  -> {id}  depth {}",
            edge.q, edge.reward, node.visit_count, node.state.depth
        )
        .unwrap();
    }
    writeln!(out).unwrap();
    writeln!(
        out,
        "global best: {}  reward {}  depth {}",
        best.state_id,
        reward(best.cached_reward),
        best.depth
    )
    .unwrap();
    out.push_str(&indent(&best.text));
    Ok(out)
}

pub struct RunSummary<'a> {
    pub tree: &'a SearchTree,
    pub initial_reward: f64,
    pub best_reward: f64,
    pub validation_size: usize,
    pub epochs: &'a [EpochLog],
    pub llm_calls: &'a BTreeMap<Role, RoleStats>,
    pub warnings: u64,
}

/// The `report.md` written next to the optimization artifacts.
pub fn render_run_report(run: &RunSummary<'_>) -> String {
    let mut out = String::from("# Optimization report\n\n");
    writeln!(out, "- initial reward: {:.4}", run.initial_reward).unwrap();
    writeln!(out, "- best reward: {:.4}", run.best_reward).unwrap();
    writeln!(out, "- validation samples: {}", run.validation_size).unwrap();
    writeln!(out, "- nodes: {}", run.tree.node_count()).unwrap();
    writeln!(out, "- warnings: {}\n", run.warnings).unwrap();

    out.push_str("## Epochs\n\n| epoch | path length | leaf reward | best reward | nodes |\n|---|---|---|---|---|\n");
    for e in run.epochs {
        writeln!(
            out,
            "| {} | {} | {:.4} | {:.4} | {} |",
            e.epoch + 1,
            e.path_len,
            e.leaf_reward,
            e.best_reward,
            e.node_count
        )
        .unwrap();
    }

    out.push_str("\n## LLM calls\n\n| role | requests | backend calls | cache hits | failures |\n|---|---|---|---|---|\n");
    for role in Role::ALL {
        let s = run.llm_calls.get(&role).copied().unwrap_or_default();
        writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            role.as_str(),
            s.requests,
            s.backend_calls,
            s.cache_hits,
            s.failures
        )
        .unwrap();
    }

    out.push_str("\n## Best path\n\n```\n");
    match render_tree_report(run.tree) {
        Ok(t) => out.push_str(&t),
        Err(e) => writeln!(out, "{e}").unwrap(),
    }
    out.push_str("```\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use promptmcts_core::search::{Trajectory, TrajectoryStep};

    #[test]
    fn single_node_tree_shows_root_only() {
        let mut t = SearchTree::new("only prompt");
        t.set_reward(StateId(0), 0.5).unwrap();
        let r = render_tree_report(&t).unwrap();
        assert!(r.starts_with("best path (1 states)\ns0  depth 0  reward 0.5000  N=0\n"), "{r}");
        assert!(r.contains("global best: s0  reward 0.5000  depth 0\n    only prompt\n"));
    }

    #[test]
    fn path_lists_edges_down_to_best() {
        let mut t = SearchTree::new("root");
        t.set_reward(StateId(0), 0.2).unwrap();
        let (a, s1) = t.add_child(StateId(0), "fb", "d", "better", 0.6).unwrap();
        t.add_child(StateId(0), "fb", "d", "worse", 0.1).unwrap();
        t.backpropagate(Trajectory { steps: vec![TrajectoryStep { state_id: StateId(0), action_id: a, reward: 0.6 }] })
            .unwrap();
        let r = render_tree_report(&t).unwrap();
        assert!(r.contains(&format!("  {a}  Q=0.6000  r=0.6000  N=1  -> {s1}  depth 1\n")), "{r}");
        assert!(r.contains("global best: s1"));
    }
}
