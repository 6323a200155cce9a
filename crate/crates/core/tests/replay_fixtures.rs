use std::path::Path;
use std::sync::Arc;

use promptmcts_core::gateway::{BackendKind, FnScript, LlmRoleConfig, ReplayBackend, ScriptCall, ScriptedBackend};
use promptmcts_core::landscape::{benchmark_config, synthetic_dataset, KeywordLandscape};
use promptmcts_core::memory::MemoryState;
use promptmcts_core::transitions::{apply_transition, generate_actions, TransitionContext};
use promptmcts_core::{run_search, Gateway, Role, TemplateSet};

fn scripted(f: impl Fn(&ScriptCall<'_>) -> String + Send + Sync + 'static) -> Gateway {
    let backend = Arc::new(ScriptedBackend::new(Arc::new(FnScript(f)), 0));
    Role::ALL.into_iter().fold(Gateway::new(), |gw, r| {
        gw.with_role(LlmRoleConfig::default_for(r).with_backend(BackendKind::Scripted), backend.clone())
    })
}

fn replay(path: &Path) -> Gateway {
    let backend = Arc::new(ReplayBackend::from_path(path).unwrap());
    Role::ALL.into_iter().fold(Gateway::new(), |gw, r| {
        gw.with_role(LlmRoleConfig::default_for(r).with_backend(BackendKind::Replay), backend.clone())
    })
}

#[test]
fn recorded_actions_replay_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("actions.jsonl");
    let ts = TemplateSet::default();
    let errors = vec!["The model's input is: x\nThe correct label is: False".to_string()];

    let live = scripted(|_| "Reasons: too vague.\n1. Ask who the source is.\n2. Flag loaded adjectives.".into())
        .record_to(&fixtures)
        .unwrap();
    let recorded = generate_actions(&live, &ts, "Judge the news.", &errors, 2).unwrap();
    drop(live);

    let replayed = generate_actions(&replay(&fixtures), &ts, "Judge the news.", &errors, 2).unwrap();
    let texts: Vec<&str> = replayed.actions.iter().map(|a| a.feedback_text.as_str()).collect();
    assert_eq!(texts, ["Ask who the source is.", "Flag loaded adjectives."]);
    assert_eq!(replayed, recorded);
}

#[test]
fn recorded_transition_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("transit.jsonl");
    let ts = TemplateSet::default();
    let ctx = TransitionContext {
        trajectory_prompts: vec!["Judge the news.".into()],
        memory_guidance: String::new(),
        steps_per_gradient: 1,
    };
    let errors = vec!["err".to_string()];
    let live = scripted(|c| format!("<START>Judge the news. Prompt length {}.<END>", c.prompt.len()))
        .record_to(&fixtures)
        .unwrap();
    let first = apply_transition(&live, &ts, "Judge the news.", 0, &errors, "Cite sources.", &ctx).unwrap();
    drop(live);
    for _ in 0..2 {
        let again =
            apply_transition(&replay(&fixtures), &ts, "Judge the news.", 0, &errors, "Cite sources.", &ctx).unwrap();
        assert_eq!(again, first);
        assert_eq!(again[0].depth, 1);
    }
}

#[test]
fn threshold_one_summarizes_immediately() {
    let gw = scripted(|_| "- keep an eye on sources".into());
    let mut m = MemoryState::new();
    m.record_feedback("Cite sources.", 0).unwrap();
    assert!(m.maybe_summarize(&gw, Role::Optimizer, &TemplateSet::default(), 1).unwrap());
    assert_eq!(m.summary, "- keep an eye on sources");
    assert_eq!(m.summarized_through, 1);
    assert_eq!(m.guidance_text(10), "- keep an eye on sources");
}

#[test]
fn search_replays_from_recorded_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("search.jsonl");
    let land = KeywordLandscape::default();
    let ds = synthetic_dataset(&land.keywords, 2);
    let ts = TemplateSet::default();
    let mut cfg = benchmark_config(5);
    cfg.epochs = 4;

    let backend = Arc::new(ScriptedBackend::new(Arc::new(land), 5));
    let live = Role::ALL
        .into_iter()
        .fold(Gateway::new(), |gw, r| {
            gw.with_role(LlmRoleConfig::default_for(r).with_backend(BackendKind::Scripted), backend.clone())
        })
        .record_to(&fixtures)
        .unwrap();
    let recorded = run_search(&cfg, &ds, &live, &ts, None).unwrap().checkpoint().to_json();
    drop(live);

    let a = run_search(&cfg, &ds, &replay(&fixtures), &ts, None).unwrap();
    let b = run_search(&cfg, &ds, &replay(&fixtures), &ts, None).unwrap();
    assert_eq!(a.checkpoint().to_json(), recorded);
    assert_eq!(a.checkpoint().to_json(), b.checkpoint().to_json());
    assert_eq!(a.best, b.best);
}
