//! Command implementations behind the `promptmcts` binary.
//!
//! Every command returns `Ok` or a [`CliError`] whose exit code is 2 for
//! usage and configuration problems and 3 for backend or runtime failures.

pub mod config;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use promptmcts_core::eval::{EvalError, Evaluator};
use promptmcts_core::search::{Checkpoint, SearchError};
use promptmcts_core::{run_search, Dataset};
use serde::Serialize;
use thiserror::Error;
use tracing::{info, warn};

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// Input problems are usage errors; everything the model side does wrong is a
/// runtime error.
fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::Gateway(_) => CliError::Runtime(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_prompt(path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Err(CliError::Usage(format!("{}: prompt file is empty", path.display())));
    }
    Ok(text)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

#[derive(Debug, Clone, Default)]
pub struct OptimizeArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Paths of the artifacts written by a successful optimization.
#[derive(Debug, Clone)]
pub struct OptimizeOutput {
    pub best_prompt: PathBuf,
    pub tree: PathBuf,
    pub report: PathBuf,
    pub best_reward: f64,
}

pub fn cmd_optimize(args: &OptimizeArgs) -> Result<OptimizeOutput, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.search.rng_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    let dataset_path = cfg
        .dataset_path
        .clone()
        .ok_or_else(|| CliError::Usage("dataset_path: required for optimize".into()))?;
    let dataset = load_dataset(&dataset_path)?;
    let templates = cfg.templates()?;
    let initial = cfg.initial_prompt()?;
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Usage(format!("output_dir: cannot create {}: {e}", cfg.output_dir.display())))?;
    let gateway = cfg.gateway()?;

    let tree_path = cfg.output_dir.join("tree.json");
    let result = match run_search(&cfg.search, &dataset, &gateway, &templates, initial.as_deref()) {
        Ok(r) => r,
        Err(SearchError::Interrupted { epoch, source, checkpoint }) => {
            write_file(&tree_path, &checkpoint.to_json())?;
            warn!(path = %tree_path.display(), "last consistent checkpoint saved");
            let err = format!("search stopped during epoch {}: {source}; checkpoint at {}", epoch + 1, tree_path.display());
            return Err(match *source {
                SearchError::Eval(e) if !matches!(e, EvalError::Gateway(_)) => CliError::Usage(err),
                _ => CliError::Runtime(err),
            });
        }
        Err(e @ (SearchError::Config(_) | SearchError::MissingRole(_))) => return Err(CliError::Usage(e.to_string())),
        Err(e @ SearchError::Eval(_)) => return Err(CliError::Usage(e.to_string())),
        Err(e) => return Err(CliError::Runtime(e.to_string())),
    };

    let best_reward = result.best.cached_reward.unwrap_or(0.0);
    let best_path = cfg.output_dir.join("best_prompt.txt");
    let report_path = cfg.output_dir.join("report.md");
    write_file(&tree_path, &result.checkpoint().to_json())?;
    write_file(&best_path, &result.best.text)?;
    write_file(
        &report_path,
        &report::render_run_report(&report::RunSummary {
            tree: &result.tree,
            initial_reward: result.initial_reward,
            best_reward,
            validation_size: result.validation_size,
            epochs: &result.epochs,
            llm_calls: &result.llm_calls,
            warnings: result.warnings,
        }),
    )?;
    info!(best_reward, out = %cfg.output_dir.display(), "optimization finished");
    Ok(OptimizeOutput {
        best_prompt: best_path,
        tree: tree_path,
        report: report_path,
        best_reward,
    })
}

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub prompt: PathBuf,
    pub dataset: PathBuf,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
    pub config: PathBuf,
    pub batch_size: usize,
}

/// The single JSON object printed by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRecord {
    pub accuracy: f64,
    pub correct: u64,
    pub total: u64,
    pub malformed: u64,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<AccuracyRecord, CliError> {
    let prompt = read_prompt(&args.prompt)?;
    let mut dataset = load_dataset(&args.dataset)?;
    let cfg = RunConfig::load(&args.config)?;
    if let Some(f) = args.fraction {
        dataset = dataset.sample_validation(f, args.seed.unwrap_or(0)).map_err(eval_error)?;
    }
    let templates = cfg.templates()?;
    let gateway = cfg.gateway()?;
    let outcome = Evaluator::new(&gateway, &templates, args.batch_size.max(1))
        .evaluate(&prompt, &dataset.samples)
        .map_err(eval_error)?;
    let r = outcome.report;
    Ok(AccuracyRecord {
        accuracy: r.accuracy_value,
        correct: r.correct,
        total: r.total,
        malformed: r.malformed_count,
    })
}

#[derive(Debug, Clone, Default)]
pub struct CommentArgs {
    pub prompt: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub config: PathBuf,
}

/// Writes one comment record per sample, in dataset order. Returns the number
/// of records. On failure after the output was opened, the file is removed.
pub fn cmd_comment(args: &CommentArgs) -> Result<usize, CliError> {
    let prompt = read_prompt(&args.prompt)?;
    let dataset = load_dataset(&args.dataset)?;
    let cfg = RunConfig::load(&args.config)?;
    let templates = cfg.templates()?;
    let gateway = cfg.gateway()?;

    let mut file = fs::File::create(&args.out)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;
    let written = (|| {
        let records = Evaluator::new(&gateway, &templates, cfg.search.batch_size)
            .comment(&prompt, &dataset.samples)
            .map_err(eval_error)?;
        for r in &records {
            let line = serde_json::to_string(r).expect("comment record serializes");
            writeln!(file, "{line}").map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
        }
        file.flush().map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
        Ok(records.len())
    })();
    if written.is_err() {
        drop(file);
        let _ = fs::remove_file(&args.out);
    }
    written
}

/// Renders the report for a saved checkpoint, checking its integrity first.
pub fn cmd_report(tree: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(tree).map_err(|e| CliError::Usage(format!("{}: {e}", tree.display())))?;
    let checkpoint =
        Checkpoint::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", tree.display())))?;
    let tree_data = checkpoint
        .to_tree()
        .map_err(|e| CliError::Usage(format!("{}: corrupt checkpoint: {e}", tree.display())))?;
    report::render_tree_report(&tree_data).map_err(|e| CliError::Usage(format!("{}: {e}", tree.display())))
}
