use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use promptmcts_cli::{cmd_comment, cmd_eval, cmd_optimize, cmd_report, CliError, CommentArgs, EvalArgs, OptimizeArgs};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "promptmcts", version, about = "Tree-search prompt optimization for fake news detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a better prompt and write best_prompt.txt, tree.json and report.md.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Overrides search.rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prompt on a dataset and print {accuracy, correct, total, malformed}.
    Eval {
        #[arg(long)]
        prompt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Score a random subset of this size fraction.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "promptmcts.json")]
        config: PathBuf,
        /// Samples per model call; 1 asks about one message at a time.
        #[arg(long, default_value_t = 1)]
        batch_size: usize,
    },
    /// Generate a verdict and a reason for every sample as JSON Lines.
    Comment {
        #[arg(long)]
        prompt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "promptmcts.json")]
        config: PathBuf,
    },
    /// Print the best path of a saved tree.json.
    Report {
        #[arg(long)]
        tree: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize { config, seed, out } => {
            let o = cmd_optimize(&OptimizeArgs { config, seed, out })?;
            println!("best reward {:.4}; prompt written to {}", o.best_reward, o.best_prompt.display());
        }
        Command::Eval { prompt, dataset, fraction, seed, config, batch_size } => {
            let r = cmd_eval(&EvalArgs { prompt, dataset, fraction, seed, config, batch_size })?;
            println!("{}", serde_json::to_string(&r).expect("record serializes"));
        }
        Command::Comment { prompt, dataset, out, config } => {
            let n = cmd_comment(&CommentArgs { prompt, dataset, out: out.clone(), config })?;
            println!("{n} comments written to {}", out.display());
        }
        Command::Report { tree } => print!("{}", cmd_report(&tree)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
