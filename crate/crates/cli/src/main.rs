mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gabar::graph::Ablation;
use settings::Settings;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: exit 2.
    Usage(String),
    /// Inputs that parse as arguments but fail in the planner or model: exit 1.
    Domain(String),
}

impl CliError {
    pub fn domain(e: impl std::fmt::Display) -> CliError {
        CliError::Domain(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "gabar", version, about = "Train and run graph-based action-ranking policies for PDDL planning")]
struct Cli {
    /// JSON settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and ground; report object, atom and grounding counts.
    Validate(ValidateArgs),
    /// Write random blocksworld or gripper problems.
    Generate(GenerateArgs),
    /// Label states of solved problems with optimal first actions.
    GenData(GenDataArgs),
    /// Train a model and write the best-validation checkpoint.
    Train(TrainArgs),
    /// Roll out a checkpoint on one problem.
    Solve(SolveArgs),
    /// Coverage and plan quality over tiers of problems.
    Evaluate(EvaluateArgs),
    /// Dump the planning graph of a problem's initial state as JSON.
    InspectGraph(InspectArgs),
}

#[derive(Args, Debug, Default)]
struct ModelFlags {
    #[arg(long)]
    ablation: Option<Ablation>,
    /// Message-passing rounds.
    #[arg(long)]
    layers: Option<usize>,
    /// Embedding width.
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ExecFlags {
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Do not fall back to ranking every applicable action.
    #[arg(long)]
    no_fallback: bool,
}

#[derive(Args, Debug, Default)]
struct BudgetFlags {
    /// Planner expansion limit per instance.
    #[arg(long)]
    max_expansions: Option<usize>,
    /// Planner time limit per instance, seconds.
    #[arg(long)]
    max_seconds: Option<f64>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// `DOMAIN [PROBLEM...]`, as an alternative to the flags.
    paths: Vec<PathBuf>,
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long = "problems", alias = "problem", num_args = 1..)]
    problems: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// blocksworld or gripper.
    #[arg(long)]
    family: Option<String>,
    /// Problem sizes (blocks or balls).
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Problems per size.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long = "problems", alias = "problem", num_args = 1..)]
    problems: Vec<PathBuf>,
    /// Dataset file (JSON lines); provenance goes to `<out>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// train or val.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    budget: BudgetFlags,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long)]
    val_data: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch metrics (JSON lines).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long = "problem", alias = "problems")]
    problem: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Step trace (JSON lines).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Plan file, one action per line.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    exec: ExecFlags,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Problems of a single tier named `test`.
    #[arg(long = "problems", alias = "problem", num_args = 1..)]
    problems: Vec<PathBuf>,
    /// `NAME=PATH[,PATH...]`; a directory stands for its `.pddl` files.
    #[arg(long = "tier")]
    tiers: Vec<String>,
    /// Earlier JSON reports (other domains) to show in the table.
    #[arg(long = "include-report")]
    include_reports: Vec<PathBuf>,
    /// Output directory for report.txt, report.json, results.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    exec: ExecFlags,
    #[command(flatten)]
    budget: BudgetFlags,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long = "problem", alias = "problems")]
    problem: Option<PathBuf>,
    #[arg(long)]
    ablation: Option<Ablation>,
    /// JSON output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ModelFlags {
    fn into_settings(self, s: Settings) -> Settings {
        Settings { ablation: self.ablation, layers: self.layers, hidden: self.hidden, ..s }
    }
}

impl ExecFlags {
    fn into_settings(self, s: Settings) -> Settings {
        Settings { beam: self.beam, max_steps: self.max_steps, fallback: self.no_fallback.then_some(false), ..s }
    }
}

impl BudgetFlags {
    fn into_settings(self, s: Settings) -> Settings {
        Settings { max_expansions: self.max_expansions, max_seconds: self.max_seconds, ..s }
    }
}

/// The subcommand's own flags as settings, plus its name.
fn flag_settings(cmd: Command) -> (&'static str, Settings) {
    let d = Settings::default();
    match cmd {
        Command::Validate(a) => {
            let mut paths = a.paths.into_iter();
            let domain = a.domain.or_else(|| paths.next());
            let mut problems = a.problems;
            problems.extend(paths);
            ("validate", Settings { domain, problems, ..d })
        }
        Command::Generate(a) => {
            ("generate", Settings { family: a.family, sizes: a.sizes, count: a.count, seed: a.seed, out: a.out, ..d })
        }
        Command::GenData(a) => {
            let s = Settings {
                domain: a.domain,
                problems: a.problems,
                out: a.out,
                seed: a.seed,
                split: a.split,
                workers: a.workers,
                ..d
            };
            ("gen-data", a.budget.into_settings(s))
        }
        Command::Train(a) => {
            let s = Settings {
                domain: a.domain,
                train_data: a.train_data,
                val_data: a.val_data,
                out: a.out,
                log: a.log,
                seed: a.seed,
                lr: a.lr,
                batch: a.batch,
                epochs: a.epochs,
                workers: a.workers,
                ..d
            };
            ("train", a.model.into_settings(s))
        }
        Command::Solve(a) => {
            let s = Settings {
                domain: a.domain,
                problems: a.problem.into_iter().collect(),
                checkpoint: a.checkpoint,
                trace: a.trace,
                out: a.out,
                ..d
            };
            ("solve", a.exec.into_settings(s))
        }
        Command::Evaluate(a) => {
            let s = Settings {
                domain: a.domain,
                checkpoint: a.checkpoint,
                problems: a.problems,
                tiers: a.tiers,
                include_reports: a.include_reports,
                out: a.out,
                workers: a.workers,
                ..d
            };
            let s = a.exec.into_settings(s);
            ("evaluate", a.budget.into_settings(s))
        }
        Command::InspectGraph(a) => (
            "inspect-graph",
            Settings { domain: a.domain, problems: a.problem.into_iter().collect(), ablation: a.ablation, out: a.out, ..d },
        ),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Settings::from_json(&text)?
        }
        None => Settings::default(),
    };
    let (name, flags) = flag_settings(cli.command);
    let settings = flags.or(file).with_env_seed()?;
    commands::dispatch(name, settings)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version requests print and exit 0; everything else is a usage error (2).
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}\n\nUsage: gabar <COMMAND> [OPTIONS]; see `gabar --help`");
            ExitCode::from(2)
        }
        Err(CliError::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
