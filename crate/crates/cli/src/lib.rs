//! The `kgtext` command line: split generation, training, link-prediction
//! evaluation, entity classification, re-ranking and the description-length
//! sweep, all driven by one config file.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

pub mod commands;
pub mod config;

pub use commands::SweepPoint;
pub use config::{RunConfig, ValidationError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "kgtext",
    version,
    about = "Inductive entity embeddings from descriptions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file of `key = value` lines in [sections]
    #[arg(long, short, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override a config key, e.g. `--set train.lr=0.01`; repeatable, last wins
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Worker threads; `--threads 1` makes every artifact reproducible bit for bit
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Hold out entities and write train/valid/test triples to data.split_dir
    Split,
    /// Train an encoder and write data.checkpoint and loss.csv
    Train,
    /// Filtered link-prediction ranking of a split partition
    EvalLp,
    /// Logistic regression on frozen entity embeddings
    Classify,
    /// Interpolate a base run with embedding similarity, tuning alpha over folds
    Rerank,
    /// Train and evaluate at each of sweep.lengths
    SweepLen,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Split => "split",
            Command::Train => "train",
            Command::EvalLp => "eval-lp",
            Command::Classify => "classify",
            Command::Rerank => "rerank",
            Command::SweepLen => "sweep-len",
        }
    }
}

/// Parses arguments, runs one command and returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let keys = config::key_help();
    let command = Cli::command()
        .after_long_help(keys.clone())
        .mut_subcommands(|s| s.after_long_help(keys.clone()));
    let matches = match command.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_INVALID;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let cfg = match RunConfig::load(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    run(cli.command, &cfg)
}

/// Runs a command on a loaded config. Runtime failures leave a
/// `<command>.failed` file holding the error in the artifact directory.
pub fn run(command: Command, cfg: &RunConfig) -> i32 {
    let name = command.name();
    if let Err(e) = commands::preflight(cfg, name) {
        eprintln!("error: {e}");
        return EXIT_INVALID;
    }
    let marker = commands::artifact_dir(cfg, name).map(|d| d.join(format!("{name}.failed")));
    if let Some(m) = &marker {
        let _ = std::fs::remove_file(m);
    }
    let result = match command {
        Command::Split => commands::cmd_split(cfg).map(drop),
        Command::Train => commands::cmd_train(cfg).map(drop),
        Command::EvalLp => commands::cmd_eval_lp(cfg).map(drop),
        Command::Classify => commands::cmd_classify(cfg).map(drop),
        Command::Rerank => commands::cmd_rerank(cfg).map(drop),
        Command::SweepLen => commands::cmd_sweep_len(cfg).map(drop),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) if is_validation(&e) => {
            eprintln!("error: {e:#}");
            EXIT_INVALID
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(m) = &marker {
                if m.parent()
                    .is_some_and(|d| std::fs::create_dir_all(d).is_ok())
                {
                    let _ = std::fs::write(m, format!("{e:#}\n"));
                }
            }
            EXIT_RUNTIME
        }
    }
}

fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<ValidationError>()
            || matches!(
                c.downcast_ref::<kgtext_core::Error>(),
                Some(kgtext_core::Error::Config(_))
            )
    })
}
