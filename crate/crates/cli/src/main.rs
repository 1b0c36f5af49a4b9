use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use eperm_core::config::KEYS;
use eperm_core::{Error, ErrorKind, RunConfig};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "eperm",
    version,
    about = "Knowledge-graph question answering over weighted evidence paths"
)]
struct Cli {
    /// Configuration file (`[section]` / `key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides run.workers.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Overrides run.backend (lexical or remote).
    #[arg(long, global = true)]
    backend: Option<String>,

    /// Print evidence paths with hop and aggregate scores.
    #[arg(long, global = true)]
    explain: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct QuestionArgs {
    /// Question text.
    #[arg(long, short)]
    pub question: Option<String>,
    /// Topic entity id; repeat for several.
    #[arg(long = "topic", short)]
    pub topics: Vec<String>,
    /// Take question and topics from the dataset entry with this id.
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the whole pipeline for one question.
    Answer {
        #[command(flatten)]
        q: QuestionArgs,
        /// Predict from a saved path file instead of running the pipeline.
        #[arg(long)]
        from_paths: Option<PathBuf>,
    },
    /// Retrieve the question subgraph.
    Retrieve {
        #[command(flatten)]
        q: QuestionArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Generate plans for a saved subgraph.
    Plans {
        #[arg(long)]
        subgraph: PathBuf,
        /// Question id recorded with the plans.
        #[arg(long, default_value = "q")]
        id: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Ground plans into evidence paths over a saved subgraph.
    Paths {
        #[arg(long)]
        subgraph: PathBuf,
        #[arg(long)]
        plans: PathBuf,
        #[arg(long, default_value = "q")]
        id: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write the find and reason instruction datasets.
    EmitTrain {
        #[arg(long)]
        find_out: PathBuf,
        #[arg(long)]
        reason_out: PathBuf,
    },
    /// Evaluate the pipeline on the configured dataset.
    Eval {
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a grid of plan counts (s) and hop widths (S).
    Sweep {
        #[arg(long = "s-values", value_delimiter = ',', default_value = "1,2,4,6")]
        s_values: Vec<usize>,
        /// Hop widths; `inf` disables filtering.
        #[arg(long = "top-s-values", value_delimiter = ',', default_value = "1,3,inf")]
        widths: Vec<String>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Endpoint => 3,
    }
}

fn build_config(cli: &Cli, matches: &ArgMatches) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cwd = Path::new(".");
    for key in KEYS {
        if let Some(value) = dotted_value(matches, key) {
            cfg.set(key, &value, cwd)?;
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = (workers > 0).then_some(workers);
    }
    if let Some(backend) = &cli.backend {
        cfg.backend = backend.parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dotted_value(matches: &ArgMatches, key: &str) -> Option<String> {
    if let Some(v) = matches.get_one::<String>(key) {
        return Some(v.clone());
    }
    matches
        .subcommand()
        .and_then(|(_, sub)| sub.get_one::<String>(key).cloned())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let mut command = Cli::command();
    for key in KEYS {
        command = command.arg(
            Arg::new(*key)
                .long(*key)
                .global(true)
                .value_name("VALUE")
                .help_heading("Config overrides"),
        );
    }
    let matches = match command.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    let result = build_config(&cli, &matches).and_then(|cfg| {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cfg.workers {
            pool = pool.num_threads(n);
        }
        let pool = pool.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| run(&cli, &cfg))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<(), Error> {
    match &cli.command {
        Command::Answer { q, from_paths } => commands::answer(cfg, q, from_paths.as_deref(), cli.explain),
        Command::Retrieve { q, out } => commands::retrieve(cfg, q, out.as_deref()),
        Command::Plans { subgraph, id, out } => commands::plans(cfg, subgraph, id, out.as_deref()),
        Command::Paths {
            subgraph,
            plans,
            id,
            out,
        } => commands::paths(cfg, subgraph, plans, id, out.as_deref(), cli.explain),
        Command::EmitTrain { find_out, reason_out } => commands::emit_train(cfg, find_out, reason_out),
        Command::Eval { report } => commands::eval(cfg, report.as_deref()),
        Command::Sweep { s_values, widths, csv } => commands::sweep(cfg, s_values, widths, csv.as_deref()),
    }
}
