use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bookrec::pipeline::{
    cmd_evaluate, cmd_ingest, cmd_recommend, cmd_synth, cmd_train, PipelineConfig, PipelineError, SynthParams,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Hybrid book recommender: topic, book-type and demographic similarity
/// combined with a latent factor model.
#[derive(Debug, Parser)]
#[command(name = "bookrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON pipeline config; relative paths inside it resolve against its directory.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the directory named in the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate the input files and write a dataset summary.
    Ingest(Common),
    /// Train all models and write the model bundle.
    Train(Common),
    /// Write hybrid top-N lists for the given customers (stdout without --out).
    Recommend {
        #[command(flatten)]
        common: Common,
        /// Customer ids, comma separated or repeated.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        customers: Vec<String>,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
    /// Score hybrid and latent-factor rankings on the held-out purchases.
    Evaluate(Common),
    /// Generate a synthetic planted-preference dataset plus a config.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    customers: Option<usize>,
    #[arg(long)]
    books: Option<usize>,
    #[arg(long)]
    genres: Option<usize>,
    /// Upper bound on purchases per customer.
    #[arg(long)]
    max_purchases: Option<usize>,
}

impl SynthArgs {
    fn params(&self) -> SynthParams {
        let d = SynthParams::default();
        SynthParams {
            customers: self.customers.unwrap_or(d.customers),
            books: self.books.unwrap_or(d.books),
            genres: self.genres.unwrap_or(d.genres),
            max_purchases: self.max_purchases.unwrap_or(d.max_purchases),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut config = PipelineConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Ingest(c) => {
            let summary = cmd_ingest(&load_config(&c)?, c.out.as_deref())?;
            log::info!(
                "{} customers, {} books, {} train / {} test purchases",
                summary.customers,
                summary.books,
                summary.train,
                summary.test
            );
        }
        Command::Train(c) => {
            let path = cmd_train(&load_config(&c)?, c.out.as_deref())?;
            println!("{}", path.display());
        }
        Command::Recommend {
            common,
            customers,
            top_n,
        } => {
            cmd_recommend(&load_config(&common)?, &customers, top_n, common.out.as_deref())?;
        }
        Command::Evaluate(c) => {
            cmd_evaluate(&load_config(&c)?, c.out.as_deref())?;
        }
        Command::Synth(s) => {
            cmd_synth(&s.params(), &s.out)?;
            println!("{}", Path::new(&s.out).join("config.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            })
        }
    }
}
