use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use vita::commands::{self, CliError, SeedOptions};
use vita::config::{resolve, FileConfig, Flags, ENV_CONFIG};
use vita::report::{self, ReportKind, ReportOptions};

const AFTER_HELP: &str = "\
Settings precedence: flags > environment > config file > defaults.

Environment:
  VITA_CONFIG        config file path (same as --config)
  VITA_LISTEN        listen address for `serve`
  VITA_DATA_DIR      journal directory
  VITA_REGISTRY      extra verb registry file
  VITA_AUTH_SECRET   shared secret for mutating routes
  VITA_CONCURRENCY   uploads in flight
  LRS_ENDPOINT, LRS_KEY, LRS_SECRET   upload target for `ingest`
  VITA_LLM_KEY, VITA_LLM_ENDPOINT, VITA_LLM_MODEL   live tutor model; mock mode without a key

Secrets are read from the environment or the config file only.

Exit status: 0 success, 1 partial data failure, 2 usage or configuration error.";

#[derive(Parser)]
#[command(name = "vita", version, about = "Learning record store, chat-log ingestion and analytics", after_help = AFTER_HELP)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct StoreArgs {
    /// Journal directory.
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Verb registry file (`<iri> <display> <tier>` per line) merged over the built-in verbs.
    #[arg(long, value_name = "FILE")]
    registry: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service until interrupted.
    Serve {
        #[arg(long, value_name = "ADDR")]
        listen: Option<String>,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Upload a chat-log export to the LRS.
    Ingest {
        file: PathBuf,
        /// LRS base URL, e.g. http://127.0.0.1:8080
        #[arg(long)]
        endpoint: Option<String>,
        /// Report path; defaults to FILE.report.json
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Uploads in flight.
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long, value_name = "FILE")]
        registry: Option<PathBuf>,
    },
    /// Write the synthetic demo cohort into an empty data directory.
    SeedDemo {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long, default_value_t = vita_core::demo::DEMO_SEED)]
        seed: u64,
        #[arg(long, default_value_t = vita_core::demo::DEMO_LEARNERS)]
        learners: usize,
        #[arg(long, default_value_t = vita_core::demo::DEMO_WEEKS)]
        weeks: u32,
        /// Replace existing journals.
        #[arg(long)]
        force: bool,
        /// Also write a demo chat-log export here.
        #[arg(long, value_name = "FILE")]
        chat_log: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        chat_entries: usize,
    },
    /// Print a report from a data directory or a running service.
    Report {
        kind: ReportKind,
        #[command(flatten)]
        store: StoreArgs,
        /// Read from this service instead of the data directory.
        #[arg(long)]
        endpoint: Option<String>,
        /// noise (default), transactional or authoritative.
        #[arg(long)]
        tier: Option<String>,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        verb: Option<String>,
        /// Inclusive lower bound, RFC 3339.
        #[arg(long)]
        since: Option<String>,
        /// Inclusive upper bound, RFC 3339.
        #[arg(long)]
        until: Option<String>,
        /// Term start date for weekly and outliers (YYYY-MM-DD).
        #[arg(long)]
        start: Option<NaiveDate>,
        #[arg(long)]
        weeks: Option<u32>,
        /// percentile (default) or zscore.
        #[arg(long)]
        method: Option<String>,
        /// Percentile p (default 0.10) or z threshold (default -1.5).
        #[arg(long)]
        param: Option<String>,
        /// or (default) or and.
        #[arg(long)]
        conjunction: Option<String>,
        /// Output file; for export-csv a directory or `-` for stdout.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Send the outlier report to a webhook URL or file path.
        #[arg(long, value_name = "TARGET")]
        notify: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli.config.or_else(|| std::env::var_os(ENV_CONFIG).map(PathBuf::from));
    let file = match &config_path {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut flags = Flags::default();
    match &cli.command {
        Command::Serve { listen, store } => {
            flags.listen = listen.clone();
            flags.data_dir = store.data_dir.clone();
            flags.registry = store.registry.clone();
        }
        Command::Ingest { endpoint, concurrency, registry, .. } => {
            flags.endpoint = endpoint.clone();
            flags.concurrency = *concurrency;
            flags.registry = registry.clone();
        }
        Command::SeedDemo { store, .. } | Command::Report { store, .. } => {
            flags.data_dir = store.data_dir.clone();
            flags.registry = store.registry.clone();
        }
    }
    let settings = resolve(&flags, |k| std::env::var(k).ok(), file)?;

    match cli.command {
        Command::Serve { .. } => commands::serve(&settings),
        Command::Ingest { file, report, .. } => commands::ingest(&settings, &file, report.as_deref()),
        Command::SeedDemo { seed, learners, weeks, force, chat_log, chat_entries, .. } => {
            commands::seed_demo(&settings, &SeedOptions { seed, learners, weeks, force, chat_log, chat_entries })
        }
        Command::Report {
            kind, endpoint, tier, agent, verb, since, until, start, weeks, method, param, conjunction, out, notify, json, ..
        } => {
            let opts = ReportOptions {
                endpoint, tier, agent, verb, since, until, start, weeks, method, param, conjunction, out, notify, json,
                now: None,
            };
            report::run(kind, &settings, &opts)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vita: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
