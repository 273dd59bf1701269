use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use tandem_cli::config::{discover, load, CONFIG_ENV};
use tandem_cli::{
    compare, compare_report, eval, replay, run, run_report, CliError, CompareArgs, Report, RunArgs, EXIT_ERROR,
};
use tandem_core::session::{SessionConfig, SessionMode};
use tandem_core::store::TrajectoryStore;
use tandem_gateway::{serve_blocking, ModelRegistry, SessionHost, DEFAULT_BIND};

#[derive(Debug, Parser)]
#[command(name = "tandem", version, about = "Run, serve and evaluate human-agent web navigation sessions")]
struct Cli {
    /// Config file. Falls back to $TANDEM_CONFIG, then ./tandem.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Log filter, e.g. `debug` or `tandem_core=trace`.
    #[arg(long, global = true, env = "TANDEM_LOG", default_value = "warn")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Autonomous,
    Copilot,
    HumanOnly,
}

impl From<Mode> for SessionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Autonomous => SessionMode::FullyAutonomous,
            Mode::Copilot => SessionMode::Copilot,
            Mode::HumanOnly => SessionMode::HumanOnly,
        }
    }
}

#[derive(Debug, clap::Args)]
struct SessionArgs {
    /// Bundled site name (mini-forum, mini-shop, ...) or a site spec path.
    #[arg(long)]
    site: String,
    #[arg(long)]
    task: String,
    #[arg(long, value_enum, default_value_t = Mode::Autonomous)]
    mode: Mode,
    /// Human moves for copilot and human-only runs, one per line.
    #[arg(long)]
    human_script: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Approval countdown; at most 5000.
    #[arg(long)]
    countdown_ms: Option<u64>,
    /// Session id recorded in the trajectory.
    #[arg(long, default_value = "run")]
    id: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one session against a simulated site. Exits 0 iff the task succeeded.
    Run {
        #[command(flatten)]
        session: SessionArgs,
        /// Model name sent to the configured endpoint, or `script:<calls>`.
        #[arg(long, conflicts_with = "script")]
        model: Option<String>,
        /// Agent script file, one action call per line.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Where to write the trajectory export (default `<id>.tandem.json`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also journal the session into this store directory.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Per-trajectory and aggregate metrics for trajectory files.
    Eval {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run two models on the same task and compare their aggregates.
    Compare {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        model_a: String,
        #[arg(long)]
        model_b: String,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
    },
    /// Re-apply a recorded trajectory to a site and report the first divergence.
    Replay {
        trajectory: PathBuf,
        #[arg(long)]
        site: String,
    },
    /// Serve the browser gateway over WebSocket.
    Serve {
        #[arg(long, env = "TANDEM_BIND", default_value = DEFAULT_BIND)]
        bind: String,
        /// Trajectory store directory.
        #[arg(long, env = "TANDEM_STORE", default_value = "tandem-data")]
        store: PathBuf,
        /// Default model for sessions that do not pick one.
        #[arg(long)]
        model: Option<String>,
    },
}

impl SessionArgs {
    fn into_run(self, model: Option<String>, out: Option<PathBuf>, store: Option<PathBuf>) -> RunArgs {
        RunArgs {
            site: self.site,
            task: self.task,
            mode: self.mode.into(),
            model,
            human_script: self.human_script,
            id: self.id,
            out,
            store,
            max_steps: self.max_steps,
            countdown_ms: self.countdown_ms,
        }
    }
}

fn execute(cli: Cli, config: SessionConfig) -> Result<Report, CliError> {
    let registry = ModelRegistry::new(config.clone());
    match cli.command {
        Command::Run { session, model, script, out, store } => {
            let model = model.or_else(|| script.map(|p| format!("script:{}", p.display())));
            let args = session.into_run(model, out, store);
            Ok(run_report(&run(&args, &config, &registry)?))
        }
        Command::Eval { files } => eval(&files),
        Command::Compare { session, model_a, model_b, repetitions } => {
            let args = CompareArgs { model_a, model_b, run: session.into_run(None, None, None), repetitions };
            Ok(compare_report(&compare(&args, &config, &registry)?))
        }
        Command::Replay { trajectory, site } => replay(&trajectory, &site),
        Command::Serve { bind, store, model } => {
            let mut host = SessionHost::new(Arc::new(registry), config).with_store(TrajectoryStore::open(store)?);
            if let Some(m) = model {
                host = host.with_default_model(m);
            }
            eprintln!("serving on ws://{bind}");
            serve_blocking(&bind, Arc::new(host))?;
            unreachable!("server runs until killed")
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_new(&cli.log).unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let env = std::env::var(CONFIG_ENV).ok();
    let cwd = std::env::current_dir().unwrap_or_else(|_| PathBuf::from("."));
    let source = discover(cli.config.as_deref(), env.as_deref(), &cwd);
    let config = match load(&source) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let format = cli.format;
    match execute(cli, config) {
        Ok(report) => {
            match format {
                Format::Text => print!("{}", report.text),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report.json).expect("serializes")),
            }
            ExitCode::from(report.exit_code)
        }
        Err(e) => {
            if format == Format::Json {
                println!("{}", serde_json::json!({"error": e.to_string()}));
            }
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
