//! Operator commands behind the `tandem` binary. Each command returns a
//! [`Report`] that the binary prints as text or JSON.

pub mod config;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use tracing::warn;

use tandem_core::clock::VirtualClock;
use tandem_core::metrics::{aggregate, compute_metrics, render_table, render_trajectory_table, AggregateReport};
use tandem_core::policy::{Policy, PolicyContext, PolicyError, PolicyReply};
use tandem_core::session::{
    run_scripted, ConfigError, HumanScript, NullSink, ScriptError, Session, SessionConfig, SessionError, SessionMode,
    SessionSink,
};
use tandem_core::sim::{load_site, replay_trajectory, ReplayError, SimEnvironment, SiteSpec, SpecParseError};
use tandem_core::store::{export, import, ImportError, StoreError, Trajectory, TrajectoryStore, SCHEMA_VERSION};
use tandem_gateway::{GatewayError, PolicyFactory};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spec(#[from] SpecParseError),
    #[error("cannot build policy: {0}")]
    Model(String),
    #[error("no model given; pass --model or --script, or set `model` in the config file")]
    NoModel,
    #[error("human script: {0}")]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Import { path: String, source: ImportError },
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no readable trajectories")]
    NothingToEvaluate,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Command output in both renderings plus the process exit code.
#[derive(Debug, Clone)]
pub struct Report {
    pub text: String,
    pub json: Value,
    pub exit_code: u8,
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_TASK_FAILED: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

// ----- run ------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub site: String,
    pub task: String,
    pub mode: SessionMode,
    /// Model name; `script:<file or calls>` for a scripted agent.
    pub model: Option<String>,
    pub human_script: Option<PathBuf>,
    pub id: String,
    pub out: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub max_steps: Option<usize>,
    pub countdown_ms: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub path: PathBuf,
}

fn read_human_script(path: Option<&Path>) -> Result<HumanScript, CliError> {
    match path {
        Some(p) => Ok(HumanScript::parse(&std::fs::read_to_string(p).map_err(io_err(p))?)?),
        None => Ok(HumanScript::default()),
    }
}

/// Policy standing in for a backbone that could not be constructed; every
/// request fails, so the run is recorded as a policy failure.
#[derive(Debug)]
struct UnavailablePolicy {
    model_id: String,
    reason: String,
}

impl Policy for UnavailablePolicy {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn next_action(&mut self, _: PolicyContext<'_>) -> Result<PolicyReply, PolicyError> {
        Err(PolicyError::BackendUnavailable(self.reason.clone()))
    }
}

struct Prepared {
    spec: Arc<SiteSpec>,
    config: SessionConfig,
    human: HumanScript,
}

fn prepare(args: &RunArgs, config: &SessionConfig) -> Result<Prepared, CliError> {
    let spec = Arc::new(load_site(&args.site)?);
    let mut config = config.clone();
    if let Some(n) = args.max_steps {
        config.max_steps = n;
    }
    if let Some(c) = args.countdown_ms {
        config.countdown_ms = c;
    }
    config.validate()?;
    let human = read_human_script(args.human_script.as_deref())?;
    Ok(Prepared { spec, config, human })
}

fn execute(
    p: &Prepared,
    task: &str,
    mode: SessionMode,
    id: &str,
    policy: Option<Box<dyn Policy>>,
    sink: Box<dyn SessionSink>,
) -> Result<Trajectory, CliError> {
    let clock = VirtualClock::new();
    let mut builder = Session::builder(task, mode)
        .id(id)
        .config(p.config.clone())
        .environment(SimEnvironment::new(p.spec.clone()))
        .clock(Arc::new(clock.clone()))
        .boxed_sink(sink);
    if let Some(policy) = policy {
        builder = builder.boxed_policy(policy);
    }
    let mut session = builder.start()?;
    run_scripted(&mut session, &p.human, &clock)?;
    Ok(session.into_trajectory())
}

/// Runs one session to completion in virtual time.
pub fn run(args: &RunArgs, config: &SessionConfig, factory: &dyn PolicyFactory) -> Result<RunOutcome, CliError> {
    let p = prepare(args, config)?;
    let policy = match args.mode {
        SessionMode::HumanOnly => None,
        _ => {
            let model = args.model.clone().or_else(|| config.model.clone()).ok_or(CliError::NoModel)?;
            Some(factory.create(&model).map_err(CliError::Model)?)
        }
    };
    let store = args.store.as_ref().map(TrajectoryStore::open).transpose()?;
    let sink: Box<dyn SessionSink> = match &store {
        Some(s) => Box::new(s.create_session(&args.id)?),
        None => Box::new(NullSink),
    };
    let trajectory = execute(&p, &args.task, args.mode, &args.id, policy, sink)?;
    let path = match (&args.out, &store) {
        (None, Some(s)) => s.trajectory_path(&args.id),
        (out, _) => {
            let path = out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.tandem.json", args.id)));
            let text = export(&trajectory).expect("run returns sealed trajectories");
            std::fs::write(&path, text).map_err(io_err(&path))?;
            path
        }
    };
    Ok(RunOutcome { trajectory, path })
}

pub fn run_report(outcome: &RunOutcome) -> Report {
    let t = &outcome.trajectory;
    let metrics = compute_metrics(t).expect("sealed");
    let mut text = render_trajectory_table(&[(t, metrics)]);
    if let Some(term) = &t.termination {
        text.push_str(&format!("\ntermination: {:?}", term.reason).to_lowercase());
        if let Some(d) = &term.detail {
            text.push_str(&format!(" ({d})"));
        }
    }
    text.push_str(&format!("\ntrajectory: {}\n", outcome.path.display()));
    let json = json!({
        "trajectory_id": t.trajectory_id,
        "trajectory_path": outcome.path,
        "mode": t.mode,
        "model_id": t.model_id,
        "metrics": metrics,
        "termination": t.termination,
    });
    let exit_code = if t.task_success() { EXIT_OK } else { EXIT_TASK_FAILED };
    Report { text, json, exit_code }
}

// ----- eval -----------------------------------------------------------------

/// Reads an export file or a bare stored `trajectory.json`.
pub fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let import_err = |source| CliError::Import { path: path.display().to_string(), source };
    let value: Value = serde_json::from_str(&text).map_err(|e| import_err(ImportError::Malformed(e.to_string())))?;
    if value.get("format").is_some() {
        return import(&text).map_err(import_err);
    }
    let found = value.get("schema_version").and_then(Value::as_u64).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(import_err(ImportError::SchemaMismatch { found, expected: SCHEMA_VERSION }));
    }
    serde_json::from_value(value).map_err(|e| import_err(ImportError::Malformed(e.to_string())))
}

#[derive(Debug, Serialize)]
struct Skipped {
    path: String,
    error: String,
}

pub fn eval(paths: &[PathBuf]) -> Result<Report, CliError> {
    let mut loaded = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        match read_trajectory(path).and_then(|t| {
            compute_metrics(&t).map(|m| (t, m)).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))
        }) {
            Ok(pair) => loaded.push((path, pair)),
            Err(e) => {
                warn!(path = %path.display(), error = %e, "skipping trajectory");
                skipped.push(Skipped { path: path.display().to_string(), error: e.to_string() });
            }
        }
    }
    if loaded.is_empty() {
        return Err(CliError::NothingToEvaluate);
    }
    let report = aggregate(loaded.iter().map(|(_, (t, _))| t)).expect("non-empty, sealed");
    let rows: Vec<(&Trajectory, _)> = loaded.iter().map(|(_, (t, m))| (t, *m)).collect();
    let mut text = render_trajectory_table(&rows);
    text.push('\n');
    text.push_str(&render_table(&report));
    for s in &skipped {
        text.push_str(&format!("skipped {}: {}\n", s.path, s.error));
    }
    let per: Vec<Value> = loaded
        .iter()
        .map(|(p, (t, m))| json!({"path": p, "trajectory_id": t.trajectory_id, "mode": t.mode, "model_id": t.model_id, "metrics": m}))
        .collect();
    let json = json!({"trajectories": per, "skipped": skipped, "aggregate": report});
    Ok(Report { text, json, exit_code: EXIT_OK })
}

// ----- compare --------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CompareArgs {
    pub model_a: String,
    pub model_b: String,
    pub run: RunArgs,
    pub repetitions: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub a: AggregateReport,
    pub b: AggregateReport,
}

/// Runs both models `repetitions` times on the same site and task. Each
/// run gets its own session with the backbone fixed for its lifetime; runs
/// execute concurrently.
pub fn compare(
    args: &CompareArgs,
    config: &SessionConfig,
    factory: &dyn PolicyFactory,
) -> Result<Comparison, CliError> {
    let p = prepare(&args.run, config)?;
    let reps = args.repetitions.max(1);
    let jobs: Vec<(usize, &str, usize)> = [&args.model_a, &args.model_b]
        .iter()
        .enumerate()
        .flat_map(|(side, m)| (0..reps).map(move |i| (side, m.as_str(), i)))
        .collect();
    let results: Vec<Result<(usize, Trajectory), CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(side, model, i)| {
                let p = &p;
                let run = &args.run;
                scope.spawn(move || {
                    let policy = factory.create(model).unwrap_or_else(|reason| {
                        warn!(model, %reason, "model unavailable; recording a failed run");
                        Box::new(UnavailablePolicy { model_id: model.to_string(), reason })
                    });
                    let id = format!("{}-{}-{i}", run.id, ["a", "b"][side]);
                    execute(p, &run.task, run.mode, &id, Some(policy), Box::new(NullSink)).map(|t| (side, t))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread")).collect()
    });
    let mut sides: [Vec<Trajectory>; 2] = [Vec::new(), Vec::new()];
    for r in results {
        let (side, t) = r?;
        sides[side].push(t);
    }
    let [a, b] = sides;
    Ok(Comparison { a: aggregate(&a).expect("repetitions >= 1"), b: aggregate(&b).expect("repetitions >= 1") })
}

pub fn compare_report(c: &Comparison) -> Report {
    let rows = c.a.rows.iter().chain(&c.b.rows).cloned().collect();
    let combined = AggregateReport { schema_version: c.a.schema_version, rows };
    let mut text = render_table(&combined);
    for (label, r) in [("A", &c.a), ("B", &c.b)] {
        text.push_str(&format!("{label}: n = {}\n", r.total_runs()));
    }
    Report { text, json: serde_json::to_value(c).expect("serializes"), exit_code: EXIT_OK }
}

// ----- replay ---------------------------------------------------------------

pub fn replay(trajectory: &Path, site: &str) -> Result<Report, CliError> {
    let t = read_trajectory(trajectory)?;
    let spec = Arc::new(load_site(site)?);
    let report = replay_trajectory(&t, spec)?;
    let text = match &report.divergence {
        None => format!("{}: {} steps replayed, no divergence\n", t.trajectory_id, report.steps_checked),
        Some(d) => format!(
            "{}: diverged at step {}\n  recorded: {:?} -> {}{}\n  replayed: {:?} -> {}{}\n",
            t.trajectory_id,
            d.step,
            d.recorded.status,
            d.recorded.resulting_observation_id,
            d.recorded.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default(),
            d.replayed.status,
            d.replayed.resulting_observation_id,
            d.replayed.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default(),
        ),
    };
    let exit_code = if report.matches() { EXIT_OK } else { EXIT_TASK_FAILED };
    Ok(Report { text, json: serde_json::to_value(&report).expect("serializes"), exit_code })
}
