use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tandem_core::action::{Action, Direction, ElementRef};
use tandem_core::clock::VirtualClock;
use tandem_core::policy::{ApiKey, BackendSettings, LlmPolicy, OpenAiCompatibleBackend, ScriptedPolicy};
use tandem_core::session::{run_scripted, HumanScript, Session, SessionMode};
use tandem_core::sim::SimEnvironment;
use tandem_core::store::{
    annotate, export, import, AnnotateError, FeedbackEntry, FeedbackScope, ImportError, Judgment, StoreError,
    TrajectoryStore,
};
use tandem_core::testkit::random_trajectory;

fn scripted(n: usize) -> ScriptedPolicy {
    let mut script = vec![Action::click(ElementRef::label("Forums"))];
    script.extend(std::iter::repeat_n(Action::scroll(Direction::Down), n));
    ScriptedPolicy::new("script", script)
}

fn judgment(v: bool, note: &str, at: u64) -> Judgment {
    Judgment { judgment: v, note: note.into(), at }
}

#[test]
fn crash_after_three_steps_recovers_three() {
    let dir = tempfile::tempdir().unwrap();
    let store = TrajectoryStore::open(dir.path()).unwrap();
    let sink = store.create_session("crash").unwrap();
    let journal = sink.journal_path().to_path_buf();
    let mut s = Session::builder("t", SessionMode::FullyAutonomous)
        .id("crash")
        .policy(scripted(10))
        .environment(SimEnvironment::builtin("mini-forum").unwrap())
        .clock(Arc::new(VirtualClock::new()))
        .sink(sink)
        .start()
        .unwrap();
    for _ in 0..3 {
        s.propose().unwrap();
    }
    let acknowledged = s.steps().to_vec();
    drop(s);
    // A write cut short by the crash.
    let mut f = std::fs::OpenOptions::new().append(true).open(&journal).unwrap();
    f.write_all(b"{\"event\":\"step_recorded\",\"index\":3,\"act").unwrap();
    drop(f);

    let rec = store.recover("crash", 99).unwrap();
    assert!(!rec.complete);
    assert!(rec.torn_tail);
    assert_eq!(rec.trajectory.steps, acknowledged);
    assert!(rec.trajectory.sealed);
    assert!(!rec.trajectory.task_success());
}

#[test]
fn damage_before_the_tail_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let store = TrajectoryStore::open(dir.path()).unwrap();
    let sink = store.create_session("bad").unwrap();
    let journal = sink.journal_path().to_path_buf();
    let mut s = Session::builder("t", SessionMode::FullyAutonomous)
        .id("bad")
        .policy(scripted(3))
        .environment(SimEnvironment::builtin("mini-forum").unwrap())
        .sink(sink)
        .start()
        .unwrap();
    s.propose().unwrap();
    drop(s);
    let text = std::fs::read_to_string(&journal).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.insert(1, "garbage");
    std::fs::write(&journal, lines.join("\n") + "\n").unwrap();
    assert!(matches!(store.recover("bad", 0), Err(StoreError::Journal(_))));
}

#[test]
fn sealed_session_is_saved_and_listed() {
    let dir = tempfile::tempdir().unwrap();
    let store = TrajectoryStore::open(dir.path()).unwrap();
    let clock = VirtualClock::new();
    let script: Vec<Action> =
        std::iter::repeat_n(Action::scroll(Direction::Down), 9).chain([Action::finish()]).collect();
    let mut s = Session::builder("ten steps", SessionMode::Copilot)
        .id("ten")
        .policy(ScriptedPolicy::new("script", script))
        .environment(SimEnvironment::builtin("mini-forum").unwrap())
        .clock(Arc::new(clock.clone()))
        .sink(store.create_session("ten").unwrap())
        .start()
        .unwrap();
    run_scripted(&mut s, &HumanScript::parse("wait\n").unwrap(), &clock).unwrap();
    let t = s.into_trajectory();
    assert_eq!(t.steps.len(), 10);
    let loaded = store.load("ten").unwrap();
    assert_eq!(loaded, t);
    let rec = store.recover("ten", 0).unwrap();
    assert!(rec.complete);
    assert_eq!(rec.trajectory, t);
    let manifest = store.manifest().unwrap();
    assert_eq!(manifest.len(), 1);
    assert_eq!(manifest[0].step_count, 10);
    assert!(manifest[0].task_success);
    assert!(matches!(store.create_session("ten"), Err(StoreError::Exists(_))));
}

#[test]
fn aborted_empty_session_persists() {
    let dir = tempfile::tempdir().unwrap();
    let store = TrajectoryStore::open(dir.path()).unwrap();
    let mut s = Session::builder("t", SessionMode::Copilot)
        .id("empty")
        .policy(scripted(1))
        .environment(SimEnvironment::builtin("mini-forum").unwrap())
        .sink(store.create_session("empty").unwrap())
        .start()
        .unwrap();
    s.abort(None).unwrap();
    let t = store.load("empty").unwrap();
    assert!(t.steps.is_empty() && t.sealed && !t.task_success());
}

#[test]
fn annotations_persist_and_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let store = TrajectoryStore::open(dir.path()).unwrap();
    let mut s = Session::builder("t", SessionMode::FullyAutonomous)
        .id("ann")
        .policy(ScriptedPolicy::new(
            "script",
            vec![
                Action::scroll(Direction::Down),
                Action::scroll(Direction::Down),
                Action::scroll(Direction::Up),
                Action::scroll(Direction::Up),
                Action::finish(),
            ],
        ))
        .environment(SimEnvironment::builtin("mini-forum").unwrap())
        .sink(store.create_session("ann").unwrap())
        .start()
        .unwrap();
    while !s.is_terminated() {
        s.propose().unwrap();
    }
    store
        .annotate("ann", FeedbackEntry { scope: FeedbackScope::Step { index: 2 }, judgment: judgment(true, "", 1) })
        .unwrap();
    store.annotate("ann", FeedbackEntry { scope: FeedbackScope::Task, judgment: judgment(true, "first", 2) }).unwrap();
    store
        .annotate("ann", FeedbackEntry { scope: FeedbackScope::Task, judgment: judgment(false, "second", 3) })
        .unwrap();
    let t = store.load("ann").unwrap();
    assert!(t.feedback.step_level[&2].judgment);
    assert_eq!(t.feedback.task_level.as_ref().unwrap().note, "second");
    assert_eq!(t.feedback.audit.len(), 3);
    let err = store
        .annotate("ann", FeedbackEntry { scope: FeedbackScope::Step { index: 99 }, judgment: judgment(true, "", 4) })
        .unwrap_err();
    assert!(matches!(err, StoreError::Annotate(AnnotateError::BadIndex { index: 99, len: 5 })));
    assert_eq!(store.load("ann").unwrap().feedback.audit.len(), 3);
}

#[test]
fn annotate_requires_sealed() {
    let mut t = tandem_core::store::Trajectory::new("x", "t", SessionMode::Copilot, 0);
    let e = FeedbackEntry { scope: FeedbackScope::Task, judgment: judgment(true, "", 0) };
    assert!(matches!(annotate(&mut t, e), Err(AnnotateError::Unsealed(_))));
}

#[test]
fn export_round_trip_and_schema() {
    let schema: serde_json::Value = serde_json::from_str(include_str!("../schema/trajectory.schema.json")).unwrap();
    let validator = jsonschema::JSONSchema::compile(&schema).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let t = random_trajectory(&mut rng, &format!("fuzz-{i}"));
        let text = export(&t).unwrap();
        assert_eq!(import(&text).unwrap(), t);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let msgs: Vec<String> = match validator.validate(&value) {
            Ok(()) => Vec::new(),
            Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
        };
        assert!(msgs.is_empty(), "schema violations: {msgs:?}");
    }
}

#[test]
fn import_rejects_other_versions_and_formats() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = random_trajectory(&mut rng, "v");
    let text = export(&t).unwrap().replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
    assert_eq!(import(&text), Err(ImportError::SchemaMismatch { found: 2, expected: 1 }));
    assert!(matches!(
        import("{\"format\":\"x\",\"schema_version\":1,\"trajectory\":{}}"),
        Err(ImportError::Malformed(_))
    ));
    let mut open = t.clone();
    open.sealed = false;
    assert!(export(&open).is_err());
}

#[test]
fn no_secret_reaches_disk_or_export() {
    const SECRET: &str = "sk-do-not-persist-4242";
    let mut settings = BackendSettings::new("http://127.0.0.1:9", "gpt-test");
    settings.api_key = Some(ApiKey::new(SECRET));
    settings.timeout = Duration::from_millis(200);
    settings.max_retries = 0;
    let policy = LlmPolicy::new(Box::new(OpenAiCompatibleBackend::new(settings).unwrap()));

    let dir = tempfile::tempdir().unwrap();
    let store = TrajectoryStore::open(dir.path()).unwrap();
    let mut s = Session::builder("t", SessionMode::Copilot)
        .id("secret")
        .policy(policy)
        .environment(SimEnvironment::builtin("mini-forum").unwrap())
        .sink(store.create_session("secret").unwrap())
        .start()
        .unwrap();
    assert!(s.propose().is_err());
    s.human_step(Action::failure()).unwrap();
    let t = store.load("secret").unwrap();
    assert!(!export(&t).unwrap().contains(SECRET));
    for entry in walk(dir.path()) {
        let bytes = std::fs::read(&entry).unwrap();
        assert!(!String::from_utf8_lossy(&bytes).contains(SECRET), "{}", entry.display());
    }
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn schema_rejects_malformed_exports() {
    let schema: serde_json::Value = serde_json::from_str(include_str!("../schema/trajectory.schema.json")).unwrap();
    let validator = jsonschema::JSONSchema::compile(&schema).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = loop {
        let t = random_trajectory(&mut rng, "bad");
        if !t.steps.is_empty() {
            break t;
        }
    };
    let good: serde_json::Value = serde_json::from_str(&export(&t).unwrap()).unwrap();
    assert!(validator.is_valid(&good));
    let mut bad = good.clone();
    bad["trajectory"]["steps"][0]["actor"] = "robot".into();
    assert!(!validator.is_valid(&bad));
    let mut bad = good.clone();
    bad["trajectory"]["api_key"] = "sk-x".into();
    assert!(!validator.is_valid(&bad));
    let mut bad = good;
    bad["trajectory"]["steps"][0]["action"]["kind"] = "teleport".into();
    assert!(!validator.is_valid(&bad));
}
