#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use tandem_core::clock::VirtualClock;
use tandem_core::session::SessionConfig;
use tandem_core::store::TrajectoryStore;
use tandem_gateway::{Connection, Flow, ModelRegistry, SessionHost, WireMessage};

#[derive(Debug, Deserialize)]
pub struct Transcript {
    pub name: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    #[serde(default)]
    pub send: Option<Value>,
    /// Run the agent until it waits on the human.
    #[serde(default)]
    pub drive: bool,
    #[serde(default)]
    pub advance_ms: Option<u64>,
    #[serde(default)]
    pub disconnect: bool,
    #[serde(default)]
    pub close: bool,
    #[serde(default)]
    pub expect: Vec<Value>,
}

pub fn transcript_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../gateway/fixtures/transcripts")
}

pub fn load(name: &str) -> Transcript {
    let path = transcript_dir().join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub struct Harness {
    pub clock: VirtualClock,
    pub conn: Connection,
    pub store: TrajectoryStore,
    _dir: tempfile::TempDir,
}

impl Harness {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = TrajectoryStore::open(dir.path()).unwrap();
        let clock = VirtualClock::starting_at(1000);
        let config = SessionConfig::default();
        let host = SessionHost::new(Arc::new(ModelRegistry::new(config.clone())), config)
            .with_store(store.clone())
            .with_clock(Arc::new(clock.clone()));
        Self { clock, conn: Connection::new(Arc::new(host)), store, _dir: dir }
    }
}

/// `expected` matches `actual` when every key it names matches
/// recursively; arrays must have equal length.
pub fn subset(expected: &Value, actual: &Value) -> bool {
    match (expected, actual) {
        (Value::Object(e), Value::Object(a)) => {
            e.iter().all(|(k, v)| a.get(k).is_some_and(|av| subset(v, av)) || (v.is_null() && a.get(k).is_none()))
        }
        (Value::Array(e), Value::Array(a)) => e.len() == a.len() && e.iter().zip(a).all(|(x, y)| subset(x, y)),
        _ => expected == actual,
    }
}

/// Replays a transcript, returning every outbound message.
pub fn run(t: &Transcript) -> (Harness, Vec<WireMessage>) {
    let mut h = Harness::new();
    let mut all = Vec::new();
    for (i, step) in t.steps.iter().enumerate() {
        let mut flow = Flow::Continue;
        if let Some(msg) = &step.send {
            flow = h.conn.receive_text(&msg.to_string());
        }
        if let Some(ms) = step.advance_ms {
            h.clock.advance(ms);
            h.conn.poll_timers();
        }
        if step.drive {
            while h.conn.needs_proposal() {
                h.conn.step_agent();
            }
        }
        if step.disconnect {
            h.conn.disconnect();
        }
        assert_eq!(flow == Flow::Close, step.close, "{} step {i}: close flag", t.name);
        let out = h.conn.take_outbound();
        let actual: Vec<Value> = out.iter().map(|m| serde_json::to_value(m).unwrap()).collect();
        let pretty = serde_json::to_string_pretty(&actual).unwrap();
        assert_eq!(step.expect.len(), actual.len(), "{} step {i}: message count; got {pretty}", t.name);
        for (j, (e, a)) in step.expect.iter().zip(&actual).enumerate() {
            assert!(subset(e, a), "{} step {i} message {j}: expected {e} got {pretty}", t.name);
        }
        all.extend(out);
    }
    (h, all)
}
