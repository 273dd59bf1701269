//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line, and so the binary can re-launch
//! itself as a child process for the kill-and-recover check.

#[path = "../../gateway/tests/common/mod.rs"]
mod common;

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use tandem_cli::{run, RunArgs};
use tandem_core::action::{parse_action, serialize_action, Action};
use tandem_core::clock::{Clock, VirtualClock};
use tandem_core::events::{
    encode_actions, rule_transform_with, EventType, RawHumanEvent, TransformConfig, TransformContext,
};
use tandem_core::history::{Actor, AttributedStep, InterventionTrigger};
use tandem_core::metrics::{compute_metrics, AggregateReport, CollabMetrics};
use tandem_core::policy::ScriptedPolicy;
use tandem_core::session::{
    MemorySink, Phase, Session, SessionConfig, SessionEvent, SessionMode, Signal, TerminationReason,
};
use tandem_core::sim::SimEnvironment;
use tandem_core::store::{export, import, Trajectory, TrajectoryStore};
use tandem_core::testkit::random_trajectory;
use tandem_gateway::protocol::ErrorPayload;
use tandem_gateway::ModelRegistry;

const CHILD_ENV: &str = "TANDEM_ACCEPTANCE_CHILD";

type Check = fn() -> Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

// ----- 1: state machine safety ----------------------------------------------

const AGENT_POOL: [&str; 9] = [
    "click(@Forums)",
    "click(@space)",
    "click(@gaming)",
    "click(@comments)",
    "scroll(down)",
    "scroll(up)",
    "click(@Wiki)",
    "goto_url(\"http://forum.test/forums\")",
    "hover(@Forums)",
];

const HUMAN_POOL: [&str; 6] =
    ["click(@Forums)", "click(@space)", "scroll(down)", "click(@comments)", "goto_tab(0)", "click(@Wiki)"];

fn random_script(rng: &mut ChaCha8Rng) -> Vec<Action> {
    let mut script: Vec<Action> =
        (0..rng.gen_range(0..12)).map(|_| parse_action(AGENT_POOL.choose(rng).unwrap()).unwrap()).collect();
    if rng.gen_bool(0.7) {
        script.push(parse_action(if rng.gen_bool(0.8) { "finish()" } else { "failure()" }).unwrap());
    }
    script
}

/// Human steps are exactly the steps inside segments; every agent step came
/// from an issued suggestion; indices are contiguous.
fn check_partition(t: &Trajectory) -> Result<(), String> {
    let mut covered = vec![false; t.steps.len()];
    let mut prev_end = 0;
    for seg in &t.segments {
        ensure(seg.start_step >= prev_end, || format!("{}: overlapping segments", t.trajectory_id))?;
        prev_end = seg.start_step + seg.step_count;
        ensure(prev_end <= t.steps.len(), || format!("{}: segment past end", t.trajectory_id))?;
        for c in &mut covered[seg.start_step..prev_end] {
            *c = true;
        }
    }
    for (i, s) in t.steps.iter().enumerate() {
        ensure(s.index == i, || format!("{}: step {i} has index {}", t.trajectory_id, s.index))?;
        ensure((s.actor == Actor::Human) == covered[i], || format!("{}: step {i} attribution", t.trajectory_id))?;
        ensure((s.actor == Actor::Agent) == s.suggestion_id.is_some(), || {
            format!("{}: step {i} suggestion id", t.trajectory_id)
        })?;
    }
    Ok(())
}

fn try_everything(s: &mut Session, clock: &VirtualClock) -> Result<(), String> {
    let before = s.trajectory().clone();
    clock.advance(6000);
    let attempts = [
        s.propose().err().is_some(),
        s.resolve(Signal::Approve).is_err(),
        s.resolve(Signal::Reject).is_err(),
        s.preempt(Signal::Pause).is_err(),
        s.resume().is_err(),
        s.human_step(Action::finish()).is_err(),
        s.ingest_event(RawHumanEvent::click("1", s.now())).is_err(),
        s.flush_events().is_err(),
        s.abort(None).is_err(),
        s.disconnect().is_err(),
        s.tick().is_none(),
    ];
    ensure(attempts.iter().all(|&e| e), || format!("{}: operation accepted after termination", before.trajectory_id))?;
    ensure(s.phase() == Phase::Terminated && *s.trajectory() == before, || {
        format!("{}: state changed after termination", before.trajectory_id)
    })
}

fn fuzz_session(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clock = VirtualClock::new();
    let sink = MemorySink::new();
    let mut s = Session::builder("Open the comments of the top post in the space forum", SessionMode::Copilot)
        .id(format!("fuzz-{seed}"))
        .config(SessionConfig { max_steps: rng.gen_range(3..20), ..SessionConfig::default() })
        .policy(ScriptedPolicy::new("script", random_script(&mut rng)))
        .environment(SimEnvironment::builtin("mini-forum").unwrap())
        .clock(Arc::new(clock.clone()))
        .sink(sink.clone())
        .start()
        .map_err(|e| e.to_string())?;
    let mut discarded = HashSet::new();
    for _ in 0..300 {
        match s.phase() {
            Phase::Terminated => break,
            Phase::Proposing => {
                let reply = s.fetch_reply();
                if s.phase() != Phase::Proposing {
                    continue;
                }
                let reply = reply.map_err(|e| e.to_string())?;
                match rng.gen_range(0..10) {
                    0 => {
                        s.preempt(Signal::Reject).map_err(|e| e.to_string())?;
                    }
                    1 => {
                        s.preempt(Signal::Pause).map_err(|e| e.to_string())?;
                    }
                    _ => {
                        s.present(reply).map_err(|e| e.to_string())?;
                    }
                }
            }
            Phase::AwaitingApproval => {
                let pending = s.pending().unwrap().clone();
                clock.advance(rng.gen_range(0..3000));
                if s.tick().is_some() {
                    continue;
                }
                match rng.gen_range(0..12) {
                    0..=2 => {
                        s.resolve(Signal::Approve).map_err(|e| e.to_string())?;
                    }
                    3..=4 => {
                        s.resolve(Signal::Reject).map_err(|e| e.to_string())?;
                        discarded.insert(pending.id);
                    }
                    5..=6 => {
                        s.resolve(Signal::Pause).map_err(|e| e.to_string())?;
                        discarded.insert(pending.id);
                    }
                    7 => {
                        ensure(s.resume().is_err() && s.human_step(Action::finish()).is_err(), || {
                            "human control operation accepted while awaiting approval".into()
                        })?;
                    }
                    8 if rng.gen_bool(0.1) => {
                        s.disconnect().map_err(|e| e.to_string())?;
                        discarded.insert(pending.id);
                    }
                    _ => {}
                }
            }
            Phase::HumanControl => match rng.gen_range(0..10) {
                0..=2 => {
                    let call = if rng.gen_bool(0.05) { "finish()" } else { HUMAN_POOL.choose(&mut rng).unwrap() };
                    s.human_step(parse_action(call).unwrap()).map_err(|e| e.to_string())?;
                }
                3..=4 => {
                    let node = rng.gen_range(1..12u32).to_string();
                    let event = match rng.gen_range(0..3) {
                        0 => RawHumanEvent::click(&node, s.now()),
                        1 => RawHumanEvent::mouseover(&node, s.now()),
                        _ => RawHumanEvent::scroll(0.0, rng.gen_range(-300.0..300.0), s.now()),
                    };
                    s.ingest_event(event).map_err(|e| e.to_string())?;
                    clock.advance(rng.gen_range(0..500));
                }
                5 => {
                    s.flush_events().map_err(|e| e.to_string())?;
                }
                6 if rng.gen_bool(0.05) => {
                    s.abort(None).map_err(|e| e.to_string())?;
                }
                _ => {
                    s.resume().map_err(|e| e.to_string())?;
                }
            },
            Phase::Executing => return Err("observed executing phase between operations".into()),
        }
    }
    if !s.is_terminated() {
        s.abort(Some("fuzz budget".into())).map_err(|e| e.to_string())?;
    }
    let t = s.trajectory().clone();
    for step in &t.steps {
        if let Some(id) = step.suggestion_id {
            ensure(!discarded.contains(&id), || format!("{}: discarded suggestion {id} executed", t.trajectory_id))?;
        }
    }
    let executed: Vec<u64> = t.steps.iter().filter_map(|s| s.suggestion_id).collect();
    ensure(executed.len() == executed.iter().collect::<HashSet<_>>().len(), || {
        format!("{}: suggestion executed twice", t.trajectory_id)
    })?;
    check_partition(&t)?;
    ensure(t.sealed && t.termination.is_some(), || format!("{}: not sealed", t.trajectory_id))?;
    let sealed = sink.events().iter().filter(|e| matches!(e, SessionEvent::Sealed(_))).count();
    ensure(sealed == 1, || format!("{}: sealed {sealed} times", t.trajectory_id))?;
    if let Some(pos) = t.steps.iter().position(|s| s.action.is_terminal()) {
        ensure(pos + 1 == t.steps.len(), || format!("{}: steps after terminal action", t.trajectory_id))?;
        ensure(t.termination.as_ref().unwrap().reason == TerminationReason::Finished, || {
            format!("{}: terminal step without finish", t.trajectory_id)
        })?;
    }
    try_everything(&mut s, &clock)
}

fn state_machine_safety() -> Result<(), String> {
    let started = Instant::now();
    for seed in 0..1000 {
        fuzz_session(seed)?;
    }
    within(started, Duration::from_secs(60))
}

// ----- 2: metrics oracle ------------------------------------------------------

/// Brute-force recount over the serialized trajectory.
fn recount(t: &Trajectory) -> (bool, usize, usize, usize, Option<usize>, Option<bool>) {
    let v = serde_json::to_value(t).unwrap();
    let steps = v["steps"].as_array().unwrap();
    let agent = steps.iter().filter(|s| s["actor"] == "agent").count();
    let human = steps.iter().filter(|s| s["actor"] == "human").count();
    let success = v["outcome_provenance"]
        .as_array()
        .unwrap()
        .last()
        .map_or(v["self_marked_success"].as_bool().unwrap(), |o| o["verdict"].as_bool().unwrap());
    let interventions = v["segments"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["trigger"] == "reject" || s["trigger"] == "pause")
        .count();
    let last_agent = steps.last().is_some_and(|s| s["actor"] == "agent");
    let driven = success && (v["mode"] == "fully_autonomous" || last_agent);
    let human_only = v["mode"] == "human_only";
    (success, agent, human, steps.len(), (!human_only).then_some(interventions), (!human_only).then_some(driven))
}

fn tuple(m: &CollabMetrics) -> (bool, usize, usize, usize, Option<usize>, Option<bool>) {
    (
        m.task_success,
        m.agent_step_count,
        m.human_step_count,
        m.total_step_count,
        m.human_intervention_count,
        m.agent_driven_completion,
    )
}

fn metrics_oracle() -> Result<(), String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..1000 {
        let t = random_trajectory(&mut rng, &format!("m{i}"));
        let m = compute_metrics(&t).map_err(|e| e.to_string())?;
        ensure(tuple(&m) == recount(&t), || format!("trajectory {i}: {:?} vs {:?}", tuple(&m), recount(&t)))?;
        ensure(m.total_step_count == m.agent_step_count + m.human_step_count, || {
            format!("trajectory {i}: additivity")
        })?;
        ensure(m.agent_driven_completion != Some(true) || m.task_success, || {
            format!("trajectory {i}: agent_driven without success")
        })?;
    }
    within(started, Duration::from_secs(10))
}

// ----- 3: reference aggregate ------------------------------------------------

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn reference_anchors() -> Result<(), String> {
    let report: AggregateReport =
        serde_json::from_str(include_str!("../../core/fixtures/reports/reference-aggregate.json"))
            .map_err(|e| e.to_string())?;
    let copilot = report.row(SessionMode::Copilot, Some("GPT-4o")).ok_or("copilot GPT-4o row missing")?;
    ensure(close(copilot.agent_steps + copilot.human_steps, 7.50, 0.01), || "6.36 + 1.14 != 7.50".into())?;
    ensure(close(copilot.total_steps, 7.50, 0.01), || "total != 7.50".into())?;
    let fraction = copilot.human_fraction().ok_or("no human fraction")?;
    ensure(close(fraction * 100.0, 15.2, 0.1), || format!("human fraction {:.3}%", fraction * 100.0))?;
    for (backbone, acc) in [("GPT-4o", 0.48), ("Llama-8B", 0.04)] {
        let row = report
            .row(SessionMode::FullyAutonomous, Some(backbone))
            .ok_or_else(|| format!("{backbone} row missing"))?;
        ensure(row.human_steps == 0.0 && row.interventions == Some(0.0), || format!("{backbone}: human activity"))?;
        ensure(close(row.accuracy, acc, 1e-9) && row.agent_driven == Some(row.accuracy), || {
            format!("{backbone}: agent_driven {:?} vs accuracy {}", row.agent_driven, row.accuracy)
        })?;
    }
    Ok(())
}

// ----- 4: transform corpus and fuzz ------------------------------------------

#[derive(Deserialize)]
struct Corpus {
    cases: Vec<Case>,
}

#[derive(Deserialize)]
struct Case {
    name: String,
    events: Vec<RawHumanEvent>,
    expect: Vec<String>,
    #[serde(default)]
    current_tab: Option<u32>,
}

fn calls(actions: &[Action]) -> Vec<String> {
    actions.iter().map(serialize_action).collect()
}

fn random_log(rng: &mut ChaCha8Rng) -> Vec<RawHumanEvent> {
    let nodes = ["1", "2", "3", "12"];
    let texts = ["H", "He", "Hello", "Hello world", ""];
    let mut events: Vec<RawHumanEvent> = (0..rng.gen_range(0..40))
        .map(|_| {
            let ts = rng.gen_range(0..20_000);
            let node = *nodes.choose(rng).unwrap();
            match rng.gen_range(0..6) {
                0 => RawHumanEvent::click(node, ts),
                1 => RawHumanEvent::mouseover(node, ts),
                2 => {
                    let kind = if rng.gen_bool(0.5) { EventType::Input } else { EventType::Keyup };
                    RawHumanEvent::text_entry(kind, node, texts.choose(rng).unwrap(), ts)
                }
                3 => RawHumanEvent::scroll(rng.gen_range(-50.0..50.0), rng.gen_range(-600.0..600.0), ts),
                4 => RawHumanEvent::tab_update(
                    ["http://a.test/", "http://b.test/", ""].choose(rng).unwrap(),
                    rng.gen_range(0..3),
                    ts,
                ),
                _ => RawHumanEvent::new(EventType::Contextmenu, ts).on_node(node),
            }
        })
        .collect();
    events.sort_by_key(|e| e.timestamp);
    events
}

fn transform_fixtures() -> Result<(), String> {
    let started = Instant::now();
    let corpus: Corpus =
        serde_json::from_str(include_str!("../../core/fixtures/transform/corpus.json")).map_err(|e| e.to_string())?;
    ensure(corpus.cases.len() >= 30, || format!("only {} corpus cases", corpus.cases.len()))?;
    let cfg = TransformConfig::default();
    for case in &corpus.cases {
        let ctx = TransformContext { current_tab: case.current_tab };
        let out = calls(&rule_transform_with(&case.events, &cfg, &ctx));
        ensure(out == case.expect, || format!("{}: got {out:?}", case.name))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..1000 {
        let events = random_log(&mut rng);
        let ctx = TransformContext { current_tab: rng.gen_bool(0.5).then(|| rng.gen_range(0..3)) };
        let once = rule_transform_with(&events, &cfg, &ctx);
        ensure(once.len() <= events.len(), || format!("log {i}: {} actions from {} events", once.len(), events.len()))?;
        let again = rule_transform_with(&encode_actions(&once, &cfg, &ctx), &cfg, &ctx);
        ensure(calls(&again) == calls(&once), || format!("log {i}: not idempotent"))?;
    }
    within(started, Duration::from_secs(10))
}

// ----- 5: golden run -----------------------------------------------------------

fn golden_run() -> Result<(), String> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let registry = ModelRegistry::new(SessionConfig::default());
    let mut files = Vec::new();
    let mut last = None;
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let args = RunArgs {
            site: "mini-forum".into(),
            task: "Open the comments of the top post in the space forum".into(),
            mode: SessionMode::Copilot,
            model: Some(format!("script:{}", fixtures.join("forum-agent.script").display())),
            human_script: Some(fixtures.join("forum-human.script")),
            id: "golden-forum".into(),
            out: Some(out.clone()),
            store: None,
            max_steps: None,
            countdown_ms: None,
        };
        last = Some(run(&args, &SessionConfig::default(), &registry).map_err(|e| e.to_string())?);
        files.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    let m = compute_metrics(&last.unwrap().trajectory).map_err(|e| e.to_string())?;
    ensure(tuple(&m) == (true, 4, 1, 5, Some(1), Some(true)), || format!("metrics {:?}", tuple(&m)))?;
    ensure(files[0] == files[1], || "runs differ".into())?;
    let golden = std::fs::read(fixtures.join("golden-forum.tandem.json")).map_err(|e| e.to_string())?;
    ensure(files[0] == golden, || "run differs from golden file".into())
}

// ----- 6: countdown bound -----------------------------------------------------

fn countdown_schedule(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clock = VirtualClock::starting_at(rng.gen_range(0..100_000));
    let countdown = rng.gen_range(0..=5000);
    let script: Vec<Action> = (0..25).map(|_| parse_action("scroll(down)").unwrap()).collect();
    let mut s = Session::builder("scroll", SessionMode::Copilot)
        .config(SessionConfig { countdown_ms: countdown, max_steps: 25, ..SessionConfig::default() })
        .policy(ScriptedPolicy::new("script", script))
        .environment(SimEnvironment::builtin("mini-forum").unwrap())
        .clock(Arc::new(clock.clone()))
        .start()
        .map_err(|e| e.to_string())?;
    while !s.is_terminated() {
        let sug = s.propose().map_err(|e| e.to_string())?;
        ensure(sug.deadline <= sug.issued_at + 5000, || {
            format!("deadline {} ms after issue", sug.deadline - sug.issued_at)
        })?;
        let before = s.steps().len();
        let approve_after = rng.gen_bool(0.5).then(|| rng.gen_range(0..7000));
        // Time moves in random chunks; the driver never oversleeps a deadline.
        loop {
            let target = match approve_after {
                Some(d) => (sug.issued_at + d).min(sug.deadline),
                None => sug.deadline,
            };
            let next = (clock.now_ms() + rng.gen_range(1..1500)).min(target);
            clock.advance_to(next);
            if s.tick().is_some() {
                break;
            }
            ensure(s.steps().len() == before, || "executed before its deadline".into())?;
            if approve_after.is_some_and(|d| clock.now_ms() == sug.issued_at + d) {
                s.resolve(Signal::Approve).map_err(|e| e.to_string())?;
                ensure(s.steps().len() == before + 1, || "approve did not execute".into())?;
                let step: &AttributedStep = s.steps().last().unwrap();
                ensure(step.timestamp == sug.issued_at + approve_after.unwrap(), || {
                    "approve was not immediate".into()
                })?;
                break;
            }
        }
        let step = s.steps().last().unwrap();
        ensure(step.suggestion_id == Some(sug.id), || "wrong suggestion executed".into())?;
        ensure(step.timestamp <= sug.issued_at + 5000, || {
            format!("executed {} ms after issue", step.timestamp - sug.issued_at)
        })?;
    }
    Ok(())
}

fn countdown_bound() -> Result<(), String> {
    (0..200).try_for_each(countdown_schedule)
}

// ----- 7: durability -----------------------------------------------------------

/// Child side: journal a copilot session, print each acknowledged step, and
/// hang until killed.
fn child(spec: &str) -> ! {
    let (store, seed) = spec.split_once(',').expect("store,seed");
    let mut rng = ChaCha8Rng::seed_from_u64(seed.parse().unwrap());
    let store = TrajectoryStore::open(store).unwrap();
    let sink = store.create_session("victim").unwrap();
    let clock = VirtualClock::new();
    let script = (0..40).map(|_| parse_action(AGENT_POOL[..7].choose(&mut rng).unwrap()).unwrap()).collect();
    let mut s = Session::builder("wander", SessionMode::Copilot)
        .id("victim")
        .config(SessionConfig { max_steps: 200, ..SessionConfig::default() })
        .policy(ScriptedPolicy::new("script", script))
        .environment(SimEnvironment::builtin("mini-forum").unwrap())
        .clock(Arc::new(clock.clone()))
        .sink(sink)
        .start()
        .unwrap();
    let mut out = std::io::stdout().lock();
    let mut acked = 0;
    loop {
        match s.phase() {
            Phase::Proposing => {
                s.propose().unwrap();
            }
            Phase::AwaitingApproval => match rng.gen_range(0..4) {
                0 => {
                    s.resolve(Signal::Reject).unwrap();
                }
                _ => {
                    s.resolve(Signal::Approve).unwrap();
                }
            },
            Phase::HumanControl => match rng.gen_range(0..3) {
                0 => {
                    s.resume().unwrap();
                }
                _ => {
                    s.human_step(parse_action(HUMAN_POOL.choose(&mut rng).unwrap()).unwrap()).unwrap();
                }
            },
            _ => break,
        }
        clock.advance(100);
        for step in &s.steps()[acked..] {
            writeln!(out, "{}", serde_json::to_string(step).unwrap()).unwrap();
        }
        out.flush().unwrap();
        acked = s.steps().len();
    }
    loop {
        std::thread::sleep(Duration::from_secs(60));
    }
}

fn kill_and_recover(seed: u64) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kill_after = rng.gen_range(1..15);
    let mut proc = Command::new(std::env::current_exe().map_err(|e| e.to_string())?)
        .env(CHILD_ENV, format!("{},{seed}", dir.path().display()))
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut acknowledged: Vec<AttributedStep> = Vec::new();
    let mut lines = BufReader::new(proc.stdout.take().unwrap()).lines();
    while acknowledged.len() < kill_after {
        match lines.next() {
            Some(line) => {
                acknowledged.push(serde_json::from_str(&line.map_err(|e| e.to_string())?).map_err(|e| e.to_string())?)
            }
            None => break,
        }
    }
    proc.kill().map_err(|e| e.to_string())?;
    proc.wait().map_err(|e| e.to_string())?;
    let store = TrajectoryStore::open(dir.path()).map_err(|e| e.to_string())?;
    let rec = store.recover("victim", 1).map_err(|e| e.to_string())?;
    let steps = &rec.trajectory.steps;
    ensure(steps.len() >= acknowledged.len() && steps[..acknowledged.len()] == acknowledged[..], || {
        format!("seed {seed}: acknowledged {} steps, recovered {}", acknowledged.len(), steps.len())
    })?;
    check_partition(&rec.trajectory)?;
    ensure(rec.trajectory.sealed, || "recovered trajectory not sealed".into())
}

fn durability() -> Result<(), String> {
    (0..5).try_for_each(kill_and_recover)?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..100 {
        let t = random_trajectory(&mut rng, &format!("rt{i}"));
        let back = import(&export(&t).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(back == t, || format!("trajectory {i} changed in round trip"))?;
    }
    Ok(())
}

// ----- 8: protocol transcripts --------------------------------------------------

fn transcripts() -> Result<(), String> {
    let mut names: Vec<String> = std::fs::read_dir(common::transcript_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok()?.path().file_stem()?.to_str().map(str::to_string))
        .collect();
    names.sort();
    for name in &names {
        let (_, out) = common::run(&common::load(name));
        for pair in out.windows(2) {
            ensure(pair[1].seq > pair[0].seq, || format!("{name}: seq out of order"))?;
        }
    }

    let (h, out) = common::run(&common::load("pause_resume"));
    let t = h.conn.finished().ok_or("pause_resume did not finish")?;
    ensure(t.segments.len() == 1 && t.segments[0].trigger == InterventionTrigger::Pause, || {
        "pause segment missing".into()
    })?;
    ensure(t.raw_events.len() == 3 && t.steps[0].actor == Actor::Human, || {
        "raw events not applied before resume".into()
    })?;
    let human_at = out.iter().position(|m| {
        m.kind == "state_update"
            && serde_json::to_value(&m.payload).unwrap()["new_steps"]
                .as_array()
                .is_some_and(|s| s.iter().any(|x| x["actor"] == "human"))
    });
    let first_agent_suggestion = out.iter().rposition(|m| m.kind == "suggestion");
    ensure(human_at.is_some() && human_at < first_agent_suggestion, || {
        "human step not delivered before agent resumed".into()
    })?;

    let (h, _) = common::run(&common::load("duplicate_resume"));
    let t = h.conn.finished().ok_or("duplicate_resume did not finish")?;
    ensure(t.segments.len() == 1, || format!("{} segments after duplicate resume", t.segments.len()))?;

    let (_, out) = common::run(&common::load("model_locked"));
    let locked = out.iter().any(|m| {
        m.kind == "error"
            && m.payload_as::<ErrorPayload>().is_ok_and(|e| serde_json::to_value(e.code).unwrap() == "model_locked")
    });
    ensure(locked, || "model change was not rejected".into())
}

// ----- driver -------------------------------------------------------------------

fn main() {
    if let Ok(spec) = std::env::var(CHILD_ENV) {
        child(&spec);
    }
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, Check); 8] = [
        ("state machine safety over 1000 fuzzed copilot sessions", state_machine_safety),
        ("metrics match brute-force recount on 1000 trajectories", metrics_oracle),
        ("reference aggregate arithmetic", reference_anchors),
        ("transform corpus, idempotence and compression", transform_fixtures),
        ("golden copilot run is exact and bit-identical", golden_run),
        ("countdown bound over 200 schedules", countdown_bound),
        ("kill-and-recover and export round trip", durability),
        ("protocol transcript suite", transcripts),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let ms = started.elapsed().as_millis();
        match result {
            Ok(()) => println!("PASS {} {name} ({ms} ms)", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {} {name} ({ms} ms): {e}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
