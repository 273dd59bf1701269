//! Deterministic raw-event → action transformer.
//!
//! The pipeline runs in fixed passes over a token stream (one token per
//! usable event):
//!
//! 1. map events to tokens, dropping context menus, modifier-only key
//!    presses, unknown types and events missing their payload;
//! 2. turn tab updates into `goto_url` (same tab) or `goto_tab` (different
//!    tab); an empty-url update on the current tab only sets context;
//! 3. keep a mouseover only when the very next token is a click or text
//!    entry on the same node (emitted as `hover`);
//! 4. collapse runs of text entry on one node to a single `type` carrying
//!    the last full text;
//! 5. merge same-direction scroll runs on one page and drop isolated small
//!    scrolls that reverse a neighbouring scroll within the reversal window,
//!    then repeat step 4 for text runs the removed scrolls used to separate;
//! 6. clicks map one to one; exact repeats of a navigation are discarded.
//!
//! Every pass only merges or discards, so the output is never longer than
//! the input.

use serde::{Deserialize, Serialize};
use tracing::debug;

use super::{EventType, KeyData, RawHumanEvent, ScrollData, UrlData};
use crate::action::{Action, Command, Direction, ElementRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformConfig {
    /// Scrolls smaller than this many pixels are candidates for noise.
    pub micro_scroll_px: f64,
    /// A candidate is dropped when it reverses a neighbouring scroll within
    /// this window.
    pub reversal_window_ms: u64,
    pub line_height_px: f64,
    pub page_height_px: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self { micro_scroll_px: 40.0, reversal_window_ms: 500, line_height_px: 40.0, page_height_px: 800.0 }
    }
}

/// Browser context the events were captured in.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransformContext {
    pub current_tab: Option<u32>,
}

const MODIFIER_KEYS: [&str; 9] = ["Shift", "Control", "Alt", "Meta", "AltGraph", "CapsLock", "Fn", "OS", "Hyper"];

#[derive(Debug, Clone)]
enum Token {
    Click { target: ElementRef },
    Hover { target: ElementRef },
    Text { target: ElementRef, text: String },
    Scroll(ScrollRun),
    Tab { url: String, tab_id: u32 },
    Navigate(String),
    SwitchTab(u32),
}

#[derive(Debug, Clone)]
struct ScrollRun {
    direction: Direction,
    magnitude: f64,
    url: Option<String>,
    first_ts: u64,
    last_ts: u64,
    count: usize,
}

impl ScrollRun {
    fn same_page(&self, other: &ScrollRun) -> bool {
        match (&self.url, &other.url) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        }
    }

    fn absorb(&mut self, other: ScrollRun) {
        self.magnitude += other.magnitude;
        self.last_ts = other.last_ts;
        self.count += other.count;
        if self.url.is_none() {
            self.url = other.url;
        }
    }
}

pub fn rule_transform(events: &[RawHumanEvent]) -> Vec<Action> {
    rule_transform_with(events, &TransformConfig::default(), &TransformContext::default())
}

pub fn rule_transform_with(
    events: &[RawHumanEvent],
    config: &TransformConfig,
    context: &TransformContext,
) -> Vec<Action> {
    let tokens: Vec<Token> = events.iter().filter_map(|e| tokenize(e, config)).collect();
    let tokens = resolve_tabs(tokens, context);
    let tokens = filter_hovers(tokens);
    let tokens = merge_text(tokens);
    let tokens = clean_scrolls(tokens, config);
    // Dropped scrolls can leave text runs adjacent again.
    let tokens = merge_text(tokens);
    emit(tokens)
}

fn target_of(event: &RawHumanEvent) -> Option<ElementRef> {
    let node = event.node_id.as_deref()?.trim();
    if node.is_empty() {
        return None;
    }
    let mut target = ElementRef::new(node);
    if let Some(name) = event.element_name.as_deref().filter(|n| !n.is_empty()) {
        target.descriptor = name.to_string();
    }
    Some(target)
}

fn tokenize(event: &RawHumanEvent, config: &TransformConfig) -> Option<Token> {
    let token = match &event.action_type {
        EventType::Click => target_of(event).map(|target| Token::Click { target }),
        EventType::Mouseover => target_of(event).map(|target| Token::Hover { target }),
        t if t.is_key_event() => {
            let key = event.key_data.as_ref()?;
            if *t != EventType::Input && MODIFIER_KEYS.contains(&key.key.as_str()) {
                debug!(key = %key.key, "dropping modifier-only key event");
                return None;
            }
            target_of(event).map(|target| Token::Text { target, text: key.full_text_entry.clone() })
        }
        EventType::Scroll => {
            let data = event.scroll_data.as_ref()?;
            let unit = if data.is_page || data.delta_mode == 2 {
                config.page_height_px
            } else if data.is_line || data.delta_mode == 1 {
                config.line_height_px
            } else {
                1.0
            };
            let (dx, dy) = (data.delta_x * unit, data.delta_y * unit);
            if !(dx.is_finite() && dy.is_finite()) || (dx == 0.0 && dy == 0.0) {
                return None;
            }
            let (direction, magnitude) = if dy.abs() >= dx.abs() {
                (if dy > 0.0 { Direction::Down } else { Direction::Up }, dy.abs())
            } else {
                (if dx > 0.0 { Direction::Right } else { Direction::Left }, dx.abs())
            };
            Some(Token::Scroll(ScrollRun {
                direction,
                magnitude,
                url: event.url.clone(),
                first_ts: event.timestamp,
                last_ts: event.timestamp,
                count: 1,
            }))
        }
        EventType::TabUpdate => {
            event.url_data.as_ref().map(|d| Token::Tab { url: d.url_name.trim().to_string(), tab_id: d.tab_id })
        }
        other => {
            debug!(event_type = %other, "event has no canonical action; dropped");
            None
        }
    };
    if token.is_none() {
        debug!(event_type = %event.action_type, "dropping event without usable payload");
    }
    token
}

fn node_of(token: &Token) -> Option<&str> {
    match token {
        Token::Click { target } | Token::Hover { target } | Token::Text { target, .. } => Some(&target.node_id),
        _ => None,
    }
}

fn filter_hovers(tokens: Vec<Token>) -> Vec<Token> {
    let keep: Vec<bool> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| match t {
            Token::Hover { target } => tokens.get(i + 1).is_some_and(|next| {
                matches!(next, Token::Click { .. } | Token::Text { .. })
                    && node_of(next) == Some(target.node_id.as_str())
            }),
            _ => true,
        })
        .collect();
    tokens.into_iter().zip(keep).filter_map(|(t, k)| k.then_some(t)).collect()
}

fn merge_text(tokens: Vec<Token>) -> Vec<Token> {
    let mut out: Vec<Token> = Vec::with_capacity(tokens.len());
    for token in tokens {
        if let (Some(Token::Text { target: prev, text: prev_text }), Token::Text { target, text }) =
            (out.last_mut(), &token)
        {
            if prev.node_id == target.node_id {
                *prev_text = text.clone();
                if !target.descriptor.is_empty() {
                    prev.descriptor = target.descriptor.clone();
                }
                continue;
            }
        }
        out.push(token);
    }
    out
}

fn merge_adjacent_scrolls(runs: Vec<ScrollRun>) -> Vec<ScrollRun> {
    let mut out: Vec<ScrollRun> = Vec::with_capacity(runs.len());
    for run in runs {
        match out.last_mut() {
            Some(prev) if prev.direction == run.direction && prev.same_page(&run) => prev.absorb(run),
            _ => out.push(run),
        }
    }
    out
}

fn drop_micro_reversals(runs: Vec<ScrollRun>, config: &TransformConfig) -> Vec<ScrollRun> {
    let reverses = |run: &ScrollRun, neighbour: Option<&ScrollRun>| {
        neighbour.is_some_and(|n| {
            n.direction == run.direction.opposite()
                && n.same_page(run)
                && n.first_ts.abs_diff(run.last_ts).min(n.last_ts.abs_diff(run.first_ts)) <= config.reversal_window_ms
        })
    };
    let keep: Vec<bool> = runs
        .iter()
        .enumerate()
        .map(|(i, run)| {
            let micro = run.count == 1 && run.magnitude < config.micro_scroll_px;
            let prev = i.checked_sub(1).and_then(|j| runs.get(j));
            !(micro && (reverses(run, prev) || reverses(run, runs.get(i + 1))))
        })
        .collect();
    runs.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect()
}

fn clean_scrolls(tokens: Vec<Token>, config: &TransformConfig) -> Vec<Token> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut pending: Vec<ScrollRun> = Vec::new();
    let flush = |pending: &mut Vec<ScrollRun>, out: &mut Vec<Token>| {
        if pending.is_empty() {
            return;
        }
        let runs = merge_adjacent_scrolls(std::mem::take(pending));
        let runs = drop_micro_reversals(runs, config);
        out.extend(merge_adjacent_scrolls(runs).into_iter().map(Token::Scroll));
    };
    for token in tokens {
        match token {
            Token::Scroll(run) => pending.push(run),
            other => {
                flush(&mut pending, &mut out);
                out.push(other);
            }
        }
    }
    flush(&mut pending, &mut out);
    out
}

/// Turns tab updates into navigation tokens: a same-tab update with a url
/// navigates, an update on another tab switches, anything else only moves
/// the tab context.
fn resolve_tabs(tokens: Vec<Token>, context: &TransformContext) -> Vec<Token> {
    let mut current_tab = context.current_tab;
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        match token {
            Token::Tab { url, tab_id } => {
                let same_tab = current_tab.is_none_or(|t| t == tab_id);
                current_tab = Some(tab_id);
                if !same_tab {
                    out.push(Token::SwitchTab(tab_id));
                } else if !url.is_empty() {
                    out.push(Token::Navigate(url));
                }
            }
            other => out.push(other),
        }
    }
    out
}

fn emit(tokens: Vec<Token>) -> Vec<Action> {
    let mut actions: Vec<Action> = Vec::with_capacity(tokens.len());
    for token in tokens {
        let command = match token {
            Token::Click { target } => Command::Click { target },
            Token::Hover { target } => Command::Hover { target },
            Token::Text { target, text } => Command::Type { target, text },
            Token::Scroll(run) => Command::Scroll { direction: run.direction },
            Token::Navigate(url) => Command::GotoUrl { url },
            Token::SwitchTab(tab_id) => Command::GotoTab { tab_id },
            Token::Tab { .. } => unreachable!("tab updates are resolved before emission"),
        };
        let repeat_nav = matches!(command, Command::GotoUrl { .. } | Command::GotoTab { .. })
            && actions.last().is_some_and(|a| a.command == command);
        if repeat_nav {
            continue;
        }
        actions.push(Action::new(command).described());
    }
    actions
}

/// Re-encodes canonical actions as the minimal synthetic event log that
/// produces them. Terminal actions have no event form and are skipped.
pub fn encode_actions(actions: &[Action], config: &TransformConfig, context: &TransformContext) -> Vec<RawHumanEvent> {
    let scroll_px = (config.micro_scroll_px * 3.0).max(120.0);
    let mut current_tab = context.current_tab;
    let mut events = Vec::with_capacity(actions.len());
    for (i, action) in actions.iter().enumerate() {
        let ts = (i as u64 + 1) * (config.reversal_window_ms + 1000);
        let with_target = |kind: EventType, target: &ElementRef| {
            let mut e = RawHumanEvent::new(kind, ts).on_node(&target.node_id);
            if !target.descriptor.is_empty() {
                e.element_name = Some(target.descriptor.clone());
            }
            e
        };
        let event = match &action.command {
            Command::Click { target } => with_target(EventType::Click, target),
            Command::Hover { target } => with_target(EventType::Mouseover, target),
            Command::Type { target, text } => {
                let mut e = with_target(EventType::Input, target);
                e.key_data = Some(KeyData {
                    key: String::new(),
                    code: String::new(),
                    is_ctrl_pressed: false,
                    is_shift_pressed: false,
                    is_alt_pressed: false,
                    is_meta_pressed: false,
                    full_text_entry: text.clone(),
                });
                e
            }
            Command::Scroll { direction } => {
                let (dx, dy) = match direction {
                    Direction::Up => (0.0, -scroll_px),
                    Direction::Down => (0.0, scroll_px),
                    Direction::Left => (-scroll_px, 0.0),
                    Direction::Right => (scroll_px, 0.0),
                };
                let mut e = RawHumanEvent::new(EventType::Scroll, ts);
                e.scroll_data = Some(ScrollData {
                    delta_x: dx,
                    delta_y: dy,
                    delta_mode: 0,
                    is_line: false,
                    is_page: false,
                    is_pixel: true,
                });
                e
            }
            Command::GotoUrl { url } => {
                let tab_id = *current_tab.get_or_insert(u32::MAX);
                let mut e = RawHumanEvent::new(EventType::TabUpdate, ts);
                e.url_data = Some(UrlData { url_name: url.clone(), tab_id });
                e
            }
            Command::GotoTab { tab_id } => {
                if current_tab.is_none() {
                    // An empty update on another tab only sets the context.
                    let other = if *tab_id == u32::MAX { 0 } else { u32::MAX };
                    let mut e = RawHumanEvent::new(EventType::TabUpdate, ts.saturating_sub(1));
                    e.url_data = Some(UrlData { url_name: String::new(), tab_id: other });
                    events.push(e);
                }
                current_tab = Some(*tab_id);
                let mut e = RawHumanEvent::new(EventType::TabUpdate, ts);
                e.url_data = Some(UrlData { url_name: String::new(), tab_id: *tab_id });
                e
            }
            Command::FinishWithAnswer { .. } | Command::Finish | Command::Failure => continue,
        };
        events.push(event);
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionKind;

    fn input(node: &str, text: &str, ts: u64) -> RawHumanEvent {
        RawHumanEvent::text_entry(EventType::Input, node, text, ts)
    }

    #[test]
    fn consecutive_inputs_keep_final_text() {
        let out = rule_transform(&[input("20", "Hello", 1), input("20", "Hello world", 2)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].command, Command::Type { target: ElementRef::new("20"), text: "Hello world".into() });
        assert!(!out[0].description.is_empty());
    }

    #[test]
    fn same_direction_scrolls_merge() {
        let out = rule_transform(&[RawHumanEvent::scroll(0.0, 120.0, 1), RawHumanEvent::scroll(0.0, 120.0, 2)]);
        assert_eq!(out, vec![Action::scroll(Direction::Down).described()]);
    }

    #[test]
    fn empty_log() {
        assert!(rule_transform(&[]).is_empty());
    }

    #[test]
    fn mouseover_during_typing_dropped() {
        let out = rule_transform(&[
            RawHumanEvent::mouseover("7", 1),
            RawHumanEvent::text_entry(EventType::Keyup, "20", "x", 2),
            input("20", "x", 3),
        ]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].command, Command::Type { target: ElementRef::new("20"), text: "x".into() });
    }

    #[test]
    fn mouseover_before_click_on_same_node_is_hover() {
        let out = rule_transform(&[RawHumanEvent::mouseover("7", 1), RawHumanEvent::click("7", 2)]);
        let kinds: Vec<_> = out.iter().map(Action::kind).collect();
        assert_eq!(kinds, vec![ActionKind::Hover, ActionKind::Click]);
    }

    #[test]
    fn micro_reversal_dropped_and_neighbours_remerge() {
        let out = rule_transform(&[
            RawHumanEvent::scroll(0.0, 120.0, 0),
            RawHumanEvent::scroll(0.0, -10.0, 100),
            RawHumanEvent::scroll(0.0, 120.0, 200),
        ]);
        assert_eq!(out, vec![Action::scroll(Direction::Down).described()]);
    }

    #[test]
    fn slow_micro_reversal_is_kept() {
        let out = rule_transform(&[RawHumanEvent::scroll(0.0, 120.0, 0), RawHumanEvent::scroll(0.0, -10.0, 5_000)]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn thresholds_are_configurable() {
        let events = [RawHumanEvent::scroll(0.0, 120.0, 0), RawHumanEvent::scroll(0.0, -30.0, 100)];
        let lenient = TransformConfig { micro_scroll_px: 20.0, ..TransformConfig::default() };
        assert_eq!(rule_transform(&events).len(), 1);
        assert_eq!(rule_transform_with(&events, &lenient, &TransformContext::default()).len(), 2);
    }

    #[test]
    fn tab_updates() {
        let ctx = TransformContext { current_tab: Some(0) };
        let out = rule_transform_with(
            &[
                RawHumanEvent::tab_update("http://a.test/", 0, 1),
                RawHumanEvent::tab_update("http://a.test/", 0, 2),
                RawHumanEvent::tab_update("http://b.test/", 4, 3),
            ],
            &TransformConfig::default(),
            &ctx,
        );
        assert_eq!(
            out.iter().map(|a| a.command.clone()).collect::<Vec<_>>(),
            vec![Command::GotoUrl { url: "http://a.test/".into() }, Command::GotoTab { tab_id: 4 }]
        );
    }

    #[test]
    fn contextmenu_and_modifiers_produce_nothing() {
        let mut shift = RawHumanEvent::text_entry(EventType::KeyboardEvent, "3", "", 1);
        shift.key_data.as_mut().unwrap().key = "Shift".into();
        let out = rule_transform(&[
            RawHumanEvent::new(EventType::Contextmenu, 0).on_node("3"),
            shift,
            RawHumanEvent::new(EventType::Other("dragstart".into()), 2),
        ]);
        assert!(out.is_empty());
    }

    #[test]
    fn element_name_becomes_descriptor() {
        let out = rule_transform(&[RawHumanEvent::click("9", 1).named("button \"Save\"")]);
        assert_eq!(out[0].description, "Click on button \"Save\"");
    }
}
