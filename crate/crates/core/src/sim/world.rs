use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::spec::{ElementSpec, PageSpec, RuleSpec, SiteSpec, Trigger};
use crate::action::{kind_allowed_on, Action, ActionOutcome, Command, Direction};
use crate::observation::{ElementKind, Observation, PageSnapshot, SnapshotElement, TabInfo};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("element {node_id} is not part of snapshot generation {generation}")]
    StaleElement { node_id: String, generation: u64 },
    #[error("{kind} is not supported on {element} elements")]
    KindMismatch { kind: &'static str, element: ElementKind },
    #[error("no page at {0}")]
    UnknownUrl(String),
    #[error("no tab with id {0}")]
    UnknownTab(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabState {
    pub url: String,
    /// Index of the first visible row.
    pub scroll_row: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct PageState {
    values: BTreeMap<String, String>,
    revealed: BTreeSet<String>,
}

/// Mutable simulator state. Everything is kept in ordered maps so the
/// serialized form, and therefore [`WorldState::state_hash`], is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub site: String,
    pub site_version: u32,
    pub current_tab: u32,
    pub tabs: BTreeMap<u32, TabState>,
    pub task_flags: BTreeSet<String>,
    pub generation: u64,
    next_node_id: u64,
    pages: BTreeMap<String, PageState>,
    /// node id → element key for the elements in the current view.
    bindings: Vec<(String, String)>,
}

enum Effect {
    Executed,
    NoEffect,
}

impl WorldState {
    pub fn initial(spec: &SiteSpec) -> Self {
        let mut tabs = BTreeMap::new();
        tabs.insert(0, TabState { url: spec.start_url.clone(), scroll_row: 0 });
        let mut state = Self {
            site: spec.name.clone(),
            site_version: spec.version,
            current_tab: 0,
            tabs,
            task_flags: BTreeSet::new(),
            generation: 0,
            next_node_id: 1,
            pages: BTreeMap::new(),
            bindings: Vec::new(),
        };
        state.mint(spec);
        state
    }

    pub fn current_url(&self) -> &str {
        &self.tabs[&self.current_tab].url
    }

    fn page<'s>(&self, spec: &'s SiteSpec) -> &'s PageSpec {
        spec.page(self.current_url()).expect("validated specs only navigate to known pages")
    }

    fn page_state(&self) -> Option<&PageState> {
        self.pages.get(self.current_url())
    }

    fn is_shown(&self, el: &ElementSpec) -> bool {
        !el.hidden || self.page_state().is_some_and(|p| p.revealed.contains(&el.key))
    }

    /// Non-hidden elements of the current page in document order.
    fn rows<'s>(&self, spec: &'s SiteSpec) -> Vec<&'s ElementSpec> {
        self.page(spec).elements.iter().filter(|e| self.is_shown(e)).collect()
    }

    /// Visible window (first row, rows) over the current page.
    fn window(&self, spec: &SiteSpec) -> (usize, usize) {
        let total = self.rows(spec).len();
        match self.page(spec).viewport_rows {
            Some(rows) if total > rows => {
                let start = self.tabs[&self.current_tab].scroll_row.min(total - rows);
                (start, rows)
            }
            _ => (0, total),
        }
    }

    fn mint(&mut self, spec: &SiteSpec) {
        let (start, len) = self.window(spec);
        let keys: Vec<String> = self.rows(spec)[start..start + len].iter().map(|e| e.key.clone()).collect();
        self.bindings = keys
            .into_iter()
            .map(|k| {
                let id = self.next_node_id.to_string();
                self.next_node_id += 1;
                (id, k)
            })
            .collect();
    }

    fn value_of(&self, el: &ElementSpec) -> Option<String> {
        self.page_state().and_then(|p| p.values.get(&el.key).cloned()).or_else(|| el.value.clone())
    }

    pub fn snapshot(&self, spec: &SiteSpec) -> PageSnapshot {
        let page = self.page(spec);
        let elements = self
            .bindings
            .iter()
            .map(|(id, key)| {
                let el = page.element(key).expect("bindings reference page elements");
                SnapshotElement {
                    node_id: id.clone(),
                    kind: el.kind,
                    label: el.label.clone(),
                    value: self.value_of(el),
                }
            })
            .collect();
        PageSnapshot {
            generation: self.generation,
            url: self.current_url().to_string(),
            title: page.title.clone(),
            elements,
        }
    }

    pub fn observe(&self, spec: &SiteSpec) -> Observation {
        let total = self.rows(spec).len();
        let (start, len) = self.window(spec);
        let note = (len < total).then(|| {
            let mut note = format!("showing elements {}-{} of {}", start + 1, start + len, total);
            if start > 0 {
                note.push_str("; more above");
            }
            if start + len < total {
                note.push_str("; more below");
            }
            note
        });
        let tabs = self.tabs.iter().map(|(id, t)| TabInfo { tab_id: *id, url: t.url.clone() }).collect();
        Observation::new(self.snapshot(spec), tabs, self.current_tab, note)
    }

    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("world state serializes");
        hex::encode(Sha256::digest(bytes))
    }

    fn resolve<'s>(&self, spec: &'s SiteSpec, node_id: &str) -> Result<&'s ElementSpec, SimError> {
        self.bindings
            .iter()
            .find(|(id, _)| id == node_id)
            .and_then(|(_, key)| self.page(spec).element(key))
            .ok_or_else(|| SimError::StaleElement { node_id: node_id.to_string(), generation: self.generation })
    }

    fn fire(&mut self, rules: Vec<RuleSpec>) {
        let url = self.current_url().to_string();
        for rule in rules {
            let page = self.pages.entry(url.clone()).or_default();
            for sv in &rule.set_value {
                page.values.insert(sv.element.clone(), sv.value.clone());
            }
            for key in &rule.reveal {
                page.revealed.insert(key.clone());
            }
            self.task_flags.extend(rule.set_flag.iter().cloned());
            if let Some(target) = &rule.navigate {
                let tab = self.tabs.get_mut(&self.current_tab).expect("current tab exists");
                tab.url = target.clone();
                tab.scroll_row = 0;
            }
            if let Some(target) = &rule.open_tab {
                let id = self.tabs.keys().next_back().map_or(0, |k| k + 1);
                self.tabs.insert(id, TabState { url: target.clone(), scroll_row: 0 });
                self.current_tab = id;
            }
        }
    }

    fn matching(&self, spec: &SiteSpec, pred: impl Fn(&Trigger<'_>) -> bool) -> Vec<RuleSpec> {
        self.page(spec).rules.iter().filter(|r| pred(&r.trigger())).cloned().collect()
    }

    /// Applies `action`. Errors leave the state untouched; `no_effect` only
    /// advances the generation counter.
    pub fn apply(&mut self, spec: &SiteSpec, action: &Action) -> Result<(ActionOutcome, Observation), SimError> {
        let effect = match &action.command {
            Command::Finish | Command::Failure | Command::FinishWithAnswer { .. } => {
                let obs = self.observe(spec);
                return Ok((ActionOutcome::executed(&obs.snapshot_id), obs));
            }
            Command::Click { target } | Command::Hover { target } | Command::Type { target, .. } => {
                let el = self.resolve(spec, &target.node_id)?;
                if !kind_allowed_on(action.kind(), el.kind) {
                    return Err(SimError::KindMismatch { kind: action.kind().as_str(), element: el.kind });
                }
                let key = el.key.clone();
                match &action.command {
                    Command::Hover { .. } => Effect::NoEffect,
                    Command::Click { .. } => {
                        let rules = self.matching(spec, |t| *t == Trigger::Click(&key));
                        if rules.is_empty() {
                            Effect::NoEffect
                        } else {
                            self.fire(rules);
                            Effect::Executed
                        }
                    }
                    Command::Type { text, .. } => {
                        let changed = self.value_of(el).as_deref() != Some(text.as_str());
                        let rules = self.matching(spec, |t| {
                            matches!(t, Trigger::Type { element, predicate } if *element == key && predicate.matches(text))
                        });
                        if changed {
                            let url = self.current_url().to_string();
                            self.pages.entry(url).or_default().values.insert(key.clone(), text.clone());
                        }
                        let fired = !rules.is_empty();
                        self.fire(rules);
                        if changed || fired {
                            Effect::Executed
                        } else {
                            Effect::NoEffect
                        }
                    }
                    _ => unreachable!(),
                }
            }
            Command::Scroll { direction } => {
                let total = self.rows(spec).len();
                let (start, len) = self.window(spec);
                let next = match direction {
                    Direction::Down if start + len < total => Some((start + len).min(total - len)),
                    Direction::Up if start > 0 => Some(start.saturating_sub(len)),
                    _ => None,
                };
                match next {
                    Some(row) => {
                        self.tabs.get_mut(&self.current_tab).expect("current tab exists").scroll_row = row;
                        Effect::Executed
                    }
                    None => Effect::NoEffect,
                }
            }
            Command::GotoUrl { url } => {
                let rules = self.matching(spec, |t| *t == Trigger::Goto(url));
                if !rules.is_empty() {
                    self.fire(rules);
                } else if spec.page(url).is_some() {
                    let tab = self.tabs.get_mut(&self.current_tab).expect("current tab exists");
                    tab.url = url.clone();
                    tab.scroll_row = 0;
                } else {
                    return Err(SimError::UnknownUrl(url.clone()));
                }
                Effect::Executed
            }
            Command::GotoTab { tab_id } => {
                if !self.tabs.contains_key(tab_id) {
                    return Err(SimError::UnknownTab(*tab_id));
                }
                if *tab_id == self.current_tab {
                    Effect::NoEffect
                } else {
                    self.current_tab = *tab_id;
                    Effect::Executed
                }
            }
        };
        self.generation += 1;
        if matches!(effect, Effect::Executed) {
            self.mint(spec);
        }
        let obs = self.observe(spec);
        let outcome = match effect {
            Effect::Executed => ActionOutcome::executed(&obs.snapshot_id),
            Effect::NoEffect => ActionOutcome::no_effect(&obs.snapshot_id),
        };
        Ok((outcome, obs))
    }
}
