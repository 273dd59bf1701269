//! Deterministic simulated web environment.
//!
//! Sites are described by TOML specs (see [`spec`]). Node ids are minted
//! from a counter each time the visible page changes, so a reference taken
//! before a mutation no longer resolves afterwards.

mod replay;
pub mod spec;
mod world;

use std::sync::Arc;

use crate::action::{Action, ActionOutcome};
use crate::observation::Observation;

pub use replay::{replay_trajectory, Divergence, ReplayError, ReplayReport};
pub use spec::{SiteSpec, SpecParseError};
pub use world::{SimError, TabState, WorldState};

/// Site identity recorded with trajectories so replays can detect edits.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EnvironmentInfo {
    pub site: String,
    pub version: u32,
}

pub trait Environment: Send {
    fn observe(&self) -> Observation;

    fn apply(&mut self, action: &Action) -> Result<(ActionOutcome, Observation), SimError>;

    /// Records an action the human already performed in the page. The
    /// references in captured events may predate mutations caused by the
    /// human's own earlier actions, so implementations may relocate them.
    fn absorb_human_action(&mut self, action: &Action) -> Result<(ActionOutcome, Observation), SimError> {
        self.apply(action)
    }

    fn info(&self) -> Option<EnvironmentInfo> {
        None
    }

    fn state_hash(&self) -> String;

    fn task_flags(&self) -> Vec<String> {
        Vec::new()
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn observe(&self) -> Observation {
        (**self).observe()
    }
    fn apply(&mut self, action: &Action) -> Result<(ActionOutcome, Observation), SimError> {
        (**self).apply(action)
    }
    fn absorb_human_action(&mut self, action: &Action) -> Result<(ActionOutcome, Observation), SimError> {
        (**self).absorb_human_action(action)
    }
    fn info(&self) -> Option<EnvironmentInfo> {
        (**self).info()
    }
    fn state_hash(&self) -> String {
        (**self).state_hash()
    }
    fn task_flags(&self) -> Vec<String> {
        (**self).task_flags()
    }
}

#[derive(Debug, Clone)]
pub struct SimEnvironment {
    spec: Arc<SiteSpec>,
    state: WorldState,
}

impl SimEnvironment {
    pub fn new(spec: Arc<SiteSpec>) -> Self {
        let state = WorldState::initial(&spec);
        Self { spec, state }
    }

    /// Loads one of the bundled fixture sites by name.
    pub fn builtin(name: &str) -> Option<Self> {
        builtin_site(name).map(|s| Self::new(Arc::new(s)))
    }

    pub fn spec(&self) -> &SiteSpec {
        &self.spec
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }
}

impl Environment for SimEnvironment {
    fn observe(&self) -> Observation {
        self.state.observe(&self.spec)
    }

    fn apply(&mut self, action: &Action) -> Result<(ActionOutcome, Observation), SimError> {
        self.state.apply(&self.spec, action)
    }

    fn absorb_human_action(&mut self, action: &Action) -> Result<(ActionOutcome, Observation), SimError> {
        let snapshot = self.state.snapshot(&self.spec);
        let mut action = action.clone();
        if let Some(target) = action.target_mut() {
            if snapshot.find(&target.node_id).is_none() && !target.descriptor.is_empty() {
                if let Some(el) = snapshot.find_by_label(&target.descriptor) {
                    target.node_id = el.node_id.clone();
                }
            }
        }
        self.state.apply(&self.spec, &action)
    }

    fn info(&self) -> Option<EnvironmentInfo> {
        Some(EnvironmentInfo { site: self.spec.name.clone(), version: self.spec.version })
    }

    fn state_hash(&self) -> String {
        self.state.state_hash()
    }

    fn task_flags(&self) -> Vec<String> {
        self.state.task_flags.iter().cloned().collect()
    }
}

const BUILTIN: [(&str, &str); 5] = [
    ("mini-forum", include_str!("../../fixtures/sites/mini-forum.toml")),
    ("mini-shop", include_str!("../../fixtures/sites/mini-shop.toml")),
    ("mini-admin", include_str!("../../fixtures/sites/mini-admin.toml")),
    ("mini-gitlab", include_str!("../../fixtures/sites/mini-gitlab.toml")),
    ("mini-map", include_str!("../../fixtures/sites/mini-map.toml")),
];

pub fn builtin_site_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

pub fn builtin_site(name: &str) -> Option<SiteSpec> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| SiteSpec::parse(text, n).expect("bundled site specs are valid"))
}

/// Resolves `name` as a bundled site first, then as a file path.
pub fn load_site(name_or_path: &str) -> Result<SiteSpec, SpecParseError> {
    match builtin_site(name_or_path) {
        Some(spec) => Ok(spec),
        None => SiteSpec::load(std::path::Path::new(name_or_path)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{Direction, ElementRef, OutcomeStatus};

    fn click(env: &SimEnvironment, label: &str) -> Action {
        env.observe().snapshot.bind_labels(Action::click(ElementRef::label(label)))
    }

    #[test]
    fn builtins_parse() {
        for name in builtin_site_names() {
            let env = SimEnvironment::builtin(name).unwrap();
            assert_eq!(env.observe().tab_list.len(), 1);
        }
    }

    #[test]
    fn minimal_site_has_one_tab() {
        let spec =
            SiteSpec::parse("name='x'\nversion=1\nstart_url='http://x.test/'\n[[page]]\nurl='http://x.test/'\n", "x")
                .unwrap();
        let env = SimEnvironment::new(Arc::new(spec));
        assert_eq!(env.state().tabs.len(), 1);
        assert_eq!(env.observe().url, "http://x.test/");
    }

    #[test]
    fn navigation_changes_url_and_snapshot() {
        let mut env = SimEnvironment::builtin("mini-forum").unwrap();
        let before = env.observe();
        let a = click(&env, "Forums");
        let (outcome, obs) = env.apply(&a).unwrap();
        assert_eq!(outcome.status, OutcomeStatus::Executed);
        assert_eq!(obs.url, "http://forum.test/forums");
        assert_ne!(obs.snapshot_id, before.snapshot_id);
        assert_eq!(outcome.resulting_observation_id, obs.snapshot_id);
    }

    #[test]
    fn inert_click_is_no_effect_and_rendering_unchanged() {
        let mut env = SimEnvironment::builtin("mini-forum").unwrap();
        let before = env.observe();
        let a = click(&env, "Welcome to Postmill");
        let (outcome, obs) = env.apply(&a).unwrap();
        assert_eq!(outcome.status, OutcomeStatus::NoEffect);
        assert_eq!(obs.ax_tree_text, before.ax_tree_text);
        assert_eq!(env.state().generation, 1);
        assert_eq!(env.apply(&a).unwrap().0.status, OutcomeStatus::NoEffect);
    }

    #[test]
    fn stale_reference_after_mutation() {
        let mut env = SimEnvironment::builtin("mini-forum").unwrap();
        let wiki = click(&env, "Wiki");
        env.apply(&click(&env, "Forums")).unwrap();
        assert!(matches!(env.apply(&wiki), Err(SimError::StaleElement { .. })));
    }

    #[test]
    fn scrolling_reveals_offscreen_forums() {
        let mut env = SimEnvironment::builtin("mini-forum").unwrap();
        env.apply(&click(&env, "Forums")).unwrap();
        assert!(env.observe().snapshot.find_by_label("space").is_none());
        let (o, obs) = env.apply(&Action::scroll(Direction::Down)).unwrap();
        assert_eq!(o.status, OutcomeStatus::Executed);
        assert!(obs.snapshot.find_by_label("space").is_some());
        assert!(obs.ax_tree_text.contains("more above"));
        assert_eq!(env.apply(&Action::scroll(Direction::Down)).unwrap().0.status, OutcomeStatus::NoEffect);
        assert_eq!(env.apply(&Action::scroll(Direction::Left)).unwrap().0.status, OutcomeStatus::NoEffect);
    }

    #[test]
    fn typing_sets_value_and_fires_rules() {
        let mut env = SimEnvironment::builtin("mini-map").unwrap();
        let field = env.observe().snapshot.find_by_label("Search").unwrap().element_ref();
        let (o, obs) = env.apply(&Action::type_text(field, "Carnegie Mellon University")).unwrap();
        assert_eq!(o.status, OutcomeStatus::Executed);
        assert!(obs.snapshot.find_by_label("Directions").is_some());
        assert_eq!(env.task_flags(), vec!["place_found".to_string()]);
        let field = obs.snapshot.find_by_label("Search").unwrap();
        assert_eq!(field.value.as_deref(), Some("Carnegie Mellon University"));
    }

    #[test]
    fn type_into_button_is_kind_mismatch() {
        let mut env = SimEnvironment::builtin("mini-map").unwrap();
        let go = env.observe().snapshot.find_by_label("Go").unwrap().element_ref();
        assert!(matches!(env.apply(&Action::type_text(go, "x")), Err(SimError::KindMismatch { .. })));
    }

    #[test]
    fn open_tab_and_switch_back() {
        let mut env = SimEnvironment::builtin("mini-gitlab").unwrap();
        let (_, obs) = env.apply(&click(&env, "Help")).unwrap();
        assert_eq!(obs.current_tab, 1);
        assert_eq!(obs.tab_list.len(), 2);
        let (o, obs) = env.apply(&Action::goto_tab(0)).unwrap();
        assert_eq!(o.status, OutcomeStatus::Executed);
        assert_eq!(obs.url, "http://git.test/");
        assert!(matches!(env.apply(&Action::goto_tab(7)), Err(SimError::UnknownTab(7))));
    }

    #[test]
    fn goto_rules_and_unknown_urls() {
        let mut env = SimEnvironment::builtin("mini-map").unwrap();
        env.apply(&Action::goto_url("http://map.test/?query=cmu")).unwrap();
        assert!(env.task_flags().contains(&"place_found".to_string()));
        assert!(matches!(env.apply(&Action::goto_url("http://nowhere.test/")), Err(SimError::UnknownUrl(_))));
    }

    #[test]
    fn terminal_actions_leave_state_alone() {
        let mut env = SimEnvironment::builtin("mini-shop").unwrap();
        let h = env.state_hash();
        let (o, _) = env.apply(&Action::finish()).unwrap();
        assert_eq!(o.status, OutcomeStatus::Executed);
        assert_eq!(env.state_hash(), h);
    }

    #[test]
    fn absorbed_human_action_relocates_stale_reference_by_descriptor() {
        let mut env = SimEnvironment::builtin("mini-shop").unwrap();
        let go = env.observe().snapshot.find_by_label("Search").unwrap().element_ref();
        let field = env.observe().snapshot.find_by_label("Search entire store here").unwrap().element_ref();
        env.apply(&Action::type_text(field, "lamp")).unwrap();
        let (o, obs) = env.absorb_human_action(&Action::click(go)).unwrap();
        assert_eq!(o.status, OutcomeStatus::Executed);
        assert_eq!(obs.url, "http://shop.test/results");
    }
}
