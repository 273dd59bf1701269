//! What an actor sees: a page snapshot and its linearized accessibility tree.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{Action, ElementRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Button,
    Link,
    Textfield,
    Dropdown,
    Text,
    Image,
}

impl ElementKind {
    pub const ALL: [ElementKind; 6] = [
        ElementKind::Button,
        ElementKind::Link,
        ElementKind::Textfield,
        ElementKind::Dropdown,
        ElementKind::Text,
        ElementKind::Image,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Button => "button",
            ElementKind::Link => "link",
            ElementKind::Textfield => "textfield",
            ElementKind::Dropdown => "dropdown",
            ElementKind::Text => "text",
            ElementKind::Image => "image",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotElement {
    pub node_id: String,
    pub kind: ElementKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl SnapshotElement {
    pub fn descriptor(&self) -> String {
        format!("{} \"{}\"", self.kind.as_str(), self.label)
    }

    pub fn element_ref(&self) -> ElementRef {
        ElementRef::new(&self.node_id).with_descriptor(self.descriptor())
    }
}

/// Interactive elements visible in one page generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSnapshot {
    pub generation: u64,
    pub url: String,
    #[serde(default)]
    pub title: String,
    pub elements: Vec<SnapshotElement>,
}

impl PageSnapshot {
    pub fn find(&self, node_id: &str) -> Option<&SnapshotElement> {
        self.elements.iter().find(|e| e.node_id == node_id)
    }

    /// Unique element whose label or descriptor equals `label`.
    pub fn find_by_label(&self, label: &str) -> Option<&SnapshotElement> {
        let mut matches = self.elements.iter().filter(|e| e.label == label || e.descriptor() == label);
        let first = matches.next()?;
        matches.next().is_none().then_some(first)
    }

    /// Rebinds `@label` targets to node ids minted in this snapshot. Targets
    /// that do not resolve are left untouched and fail later as stale.
    pub fn bind_labels(&self, mut action: Action) -> Action {
        if let Some(target) = action.target_mut() {
            if let Some(label) = target.label_reference() {
                if let Some(element) = self.find_by_label(label) {
                    *target = element.element_ref();
                }
            } else if target.descriptor.is_empty() {
                if let Some(element) = self.find(&target.node_id) {
                    target.descriptor = element.descriptor();
                }
            }
        }
        action
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabInfo {
    pub tab_id: u32,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub snapshot_id: String,
    pub url: String,
    pub tab_list: Vec<TabInfo>,
    pub current_tab: u32,
    pub ax_tree_text: String,
    pub step_index: usize,
    pub snapshot: PageSnapshot,
}

impl Observation {
    /// Builds an observation, rendering the tree and deriving the snapshot id
    /// from the generation and a digest of the rendering.
    pub fn new(snapshot: PageSnapshot, tab_list: Vec<TabInfo>, current_tab: u32, scroll_note: Option<String>) -> Self {
        let ax_tree_text = render_ax_tree(&snapshot, &tab_list, current_tab, scroll_note.as_deref());
        let digest = Sha256::digest(ax_tree_text.as_bytes());
        let snapshot_id = format!("g{}-{}", snapshot.generation, &hex::encode(digest)[..12]);
        Self { snapshot_id, url: snapshot.url.clone(), tab_list, current_tab, ax_tree_text, step_index: 0, snapshot }
    }
}

pub fn render_ax_tree(
    snapshot: &PageSnapshot,
    tabs: &[TabInfo],
    current_tab: u32,
    scroll_note: Option<&str>,
) -> String {
    let mut out = String::new();
    for tab in tabs {
        let marker = if tab.tab_id == current_tab { " (current)" } else { "" };
        let _ = writeln!(out, "Tab {}{}: {}", tab.tab_id, marker, tab.url);
    }
    let _ = writeln!(out, "RootWebArea \"{}\" {}", snapshot.title, snapshot.url);
    for e in &snapshot.elements {
        let _ = write!(out, "  [{}] {} \"{}\"", e.node_id, e.kind.as_str(), e.label);
        if let Some(v) = &e.value {
            let _ = write!(out, " value=\"{v}\"");
        }
        out.push('\n');
    }
    if let Some(note) = scroll_note {
        let _ = writeln!(out, "  ({note})");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap() -> PageSnapshot {
        PageSnapshot {
            generation: 3,
            url: "http://t.test/".into(),
            title: "T".into(),
            elements: vec![
                SnapshotElement { node_id: "5".into(), kind: ElementKind::Link, label: "Forums".into(), value: None },
                SnapshotElement {
                    node_id: "6".into(),
                    kind: ElementKind::Textfield,
                    label: "Search".into(),
                    value: Some("abc".into()),
                },
                SnapshotElement { node_id: "7".into(), kind: ElementKind::Text, label: "dup".into(), value: None },
                SnapshotElement { node_id: "8".into(), kind: ElementKind::Text, label: "dup".into(), value: None },
            ],
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let tabs = vec![TabInfo { tab_id: 0, url: "http://t.test/".into() }];
        let a = Observation::new(snap(), tabs.clone(), 0, None);
        let b = Observation::new(snap(), tabs, 0, None);
        assert_eq!(a, b);
        assert!(a.ax_tree_text.contains("[6] textfield \"Search\" value=\"abc\""));
        assert!(a.snapshot_id.starts_with("g3-"));
    }

    #[test]
    fn label_binding() {
        let s = snap();
        let a = s.bind_labels(Action::click(ElementRef::label("Forums")));
        assert_eq!(a.target().unwrap().node_id, "5");
        assert_eq!(a.target().unwrap().descriptor, "link \"Forums\"");
        // ambiguous labels stay unresolved
        let b = s.bind_labels(Action::click(ElementRef::label("dup")));
        assert_eq!(b.target().unwrap().node_id, "@dup");
    }
}
