use crate::observation::{ElementKind, PageSnapshot};

use super::{Action, ActionKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("element {node_id} is not present in snapshot generation {generation}")]
    StaleElement { node_id: String, generation: u64 },
    #[error("cannot {kind} on a {element} element")]
    KindMismatch { kind: ActionKind, element: ElementKind },
}

/// Element-kind × action-kind compatibility. Untargeted kinds are allowed
/// everywhere.
pub fn kind_allowed_on(kind: ActionKind, element: ElementKind) -> bool {
    match kind {
        ActionKind::Type => element == ElementKind::Textfield,
        _ => true,
    }
}

pub fn validate_against_snapshot(action: &Action, snapshot: &PageSnapshot) -> Result<(), ValidationError> {
    let Some(target) = action.target() else {
        return Ok(());
    };
    let element = snapshot.find(&target.node_id).ok_or_else(|| ValidationError::StaleElement {
        node_id: target.node_id.clone(),
        generation: snapshot.generation,
    })?;
    if kind_allowed_on(action.kind(), element.kind) {
        Ok(())
    } else {
        Err(ValidationError::KindMismatch { kind: action.kind(), element: element.kind })
    }
}

impl std::fmt::Display for ElementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{Direction, ElementRef};
    use crate::observation::SnapshotElement;

    fn snapshot_with_all_kinds() -> PageSnapshot {
        PageSnapshot {
            generation: 1,
            url: "http://t.test/".into(),
            title: String::new(),
            elements: ElementKind::ALL
                .iter()
                .enumerate()
                .map(|(i, k)| SnapshotElement {
                    node_id: i.to_string(),
                    kind: *k,
                    label: k.as_str().into(),
                    value: None,
                })
                .collect(),
        }
    }

    fn action_of(kind: ActionKind, node: &str) -> Action {
        let t = ElementRef::new(node);
        match kind {
            ActionKind::Click => Action::click(t),
            ActionKind::Hover => Action::hover(t),
            ActionKind::Type => Action::type_text(t, "x"),
            ActionKind::Scroll => Action::scroll(Direction::Down),
            ActionKind::GotoUrl => Action::goto_url("http://t.test/"),
            ActionKind::GotoTab => Action::goto_tab(0),
            ActionKind::FinishWithAnswer => Action::finish_with_answer("a"),
            ActionKind::Finish => Action::finish(),
            ActionKind::Failure => Action::failure(),
        }
    }

    #[test]
    fn click_present_ok() {
        let s = snapshot_with_all_kinds();
        assert_eq!(validate_against_snapshot(&action_of(ActionKind::Click, "0"), &s), Ok(()));
    }

    #[test]
    fn type_absent_is_stale() {
        let s = snapshot_with_all_kinds();
        assert!(matches!(
            validate_against_snapshot(&action_of(ActionKind::Type, "99"), &s),
            Err(ValidationError::StaleElement { .. })
        ));
    }

    #[test]
    fn type_into_button_mismatch() {
        let s = snapshot_with_all_kinds();
        assert_eq!(
            validate_against_snapshot(&action_of(ActionKind::Type, "0"), &s),
            Err(ValidationError::KindMismatch { kind: ActionKind::Type, element: ElementKind::Button })
        );
    }

    /// Enumerates every element kind × action kind pair; only typing into a
    /// text field is restricted.
    #[test]
    fn full_compatibility_table() {
        let s = snapshot_with_all_kinds();
        let mut rejected = Vec::new();
        for (i, element) in ElementKind::ALL.iter().enumerate() {
            for kind in ActionKind::ALL {
                let ok = validate_against_snapshot(&action_of(kind, &i.to_string()), &s).is_ok();
                assert_eq!(ok, kind_allowed_on(kind, *element));
                if !ok {
                    rejected.push((kind, *element));
                }
            }
        }
        let expected_rejections: Vec<_> =
            ElementKind::ALL.iter().filter(|e| **e != ElementKind::Textfield).map(|e| (ActionKind::Type, *e)).collect();
        assert_eq!(rejected, expected_rejections);
    }
}
