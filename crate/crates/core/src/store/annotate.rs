use super::{FeedbackEntry, FeedbackScope, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotateError {
    #[error("step {index} does not exist; the trajectory has {len} steps")]
    BadIndex { index: usize, len: usize },
    #[error("trajectory {0} is not sealed")]
    Unsealed(String),
}

/// Records a step- or task-level judgment. The latest judgment per scope
/// wins; every submission stays in the audit list.
pub fn annotate(t: &mut Trajectory, entry: FeedbackEntry) -> Result<(), AnnotateError> {
    if !t.sealed {
        return Err(AnnotateError::Unsealed(t.trajectory_id.clone()));
    }
    match entry.scope {
        FeedbackScope::Step { index } => {
            if index >= t.steps.len() {
                return Err(AnnotateError::BadIndex { index, len: t.steps.len() });
            }
            t.feedback.step_level.insert(index, entry.judgment.clone());
        }
        FeedbackScope::Task => t.feedback.task_level = Some(entry.judgment.clone()),
    }
    t.feedback.audit.push(entry);
    Ok(())
}
