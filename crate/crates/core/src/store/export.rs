use serde::{Deserialize, Serialize};

use super::{Trajectory, SCHEMA_VERSION};

pub const EXPORT_FORMAT: &str = "tandem-trajectory";
pub const EXPORT_EXTENSION: &str = "tandem.json";
pub const MEDIA_TYPE: &str = "application/vnd.tandem.trajectory+json";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExportError {
    #[error("trajectory {0} is not sealed")]
    Unsealed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImportError {
    #[error("not a trajectory export: {0}")]
    Malformed(String),
    #[error("unsupported schema version {found}; this build reads version {expected}")]
    SchemaMismatch { found: u32, expected: u32 },
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'static str,
    schema_version: u32,
    trajectory: &'a Trajectory,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    format: String,
    schema_version: u32,
    trajectory: serde_json::Value,
}

/// Renders a sealed trajectory as a single self-contained document.
pub fn export(t: &Trajectory) -> Result<String, ExportError> {
    if !t.sealed {
        return Err(ExportError::Unsealed(t.trajectory_id.clone()));
    }
    let envelope = EnvelopeOut { format: EXPORT_FORMAT, schema_version: SCHEMA_VERSION, trajectory: t };
    let mut text = serde_json::to_string_pretty(&envelope).expect("trajectories serialize");
    text.push('\n');
    Ok(text)
}

pub fn import(text: &str) -> Result<Trajectory, ImportError> {
    let envelope: EnvelopeIn = serde_json::from_str(text).map_err(|e| ImportError::Malformed(e.to_string()))?;
    if envelope.format != EXPORT_FORMAT {
        return Err(ImportError::Malformed(format!("unexpected format {:?}", envelope.format)));
    }
    if envelope.schema_version != SCHEMA_VERSION {
        return Err(ImportError::SchemaMismatch { found: envelope.schema_version, expected: SCHEMA_VERSION });
    }
    serde_json::from_value(envelope.trajectory).map_err(|e| ImportError::Malformed(e.to_string()))
}
