//! Config file discovery: `--config`, then `TANDEM_CONFIG`, then
//! `./tandem.toml`, then built-in defaults. The API key is never read from
//! a file; it comes from the `TANDEM_API_KEY` environment variable.

use std::path::{Path, PathBuf};

use tandem_core::session::{ConfigError, SessionConfig};

pub const CONFIG_ENV: &str = "TANDEM_CONFIG";
pub const LOCAL_CONFIG: &str = "tandem.toml";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigSource {
    Flag(PathBuf),
    Env(PathBuf),
    Local(PathBuf),
    Defaults,
}

impl ConfigSource {
    pub fn path(&self) -> Option<&Path> {
        match self {
            ConfigSource::Flag(p) | ConfigSource::Env(p) | ConfigSource::Local(p) => Some(p),
            ConfigSource::Defaults => None,
        }
    }
}

/// Picks the config source. `env` and `cwd` are passed in so discovery can
/// be tested without touching process state.
pub fn discover(flag: Option<&Path>, env: Option<&str>, cwd: &Path) -> ConfigSource {
    if let Some(p) = flag {
        return ConfigSource::Flag(p.to_path_buf());
    }
    if let Some(p) = env.filter(|p| !p.is_empty()) {
        return ConfigSource::Env(PathBuf::from(p));
    }
    let local = cwd.join(LOCAL_CONFIG);
    if local.is_file() {
        return ConfigSource::Local(local);
    }
    ConfigSource::Defaults
}

pub fn load(source: &ConfigSource) -> Result<SessionConfig, ConfigError> {
    match source.path() {
        Some(p) => SessionConfig::load(p),
        None => Ok(SessionConfig::default()),
    }
}
