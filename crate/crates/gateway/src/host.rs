//! Shared server-side state: how policies are built, where trajectories go,
//! which sites sessions can run against.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use tandem_core::action::parse_action;
use tandem_core::clock::{Clock, SystemClock};
use tandem_core::policy::{ApiKey, BackendSettings, LlmPolicy, OpenAiCompatibleBackend, Policy, ScriptedPolicy};
use tandem_core::session::SessionConfig;
use tandem_core::sim::{builtin_site_names, load_site, SiteSpec};
use tandem_core::store::TrajectoryStore;

/// Builds a policy for a model name.
pub trait PolicyFactory: Send + Sync {
    fn create(&self, model: &str) -> Result<Box<dyn Policy>, String>;
}

impl<F> PolicyFactory for F
where
    F: Fn(&str) -> Result<Box<dyn Policy>, String> + Send + Sync,
{
    fn create(&self, model: &str) -> Result<Box<dyn Policy>, String> {
        self(model)
    }
}

pub const DEFAULT_API_KEY_ENV: &str = "TANDEM_API_KEY";

/// Default factory.
///
/// `script:<actions>` replays a fixed action list, where `<actions>` is
/// either a path to a file with one call per line or the calls themselves
/// separated by `;`. File scripts record `script:<file name>` as the model
/// id so trajectories do not depend on where the file lives. Every other name is sent to the configured
/// OpenAI-compatible endpoint, authenticated with the key in the named
/// environment variable.
#[derive(Debug, Clone)]
pub struct ModelRegistry {
    pub endpoint: Option<String>,
    pub api_key_env: String,
    pub config: SessionConfig,
}

impl ModelRegistry {
    pub fn new(config: SessionConfig) -> Self {
        Self { endpoint: config.endpoint.clone(), api_key_env: DEFAULT_API_KEY_ENV.to_string(), config }
    }
}

pub fn scripted_policy(model: &str) -> Result<ScriptedPolicy, String> {
    let body = model.strip_prefix("script:").ok_or_else(|| format!("{model:?} is not a script model"))?;
    let path = Path::new(body);
    let (text, model_id) = if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{body}: {e}"))?;
        let name = path.file_name().map_or(body.into(), |n| n.to_string_lossy());
        (text, format!("script:{name}"))
    } else {
        (body.replace(';', "\n"), model.to_string())
    };
    let script = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_action(l).map_err(|e| format!("{l:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScriptedPolicy::new(model_id, script))
}

impl PolicyFactory for ModelRegistry {
    fn create(&self, model: &str) -> Result<Box<dyn Policy>, String> {
        if model.starts_with("script:") {
            return scripted_policy(model).map(|p| Box::new(p) as Box<dyn Policy>);
        }
        let endpoint = self.endpoint.clone().ok_or_else(|| format!("no endpoint configured for model {model:?}"))?;
        let mut settings = BackendSettings::new(endpoint, model);
        settings.api_key = ApiKey::from_env(&self.api_key_env);
        settings.timeout = Duration::from_millis(self.config.backend_timeout_ms);
        settings.max_retries = self.config.backend_retries;
        settings.temperature = self.config.temperature;
        let backend = OpenAiCompatibleBackend::new(settings).map_err(|e| e.to_string())?;
        Ok(Box::new(LlmPolicy::new(Box::new(backend)).with_budget(self.config.prompt)))
    }
}

pub struct SessionHost {
    pub policies: Arc<dyn PolicyFactory>,
    pub store: Option<TrajectoryStore>,
    pub clock: Arc<dyn Clock>,
    pub config: SessionConfig,
    /// Used when neither `start_task` nor `set_model` names one.
    pub default_model: Option<String>,
    pub server_name: String,
    sites: BTreeMap<String, Arc<SiteSpec>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for SessionHost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionHost")
            .field("store", &self.store)
            .field("default_model", &self.default_model)
            .field("sites", &self.sites.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl SessionHost {
    /// Host with the bundled sites, the system clock and no store.
    pub fn new(policies: Arc<dyn PolicyFactory>, config: SessionConfig) -> Self {
        let sites = builtin_site_names()
            .map(|n| (n.to_string(), Arc::new(load_site(n).expect("bundled sites load"))))
            .collect();
        Self {
            policies,
            store: None,
            clock: Arc::new(SystemClock),
            default_model: config.model.clone(),
            config,
            server_name: format!("tandem/{}", env!("CARGO_PKG_VERSION")),
            sites,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn with_store(mut self, store: TrajectoryStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_default_model(mut self, model: impl Into<String>) -> Self {
        self.default_model = Some(model.into());
        self
    }

    pub fn add_site(&mut self, spec: SiteSpec) {
        self.sites.insert(spec.name.clone(), Arc::new(spec));
    }

    pub fn site(&self, name: &str) -> Option<Arc<SiteSpec>> {
        self.sites.get(name).cloned()
    }

    pub fn site_names(&self) -> impl Iterator<Item = &str> {
        self.sites.keys().map(String::as_str)
    }

    pub fn mint_session_id(&self) -> String {
        let n = self.next_id.fetch_add(1, Ordering::SeqCst);
        format!("s{}-{n}", self.clock.now_ms())
    }
}
