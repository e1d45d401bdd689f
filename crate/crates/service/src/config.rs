use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weat_core::gateway::DEFAULT_ENDPOINT;
use weat_core::{default_config, MergePolicy, PromptConfig, ProviderKind, ProviderSpec};

use crate::error::ServiceError;

/// Loaded from TOML, then overridden by `WEAT_*` environment variables.
///
/// ```toml
/// listen = "127.0.0.1:8080"
/// storage_root = "data"
/// default_provider = "mock"
///
/// [prompt]
/// max_rounds = 2
///
/// [providers.mock]
/// fixture_path = "fixtures"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub storage_root: PathBuf,
    pub default_provider: ProviderKind,
    pub prompt: PromptConfig,
    pub policy: MergePolicy,
    /// Keyed by kind; the key wins over any `kind` inside the table.
    pub providers: BTreeMap<ProviderKind, ProviderSpec>,
    /// Built UI assets, served at `/` when set.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".to_owned(),
            storage_root: PathBuf::from("weat-data"),
            default_provider: ProviderKind::Mock,
            prompt: default_config(),
            policy: MergePolicy::default(),
            providers: BTreeMap::new(),
            ui_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let mut config: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        for (kind, spec) in config.providers.iter_mut() {
            spec.kind = *kind;
        }
        config.check()?;
        Ok(config)
    }

    /// Reads `path` if given (defaults otherwise) and applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ServiceError::io(path, e))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        config.apply_env(|name| std::env::var(name).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(listen) = lookup("WEAT_LISTEN") {
            self.listen = listen;
        }
        if let Some(root) = lookup("WEAT_STORAGE_ROOT") {
            self.storage_root = PathBuf::from(root);
        }
        if let Some(kind) = lookup("WEAT_PROVIDER") {
            self.default_provider = kind.parse().map_err(ServiceError::Config)?;
        }
        if let Some(fixtures) = lookup("WEAT_FIXTURES") {
            self.providers
                .entry(ProviderKind::Mock)
                .or_insert_with(|| ProviderSpec {
                    kind: ProviderKind::Mock,
                    ..ProviderSpec::default()
                })
                .fixture_path = Some(PathBuf::from(fixtures));
        }
        if let Some(endpoint) = lookup("WEAT_ENDPOINT") {
            self.providers
                .entry(ProviderKind::Live)
                .or_insert_with(|| ProviderSpec::live(DEFAULT_ENDPOINT))
                .endpoint = Some(endpoint);
        }
        self.check()
    }

    pub fn check(&self) -> Result<(), ServiceError> {
        self.prompt.check().map_err(|e| ServiceError::Config(e.to_string()))?;
        self.policy.check().map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(())
    }

    /// The spec generation for `example_id` uses. Live runs record into the
    /// example's recordings directory and replay reads from it, unless the
    /// config names another location.
    pub fn provider_for(&self, kind: ProviderKind, recordings: &Path) -> Result<ProviderSpec, ServiceError> {
        let mut spec = match self.providers.get(&kind) {
            Some(spec) => spec.clone(),
            None if kind == ProviderKind::Live => ProviderSpec::live(DEFAULT_ENDPOINT),
            None => ProviderSpec {
                kind,
                ..ProviderSpec::default()
            },
        };
        if spec.fixture_path.is_none() && kind != ProviderKind::Mock {
            spec.fixture_path = Some(recordings.to_path_buf());
        }
        spec.check().map_err(|e| ServiceError::Validation(e.to_string()))?;
        Ok(spec)
    }
}
