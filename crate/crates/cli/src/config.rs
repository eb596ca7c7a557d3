//! The TOML config file and its merge with command-line flags. Flags win.

use std::path::{Path, PathBuf};

use mallm_gan_core::causal::{parse_pairs_text, Dag};
use mallm_gan_core::llm::{LlmError, MockBackend, MockWorld, OpenAiClient, ProviderConfig, API_KEY_ENV};
use mallm_gan_core::trainer::RunConfig;
use mallm_gan_core::llm::ChatClient;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Live,
}

/// Endpoint settings. The API key is never part of this; it comes from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub base_url: String,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
}

impl Default for ProviderSection {
    fn default() -> Self {
        let p = ProviderConfig::default();
        Self {
            base_url: p.base_url,
            model: p.model,
            timeout_secs: p.timeout_secs,
            max_retries: p.max_retries,
            backoff_base_secs: p.backoff_base_secs,
        }
    }
}

impl ProviderSection {
    fn to_provider(&self) -> ProviderConfig {
        ProviderConfig {
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            api_key_env: API_KEY_ENV.into(),
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
            backoff_base_secs: self.backoff_base_secs,
        }
    }
}

/// Everything a command needs, after merging file and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub backend: BackendKind,
    pub world: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub provider: ProviderSection,
    pub run: RunConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            world: None,
            data: None,
            schema: None,
            out: None,
            provider: ProviderSection::default(),
            run: RunConfig::default(),
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    pub fn client(&self) -> Result<Box<dyn ChatClient>, CliError> {
        match self.backend {
            BackendKind::Mock => {
                let path = self
                    .world
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("the mock backend needs --world".into()))?;
                let world = MockWorld::load(path).map_err(|e| CliError::Usage(e.to_string()))?;
                Ok(Box::new(MockBackend::new(world)))
            }
            BackendKind::Live => match OpenAiClient::new(self.provider.to_provider()) {
                Ok(c) => Ok(Box::new(c)),
                Err(e @ LlmError::MissingApiKey(_)) => Err(CliError::Provider(e.to_string())),
                Err(e) => Err(CliError::Usage(e.to_string())),
            },
        }
    }
}

/// Reads a pair-list DAG file against the given column names.
pub fn read_dag(path: &Path, names: &[String]) -> Result<Dag, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let parsed = parse_pairs_text(&text, names)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if parsed.unknown > 0 {
        return Err(CliError::Usage(format!(
            "{}: {} pair(s) name unknown columns",
            path.display(),
            parsed.unknown
        )));
    }
    Ok(parsed.dag)
}
