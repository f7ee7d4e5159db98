//! Operator configuration: one TOML (or JSON) document whose top-level keys
//! mirror the pipeline config, plus resource paths and service settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hykge_core::pipeline::PipelineConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AppConfig {
    /// Tokenizer: "dictionary" (entity-name segmenter, the default) or
    /// "whitespace".
    #[serde(default)]
    pub tokenizer: Option<String>,
    #[serde(default)]
    pub resources: Resources,
    #[serde(default)]
    pub service: ServiceSettings,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Resources {
    pub snapshot_path: Option<PathBuf>,
    pub entity_index_path: Option<PathBuf>,
    pub stopwords_path: Option<PathBuf>,
    pub prompt_dir: Option<PathBuf>,
    pub ho_cache_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSettings {
    pub addr: String,
    pub trace_ring_capacity: usize,
    pub trace_spill_path: Option<PathBuf>,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            addr: "127.0.0.1:8787".to_string(),
            trace_ring_capacity: 1000,
            trace_spill_path: None,
        }
    }
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<AppConfig, CliError> {
        let Some(path) = path else {
            return Ok(AppConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::format(format!("cannot read config {}: {e}", path.display())))?;
        let config: AppConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| CliError::format(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::format(format!("{}: {e}", path.display())))?
        };
        config
            .pipeline
            .validate()
            .map_err(|e| CliError::format(e.to_string()))?;
        Ok(config)
    }
}
