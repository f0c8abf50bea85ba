//! Service and CLI configuration.
//!
//! Read from TOML (or JSON when the file ends in `.json`); every field is
//! optional. `GENSSS_BIND` and `GENSSS_MATERIAL_DIR` override the file.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! material_dir = "materials"
//! data_dir = "gensss-data"
//! workers = 1
//! preview_size = 256
//!
//! [ga]
//! population_size = 32
//! max_generations = 50
//!
//! [render]
//! samples_per_pixel = 4
//! irradiance_sample_count = 2048
//! thread_count = 1
//! ```

use gensss_core::ga::GaConfig;
use gensss_core::render::RenderSettings;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const ENV_BIND: &str = "GENSSS_BIND";
pub const ENV_MATERIAL_DIR: &str = "GENSSS_MATERIAL_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid TOML config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid JSON config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub material_dir: PathBuf,
    /// Jobs, the compression cache and bench output live under here.
    pub data_dir: PathBuf,
    pub workers: usize,
    /// Preview image width and height in pixels.
    pub preview_size: usize,
    pub ga: GaConfig,
    pub render: RenderSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            material_dir: "materials".into(),
            data_dir: "gensss-data".into(),
            workers: 1,
            preview_size: 256,
            ga: GaConfig::default(),
            render: RenderSettings::default(),
        }
    }
}

impl ServiceConfig {
    pub fn parse_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Loads `path` if given, else defaults; then applies the environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.into(), source })?;
                if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                    serde_json::from_str(&text)?
                } else {
                    Self::parse_toml(&text)?
                }
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(b) = var(ENV_BIND).filter(|s| !s.is_empty()) {
            self.bind = b;
        }
        if let Some(d) = var(ENV_MATERIAL_DIR).filter(|s| !s.is_empty()) {
            self.material_dir = d.into();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ga.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.render.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be positive".into()));
        }
        if self.preview_size == 0 {
            return Err(ConfigError::Invalid("preview_size must be positive".into()));
        }
        Ok(())
    }

    pub fn jobs_dir(&self) -> PathBuf {
        self.data_dir.join("jobs")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.data_dir.join("cache")
    }

    pub fn bench_dir(&self) -> PathBuf {
        self.data_dir.join("bench")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg = ServiceConfig::parse_toml("bind = \"0.0.0.0:9000\"\n[ga]\npopulation_size = 8\n").unwrap();
        assert_eq!(cfg.bind, "0.0.0.0:9000");
        assert_eq!(cfg.ga.population_size, 8);
        assert_eq!(cfg.ga.max_generations, GaConfig::default().max_generations);
        assert_eq!(cfg.render, RenderSettings::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ServiceConfig::parse_toml("bnid = \"x\"").is_err());
    }

    #[test]
    fn env_overrides_file() {
        let mut cfg = ServiceConfig::default();
        cfg.apply_env(|k| match k {
            ENV_BIND => Some("10.0.0.1:1".into()),
            ENV_MATERIAL_DIR => Some("/m".into()),
            _ => None,
        });
        assert_eq!(cfg.bind, "10.0.0.1:1");
        assert_eq!(cfg.material_dir, PathBuf::from("/m"));
    }
}
