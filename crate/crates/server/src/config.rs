//! Session configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

fn default_host() -> String {
    "127.0.0.1".to_string()
}

fn default_port() -> u16 {
    8080
}

fn default_cache_size() -> usize {
    128
}

fn default_provider_concurrency() -> usize {
    4
}

/// Where a session reads its experiment and per-model artifacts from.
///
/// Outputs and layer summaries come from the provider when `provider_url`
/// is set, otherwise from `outputs_dir` and `layers_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub experiments: PathBuf,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub outputs_dir: Option<PathBuf>,
    #[serde(default)]
    pub layers_dir: Option<PathBuf>,
    #[serde(default)]
    pub provider_url: Option<String>,
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_port")]
    pub port: u16,
    /// Maximum number of cached artifacts.
    #[serde(default = "default_cache_size")]
    pub cache_size: usize,
    /// Provider requests allowed in flight at once.
    #[serde(default = "default_provider_concurrency")]
    pub provider_concurrency: usize,
}

impl SessionConfig {
    /// Static-file session over a directory laid out like the simulator's
    /// output.
    pub fn for_fixture_dir(dir: &Path) -> SessionConfig {
        SessionConfig {
            experiments: dir.join("experiments.json"),
            dataset: Some(dir.join("dataset.json")),
            outputs_dir: Some(dir.join("outputs")),
            layers_dir: Some(dir.join("layers")),
            provider_url: None,
            host: default_host(),
            port: default_port(),
            cache_size: default_cache_size(),
            provider_concurrency: default_provider_concurrency(),
        }
    }

    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<SessionConfig, ServiceError> {
        let mut config: SessionConfig = toml::from_str(text).map_err(|e| ServiceError::BadConfig(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut config.experiments);
        for p in [&mut config.dataset, &mut config.outputs_dir, &mut config.layers_dir]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<SessionConfig, ServiceError> {
        let text = fs::read_to_string(path).map_err(|e| ServiceError::BadConfig(format!("{}: {e}", path.display())))?;
        SessionConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.cache_size == 0 {
            return Err(ServiceError::BadConfig("cache_size must be positive".into()));
        }
        if self.provider_concurrency == 0 {
            return Err(ServiceError::BadConfig("provider_concurrency must be positive".into()));
        }
        if let Some(url) = &self.provider_url {
            if !(url.starts_with("http://") || url.starts_with("https://")) {
                return Err(ServiceError::BadConfig(format!("provider_url {url:?} is not an http(s) URL")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_the_config_dir() {
        let c = SessionConfig::parse("experiments = \"e.json\"\nlayers_dir = \"/abs\"\n", Path::new("/data")).unwrap();
        assert_eq!(c.experiments, PathBuf::from("/data/e.json"));
        assert_eq!(c.layers_dir, Some(PathBuf::from("/abs")));
        assert_eq!(c.port, 8080);
        assert_eq!(c.provider_concurrency, 4);
    }

    #[test]
    fn rejects_bad_values() {
        let base = Path::new(".");
        assert!(SessionConfig::parse("port = 1\n", base).is_err());
        assert!(SessionConfig::parse("experiments = \"e\"\ncache_size = 0\n", base).is_err());
        assert!(SessionConfig::parse("experiments = \"e\"\nprovider_url = \"ftp://x\"\n", base).is_err());
        assert!(SessionConfig::parse("experiments = \"e\"\ncolour = 1\n", base).is_err());
    }
}
