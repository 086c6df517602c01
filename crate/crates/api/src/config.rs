use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use evochain_core::explorer::{ClientConfig, RetryPolicy, DEFAULT_MAX_RPS};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

/// Service configuration, read from TOML:
///
/// ```toml
/// listen = "127.0.0.1:8080"
/// cors_origin = "http://localhost:5173"
/// snapshot = "graph.ndjson"
///
/// [explorer]
/// offline_fixture_dir = "sources"
/// ```
///
/// Relative paths are resolved against the directory holding the file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub cors_origin: Option<String>,
    pub snapshot: Option<PathBuf>,
    #[serde(default)]
    pub explorer: ExplorerSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorerSection {
    pub base_url: Option<String>,
    pub max_requests_per_second: Option<f64>,
    pub cache_dir: Option<PathBuf>,
    pub offline_fixture_dir: Option<PathBuf>,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: default_listen(),
            cors_origin: None,
            snapshot: None,
            explorer: ExplorerSection::default(),
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ServiceConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        fix(&mut self.snapshot);
        fix(&mut self.explorer.cache_dir);
        fix(&mut self.explorer.offline_fixture_dir);
    }

    /// Explorer client settings; the API key comes from the environment only.
    pub fn client_config(&self) -> ClientConfig {
        let defaults = ClientConfig::default();
        ClientConfig {
            base_url: self.explorer.base_url.clone().unwrap_or(defaults.base_url),
            api_key: None,
            max_requests_per_second: self.explorer.max_requests_per_second.unwrap_or(DEFAULT_MAX_RPS),
            cache_dir: self.explorer.cache_dir.clone(),
            offline_fixture_dir: self.explorer.offline_fixture_dir.clone(),
            retry: RetryPolicy::default(),
        }
        .with_env_key()
    }
}
