//! Server configuration file and environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{SessionConfig, SessionError};

pub const ENV_BIND: &str = "SOTS_BIND";
pub const ENV_LOG_DIR: &str = "SOTS_LOG_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error(transparent)]
    Invalid(#[from] SessionError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub log_dir: PathBuf,
    /// Directory of static client assets served at `/`.
    pub static_dir: Option<PathBuf>,
    pub session: SessionConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1:8080".into(),
            log_dir: PathBuf::from("logs"),
            static_dir: None,
            session: SessionConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads `path` (or starts from defaults), then applies environment
    /// overrides and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text).map_err(|source| ConfigError::Parse {
                    path: p.to_path_buf(),
                    source,
                })?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.session.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(bind) = var(ENV_BIND).filter(|v| !v.is_empty()) {
            self.bind = bind;
        }
        if let Some(dir) = var(ENV_LOG_DIR).filter(|v| !v.is_empty()) {
            self.log_dir = PathBuf::from(dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::Condition;

    #[test]
    fn toml_mirrors_session_config() {
        let cfg = ServerConfig::from_toml(
            r#"
            bind = "0.0.0.0:9000"
            log_dir = "/var/log/sots"

            [session]
            condition = "placebo"
            batch_min = 8
            rounds = 2

            [session.phase_schedule]
            collaboration_ms = 300000
            "#,
        )
        .unwrap();
        assert_eq!(cfg.bind, "0.0.0.0:9000");
        assert_eq!(cfg.session.condition, Condition::Placebo);
        assert_eq!(cfg.session.batch_min, 8);
        assert_eq!(cfg.session.batch_max, 12);
        assert_eq!(cfg.session.phase_schedule.collaboration_ms, 300_000);
        assert_eq!(cfg.session.phase_schedule.peer_rating_ms, 30_000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ServerConfig::from_toml("bnd = \"x\"").is_err());
        assert!(ServerConfig::from_toml("[session]\nbatch = 3").is_err());
    }

    #[test]
    fn environment_overrides_file_values() {
        let mut cfg = ServerConfig::default();
        cfg.apply_env(|k| match k {
            ENV_BIND => Some("10.0.0.1:80".into()),
            ENV_LOG_DIR => Some("/tmp/x".into()),
            _ => None,
        });
        assert_eq!(cfg.bind, "10.0.0.1:80");
        assert_eq!(cfg.log_dir, PathBuf::from("/tmp/x"));
    }
}
