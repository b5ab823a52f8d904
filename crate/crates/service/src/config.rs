//! Runtime configuration from the environment.

use std::path::PathBuf;

pub const AGENT_URL_ENV: &str = "MAOD_AGENT_URL";
pub const STORAGE_PATH_ENV: &str = "MAOD_STORAGE_PATH";
pub const VENDORS_PATH_ENV: &str = maod_core::gateway::VENDORS_PATH_ENV;
pub const PORT_ENV: &str = "MAOD_PORT";

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_AGENT_PORT: u16 = 8081;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    /// Base URL of the decomposition agent. Without it every response is
    /// served monolithic.
    pub agent_url: Option<String>,
    /// Session storage directory. Without it sessions live in memory only.
    pub storage_path: Option<PathBuf>,
    pub vendors_path: Option<PathBuf>,
    pub port: u16,
}

impl Default for Config {
    fn default() -> Self {
        Config { agent_url: None, storage_path: None, vendors_path: None, port: DEFAULT_PORT }
    }
}

impl Config {
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|key| std::env::var(key).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let get = |key: &str| lookup(key).filter(|v| !v.trim().is_empty());
        let port = match get(PORT_ENV) {
            Some(raw) => raw.trim().parse().map_err(|_| format!("{PORT_ENV}={raw:?} is not a port number"))?,
            None => DEFAULT_PORT,
        };
        Ok(Config {
            agent_url: get(AGENT_URL_ENV),
            storage_path: get(STORAGE_PATH_ENV).map(PathBuf::from),
            vendors_path: get(VENDORS_PATH_ENV).map(PathBuf::from),
            port,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_and_defaults() {
        let cfg = Config::from_lookup(|k| match k {
            AGENT_URL_ENV => Some("http://127.0.0.1:9".into()),
            PORT_ENV => Some("9000".into()),
            STORAGE_PATH_ENV => Some("  ".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.agent_url.as_deref(), Some("http://127.0.0.1:9"));
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.storage_path, None);
        assert!(Config::from_lookup(|k| (k == PORT_ENV).then(|| "http".into())).is_err());
        assert_eq!(Config::from_lookup(|_| None).unwrap(), Config::default());
    }
}
