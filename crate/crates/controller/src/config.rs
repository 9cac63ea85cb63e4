//! Service configuration, read from a TOML file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("TLS is configured ({0}) but this build has no TLS support; remove the [tls] section")]
    TlsUnsupported(&'static str),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Topology document to load at startup.
    pub topology: PathBuf,
    /// Store file; created on first boot.
    pub store: PathBuf,
    #[serde(default)]
    pub http: HttpConfig,
    #[serde(default)]
    pub southbound: SouthboundConfig,
    #[serde(default)]
    pub dialogue: DialogueConfig,
    #[serde(default)]
    pub auth: AuthConfig,
    #[serde(default)]
    pub users: Vec<UserConfig>,
    #[serde(default)]
    pub tls: Option<TlsConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpConfig {
    pub listen: SocketAddr,
    /// Directory served at `/` (the bundled web UI), if any.
    pub static_dir: Option<PathBuf>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            listen: ([127, 0, 0, 1], 8080).into(),
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SouthboundConfig {
    pub listen: SocketAddr,
    pub echo_interval_ms: u64,
    /// Consecutive unanswered echoes before a session is declared dead.
    pub echo_misses: u32,
    pub hello_timeout_ms: u64,
    pub request_timeout_ms: u64,
}

impl Default for SouthboundConfig {
    fn default() -> Self {
        SouthboundConfig {
            listen: ([127, 0, 0, 1], 6653).into(),
            echo_interval_ms: 10_000,
            echo_misses: 3,
            hello_timeout_ms: 5_000,
            request_timeout_ms: 2_000,
        }
    }
}

impl SouthboundConfig {
    pub fn echo_interval(&self) -> Duration {
        Duration::from_millis(self.echo_interval_ms)
    }

    pub fn hello_timeout(&self) -> Duration {
        Duration::from_millis(self.hello_timeout_ms)
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DialogueConfig {
    pub invocation: String,
    pub turn_timeout_ms: u64,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        DialogueConfig {
            invocation: ibn_core::dialogue::DEFAULT_INVOCATION.to_string(),
            turn_timeout_ms: ibn_core::dialogue::DEFAULT_TURN_TIMEOUT_MS,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuthConfig {
    pub token_ttl_s: u64,
    /// Shared secret expected in `X-Webhook-Secret` on the dialogue webhook.
    pub webhook_secret: String,
    /// When set, login additionally requires this value as `second_factor`.
    pub second_factor: Option<String>,
}

impl Default for AuthConfig {
    fn default() -> Self {
        AuthConfig {
            token_ttl_s: 12 * 3600,
            webhook_secret: String::new(),
            second_factor: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub name: String,
    pub password: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsConfig {
    pub cert: PathBuf,
    pub key: PathBuf,
    /// Also wrap southbound sessions.
    #[serde(default)]
    pub southbound: bool,
}

impl Config {
    /// Reads `path`. Relative file paths inside are resolved against the
    /// directory holding the config file.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Config::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.topology = base.join(&config.topology);
        config.store = base.join(&config.store);
        if let Some(dir) = &config.http.static_dir {
            config.http.static_dir = Some(base.join(dir));
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Config, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Rejects settings this build cannot honour.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(tls) = &self.tls {
            return Err(ConfigError::TlsUnsupported(if tls.southbound {
                "http and southbound"
            } else {
                "http"
            }));
        }
        Ok(())
    }

    /// A configuration for tests and the demo: ephemeral ports and fast
    /// liveness timers.
    pub fn ephemeral(topology: PathBuf, store: PathBuf) -> Config {
        Config {
            topology,
            store,
            http: HttpConfig {
                listen: ([127, 0, 0, 1], 0).into(),
                static_dir: None,
            },
            southbound: SouthboundConfig {
                listen: ([127, 0, 0, 1], 0).into(),
                ..Default::default()
            },
            dialogue: DialogueConfig::default(),
            auth: AuthConfig {
                webhook_secret: "webhook-secret".into(),
                ..Default::default()
            },
            users: vec![UserConfig {
                name: "admin".into(),
                password: "admin".into(),
            }],
            tls: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = Config::parse("topology = \"t.json\"\nstore = \"s.json\"\n").unwrap();
        assert_eq!(c.http.listen.port(), 8080);
        assert_eq!(c.southbound.listen.port(), 6653);
        assert_eq!(c.southbound.echo_interval_ms, 10_000);
        assert_eq!(c.southbound.request_timeout_ms, 2_000);
        assert_eq!(c.dialogue.turn_timeout_ms, 8_000);
        assert_eq!(c.auth.token_ttl_s, 43_200);
        c.validate().unwrap();
    }

    #[test]
    fn tls_is_rejected() {
        let c = Config::parse(
            "topology = \"t\"\nstore = \"s\"\n[tls]\ncert = \"c.pem\"\nkey = \"k.pem\"\n",
        )
        .unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::TlsUnsupported(_))));
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(Config::parse("topology = \"t\"\nstore = \"s\"\nport = 1\n").is_err());
    }
}
