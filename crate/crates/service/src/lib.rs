//! HTTP service for running lexical gap campaigns, backed by an event log.

pub mod api;
pub mod log;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

pub use api::{router, AppState, Clock};
pub use store::{Recovery, Store, StoreError};

pub const ENV_PORT: &str = "LEXGAP_PORT";
pub const ENV_DATA_DIR: &str = "LEXGAP_DATA_DIR";
pub const ENV_AUTH_MODE: &str = "LEXGAP_AUTH_MODE";
pub const ENV_ADMIN_TOKEN: &str = "LEXGAP_ADMIN_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthMode {
    /// Admin calls need the admin bearer token.
    Token,
    /// Calls without a token are treated as admin. Workers still log in.
    Open,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    pub auth_mode: AuthMode,
    pub admin_token: Option<String>,
    pub token_ttl_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{var}: {reason}")]
    Bad { var: &'static str, reason: String },
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            data_dir: PathBuf::from("lexgap-data"),
            auth_mode: AuthMode::Token,
            admin_token: None,
            token_ttl_ms: 12 * 60 * 60 * 1000,
        }
    }
}

impl ServiceConfig {
    /// Reads the configuration from an environment lookup.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        if let Some(p) = get(ENV_PORT) {
            c.port = p.parse().map_err(|_| ConfigError::Bad {
                var: ENV_PORT,
                reason: format!("not a port: {p}"),
            })?;
        }
        if let Some(d) = get(ENV_DATA_DIR) {
            c.data_dir = PathBuf::from(d);
        }
        if let Some(m) = get(ENV_AUTH_MODE) {
            c.auth_mode = match m.as_str() {
                "token" => AuthMode::Token,
                "open" => AuthMode::Open,
                _ => {
                    return Err(ConfigError::Bad {
                        var: ENV_AUTH_MODE,
                        reason: format!("expected token or open, got {m}"),
                    })
                }
            };
        }
        c.admin_token = get(ENV_ADMIN_TOKEN).filter(|t| !t.is_empty());
        Ok(c)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }
}

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    })
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Opens the store and serves the API until the process is stopped.
pub async fn serve(mut config: ServiceConfig) -> Result<(), ServeError> {
    let (store, recovery) = Store::open(&config.data_dir)?;
    if let Some(seq) = recovery.corrupt_at {
        eprintln!("event log damaged at record {seq}; recovered to the last good record");
    }
    if config.auth_mode == AuthMode::Token && config.admin_token.is_none() {
        let token = hex::encode(rand::random::<[u8; 16]>());
        eprintln!("admin token: {token}");
        config.admin_token = Some(token);
    }
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let app = router(AppState::new(store, config, system_clock()));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {addr}");
    axum::serve(listener, app).await?;
    Ok(())
}
