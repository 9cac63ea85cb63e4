//! Wires the pieces together into a running service.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use ibn_core::dialogue::InteractionModel;
use ibn_core::topo::parse_topology;
use ibn_core::{Topology, TopologyError};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;
use tracing::info;

use crate::api::{router, AppState};
use crate::config::{Config, ConfigError};
use crate::engine::Engine;
use crate::southbound::Southbound;
use crate::store::{Store, StoreError};
use crate::voice::Voice;

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read topology {path}: {source}")]
    TopologyRead {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("invalid topology {path}: {source}")]
    Topology {
        path: std::path::PathBuf,
        source: TopologyError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot bind {what} on {addr}: {source}")]
    Bind {
        what: &'static str,
        addr: SocketAddr,
        source: std::io::Error,
    },
}

pub fn load_topology(path: &std::path::Path) -> Result<Topology, StartError> {
    let bytes = std::fs::read(path).map_err(|source| StartError::TopologyRead {
        path: path.to_path_buf(),
        source,
    })?;
    parse_topology(&bytes).map_err(|source| StartError::Topology {
        path: path.to_path_buf(),
        source,
    })
}

/// A running service. Dropping it leaves the tasks running; call
/// [`Service::shutdown`] to stop them.
pub struct Service {
    pub http_addr: SocketAddr,
    pub southbound_addr: SocketAddr,
    pub engine: Arc<Engine>,
    pub voice: Arc<Voice>,
    tasks: Vec<JoinHandle<()>>,
}

impl Service {
    pub async fn start(config: Config) -> Result<Service, StartError> {
        config.validate()?;
        let topology = Arc::new(load_topology(&config.topology)?);
        let store = Arc::new(Store::open(&config.store, &topology)?);
        for u in &config.users {
            store.ensure_user(&u.name, &u.password)?;
        }
        let southbound = Southbound::new(config.southbound.clone());
        let (southbound_addr, sb_task) =
            southbound
                .listen(config.southbound.listen)
                .await
                .map_err(|source| StartError::Bind {
                    what: "southbound",
                    addr: config.southbound.listen,
                    source,
                })?;
        let engine = Arc::new(Engine::new(topology, southbound, store));
        let reconciler = engine.spawn_reconciler();
        let voice = Arc::new(Voice::new(
            InteractionModel::new(&config.dialogue.invocation),
            engine.clone(),
            config.dialogue.turn_timeout_ms,
        ));
        let sweeper = voice.spawn_sweeper(Duration::from_millis(config.dialogue.turn_timeout_ms.max(100) / 2));

        let state = AppState {
            engine: engine.clone(),
            voice: voice.clone(),
            auth: Arc::new(config.auth.clone()),
        };
        let mut app = router(state);
        if let Some(dir) = &config.http.static_dir {
            app = app.fallback_service(ServeDir::new(dir));
        }
        let listener = TcpListener::bind(config.http.listen)
            .await
            .map_err(|source| StartError::Bind {
                what: "http",
                addr: config.http.listen,
                source,
            })?;
        let http_addr = listener.local_addr().map_err(|source| StartError::Bind {
            what: "http",
            addr: config.http.listen,
            source,
        })?;
        info!(%http_addr, "http listening");
        let http = tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!(error = %e, "http server stopped");
            }
        });
        Ok(Service {
            http_addr,
            southbound_addr,
            engine,
            voice,
            tasks: vec![sb_task, reconciler, sweeper, http],
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.http_addr)
    }

    pub fn shutdown(self) {
        for t in self.tasks {
            t.abort();
        }
    }
}
