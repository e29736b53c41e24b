//! HTTP/JSON service over the response store.

use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use rc_core::Store;

pub mod auth;
pub mod config;
pub mod error;
mod routes;

pub use auth::{Caller, Session, SessionStore};
pub use config::{ConfigError, ServiceConfig, Sharing};
pub use error::ApiError;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub sessions: SessionStore,
    pub config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(store: Arc<Store>, config: ServiceConfig) -> Self {
        Self {
            store,
            sessions: SessionStore::new(config.session_ttl),
            config: Arc::new(config),
        }
    }
}

pub fn router(state: AppState) -> Router {
    routes::routes().with_state(state)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot open data directory: {0}")]
    Store(#[from] rc_core::StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens the store under `config.data_dir` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let store = Arc::new(Store::open(&config.data_dir)?);
    let addr = config.bind_addr;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    tracing::info!("listening on {}", listener.local_addr()?);
    serve_on(listener, store, config, shutdown_signal()).await
}

/// Serves on an already bound listener until `shutdown` resolves, then
/// flushes buffered play segments.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    store: Arc<Store>,
    config: ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let flusher = {
        let store = Arc::clone(&store);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_millis(250));
            loop {
                tick.tick().await;
                let store = Arc::clone(&store);
                match tokio::task::spawn_blocking(move || store.flush_if_due()).await {
                    Ok(Err(e)) => tracing::error!("segment flush failed: {e}"),
                    Err(e) => tracing::error!("segment flush task failed: {e}"),
                    Ok(Ok(())) => {}
                }
            }
        })
    };
    let app = router(AppState::new(Arc::clone(&store), config));
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await;
    flusher.abort();
    store.flush()?;
    result.map_err(ServeError::Io)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        if tokio::signal::ctrl_c().await.is_err() {
            std::future::pending::<()>().await;
        }
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    tracing::info!("shutting down");
}
