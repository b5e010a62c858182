//! Read-only HTTP query service over a temporal index.
//!
//! Endpoints (all `GET`, JSON bodies):
//!
//! | path             | parameters                                                        |
//! |------------------|-------------------------------------------------------------------|
//! | `/health`        |                                                                   |
//! | `/timeline`      | `q`, `by`=term\|entity, `field`, `granularity`, `from`, `to`, `mode` |
//! | `/top-terms`     | `q`, `by`=entity\|term\|prefix\|all, `field`, `from`, `to`, `k`    |
//! | `/cooccur`       | `a`, `b`, `by`, `field`, `granularity`, `from`, `to`, `mode`, `strict` |
//! | `/entity-search` | `prefix`, `field`, `limit`                                        |
//!
//! `from`/`to` default to the span covered by the index. Static assets are
//! served under `/ui/` when `ui_dir` is configured.

mod api;
mod config;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::http::{HeaderValue, Method};
use axum::routing::get;
use axum::Router;
use revhist_core::index::{IndexError, IndexReader};
use tokio::sync::{oneshot, watch};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use api::{ApiError, EntitySearch, Health};
pub use config::{ServiceConfig, INDEX_ENV};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("{0}: not an index directory (meta.json missing)")]
    NotAnIndex(PathBuf),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("server: {0}")]
    Server(std::io::Error),
}

enum Slot {
    Opening,
    Ready(IndexReader),
    Failed(String),
}

/// State shared by all handlers. Handlers take a reader snapshot per
/// request, so a concurrent reload never mixes two index states in one
/// response.
pub struct Shared {
    config: ServiceConfig,
    slot: RwLock<Slot>,
}

impl Shared {
    pub fn opening(config: ServiceConfig) -> Arc<Self> {
        Arc::new(Shared { config, slot: RwLock::new(Slot::Opening) })
    }

    pub fn ready(config: ServiceConfig, reader: IndexReader) -> Arc<Self> {
        Arc::new(Shared { config, slot: RwLock::new(Slot::Ready(reader)) })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// `Ok(None)` while opening, `Err` if opening failed.
    fn reader(&self) -> Result<Option<IndexReader>, String> {
        match &*self.slot.read().unwrap_or_else(|e| e.into_inner()) {
            Slot::Opening => Ok(None),
            Slot::Ready(r) => Ok(Some(r.clone())),
            Slot::Failed(m) => Err(m.clone()),
        }
    }

    fn set(&self, slot: Slot) {
        *self.slot.write().unwrap_or_else(|e| e.into_inner()) = slot;
    }
}

/// The full route table, with CORS and optional static assets.
pub fn router(state: Arc<Shared>) -> Router {
    let mut app = Router::new()
        .route("/health", get(api::health))
        .route("/timeline", get(api::timeline))
        .route("/top-terms", get(api::top_terms))
        .route("/cooccur", get(api::cooccur))
        .route("/entity-search", get(api::entity_search));
    if let Some(dir) = &state.config.ui_dir {
        let index = dir.join("index.html");
        let files = tower_http::services::ServeDir::new(dir)
            .append_index_html_on_directories(true)
            .fallback(tower_http::services::ServeFile::new(index));
        app = app.nest_service("/ui", files);
    }
    let cors = cors_layer(&state.config.cors_allowed_origins);
    app.fallback(api::not_found).layer(cors).with_state(state)
}

fn cors_layer(origins: &[String]) -> CorsLayer {
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    CorsLayer::new().allow_methods([Method::GET]).allow_origin(allow)
}

/// A running server.
pub struct ServiceHandle {
    local_addr: SocketAddr,
    state: Arc<Shared>,
    opened: watch::Receiver<bool>,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn state(&self) -> &Arc<Shared> {
        &self.state
    }

    /// Waits until the initial open attempt finished.
    pub async fn ready(&mut self) -> Result<(), ServiceError> {
        let _ = self.opened.wait_for(|done| *done).await;
        match self.state.reader() {
            Ok(_) => Ok(()),
            Err(m) => Err(ServiceError::Config(m)),
        }
    }

    /// Reopens the index directory and swaps the snapshot in atomically.
    /// On failure the previous snapshot stays in service.
    pub async fn reload(&self) -> Result<(), ServiceError> {
        let dir = self.state.config.index_dir.clone();
        let reader = tokio::task::spawn_blocking(move || IndexReader::open(&dir))
            .await
            .map_err(|e| ServiceError::Server(std::io::Error::other(e)))??;
        self.state.set(Slot::Ready(reader));
        Ok(())
    }

    /// Stops accepting connections and drains in-flight requests.
    pub async fn shutdown(mut self) -> Result<(), ServiceError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        join_result((&mut self.task).await)
    }

    /// Runs until the server task ends or ctrl-c arrives.
    pub async fn run_until_signal(self) -> Result<(), ServiceError> {
        let ServiceHandle { stop, mut task, .. } = self;
        tokio::select! {
            r = &mut task => return join_result(r),
            _ = tokio::signal::ctrl_c() => tracing::info!("interrupt received, shutting down"),
        }
        drop(stop);
        join_result(task.await)
    }
}

fn join_result(r: Result<std::io::Result<()>, tokio::task::JoinError>) -> Result<(), ServiceError> {
    match r {
        Ok(r) => r.map_err(ServiceError::Server),
        Err(e) => Err(ServiceError::Server(std::io::Error::other(e))),
    }
}

/// Binds the listener, then opens the index in the background. Requests
/// that arrive before the open completes get 503 `index-opening`.
pub async fn serve(config: ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    config.validate()?;
    if !config.index_dir.join("meta.json").is_file() {
        return Err(ServiceError::NotAnIndex(config.index_dir.clone()));
    }
    let listener = tokio::net::TcpListener::bind(&config.bind_address)
        .await
        .map_err(|source| ServiceError::Bind { addr: config.bind_address.clone(), source })?;
    let local_addr = listener.local_addr().map_err(ServiceError::Server)?;
    let state = Shared::opening(config);

    let (opened_tx, opened) = watch::channel(false);
    let opener = state.clone();
    tokio::task::spawn_blocking(move || {
        let dir = opener.config.index_dir.clone();
        match IndexReader::open(&dir) {
            Ok(r) => {
                tracing::info!(segments = r.stats().segments, "index open");
                opener.set(Slot::Ready(r));
            }
            Err(e) => {
                tracing::error!("cannot open index: {e}");
                opener.set(Slot::Failed(e.to_string()));
            }
        }
        let _ = opened_tx.send(true);
    });

    let (stop, stopped) = oneshot::channel::<()>();
    let app = router(state.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = stopped.await;
            })
            .await
    });
    tracing::info!(%local_addr, "listening");
    Ok(ServiceHandle { local_addr, state, opened, stop: Some(stop), task })
}
