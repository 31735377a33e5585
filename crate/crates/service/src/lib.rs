//! Local HTTP service for live sessions, backed by an append-only store.

pub mod api;
pub mod app;
pub mod config;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use attune_core::gateway::Gateway;
use futures::FutureExt;

pub use app::{AppState, ServiceError};
pub use config::{ConfigError, ServiceConfig};

/// Binds `config.bind` and serves until `shutdown` resolves.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, api::router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Builds the gateway named in the config.
pub fn gateway_from_config(config: &ServiceConfig) -> Result<Arc<Gateway>, ServiceError> {
    Ok(Arc::new(Gateway::from_config(config.gateway.clone())?))
}

const SHUTDOWN_GRACE: std::time::Duration = std::time::Duration::from_secs(2);

/// A service running on its own thread and runtime.
pub struct RunningService {
    addr: SocketAddr,
    state: Arc<AppState>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl RunningService {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_now()
    }

    fn stop_now(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("server panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        let _ = self.stop_now();
    }
}

/// Opens the store, binds, and serves on a background thread. A `gateway`
/// overrides the one named in the config (tests inject fault-prone mocks).
pub fn spawn(
    config: ServiceConfig,
    gateway: Option<Arc<Gateway>>,
) -> Result<RunningService, ServiceError> {
    let gateway = match gateway {
        Some(g) => g,
        None => gateway_from_config(&config)?,
    };
    let bind = config.bind;
    let state = Arc::new(AppState::open(config, gateway)?);
    let std_listener = std::net::TcpListener::bind(bind).map_err(|e| {
        ServiceError::Store(store::StoreError::Io {
            path: bind.to_string(),
            source: e,
        })
    })?;
    std_listener
        .set_nonblocking(true)
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let addr = std_listener
        .local_addr()
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let served = state.clone();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener)?;
            let stop = async {
                let _ = rx.await;
            }
            .shared();
            let graceful = serve(served, listener, stop.clone());
            // Open event streams may outlive the signal; cut them off after a grace period.
            tokio::select! {
                r = graceful => r,
                _ = async { stop.await; tokio::time::sleep(SHUTDOWN_GRACE).await } => Ok(()),
            }
        })
    });
    Ok(RunningService {
        addr,
        state,
        stop: Some(tx),
        thread: Some(thread),
    })
}
