//! HTTP service in front of the simulated photometer.
//!
//! `GET /api`, `/gm` and `/rgb` take a measurement; `/stats` summarizes the
//! experiment log. All measurements share one FIFO critical section.

pub mod config;
mod html;
pub mod log;
mod routes;
mod state;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use helios_core::calibration::{self, CalibrationError};
use helios_core::{default_model, ResponseModel};

pub use config::{ConfigError, ServiceConfig};
pub use log::{Endpoint, ExperimentRecord, LogError, LogReader, Stats};
pub use routes::{router, ApiBody};
pub use state::{AppState, MeasureError};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("static directory {0} does not exist")]
    StaticDir(PathBuf),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

/// The calibration named by the config, or the built-in model.
pub fn load_model(config: &ServiceConfig) -> Result<ResponseModel, ServiceError> {
    Ok(match &config.calibration {
        Some(path) => calibration::load(path)?,
        None => default_model(),
    })
}

pub struct Server {
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    app: axum::Router,
}

impl Server {
    /// Validates the config, opens the log and binds the listener.
    pub async fn bind(config: &ServiceConfig, model: ResponseModel) -> Result<Server, ServiceError> {
        config.validate()?;
        if let Some(dir) = &config.static_dir {
            if !dir.is_dir() {
                return Err(ServiceError::StaticDir(dir.clone()));
            }
        }
        let state = Arc::new(AppState::new(config, model)?);
        let listener = tokio::net::TcpListener::bind(&config.listen)
            .await
            .map_err(|source| ServiceError::Bind {
                addr: config.listen.clone(),
                source,
            })?;
        let app = router(Arc::clone(&state), config.static_dir.as_deref());
        Ok(Server { listener, state, app })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn state(&self) -> Arc<AppState> {
        Arc::clone(&self.state)
    }

    pub async fn run<F>(self, shutdown: F) -> std::io::Result<()>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        axum::serve(
            self.listener,
            self.app.into_make_service_with_connect_info::<SocketAddr>(),
        )
        .with_graceful_shutdown(shutdown)
        .await
    }
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
