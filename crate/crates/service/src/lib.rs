//! HTTP service for live conversational sessions and batch evaluation jobs.

pub mod api;
pub mod config;
pub mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use thiserror::Error;

pub use api::{router, trace_json};
pub use config::{ConfigError, ServiceConfig};
pub use state::{AppState, Dataset, EvalJob, JobState};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Load(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Loads the configured data, serves until Ctrl-C, then writes the session
/// snapshot if one is configured.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::from_config(&config).map_err(ServiceError::Load)?);
    let app = router(state.clone(), config.ui_dir.clone());
    let addr: SocketAddr = format!("{}:{}", config.bind, config.port)
        .parse()
        .map_err(|e| ServiceError::Load(format!("bind address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, datasets = state.datasets.len(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(path) = &config.snapshot {
        let body = serde_json::to_string_pretty(&state.snapshot()).expect("snapshot serializes");
        std::fs::write(path, body)?;
        tracing::info!(path = %path.display(), "sessions written");
    }
    Ok(())
}
