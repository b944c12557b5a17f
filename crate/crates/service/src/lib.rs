//! JSON-over-HTTP sidecar for the reward engine.
//!
//! Endpoints:
//!
//! - `POST /v1/score` scores responses against the memories (windows move,
//!   memories do not)
//! - `POST /v1/commit` routes responses into the memories and advances the step
//! - `GET /v1/stats` reports sizes, step, window ranges and the config
//! - `POST /v1/snapshot` and `POST /v1/restore` persist and reload state
//!
//! Errors are `{"error": code, "message": text}` with a matching status.

pub mod api;
pub mod config;
pub mod encoding;
pub mod error;
pub mod state;

pub use api::router;
pub use config::ServiceConfig;
pub use error::{ApiError, ServiceError};
pub use state::{AppState, SharedState};

/// Binds `config.bind` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::new(config)?;
    let listener = tokio::net::TcpListener::bind(&state.config.bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    let app = router(state.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await?;
    if state.config.snapshot_interval.is_some() {
        let (bytes, step) = state.save(&state.config.snapshot_path)?;
        log::info!("final snapshot at step {step}: {bytes} bytes");
    }
    Ok(())
}
