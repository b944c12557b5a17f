//! HTTP routes.

use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::header::AUTHORIZATION;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::{Json, Router};
use memreward::memory::ResponseRecord;
use memreward::rewards::assemble_scores;
use memreward::snapshot;
use memreward::{ResponseInput, SlidingWindowSummary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::encoding::Item;
use crate::error::ApiError;
use crate::state::SharedState;

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/v1/score", post(score))
        .route("/v1/commit", post(commit))
        .route("/v1/stats", get(stats))
        .route("/v1/snapshot", post(save_snapshot))
        .route("/v1/restore", post(restore))
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .with_state(state)
}

async fn authorize(State(state): State<SharedState>, request: Request, next: Next) -> Result<Response, ApiError> {
    if let Some(token) = &state.config.auth_token {
        let presented = request
            .headers()
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return Err(ApiError::unauthorized());
        }
    }
    Ok(next.run(request).await)
}

/// Parses a JSON body, mapping every failure to a 400 with our error shape.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn parse_optional<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse(body)
    }
}

fn ensure_ready(state: &SharedState) -> Result<(), ApiError> {
    if state.is_ready() {
        Ok(())
    } else {
        Err(ApiError::not_ready("engine is restoring a snapshot"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub query: Item,
    pub responses: Vec<Item>,
    /// Overrides the engine step for warm-up gating.
    #[serde(default)]
    pub step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreItem {
    pub raw_exploit: Option<f64>,
    pub raw_explore: Option<f64>,
    pub norm_exploit: Option<f64>,
    pub norm_explore: Option<f64>,
    pub r_mem: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retrieval {
    pub success_hits: usize,
    pub failure_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<ScoreItem>,
    pub retrieval: Retrieval,
    pub step: u64,
    /// Incremented by every score call; two identical calls differ only
    /// through the window pushes this counts.
    pub window_state_version: u64,
}

async fn score(State(state): State<SharedState>, body: Bytes) -> Result<Json<ScoreResponse>, ApiError> {
    ensure_ready(&state)?;
    let req: ScoreRequest = parse(&body)?;
    let d = state.config.engine.dimension;
    let mut items: Vec<&Item> = vec![&req.query];
    items.extend(req.responses.iter());
    let mut embeddings = state.encoder.resolve(&items, d).await?;
    let responses: Vec<ResponseInput> = embeddings
        .drain(1..)
        .zip(&req.responses)
        .map(|(embedding, item)| ResponseInput {
            embedding,
            text: item.text.clone(),
        })
        .collect();
    let query = embeddings.pop().expect("query embedding resolved");

    let reward = state.config.engine.reward;
    let stored = state.read();
    let step = req.step.unwrap_or(stored.step);
    let (units, raw) = stored.memories.prepare_batch(&query, &responses, step, &reward)?;
    let mut windows = state.windows();
    let normed = windows.apply(&raw, &reward);
    let version = windows.version;
    drop(windows);
    drop(stored);

    let scores = assemble_scores(&responses, units, &raw, normed, step)
        .into_iter()
        .map(|s| ScoreItem {
            raw_exploit: s.raw_exploit,
            raw_explore: s.raw_explore,
            norm_exploit: s.norm_exploit,
            norm_explore: s.norm_explore,
            r_mem: s.r_mem,
        })
        .collect();
    Ok(Json(ScoreResponse {
        scores,
        retrieval: Retrieval {
            success_hits: raw.success_hits,
            failure_hits: raw.failure_hits,
        },
        step,
        window_state_version: version,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    pub outcome_reward: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitRequest {
    pub query: Item,
    pub responses: Vec<CommitItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitResponse {
    pub success_written: usize,
    pub failure_written: usize,
    /// Query entries evicted from either memory.
    pub evicted: usize,
    /// Responses dropped, by per-query bounds or with evicted entries.
    pub evicted_responses: usize,
    /// Responses between the two thresholds, stored nowhere.
    pub discarded: usize,
    /// Engine step this commit was recorded at.
    pub step: u64,
}

async fn commit(State(state): State<SharedState>, body: Bytes) -> Result<Json<CommitResponse>, ApiError> {
    ensure_ready(&state)?;
    let req: CommitRequest = parse(&body)?;
    if let Some(i) = req.responses.iter().position(|r| !r.outcome_reward.is_finite()) {
        return Err(ApiError::bad_request(format!("response {i} has a non-finite outcome_reward")));
    }
    let d = state.config.engine.dimension;
    let response_items: Vec<Item> = req
        .responses
        .iter()
        .map(|r| Item {
            text: r.text.clone(),
            vector: r.vector.clone(),
        })
        .collect();
    let mut items: Vec<&Item> = vec![&req.query];
    items.extend(response_items.iter());
    let mut embeddings = state.encoder.resolve(&items, d).await?;

    let Some(_writer) = state.try_writer() else {
        return Err(ApiError::conflict("commit_in_flight", "another commit or restore is in progress"));
    };
    ensure_ready(&state)?;

    let mut stored = state.write();
    let step = stored.step;
    let records: Vec<ResponseRecord> = embeddings
        .drain(1..)
        .zip(&req.responses)
        .map(|(e, r)| ResponseRecord {
            embedding: e,
            text: r.text.clone(),
            outcome_reward: r.outcome_reward,
            step,
        })
        .collect();
    let query = embeddings.pop().expect("query embedding resolved");
    let total = records.len();
    let (s, f) = stored.memories.commit(&query, req.query.text.as_deref(), records)?;
    if total > 0 {
        stored.step += 1;
    }
    let new_step = stored.step;
    drop(stored);

    if let Some(interval) = state.config.snapshot_interval {
        if total > 0 && new_step % interval == 0 {
            match state.save(&state.config.snapshot_path) {
                Ok((bytes, _)) => log::info!(
                    "periodic snapshot at step {new_step}: {bytes} bytes to {}",
                    state.config.snapshot_path.display()
                ),
                Err(e) => log::error!("periodic snapshot failed: {e}"),
            }
        }
    }

    Ok(Json(CommitResponse {
        success_written: s.written,
        failure_written: f.written,
        evicted: s.evicted_queries + f.evicted_queries,
        evicted_responses: s.evicted_responses + f.evicted_responses,
        discarded: total - s.written - f.written,
        step,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub entries: usize,
    pub responses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub exploit: SlidingWindowSummary,
    pub explore: SlidingWindowSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    pub success: MemoryStats,
    pub failure: MemoryStats,
    pub step: u64,
    pub windows: WindowStats,
    pub window_state_version: u64,
    /// Changes whenever either memory's contents change.
    pub memory_digest: String,
    pub ready: bool,
    pub config: ServiceConfig,
}

async fn stats(State(state): State<SharedState>) -> Json<StatsResponse> {
    let (success, failure, step) = {
        let stored = state.read();
        let m = &stored.memories;
        (
            MemoryStats {
                entries: m.success.len(),
                responses: m.success.total_responses(),
            },
            MemoryStats {
                entries: m.failure.len(),
                responses: m.failure.total_responses(),
            },
            stored.step,
        )
    };
    let (windows, version) = {
        let w = state.windows();
        (
            WindowStats {
                exploit: w.exploit.summary(),
                explore: w.explore.summary(),
            },
            w.version,
        )
    };
    let mut config = state.config.clone();
    if config.auth_token.is_some() {
        config.auth_token = Some("<redacted>".into());
    }
    Json(StatsResponse {
        success,
        failure,
        step,
        windows,
        window_state_version: version,
        memory_digest: state.memory_digest(),
        ready: state.is_ready(),
        config,
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRequest {
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotResponse {
    pub path: PathBuf,
    pub bytes: u64,
    pub step: u64,
}

async fn save_snapshot(State(state): State<SharedState>, body: Bytes) -> Result<Json<SnapshotResponse>, ApiError> {
    let req: PathRequest = parse_optional(&body)?;
    let path = req.path.unwrap_or_else(|| state.config.snapshot_path.clone());
    let (bytes, step) = state.save(&path)?;
    log::info!("snapshot at step {step}: {bytes} bytes to {}", path.display());
    Ok(Json(SnapshotResponse { path, bytes, step }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreResponse {
    pub path: PathBuf,
    pub step: u64,
    pub success_entries: usize,
    pub failure_entries: usize,
}

async fn restore(State(state): State<SharedState>, body: Bytes) -> Result<Json<RestoreResponse>, ApiError> {
    let req: PathRequest = parse_optional(&body)?;
    let path = req.path.unwrap_or_else(|| state.config.snapshot_path.clone());
    if !snapshot::exists(&path) {
        return Err(ApiError::not_found(format!("no snapshot at {}", path.display())));
    }
    let Some(_writer) = state.try_writer() else {
        return Err(ApiError::conflict("commit_in_flight", "a commit or restore is in progress"));
    };
    state.set_ready(false);
    let loaded = snapshot::load(&path, &state.config.engine);
    let result = match loaded {
        Ok(snap) => {
            let resp = RestoreResponse {
                path: path.clone(),
                step: snap.step,
                success_entries: snap.memories.success.len(),
                failure_entries: snap.memories.failure.len(),
            };
            state.install(snap);
            log::info!("restored snapshot from {} at step {}", path.display(), resp.step);
            Ok(Json(resp))
        }
        Err(e @ memreward::Error::DimensionMismatch { .. }) => Err(ApiError::conflict(
            "incompatible_snapshot",
            format!("snapshot does not fit this engine ({e}); state left unchanged"),
        )),
        Err(e @ memreward::Error::CorruptSnapshot(_)) => Err(ApiError::bad_request(e.to_string())),
        Err(e) => Err(ApiError::internal(e.to_string())),
    };
    state.set_ready(true);
    result
}
