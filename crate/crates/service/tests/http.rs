use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use memreward::{Embedding, EncoderSpec, EngineConfig, MemoryConfig, ResponseInput, ResponseRecord, RewardConfig, RewardEngine};
use memreward_service::{router, AppState, ServiceConfig, SharedState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

const D: usize = 6;

fn config(memory: MemoryConfig) -> ServiceConfig {
    let reward = RewardConfig {
        warmup_steps: 2,
        ..Default::default()
    };
    ServiceConfig {
        engine: EngineConfig::new(D, memory, reward),
        encoder: EncoderSpec::hash(D, 0),
        ..Default::default()
    }
}

fn serve_app(cfg: ServiceConfig) -> (SharedState, Router) {
    let state = AppState::new(cfg).unwrap();
    (state.clone(), router(state))
}

async fn call(app: &Router, method: &str, path: &str, body: Option<String>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(path);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = req
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn post(app: &Router, path: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", path, Some(body.to_string()), None).await
}

async fn stats(app: &Router) -> Value {
    let (status, v) = call(app, "GET", "/v1/stats", None, None).await;
    assert_eq!(status, StatusCode::OK);
    v
}

fn random_vec(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..D).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn assert_error(body: &Value, code: &str) {
    assert_eq!(body["error"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn fresh_engine_reports_empty_stats() {
    let (_, app) = serve_app(config(MemoryConfig::default()));
    let s = stats(&app).await;
    assert_eq!(s["success"]["entries"], 0);
    assert_eq!(s["failure"]["entries"], 0);
    assert_eq!(s["step"], 0);
    assert_eq!(s["ready"], true);
    assert_eq!(s["config"]["engine"]["dimension"], D);
}

#[tokio::test]
async fn empty_memories_give_zero_rewards() {
    let (_, app) = serve_app(config(MemoryConfig::default()));
    let (status, v) = post(
        &app,
        "/v1/score",
        json!({"query": {"text": "what is 2+2"}, "responses": [{"text": "4"}, {"vector": [1, 0, 0, 0, 0, 0]}]}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let scores = v["scores"].as_array().unwrap();
    assert_eq!(scores.len(), 2);
    for s in scores {
        assert_eq!(s["r_mem"], 0.0);
        assert!(s["raw_exploit"].is_null());
    }
    assert_eq!(v["retrieval"]["success_hits"], 0);
}

#[tokio::test]
async fn wrong_dimension_and_bad_bodies_are_400() {
    let (_, app) = serve_app(config(MemoryConfig::default()));
    let (status, v) = post(&app, "/v1/score", json!({"query": {"vector": [1, 0]}, "responses": []})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&v, "dimension_mismatch");

    let (status, v) = call(&app, "POST", "/v1/score", Some("{not json".into()), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&v, "bad_request");

    let (status, v) = post(&app, "/v1/score", json!({"query": {}, "responses": []})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&v, "bad_request");
}

#[tokio::test]
async fn commit_routes_one_success_and_fifteen_failures() {
    let (_, app) = serve_app(config(MemoryConfig::default()));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let responses: Vec<Value> = (0..16)
        .map(|i| json!({"vector": random_vec(&mut rng), "outcome_reward": if i == 3 { 1.0 } else { 0.0 }}))
        .collect();
    let (status, v) = post(&app, "/v1/commit", json!({"query": {"text": "q"}, "responses": responses})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["success_written"], 1);
    assert_eq!(v["failure_written"], 15);
    assert_eq!(v["evicted"], 0);
    assert_eq!(v["step"], 0);
    let s = stats(&app).await;
    assert_eq!(s["step"], 1);
    assert_eq!(s["success"]["responses"], 1);
    assert_eq!(s["failure"]["responses"], 15);
}

#[tokio::test]
async fn full_memory_evicts_oldest_query() {
    let memory = MemoryConfig {
        capacity: 1,
        ..Default::default()
    };
    let (_, app) = serve_app(config(memory));
    let first = json!({"query": {"text": "a"}, "responses": [{"text": "x", "outcome_reward": 0.0}]});
    let second = json!({"query": {"text": "b"}, "responses": [{"text": "y", "outcome_reward": 0.0}]});
    assert_eq!(post(&app, "/v1/commit", first).await.1["evicted"], 0);
    let (status, v) = post(&app, "/v1/commit", second).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["evicted"], 1);
    assert_eq!(stats(&app).await["failure"]["entries"], 1);
}

#[tokio::test]
async fn non_finite_rewards_are_rejected() {
    let (_, app) = serve_app(config(MemoryConfig::default()));
    for body in [
        r#"{"query": {"text": "q"}, "responses": [{"text": "a", "outcome_reward": NaN}]}"#,
        r#"{"query": {"text": "q"}, "responses": [{"text": "a", "outcome_reward": "NaN"}]}"#,
        r#"{"query": {"text": "q"}, "responses": [{"text": "a", "outcome_reward": 1e999}]}"#,
    ] {
        let (status, v) = call(&app, "POST", "/v1/commit", Some(body.into()), None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_error(&v, "bad_request");
    }
    assert_eq!(stats(&app).await["step"], 0);
}

#[tokio::test]
async fn bearer_token_is_enforced() {
    let cfg = ServiceConfig {
        auth_token: Some("s3cret".into()),
        ..config(MemoryConfig::default())
    };
    let (_, app) = serve_app(cfg);
    let (status, v) = call(&app, "GET", "/v1/stats", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_error(&v, "unauthorized");
    assert_eq!(call(&app, "GET", "/v1/stats", None, Some("wrong")).await.0, StatusCode::UNAUTHORIZED);
    let (status, v) = call(&app, "GET", "/v1/stats", None, Some("s3cret")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["config"]["auth_token"], "<redacted>");
}

async fn seed_memories(app: &Router, rng: &mut ChaCha8Rng, commits: usize) {
    for c in 0..commits {
        let responses: Vec<Value> = (0..8)
            .map(|i| json!({"vector": random_vec(rng), "outcome_reward": if (i + c) % 3 == 0 { 1.0 } else { 0.0 }}))
            .collect();
        let (status, _) = post(app, "/v1/commit", json!({"query": {"vector": random_vec(rng)}, "responses": responses})).await;
        assert_eq!(status, StatusCode::OK);
    }
}

#[tokio::test]
async fn score_never_changes_memories() {
    let (_, app) = serve_app(config(MemoryConfig::default()));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    seed_memories(&app, &mut rng, 5).await;
    let before = stats(&app).await;
    let body = json!({"query": {"vector": random_vec(&mut rng)}, "responses": [{"vector": random_vec(&mut rng)}]});
    let (_, first) = post(&app, "/v1/score", body.clone()).await;
    let (_, second) = post(&app, "/v1/score", body).await;
    let after = stats(&app).await;
    assert_eq!(before["memory_digest"], after["memory_digest"]);
    assert_eq!(before["step"], after["step"]);
    // same raw components; only the window state moved
    assert_eq!(first["scores"][0]["raw_exploit"], second["scores"][0]["raw_exploit"]);
    assert_eq!(first["scores"][0]["raw_explore"], second["scores"][0]["raw_explore"]);
    assert_eq!(
        second["window_state_version"].as_u64().unwrap(),
        first["window_state_version"].as_u64().unwrap() + 1
    );
}

#[tokio::test]
async fn step_override_controls_warmup() {
    let (_, app) = serve_app(config(MemoryConfig::default()));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    seed_memories(&app, &mut rng, 3).await;
    let q = random_vec(&mut rng);
    let r = random_vec(&mut rng);
    let (_, early) = post(&app, "/v1/score", json!({"query": {"vector": q}, "responses": [{"vector": r}], "step": 0})).await;
    assert!(early["scores"][0]["raw_explore"].is_null());
    assert_eq!(early["step"], 0);
    let (_, late) = post(&app, "/v1/score", json!({"query": {"vector": q}, "responses": [{"vector": r}]})).await;
    assert!(late["scores"][0]["raw_explore"].is_number());
    assert_eq!(late["step"], 3);
}

fn close(a: &Value, b: Option<f64>) -> bool {
    match (a.as_f64(), b) {
        (None, None) => a.is_null(),
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9,
        _ => false,
    }
}

async fn assert_parity(app: &Router, engine: &mut RewardEngine, rng: &mut ChaCha8Rng, probes: usize) {
    let q = random_vec(rng);
    let rs: Vec<Vec<f64>> = (0..probes).map(|_| random_vec(rng)).collect();
    let body = json!({"query": {"vector": q}, "responses": rs.iter().map(|r| json!({"vector": r})).collect::<Vec<_>>()});
    let (status, v) = post(app, "/v1/score", body).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let inputs: Vec<ResponseInput> = rs
        .iter()
        .map(|r| ResponseInput::from(Embedding::normalized(r.clone()).unwrap()))
        .collect();
    let local = engine
        .score_batch(&Embedding::normalized(q).unwrap(), &inputs)
        .unwrap();
    assert_eq!(v["window_state_version"], local.window_version);
    for (remote, local) in v["scores"].as_array().unwrap().iter().zip(&local.scores) {
        assert!(close(&remote["raw_exploit"], local.raw_exploit));
        assert!(close(&remote["raw_explore"], local.raw_explore));
        assert!(close(&remote["norm_exploit"], local.norm_exploit));
        assert!(close(&remote["norm_explore"], local.norm_explore));
        assert!(close(&remote["r_mem"], Some(local.r_mem)));
    }
}

#[tokio::test]
async fn responses_match_in_process_engine() {
    let (state, app) = serve_app(config(MemoryConfig::default()));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    seed_memories(&app, &mut rng, 6).await;
    let mut engine = state.to_engine();
    for _ in 0..50 {
        assert_parity(&app, &mut engine, &mut rng, 3).await;
    }
}

#[tokio::test]
async fn snapshot_restore_gives_score_parity() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snap");
    let cfg = config(MemoryConfig::default());
    let (state_a, app_a) = serve_app(cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    seed_memories(&app_a, &mut rng, 10).await;
    post(&app_a, "/v1/score", json!({"query": {"text": "warm"}, "responses": [{"text": "up"}]})).await;

    let (status, v) = post(&app_a, "/v1/snapshot", json!({"path": path})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(v["bytes"].as_u64().unwrap() > 0);
    assert_eq!(v["step"], 10);

    let (_, app_b) = serve_app(cfg);
    let (status, v) = post(&app_b, "/v1/restore", json!({"path": path})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["step"], 10);
    assert_eq!(stats(&app_a).await["memory_digest"], stats(&app_b).await["memory_digest"]);

    let mut engine = state_a.to_engine();
    assert_parity(&app_b, &mut engine, &mut rng, 100).await;
}

#[tokio::test]
async fn restore_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app_a) = serve_app(config(MemoryConfig::default()));
    let (status, v) = post(&app_a, "/v1/restore", json!({"path": dir.path().join("missing")})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");

    // snapshot from an 8-dimensional engine
    let path = dir.path().join("d8");
    let other = ServiceConfig {
        engine: EngineConfig::new(8, MemoryConfig::default(), RewardConfig::default()),
        encoder: EncoderSpec::hash(8, 0),
        ..Default::default()
    };
    let (_, app_b) = serve_app(other);
    assert_eq!(post(&app_b, "/v1/snapshot", json!({"path": path})).await.0, StatusCode::OK);
    let (status, v) = post(&app_a, "/v1/restore", json!({"path": path})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&v, "incompatible_snapshot");
    assert!(v["message"].as_str().unwrap().contains("dimension"));
    assert_eq!(stats(&app_a).await["ready"], true);
}

#[tokio::test]
async fn writer_slot_conflicts_are_409() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snap");
    let (state, app) = serve_app(config(MemoryConfig::default()));
    post(&app, "/v1/snapshot", json!({"path": path})).await;

    let guard = state.try_writer().unwrap();
    let (status, v) = post(&app, "/v1/commit", json!({"query": {"text": "q"}, "responses": [{"text": "a", "outcome_reward": 1.0}]})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&v, "commit_in_flight");
    let (status, _) = post(&app, "/v1/restore", json!({"path": path})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    drop(guard);
    assert_eq!(post(&app, "/v1/restore", json!({"path": path})).await.0, StatusCode::OK);
}

#[tokio::test]
async fn not_ready_engine_is_503() {
    let (state, app) = serve_app(config(MemoryConfig::default()));
    state.set_ready(false);
    let (status, v) = post(&app, "/v1/score", json!({"query": {"text": "q"}, "responses": []})).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_error(&v, "not_ready");
}

#[tokio::test]
async fn vector_only_engine_rejects_text() {
    let cfg = ServiceConfig {
        encoder: EncoderSpec::precomputed(D),
        ..config(MemoryConfig::default())
    };
    let (_, app) = serve_app(cfg);
    let (status, _) = post(&app, "/v1/score", json!({"query": {"text": "q"}, "responses": []})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&app, "/v1/score", json!({"query": {"vector": [1, 0, 0, 0, 0, 0]}, "responses": []})).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn periodic_snapshots_follow_the_interval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        snapshot_path: dir.path().join("auto"),
        snapshot_interval: Some(2),
        ..config(MemoryConfig::default())
    };
    let (_, app) = serve_app(cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    seed_memories(&app, &mut rng, 1).await;
    assert!(!memreward::snapshot::exists(&cfg.snapshot_path));
    seed_memories(&app, &mut rng, 1).await;
    assert!(memreward::snapshot::exists(&cfg.snapshot_path));

    // a restarted service picks the snapshot up
    let restarted = ServiceConfig {
        restore_on_start: true,
        ..cfg
    };
    let (_, app2) = serve_app(restarted);
    assert_eq!(stats(&app2).await["step"], 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_commits_are_linearizable() {
    let memory = MemoryConfig {
        capacity: 30,
        responses_per_query: 5,
        ..Default::default()
    };
    let cfg = config(memory);
    let (state, app) = serve_app(cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // few distinct queries so commits collide on entries and bounds
    let queries: Vec<Vec<f64>> = (0..40).map(|_| random_vec(&mut rng)).collect();
    let bodies: Vec<Value> = (0..100)
        .map(|i| {
            let responses: Vec<Value> = (0..4)
                .map(|j| json!({"vector": random_vec(&mut rng), "outcome_reward": ((i + j) % 2) as f64}))
                .collect();
            json!({"query": {"vector": queries[i % queries.len()]}, "responses": responses})
        })
        .collect();

    let app = Arc::new(app);
    let mut set = tokio::task::JoinSet::new();
    for (i, body) in bodies.iter().cloned().enumerate() {
        let app = app.clone();
        set.spawn(async move { (i, post(&app, "/v1/commit", body).await) });
    }
    let mut accepted: Vec<(u64, usize)> = Vec::new();
    while let Some(res) = set.join_next().await {
        let (i, (status, v)) = res.unwrap();
        match status {
            StatusCode::OK => accepted.push((v["step"].as_u64().unwrap(), i)),
            StatusCode::CONFLICT => assert_error(&v, "commit_in_flight"),
            other => panic!("unexpected status {other}: {v}"),
        }
    }
    accepted.sort();
    let steps: Vec<u64> = accepted.iter().map(|&(s, _)| s).collect();
    assert_eq!(steps, (0..accepted.len() as u64).collect::<Vec<_>>(), "steps are a gapless sequence");

    // replay the accepted commits in their step order on a local engine
    let mut engine = RewardEngine::new(cfg.engine).unwrap();
    for &(_, i) in &accepted {
        let body = &bodies[i];
        let q: Vec<f64> = serde_json::from_value(body["query"]["vector"].clone()).unwrap();
        let records = body["responses"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                let v: Vec<f64> = serde_json::from_value(r["vector"].clone()).unwrap();
                ResponseRecord::new(Embedding::normalized(v).unwrap(), r["outcome_reward"].as_f64().unwrap(), 0)
            })
            .collect();
        engine
            .commit_records(&Embedding::normalized(q).unwrap(), None, records)
            .unwrap();
    }
    let served = state.to_engine();
    assert_eq!(served.memories(), engine.memories());
    assert_eq!(served.step(), engine.step());
}
