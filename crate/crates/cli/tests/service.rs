use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use emoji_predict::classifier::{initialize, model_version, ModelArchitecture};
use emoji_predict::corpus::EmojiId;
use emoji_predict::featurizer::FeaturizerConfig;
use emoji_predict::personalization::RerankConfig;
use emoji_predict::Model;
use emoji_predict_cli::service::{router, AppState, Health, PredictResponse};

const CLASSES: &[&str] = &["😂", "❤️", "🍕", "🔥", "🎉", "😭", "👍", "🙏"];

fn model() -> Model {
    let classes = CLASSES.iter().map(|s| EmojiId::new(s).unwrap()).collect();
    let arch = ModelArchitecture { embedding_dim: 8, hidden_layers: 1, hidden_dim: 8, n_classes: CLASSES.len() };
    initialize(&arch, &FeaturizerConfig { n_buckets: 1 << 10, ..Default::default() }, classes, 3).unwrap()
}

fn app(data_dir: &Path) -> (Router, String) {
    let m = model();
    let version = model_version(&m.to_bytes());
    let state = AppState::new(m, version.clone(), data_dir, 24, RerankConfig::default()).unwrap();
    (router(Arc::new(state)), version)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn predict(app: &Router, body: Value) -> PredictResponse {
    let (status, v) = call(app, "POST", "/v1/predict", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    serde_json::from_value(v).unwrap()
}

fn score(res: &PredictResponse, emoji: &str) -> f64 {
    res.ranked.iter().find(|r| r.emoji == emoji).unwrap().final_score
}

#[tokio::test]
async fn healthz_reports_container_hash() {
    let dir = tempfile::tempdir().unwrap();
    let (app, version) = app(dir.path());
    let (status, v) = call(&app, "GET", "/v1/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    let h: Health = serde_json::from_value(v).unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.model_version, version);
}

#[tokio::test]
async fn zero_alpha_is_the_bare_model_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    call(&app, "POST", "/v1/events", Some(json!({"user_id": "u1", "emoji": "🍕", "source": "panel"}))).await;
    let res = predict(&app, json!({"user_id": "u1", "text": "see you soon", "k": 5, "alpha": 0.0})).await;
    let bare = model().predict("see you soon", 5);
    let got: Vec<&str> = res.ranked.iter().map(|r| r.emoji.as_str()).collect();
    let want: Vec<&str> = bare.ranked.iter().map(|s| s.emoji.as_str()).collect();
    assert_eq!(got, want);
    assert_eq!(res.alpha, 0.0);
    for (r, s) in res.ranked.iter().zip(&bare.ranked) {
        assert_eq!(r.final_score, f64::from(s.probability));
    }
}

async fn post_event(app: &Router, user: &str, emoji: &str) {
    let (status, _) = call(app, "POST", "/v1/events", Some(json!({"user_id": user, "emoji": emoji, "source": "panel"}))).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
}

#[tokio::test]
async fn event_raises_final_score() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    // Enough distinct favorites that the favorites exponent has saturated.
    for e in ["🔥", "🎉", "😭", "👍"] {
        post_event(&app, "alice", e).await;
    }
    let req = json!({"user_id": "alice", "text": "that was so funny", "k": 8, "alpha": 0.5});
    let before = predict(&app, req.clone()).await;
    post_event(&app, "alice", "😂").await;
    let after = predict(&app, req).await;
    assert!(score(&after, "😂") > score(&before, "😂"));
    assert!(after.ranked.windows(2).all(|w| w[0].final_score >= w[1].final_score));
}

#[tokio::test]
async fn first_event_never_lowers_rank() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let req = json!({"user_id": "amy", "text": "that was so funny", "k": 8, "alpha": 0.5});
    let pos = |r: &PredictResponse| r.ranked.iter().position(|x| x.emoji == "😭").unwrap();
    let before = predict(&app, req.clone()).await;
    post_event(&app, "amy", "😭").await;
    let after = predict(&app, req).await;
    assert!(pos(&after) <= pos(&before));
}

#[tokio::test]
async fn favorites_snapshot_counts_events() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    for (e, src) in [("🔥", "panel"), ("🔥", "external"), ("🦖", "external")] {
        call(&app, "POST", "/v1/events", Some(json!({"user_id": "bob", "emoji": e, "source": src}))).await;
    }
    let (status, v) = call(&app, "GET", "/v1/users/bob/favorites", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["counts"], json!({"🔥": 2, "🦖": 1}));
    assert_eq!(v["total"], 3);

    let (_, v) = call(&app, "GET", "/v1/users/nobody/favorites", None).await;
    assert_eq!(v["total"], 0);
}

#[tokio::test]
async fn predict_does_not_record_usage() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    for _ in 0..3 {
        predict(&app, json!({"user_id": "carol", "text": "pizza party"})).await;
    }
    let (_, v) = call(&app, "GET", "/v1/users/carol/favorites", None).await;
    assert_eq!(v["total"], 0);
    assert!(!dir.path().join("users/carol/events.log").exists());
}

#[tokio::test]
async fn default_k_and_out_of_model_favorites() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let res = predict(&app, json!({"user_id": "d", "text": "hi"})).await;
    assert_eq!(res.ranked.len(), CLASSES.len());
    call(&app, "POST", "/v1/events", Some(json!({"user_id": "d", "emoji": "🦖", "source": "external"}))).await;
    let res = predict(&app, json!({"user_id": "d", "text": "hi"})).await;
    assert_eq!(res.ranked.len(), CLASSES.len() + 1);
    let dino = res.ranked.iter().find(|r| r.emoji == "🦖").unwrap();
    assert_eq!(dino.model_prob, 1e-4);
}

#[tokio::test]
async fn rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let cases = [
        ("/v1/predict", json!({"text": "hi"}), StatusCode::BAD_REQUEST, "user_id"),
        ("/v1/predict", json!({"user_id": "u", "text": 5}), StatusCode::BAD_REQUEST, "invalid type"),
        ("/v1/predict", json!({"user_id": "u", "text": "hi", "alpha": 1.0}), StatusCode::BAD_REQUEST, "alpha"),
        ("/v1/predict", json!({"user_id": "u", "text": "hi", "alpha": -0.1}), StatusCode::BAD_REQUEST, "alpha"),
        ("/v1/predict", json!({"user_id": "u", "text": "hi", "k": 0}), StatusCode::BAD_REQUEST, "k"),
        ("/v1/predict", json!({"user_id": "../x", "text": "hi"}), StatusCode::BAD_REQUEST, "user_id"),
        ("/v1/predict", json!({"user_id": "u", "text": "x".repeat(2001)}), StatusCode::PAYLOAD_TOO_LARGE, "text"),
        ("/v1/events", json!({"user_id": "u", "emoji": "😂", "source": "keyboard"}), StatusCode::BAD_REQUEST, "source"),
        ("/v1/events", json!({"user_id": "u", "emoji": " ", "source": "panel"}), StatusCode::BAD_REQUEST, "emoji"),
    ];
    for (uri, body, status, needle) in cases {
        let (got, v) = call(&app, "POST", uri, Some(body.clone())).await;
        assert_eq!(got, status, "{body}");
        let msg = v["error"].as_str().unwrap();
        assert!(msg.contains(needle), "{body}: {msg}");
    }
    let (ok, _) = call(&app, "POST", "/v1/predict", Some(json!({"user_id": "u", "text": "x".repeat(2000)}))).await;
    assert_eq!(ok, StatusCode::OK);
    let (status, _) = call(&app, "GET", "/v1/users/a.b/favorites", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn acknowledged_events_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    {
        let (app, _) = app(dir.path());
        for e in ["😂", "😂", "🙏"] {
            let (status, _) = call(&app, "POST", "/v1/events", Some(json!({"user_id": "eve", "emoji": e, "source": "panel"}))).await;
            assert_eq!(status, StatusCode::NO_CONTENT);
        }
    }
    let (app, _) = app(dir.path());
    let (_, v) = call(&app, "GET", "/v1/users/eve/favorites", None).await;
    assert_eq!(v["counts"], json!({"😂": 2, "🙏": 1}));
}

#[tokio::test]
async fn concurrent_events_for_one_user_are_all_kept() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let tasks: Vec<_> = (0..32)
        .map(|i| {
            let app = app.clone();
            let emoji = CLASSES[i % CLASSES.len()];
            tokio::spawn(async move {
                call(&app, "POST", "/v1/events", Some(json!({"user_id": "fay", "emoji": emoji, "source": "panel"}))).await.0
            })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::NO_CONTENT);
    }
    let (_, v) = call(&app, "GET", "/v1/users/fay/favorites", None).await;
    assert_eq!(v["total"], 32);
    let (app, _) = self::app(dir.path());
    let (_, v) = call(&app, "GET", "/v1/users/fay/favorites", None).await;
    assert_eq!(v["total"], 32);
}
