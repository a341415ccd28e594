use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use guilget::server::{router, AppState};
use guilget_core::model::Model;
use guilget_core::nn::ModelConfig;

fn app() -> axum::Router {
    let cfg = ModelConfig {
        d_model: 16,
        ffn_dim: 32,
        embed_dim: 4,
        mixtures: 2,
        n_encoder_layers: 1,
        n_decoder_layers: 1,
        ..ModelConfig::default()
    };
    router(
        AppState {
            model: Arc::new(Model::new(cfg, 5).unwrap()),
        },
        None,
    )
}

fn graph() -> Value {
    json!({
        "components": [
            {"id": 1, "class": "TOOLBAR"},
            {"id": 2, "class": "BUTTON"},
            {"id": 3, "class": "CONTAINER"},
            {"id": 4, "class": "IMAGE"},
            {"id": 5, "class": "TEXT"}
        ],
        "relations": [
            {"s": 2, "p": "inside", "o": 1},
            {"s": 1, "p": "above", "o": 3},
            {"s": 4, "p": "inside", "o": 3},
            {"s": 4, "p": "above", "o": 5}
        ],
        "parents": {"1": 0, "2": 1, "3": 0, "4": 3, "5": 3}
    })
}

async fn call(
    app: axum::Router,
    method: &str,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

async fn post(uri: &str, body: Value) -> (StatusCode, Value) {
    call(app(), "POST", uri, Some(body.to_string())).await
}

fn assert_error(v: &Value, code: &str) {
    assert_eq!(v["error"]["code"], code, "{v}");
    assert!(v["error"]["message"]
        .as_str()
        .is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn health_and_vocab() {
    let (s, v) = call(app(), "GET", "/api/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert!(v["version"].is_string());

    let (s, v) = call(app(), "GET", "/api/vocab", None).await;
    assert_eq!(s, StatusCode::OK);
    let classes = v["classes"].as_array().unwrap();
    assert_eq!(classes.len(), 24);
    assert_eq!(
        classes[21],
        json!({"id": 21, "name": "CONTAINER", "container": true})
    );
    assert_eq!(
        v["predicates"],
        json!(["left", "right", "above", "below", "inside"])
    );
}

#[tokio::test]
async fn generate_returns_layouts_with_metrics() {
    let body = json!({"graph": graph(), "samples": 3, "temperature": 0.7, "seed": 11});
    let (s, v) = post("/api/generate", body.clone()).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["seed"], 11);
    let layouts = v["layouts"].as_array().unwrap();
    assert_eq!(layouts.len(), 3);
    for l in layouts {
        let boxes = l["boxes"].as_array().unwrap();
        assert_eq!(boxes.len(), 5);
        for b in boxes {
            for k in ["x", "y", "w", "h"] {
                let x = b[k].as_f64().unwrap();
                assert!((0.0..=1.0).contains(&x));
            }
        }
        for k in ["gui_agc", "cpi", "ccs", "alignment"] {
            assert!(l["metrics"][k].is_number());
        }
    }
    // Same seed, same answer.
    let (_, again) = post("/api/generate", body).await;
    assert_eq!(v, again);
}

#[tokio::test]
async fn generate_assigns_and_reports_a_seed() {
    let (s, v) = post(
        "/api/generate",
        json!({"graph": graph(), "samples": 1, "temperature": 1.0}),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let seed = v["seed"].as_u64().unwrap();
    let (_, again) = post(
        "/api/generate",
        json!({"graph": graph(), "samples": 1, "temperature": 1.0, "seed": seed}),
    )
    .await;
    assert_eq!(v["layouts"], again["layouts"]);
}

#[tokio::test]
async fn generate_rejects_bad_requests() {
    let (s, v) = post("/api/generate", json!({"graph": graph(), "samples": 17})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "invalid_samples");

    let (s, v) = post("/api/generate", json!({"graph": graph(), "samples": 0})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "invalid_samples");

    let (s, v) = post(
        "/api/generate",
        json!({"graph": graph(), "temperature": -1.0}),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "invalid_temperature");

    let bad = json!({"components": [{"id": 1, "class": "BUTTON"}], "relations": [{"s": 1, "p": "left", "o": 1}]});
    let (s, v) = post("/api/generate", json!({"graph": bad})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "invalid_graph");

    let (s, v) = call(app(), "POST", "/api/generate", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "invalid_json");
}

#[tokio::test]
async fn metrics_endpoint() {
    let layout = json!({"boxes": [
        {"id": 1, "class": "TOOLBAR", "x": 0.0, "y": 0.0, "w": 1.0, "h": 0.1},
        {"id": 2, "class": "BUTTON", "x": 0.05, "y": 0.02, "w": 0.2, "h": 0.06},
        {"id": 3, "class": "CONTAINER", "x": 0.0, "y": 0.1, "w": 1.0, "h": 0.9},
        {"id": 4, "class": "IMAGE", "x": 0.1, "y": 0.2, "w": 0.8, "h": 0.3},
        {"id": 5, "class": "TEXT", "x": 0.1, "y": 0.6, "w": 0.8, "h": 0.1}
    ]});
    let (s, v) = post("/api/metrics", json!({"graph": graph(), "layout": layout})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["gui_agc"], 1.0);
    assert_eq!(v["cpi"], 1.0);
    assert_eq!(v["ccs"], 1.0);

    let (s, v) = post(
        "/api/metrics",
        json!({"graph": graph(), "layout": {"boxes": []}}),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "empty_layout");

    let stray =
        json!({"boxes": [{"id": 9, "class": "TEXT", "x": 0.0, "y": 0.0, "w": 0.1, "h": 0.1}]});
    let (s, v) = post("/api/metrics", json!({"graph": graph(), "layout": stray})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "invalid_layout");
}

#[tokio::test]
async fn concurrent_requests_are_seed_isolated() {
    let app = app();
    let body = |seed: u64| {
        json!({"graph": graph(), "samples": 2, "temperature": 1.0, "seed": seed}).to_string()
    };
    let solo_a = call(app.clone(), "POST", "/api/generate", Some(body(1)))
        .await
        .1;
    let solo_b = call(app.clone(), "POST", "/api/generate", Some(body(2)))
        .await
        .1;
    let (a, b) = tokio::join!(
        call(app.clone(), "POST", "/api/generate", Some(body(1))),
        call(app.clone(), "POST", "/api/generate", Some(body(2)))
    );
    assert_eq!(a.1, solo_a);
    assert_eq!(b.1, solo_b);
    assert_ne!(solo_a["layouts"], solo_b["layouts"]);
}
