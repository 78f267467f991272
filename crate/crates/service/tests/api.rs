use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use kanlab_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Client {
    state: Arc<AppState>,
    app: Router,
}

impl Client {
    fn new() -> Self {
        let state = AppState::new();
        Self {
            app: router(state.clone()),
            state,
        }
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None).await
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(body)).await
    }

    async fn create(&self, body: Value) -> String {
        let (status, v) = self.post("/sessions", body).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    async fn state(&self, id: &str) -> Value {
        let (status, v) = self.get(&format!("/sessions/{id}/state")).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        v
    }
}

fn small() -> Value {
    json!({"task": "exp_sine_2d", "shape": [2, 1, 1], "n_train": 200, "n_test": 200})
}

#[tokio::test]
async fn ids_are_hex_and_distinct() {
    let c = Client::new();
    let a = c.create(small()).await;
    let b = c.create(small()).await;
    assert_ne!(a, b);
    for id in [&a, &b] {
        assert_eq!(id.len(), 16);
        assert!(id.chars().all(|ch| ch.is_ascii_hexdigit()));
    }
}

#[tokio::test]
async fn bad_create_requests() {
    let c = Client::new();
    let (status, v) = c.post("/sessions", json!({"task": "exp_sine_2d", "shape": [2]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["message"].as_str().unwrap().contains("≥ 2 layers"), "{v}");
    let (status, v) = c.post("/sessions", json!({"task": "nope", "shape": [2, 1]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["message"].as_str().unwrap().contains("nope"), "{v}");
    let (status, _) = c.post("/sessions", json!({"task": "exp_sine_2d", "shape": [3, 1]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, v) = c.post("/sessions", json!({"task": 7})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["code"].is_string() && v["message"].is_string());
}

#[tokio::test]
async fn fresh_state_lists_every_edge() {
    let c = Client::new();
    let id = c.create(small()).await;
    let s = c.state(&id).await;
    assert_eq!(s["shape"], json!([2, 1, 1]));
    assert_eq!(s["version"], 0);
    let edges = s["edges"].as_array().unwrap();
    assert_eq!(edges.len(), 3);
    for e in edges {
        let l1 = e["l1"].as_f64().unwrap();
        assert!((e["opacity"].as_f64().unwrap() - (3.0 * l1).tanh()).abs() < 1e-12);
        assert_eq!(e["sparkline"].as_array().unwrap().len(), 64);
        assert!(e["lock"].is_null());
    }
    assert!(s["losses"]["train_rmse"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn sparkline_matches_saved_model() {
    let c = Client::new();
    let id = c.create(small()).await;
    let s = c.state(&id).await;
    let (_, saved) = c.get(&format!("/sessions/{id}/save")).await;
    let net = kanlab_core::KanNetwork::try_from(&serde_json::from_value::<kanlab_core::network::ModelDocument>(
        saved["model"].clone(),
    )
    .unwrap())
    .unwrap();
    for e in s["edges"].as_array().unwrap() {
        let (l, i, j) = (e["l"].as_u64().unwrap(), e["i"].as_u64().unwrap(), e["j"].as_u64().unwrap());
        let edge = net.edge(l as usize, i as usize, j as usize).unwrap();
        for p in e["sparkline"].as_array().unwrap() {
            let (x, y) = (p[0].as_f64().unwrap(), p[1].as_f64().unwrap());
            assert!((edge.eval(x) - y).abs() < 1e-9);
        }
    }
}

#[tokio::test]
async fn zero_step_train_only_bumps_version() {
    let c = Client::new();
    let id = c.create(small()).await;
    let before = c.state(&id).await;
    let (status, v) = c.post(&format!("/sessions/{id}/train"), json!({"steps": 0})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["version"], 1);
    let after = c.state(&id).await;
    assert_eq!(after["losses"], before["losses"]);
    assert_eq!(after["edges"], before["edges"]);
    assert_eq!(after["version"], 1);
}

#[tokio::test]
async fn training_appends_history_and_lowers_loss() {
    let c = Client::new();
    let id = c.create(small()).await;
    let start = c.state(&id).await["losses"]["train_rmse"].as_f64().unwrap();
    for _ in 0..2 {
        let (status, _) = c.post(&format!("/sessions/{id}/train"), json!({"steps": 20})).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, h) = c.get(&format!("/sessions/{id}/history")).await;
    let steps: Vec<u64> = h.as_array().unwrap().iter().map(|r| r["step"].as_u64().unwrap()).collect();
    assert_eq!(steps, (1..=40).collect::<Vec<_>>());
    let s = c.state(&id).await;
    assert!(s["losses"]["train_rmse"].as_f64().unwrap() < start);
    assert_eq!(s["steps"], 40);
}

#[tokio::test]
async fn oversized_train_is_capped() {
    let c = Client::new();
    let id = c.create(small()).await;
    let (_, v) = c.post(&format!("/sessions/{id}/train"), json!({"steps": 5000})).await;
    assert_eq!(v["steps"], 200);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let c = Client::new();
    for uri in ["/sessions/0000000000000000/state", "/sessions/zz/history"] {
        let (status, v) = c.get(uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(v["code"], "not_found");
    }
    let (status, _) = c.post("/sessions/abc/train", json!({"steps": 1})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_mutation_is_409() {
    let c = Client::new();
    let id = c.create(small()).await;
    let guard = c.state.try_begin_mutation(&id).unwrap();
    let (status, v) = c.post(&format!("/sessions/{id}/train"), json!({"steps": 1})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "busy");
    let (status, _) = c.post(&format!("/sessions/{id}/prune"), json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    // reads still see the committed snapshot
    assert_eq!(c.state(&id).await["version"], 0);
    drop(guard);
    let (status, _) = c.post(&format!("/sessions/{id}/train"), json!({"steps": 1})).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn formula_needs_every_edge_locked() {
    let c = Client::new();
    let id = c.create(small()).await;
    let (status, v) = c.get(&format!("/sessions/{id}/formula")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "core_error");
}

#[tokio::test]
async fn bad_fix_requests() {
    let c = Client::new();
    let id = c.create(small()).await;
    let (status, v) = c.post(&format!("/sessions/{id}/fix"), json!({"l": 0, "i": 0, "j": 0, "name": "nope"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["message"].as_str().unwrap().contains("nope"));
    let (status, _) = c.post(&format!("/sessions/{id}/fix"), json!({"l": 5, "i": 0, "j": 0, "name": "sin"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = c.post(&format!("/sessions/{id}/fix"), json!({"l": 0})).await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn explicit_lock_and_extend() {
    let c = Client::new();
    let id = c.create(small()).await;
    let (status, _) = c
        .post(&format!("/sessions/{id}/fix"), json!({"l": 0, "i": 0, "j": 0, "name": "sin", "params": [3.0, 0.1, 1.0, 0.0]}))
        .await;
    assert_eq!(status, StatusCode::OK);
    let s = c.state(&id).await;
    let lock = &s["edges"][0]["lock"];
    assert_eq!(lock["name"], "sin");
    assert_eq!(lock["a"], 3.0);
    let (status, v) = c.post(&format!("/sessions/{id}/extend"), json!({"grid": 10})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let s = c.state(&id).await;
    assert_eq!(s["grid"], 10);
    assert_eq!(s["version"], 2);
    assert_eq!(s["edges"][0]["lock"]["name"], "sin");
}

#[tokio::test]
async fn task_list() {
    let c = Client::new();
    let (status, v) = c.get("/tasks").await;
    assert_eq!(status, StatusCode::OK);
    let list = v.as_array().unwrap();
    let es = list.iter().find(|t| t["name"] == "exp_sine_2d").unwrap();
    assert_eq!((es["inputs"].as_u64(), es["outputs"].as_u64()), (Some(2), Some(1)));
    assert_eq!(list.len(), kanlab_core::tasks::task_names().len());
}

async fn replay(c: &Client) -> (Value, Value) {
    let id = c.create(small()).await;
    c.post(&format!("/sessions/{id}/train"), json!({"steps": 15, "lambda": 1e-3})).await;
    c.post(&format!("/sessions/{id}/extend"), json!({"grid": 5})).await;
    c.post(&format!("/sessions/{id}/train"), json!({"steps": 15})).await;
    let mut s = c.state(&id).await;
    s["id"] = Value::Null;
    let (_, saved) = c.get(&format!("/sessions/{id}/save")).await;
    (s, saved)
}

#[tokio::test]
async fn replay_is_deterministic() {
    let c = Client::new();
    let a = replay(&c).await;
    let b = replay(&Client::new()).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn save_and_load_round_trip() {
    let c = Client::new();
    let id = c.create(small()).await;
    c.post(&format!("/sessions/{id}/train"), json!({"steps": 10})).await;
    let (_, saved) = c.get(&format!("/sessions/{id}/save")).await;
    let (status, v) = c.post("/sessions/load", saved.clone()).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let copy = v["id"].as_str().unwrap();
    assert_ne!(copy, id);
    let (mut a, mut b) = (c.state(&id).await, c.state(copy).await);
    a["id"] = Value::Null;
    b["id"] = Value::Null;
    assert_eq!(a, b);
    let (_, again) = c.get(&format!("/sessions/{copy}/save")).await;
    assert_eq!(again, saved);
    // both continue identically
    c.post(&format!("/sessions/{id}/train"), json!({"steps": 5})).await;
    c.post(&format!("/sessions/{copy}/train"), json!({"steps": 5})).await;
    let (_, ha) = c.get(&format!("/sessions/{id}/history")).await;
    let (_, hb) = c.get(&format!("/sessions/{copy}/history")).await;
    assert_eq!(ha, hb);
    let (status, _) = c.post("/sessions/load", json!({"spec": {}})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn full_symbolic_loop() {
    let c = Client::new();
    let id = c
        .create(json!({
            "task": "exp_sine_2d", "shape": [2, 5, 1], "grid": 5, "seed": 5,
            "config": {"lambda": 1e-2, "loss": "mse"}
        }))
        .await;
    for _ in 0..10 {
        let (status, v) = c.post(&format!("/sessions/{id}/train"), json!({"steps": 200})).await;
        assert_eq!(status, StatusCode::OK, "{v}");
    }
    let (status, v) = c.post(&format!("/sessions/{id}/prune"), json!({"theta": 1e-2})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["shape"], json!([2, 1, 1]), "{v}");
    for (l, i, name) in [(0, 0, "sin"), (0, 1, "x^2"), (1, 0, "exp")] {
        let (status, v) = c.post(&format!("/sessions/{id}/fix"), json!({"l": l, "i": i, "j": 0, "name": name})).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        assert!(v["r2"].as_f64().unwrap() > 0.99, "{name}: {v}");
    }
    let (status, v) = c
        .post(&format!("/sessions/{id}/train"), json!({"steps": 200, "lambda": 0.0, "lock_affine_trainable": true}))
        .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let s = c.state(&id).await;
    assert!(s["losses"]["test_rmse"].as_f64().unwrap() < 1e-4, "{}", s["losses"]);
    let (status, f) = c.get(&format!("/sessions/{id}/formula?decimals=2")).await;
    assert_eq!(status, StatusCode::OK, "{f}");
    let text = f["rendered"][0].as_str().unwrap();
    for part in ["exp", "sin", "²"] {
        assert!(text.contains(part), "{text}");
    }
    let (status, ranked) = c.get(&format!("/sessions/{id}/suggest?l=1&i=0&j=0&top=3")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ranked.as_array().unwrap().len(), 3);
    assert_eq!(ranked[0]["function"], "exp");
}
