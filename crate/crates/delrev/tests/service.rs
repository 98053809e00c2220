//! The HTTP service driven in-process through the router.

use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use delrev::schema::StateDto;
use delrev::serialize_spec;
use delrev::service::{router, Config};
use delrev_core::{scenarios, AuthorizationState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(&body.to_string())).await
}

fn state_of(v: &Value) -> AuthorizationState {
    let dto: StateDto = serde_json::from_value(v.clone()).unwrap();
    AuthorizationState::try_from(&dto).unwrap()
}

async fn session(app: &Router, spec: &str) -> String {
    let (status, v) = post(app, "/sessions", json!({ "spec": spec })).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["schema"], "delrev/1");
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn actions_extend_the_history() {
    let app = router(Config::default());
    let id = session(&app, &serialize_spec(&scenarios::baseline())).await;
    let (status, v) =
        post(&app, &format!("/sessions/{id}/actions"), json!({"scheme":"WLD","actor":"A","target":"B"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["index"], 1);
    assert_eq!(v["evaluation"], "well-founded");
    assert_eq!(state_of(&v["state"]), scenarios::after_wld());

    let (status, v) =
        post(&app, &format!("/sessions/{id}/actions"), json!({"scheme":"WLD","actor":"C","target":"B"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "no-authorization-to-revoke");
    let (_, v) = get(&app, &format!("/sessions/{id}/history")).await;
    assert_eq!(v["entries"].as_array().unwrap().len(), 2);

    let (_, v) = get(&app, &format!("/sessions/{id}/state?index=0")).await;
    assert_eq!(state_of(&v["state"]), scenarios::baseline());
    let (status, v) = get(&app, &format!("/sessions/{id}/state?index=2")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "index-out-of-range");
}

#[tokio::test]
async fn do_lines_are_replayed_and_snapshots_round_trip() {
    let app = router(Config::default());
    let spec = format!("{}do WLN A B\n", serialize_spec(&scenarios::baseline()));
    let (_, created) = post(&app, "/sessions", json!({ "spec": spec })).await;
    assert_eq!(created["length"], 2);
    assert_eq!(state_of(&created["state"]), scenarios::after_wln());
    let id = created["id"].as_str().unwrap();

    let (_, v) = get(&app, &format!("/sessions/{id}/snapshot")).await;
    assert_eq!(v["document"], spec);
    let (_, v) = get(&app, &format!("/sessions/{id}/dot")).await;
    assert_eq!(v["dot"], delrev::export_dot(&scenarios::after_wln()));

    let (status, v) = post(&app, &format!("/sessions/{id}/truncate"), json!({"index": 0})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["length"], 1);
    assert_eq!(state_of(&v["state"]), scenarios::baseline());
    let (status, v) = post(&app, &format!("/sessions/{id}/truncate"), json!({"index": 1})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "index-out-of-range");
}

#[tokio::test]
async fn queries() {
    let app = router(Config::default());
    let id = session(&app, &serialize_spec(&scenarios::small_tree())).await;
    let (_, v) = get(&app, &format!("/sessions/{id}/query?kind=holders&perm=TT")).await;
    assert_eq!(v["principals"], json!(["A", "B", "D"]));
    let (_, v) = get(&app, &format!("/sessions/{id}/query?kind=access")).await;
    assert_eq!(v["kind"], "access");
    let (status, v) = get(&app, &format!("/sessions/{id}/query?kind=holders")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "bad-query");
    let (status, _) = get(&app, &format!("/sessions/{id}/query?kind=holders&perm=XY")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn plans_come_with_previews() {
    let app = router(Config::default());
    let id = session(&app, &serialize_spec(&scenarios::baseline())).await;
    let (status, v) = post(&app, &format!("/sessions/{id}/plan"), json!({"actor":"A","goal":"!access(F)"})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let results = v["results"].as_array().unwrap();
    let sgd = results
        .iter()
        .find(|r| r["action"] == json!({"scheme":"SGD","actor":"A","target":"B"}))
        .expect("SGD A B reaches the goal");
    let pid = sgd["preview"].as_str().unwrap();
    let (status, p) = get(&app, &format!("/previews/{pid}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state_of(&p["state"]), scenarios::after_sgd());
    assert_eq!(p["cost"], sgd["cost"]);
    assert!(p["dot"].as_str().unwrap().starts_with("digraph"));

    let (status, v) = post(&app, &format!("/sessions/{id}/plan"), json!({"actor":"A","goal":"access("})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "bad-goal");
    let (status, _) = post(&app, &format!("/sessions/{id}/plan"), json!({"actor":"Z","goal":"access(F)"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn previews_expire() {
    let app = router(Config { preview_ttl: Duration::ZERO, ..Config::default() });
    let id = session(&app, &serialize_spec(&scenarios::baseline())).await;
    let (_, v) = post(&app, &format!("/sessions/{id}/plan"), json!({"actor":"A","goal":"!access(F)"})).await;
    let pid = v["results"][0]["preview"].as_str().unwrap();
    let (status, v) = get(&app, &format!("/previews/{pid}")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown-preview");
}

#[tokio::test]
async fn verify_from_the_current_state() {
    let app = router(Config::default());
    let id = session(&app, &serialize_spec(&scenarios::small_tree())).await;
    let body = json!({"invariant":"active-connectivity","mode":{"kind":"exhaustive","depth":1}});
    let (status, v) = post(&app, &format!("/sessions/{id}/verify"), body).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["report"]["holds"], true);
    assert_eq!(v["report"]["outcome"]["kind"], "holds");

    let body = json!({"invariant":"nonsense","mode":{"kind":"exhaustive","depth":1}});
    let (status, v) = post(&app, &format!("/sessions/{id}/verify"), body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "unknown-invariant");

    let capped = router(Config { verify_cap: 2, ..Config::default() });
    let id = session(&capped, &serialize_spec(&scenarios::small_tree())).await;
    let body = json!({"invariant":"connectivity","mode":{"kind":"exhaustive","depth":3}});
    let (status, v) = post(&capped, &format!("/sessions/{id}/verify"), body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "resource-bound-exceeded");
}

#[tokio::test]
async fn bad_requests_and_unknown_ids() {
    let app = router(Config::default());
    let (status, v) = call(&app, Method::POST, "/sessions", Some("{not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "malformed-body");
    let (status, v) = post(&app, "/sessions", json!({"spec":"soa A\nauth A B TT"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "unknown-principal");
    let (status, v) = post(&app, "/sessions", json!({"spec":"soa A\nprincipal B\ndo WLD A B"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "no-authorization-to-revoke");

    let (status, v) = get(&app, "/sessions/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown-session");
    let (status, _) = get(&app, "/previews/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let id = session(&app, "soa A\nprincipal B\nauth A B TT").await;
    let (status, v) =
        post(&app, &format!("/sessions/{id}/actions"), json!({"scheme":"XYZ","actor":"A","target":"B"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "malformed-action");
    let (status, _) = post(&app, &format!("/sessions/{id}/actions"), json!({"scheme":"WLD"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = get(&app, &format!("/sessions/{id}")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sessions_expire() {
    let app = router(Config { session_ttl: Duration::ZERO, ..Config::default() });
    let id = session(&app, "soa A").await;
    // Expiry is swept when a session is created.
    session(&app, "soa A").await;
    let (status, _) = get(&app, &format!("/sessions/{id}")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
