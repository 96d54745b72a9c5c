use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use inferkg_annotate::{router, AnnotationService, AppState, ServiceConfig};
use inferkg_core::pathmeta::{PathEntry, PathRecord};
use inferkg_core::split::Pattern;
use serde_json::{json, Value};
use tower::ServiceExt;

fn record(i: usize) -> PathRecord {
    PathRecord {
        conclusion: [format!("p{i}"), "mother".into(), format!("c{i}")],
        paths: vec![
            PathEntry {
                premises: vec![[format!("f{i}"), "spouse".into(), format!("p{i}")], [format!("f{i}"), "father".into(), format!("c{i}")]],
                rules: vec![0],
                confidence: 0.9,
                hops: 2,
                pattern: Pattern::Composition,
            },
            PathEntry {
                premises: vec![[format!("c{i}"), "hasMother".into(), format!("p{i}")]],
                rules: vec![1],
                confidence: 0.8,
                hops: 1,
                pattern: Pattern::Inversion,
            },
        ],
    }
}

struct Fixture {
    app: Router,
    clock: Arc<AtomicU64>,
    _dir: tempfile::TempDir,
}

fn fixture(tasks: usize, config: ServiceConfig) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut service = AnnotationService::open(dir.path(), config).unwrap();
    service.enqueue((0..tasks).map(record), 0).unwrap();
    let clock = Arc::new(AtomicU64::new(1));
    let c = clock.clone();
    let state = AppState::with_clock(service, Arc::new(move || c.load(Ordering::SeqCst)));
    Fixture { app: router(state), clock, _dir: dir }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let body = body.map_or(Body::empty(), |b| Body::from(b.to_string()));
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json").body(body).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn json_call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call(app, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or_else(|_| panic!("not json: {text}")))
}

async fn take(app: &Router, annotator: &str) -> String {
    let (status, v) = json_call(app, "GET", &format!("/task?annotator={annotator}"), None).await;
    assert_eq!(status, StatusCode::OK);
    v["task"]["task_id"].as_str().expect("a task").to_owned()
}

async fn label(app: &Router, id: &str, annotator: &str, body: Value) -> (StatusCode, Value) {
    json_call(app, "POST", &format!("/task/{id}/label?annotator={annotator}"), Some(body)).await
}

#[tokio::test]
async fn two_step_protocol_over_http() {
    let f = fixture(3, ServiceConfig::default());
    let (status, v) = json_call(&f.app, "GET", "/task?annotator=ann", None).await;
    assert_eq!(status, StatusCode::OK);
    let task = &v["task"];
    assert_eq!((task["head"].as_str(), task["relation"].as_str(), task["tail"].as_str()), (Some("p0"), Some("mother"), Some("c0")));
    assert_eq!(task["step"], 1);
    assert!(task.get("evidence").is_none());
    let id = task["task_id"].as_str().unwrap().to_owned();

    let (status, v) = label(&f.app, &id, "ann", json!({"step1": -1})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "step2-pending");
    assert_eq!(v["task"]["step"], 2);
    assert_eq!(v["task"]["evidence"].as_array().unwrap().len(), 2);

    let (status, v) = label(&f.app, &id, "ann", json!({"step1": -1, "step2": 0})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!({"status": "finalized", "task_id": id, "head": "p0", "relation": "mother", "tail": "c0", "label": 0, "provenance": "human"}));

    let id = take(&f.app, "ann").await;
    let (_, v) = label(&f.app, &id, "ann", json!({"step1": 1})).await;
    assert_eq!(v["label"], 1);
    let id = take(&f.app, "ann").await;
    label(&f.app, &id, "ann", json!({"step1": -1})).await;
    let (_, v) = label(&f.app, &id, "ann", json!({"step1": -1, "step2": -1})).await;
    assert_eq!(v["label"], -1);

    let (_, v) = json_call(&f.app, "GET", "/task?annotator=ann", None).await;
    assert_eq!(v, json!({"task": null}));
    let (_, v) = json_call(&f.app, "GET", "/progress", None).await;
    assert_eq!(v["total"], 3);
    assert_eq!(v["finalized"], 3);
    assert_eq!((v["positive"].as_u64(), v["negative"].as_u64(), v["unknown"].as_u64()), (Some(1), Some(1), Some(1)));

    let (status, text) = call(&f.app, "GET", "/export", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(text, "p0\tmother\tc0\t0\np1\tmother\tc1\t1\np2\tmother\tc2\t-1\n");
}

#[tokio::test]
async fn invalid_requests_get_json_errors() {
    let f = fixture(2, ServiceConfig::default());
    let (status, v) = json_call(&f.app, "GET", "/task", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("annotator"));

    let id = take(&f.app, "a").await;
    for body in [json!({"step1": 2}), json!({"step1": -1, "step2": 1}), json!({"step1": 1, "step2": 0}), json!({"step2": 0}), json!({"step1": 1, "note": "x"})] {
        let (status, v) = label(&f.app, &id, "a", body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
    }
    let (status, v) = call(&f.app, "POST", &format!("/task/{id}/label?annotator=a"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");

    let (status, _) = label(&f.app, "ffff", "a", json!({"step1": 1})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = label(&f.app, &id, "b", json!({"step1": 1})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = label(&f.app, &id, "a", json!({"step1": 1})).await;
    assert_eq!(status, StatusCode::OK);
    let (status, v) = label(&f.app, &id, "a", json!({"step1": 1})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(v["error"].as_str().unwrap().contains("finalized"));

    let (status, v) = json_call(&f.app, "GET", "/export", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(v["error"].is_string());
    let (status, text) = call(&f.app, "GET", "/export?partial=true", None).await;
    assert_eq!((status, text.lines().count()), (StatusCode::OK, 1));

    let (status, v) = json_call(&f.app, "GET", "/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(v["error"].is_string());
    let (status, v) = json_call(&f.app, "DELETE", "/task", None).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    assert!(v["error"].is_string());
}

#[tokio::test]
async fn concurrent_pollers_and_lease_expiry() {
    let f = fixture(2, ServiceConfig { lease_ms: 1000, ..ServiceConfig::default() });
    let polls = (0..4).map(|a| {
        let app = f.app.clone();
        tokio::spawn(async move { json_call(&app, "GET", &format!("/task?annotator=a{a}"), None).await.1 })
    });
    let mut got = Vec::new();
    for p in polls {
        if let Some(id) = p.await.unwrap()["task"]["task_id"].as_str() {
            got.push(id.to_owned());
        }
    }
    got.sort();
    assert_eq!(got.len(), 2);
    assert_ne!(got[0], got[1]);

    let (_, v) = json_call(&f.app, "GET", "/progress", None).await;
    assert_eq!(v["leased"], 2);
    f.clock.store(5000, Ordering::SeqCst);
    let (_, v) = json_call(&f.app, "GET", "/progress", None).await;
    assert_eq!(v["leased"], 0);
    let again = take(&f.app, "late").await;
    assert!(got.contains(&again));
}

#[tokio::test]
async fn relabel_mode_over_http() {
    let f = fixture(1, ServiceConfig { relabel: true, ..ServiceConfig::default() });
    let id = take(&f.app, "a").await;
    label(&f.app, &id, "a", json!({"step1": 1})).await;
    let (status, v) = label(&f.app, &id, "b", json!({"step1": -1, "step2": -1})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["label"], -1);
    let (_, text) = call(&f.app, "GET", "/export", None).await;
    assert_eq!(text, "p0\tmother\tc0\t-1\n");
}
