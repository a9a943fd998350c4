use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use relabel_core::corpus::{Split, Utterance};
use relabel_core::{Corpus, TagSet};
use relabel_service::http::{router, AppState, QueuePage};
use relabel_service::store::{self, DataDir, QueueEntry, QueueMeta, ReviewItem, Stats, Status};
use serde_json::{json, Value};
use tower::ServiceExt;

/// A store with `n` two-token utterances `u0..`, the first `queued` of them
/// queued with gaps 3.0, 2.9, 2.8, ...
fn seed_store(root: &Path, n: usize, queued: usize) -> DataDir {
    let dir = DataDir::new(root);
    dir.create().unwrap();
    let ts = TagSet::business_default();
    let org = ts.label_index("B-ORG").unwrap();
    let utts = (0..n).map(|i| Utterance::new(format!("u{i}"), ["call", "acme"], vec![0, org]).unwrap()).collect();
    let corpus = Corpus::new(ts.clone(), utts, Split::Train).unwrap();
    store::write_json(&dir.tag_set(), &ts).unwrap();
    store::write_corpus(&dir.corpus(), &corpus).unwrap();
    let queue: Vec<QueueEntry> = (0..queued)
        .map(|i| QueueEntry { utterance_id: format!("u{i}"), max_gap: 3.0 - 0.1 * i as f64, evidence: vec![] })
        .collect();
    store::write_jsonl(&dir.queue(), &queue).unwrap();
    let meta = QueueMeta { train_size: n, threshold: 2.0, folds: 5, seed: 0, focus_types: Some(vec!["ORG".into()]), budget: None };
    store::write_json(&dir.queue_meta(), &meta).unwrap();
    dir
}

fn app(dir: &DataDir) -> Router {
    router(AppState::open(dir.clone()).unwrap(), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

fn log_len(dir: &DataDir) -> usize {
    store::read_decisions(&dir.decisions()).unwrap().len()
}

fn accept(ts: &str) -> Value {
    json!({ "verdict": "correct_as_is", "annotator_id": "ann", "timestamp": ts })
}

#[tokio::test]
async fn empty_queue_lists_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(&seed_store(tmp.path(), 5, 0));
    let (code, body) = call(&app, "GET", "/api/queue", None).await;
    assert_eq!(code, StatusCode::OK);
    let page: QueuePage = serde_json::from_value(body).unwrap();
    assert!(page.items.is_empty());
    assert_eq!(page.total, 0);
}

#[tokio::test]
async fn queue_is_ordered_and_paginated() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(&seed_store(tmp.path(), 10, 5));
    let (_, body) = call(&app, "GET", "/api/queue", None).await;
    let page: QueuePage = serde_json::from_value(body).unwrap();
    let gaps: Vec<f64> = page.items.iter().map(|i| i.max_gap).collect();
    assert_eq!(page.items[0].utterance_id, "u0");
    assert!(gaps.windows(2).all(|w| w[0] >= w[1]));

    let mut seen = Vec::new();
    for p in 1..=3 {
        let (code, body) = call(&app, "GET", &format!("/api/queue?page={p}&per_page=2"), None).await;
        assert_eq!(code, StatusCode::OK);
        let page: QueuePage = serde_json::from_value(body).unwrap();
        assert_eq!(page.total, 5);
        seen.extend(page.items.into_iter().map(|i| i.utterance_id));
    }
    assert_eq!(seen, ["u0", "u1", "u2", "u3", "u4"]);

    let (_, body) = call(&app, "GET", "/api/queue?status=done", None).await;
    assert_eq!(body["items"], json!([]));
}

#[tokio::test]
async fn bad_queue_params_are_400() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(&seed_store(tmp.path(), 4, 2));
    for q in ["page=0", "page=abc", "per_page=0", "per_page=100000", "status=maybe", "sort=gap"] {
        let (code, body) = call(&app, "GET", &format!("/api/queue?{q}"), None).await;
        assert_eq!(code, StatusCode::BAD_REQUEST, "{q}");
        assert!(body["error"].is_string());
    }
}

#[tokio::test]
async fn items_and_decisions() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = seed_store(tmp.path(), 4, 2);
    let app = app(&dir);

    let (code, _) = call(&app, "GET", "/api/items/nope", None).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let (code, _) = call(&app, "GET", "/api/items/u3", None).await;
    assert_eq!(code, StatusCode::NOT_FOUND, "unqueued utterances are not items");
    let (code, body) = call(&app, "GET", "/api/items/u0", None).await;
    assert_eq!(code, StatusCode::OK);
    let item: ReviewItem = serde_json::from_value(body).unwrap();
    assert_eq!((item.status, item.decision.is_none()), (Status::Pending, true));
    assert_eq!(item.current_tags, ["O", "B-ORG"]);

    // accept keeps the tags
    let (code, body) = call(&app, "POST", "/api/items/u0/decision", Some(accept("2024-01-01T00:00:00Z"))).await;
    assert_eq!(code, StatusCode::OK);
    let item: ReviewItem = serde_json::from_value(body).unwrap();
    assert_eq!(item.status, Status::Done);
    assert_eq!(item.current_tags, ["O", "B-ORG"]);
    assert_eq!(log_len(&dir), 1);

    // identical post is a no-op
    let (code, _) = call(&app, "POST", "/api/items/u0/decision", Some(accept("2024-01-02T00:00:00Z"))).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(log_len(&dir), 1);

    // server-side validation
    let bad = [
        json!({ "verdict": "corrected", "new_tags": ["O"], "annotator_id": "ann" }),
        json!({ "verdict": "corrected", "new_tags": ["O", "I-PROD"], "annotator_id": "ann" }),
        json!({ "verdict": "corrected", "new_tags": ["O", "B-FOO"], "annotator_id": "ann" }),
        json!({ "verdict": "corrected", "annotator_id": "ann" }),
        json!({ "verdict": "unsure", "annotator_id": "ann" }),
        json!({ "verdict": "correct_as_is", "annotator_id": "" }),
        json!({ "verdict": "correct_as_is", "annotator_id": "ann", "utterance_id": "u1" }),
    ];
    for b in bad {
        let (code, _) = call(&app, "POST", "/api/items/u0/decision", Some(b.clone())).await;
        assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY, "{b}");
    }
    let (code, _) = call(&app, "POST", "/api/items/zzz/decision", Some(accept("2024-01-01T00:00:00Z"))).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    assert_eq!(log_len(&dir), 1);

    // a later correction supersedes
    let fix = json!({ "verdict": "corrected", "new_tags": ["O", "B-PROD"], "annotator_id": "ann2", "timestamp": "2024-01-03T00:00:00Z" });
    let (code, body) = call(&app, "POST", "/api/items/u0/decision", Some(fix)).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(body["current_tags"], json!(["O", "B-PROD"]));
    assert_eq!(body["decision"]["verdict"], "corrected");
    assert_eq!(log_len(&dir), 2);

    // server clock fills a missing timestamp
    let (code, body) = call(&app, "POST", "/api/items/u1/decision", Some(json!({ "verdict": "correct_as_is", "annotator_id": "a" }))).await;
    assert_eq!(code, StatusCode::OK);
    assert!(body["decision"]["timestamp"].is_string());
}

#[tokio::test]
async fn stats_track_decisions() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(&seed_store(tmp.path(), 2000, 120));
    let (_, body) = call(&app, "GET", "/api/stats", None).await;
    let s: Stats = serde_json::from_value(body).unwrap();
    assert_eq!((s.pending, s.done), (120, 0));
    assert!((s.flag_fraction_of_train - 0.06).abs() < 1e-12);

    call(&app, "POST", "/api/items/u5/decision", Some(accept("2024-01-01T00:00:00Z"))).await;
    let fix = json!({ "verdict": "corrected", "new_tags": ["O", "O"], "annotator_id": "b" });
    call(&app, "POST", "/api/items/u6/decision", Some(fix)).await;
    let (_, body) = call(&app, "GET", "/api/stats", None).await;
    let s: Stats = serde_json::from_value(body).unwrap();
    assert_eq!((s.pending, s.done, s.accepted, s.corrected), (118, 2, 1, 1));
    assert_eq!(s.pending + s.done, 120);

    let (_, body) = call(&app, "GET", "/api/queue?status=done", None).await;
    let ids: Vec<&str> = body["items"].as_array().unwrap().iter().map(|i| i["utterance_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["u5", "u6"]);
}

#[tokio::test]
async fn restart_replays_the_log() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = seed_store(tmp.path(), 6, 4);
    let before: Vec<ReviewItem>;
    {
        let state = AppState::open(dir.clone()).unwrap();
        let app = router(Arc::clone(&state), None);
        call(&app, "POST", "/api/items/u0/decision", Some(accept("2024-01-01T00:00:00Z"))).await;
        let fix = json!({ "verdict": "corrected", "new_tags": ["O", "B-GPE"], "annotator_id": "a", "timestamp": "2024-01-01T00:00:01Z" });
        call(&app, "POST", "/api/items/u2/decision", Some(fix)).await;
        before = state.snapshot().items().to_vec();
    }
    let state = AppState::open(dir).unwrap();
    assert_eq!(state.snapshot().items(), before.as_slice());
    assert_eq!(state.snapshot().log_len(), 2);
}

/// Posts the same timestamped decisions in two orders and merges each.
#[tokio::test]
async fn merge_ignores_arrival_order() {
    let decisions = [
        ("u0", json!({ "verdict": "corrected", "new_tags": ["O", "B-PROD"], "annotator_id": "a", "timestamp": "2024-01-01T00:00:05Z" })),
        ("u0", json!({ "verdict": "correct_as_is", "annotator_id": "b", "timestamp": "2024-01-01T00:00:01Z" })),
        ("u1", json!({ "verdict": "correct_as_is", "annotator_id": "a", "timestamp": "2024-01-01T00:00:02Z" })),
        ("u2", json!({ "verdict": "corrected", "new_tags": ["O", "O"], "annotator_id": "c", "timestamp": "2024-01-01T00:00:03Z" })),
    ];
    let mut outputs = Vec::new();
    for order in [[0, 1, 2, 3], [3, 1, 2, 0]] {
        let tmp = tempfile::tempdir().unwrap();
        let dir = seed_store(tmp.path(), 4, 3);
        let app = app(&dir);
        for i in order {
            let (id, body) = &decisions[i];
            let (code, _) = call(&app, "POST", &format!("/api/items/{id}/decision"), Some(body.clone())).await;
            assert_eq!(code, StatusCode::OK);
        }
        let (code, body) = call(&app, "POST", "/api/merge", None).await;
        assert_eq!(code, StatusCode::OK);
        assert_eq!(body["decisions"], 4);
        assert_eq!(body["reannotated"], 2);
        outputs.push(std::fs::read_to_string(dir.merged()).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let merged = &outputs[0];
    assert!(merged.contains("# id = u0\n# revision = 1\n# source = reannotated\ncall\tO\nacme\tB-PROD\n"));
    assert!(merged.contains("# id = u1\n# revision = 1\ncall\tO\nacme\tB-ORG\n"));
    assert!(merged.contains("# id = u3\ncall\tO\nacme\tB-ORG\n"));
}

#[tokio::test]
async fn empty_merge_copies_the_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = seed_store(tmp.path(), 3, 1);
    let (code, _) = call(&app(&dir), "POST", "/api/merge", None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(std::fs::read(dir.merged()).unwrap(), std::fs::read(dir.corpus()).unwrap());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_posts_are_all_logged() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = seed_store(tmp.path(), 64, 64);
    let app = app(&dir);
    let mut tasks = Vec::new();
    for i in 0..64 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            call(&app, "POST", &format!("/api/items/u{i}/decision"), Some(accept("2024-01-01T00:00:00Z"))).await.0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    assert_eq!(log_len(&dir), 64);
    let (_, body) = call(&app, "GET", "/api/stats", None).await;
    assert_eq!(body["done"], 64);
}

#[tokio::test]
async fn serves_static_ui_with_index_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = seed_store(&tmp.path().join("store"), 2, 1);
    let ui = tmp.path().join("ui");
    std::fs::create_dir_all(ui.join("assets")).unwrap();
    std::fs::write(ui.join("index.html"), "<html>review</html>").unwrap();
    std::fs::write(ui.join("assets/app.js"), "console.log(1)").unwrap();
    let app = router(AppState::open(dir.clone()).unwrap(), Some(ui));

    let get = |uri: &'static str| {
        let app = app.clone();
        async move {
            let resp = app.oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
            let code = resp.status();
            (code, String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap())
        }
    };
    assert_eq!(get("/").await, (StatusCode::OK, "<html>review</html>".into()));
    assert_eq!(get("/assets/app.js").await, (StatusCode::OK, "console.log(1)".into()));
    assert_eq!(get("/items/u0").await, (StatusCode::OK, "<html>review</html>".into()));
    assert_eq!(get("/api/stats").await.0, StatusCode::OK);

    let bare = router(AppState::open(dir).unwrap(), None);
    let resp = bare.oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}
