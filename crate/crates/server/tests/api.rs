use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use qaspect_core::corpus::{Item, ItemSource};
use qaspect_core::crowd::{default_job, CrowdConfig, CrowdService, JudgmentStore, TestQuestion};
use qaspect_core::judgments::JudgmentRecord;
use qaspect_core::llm::LogicalClock;
use qaspect_core::{ClassLabel, LabelSet, PhaseId};
use qaspect_server::{router, EXCLUDED_HEADER};

fn item(id: String) -> Item {
    Item {
        text: format!("the app {id} keeps freezing"),
        id,
        phase: PhaseId::P3Prime,
        source: ItemSource::Sentence {
            review_id: "r1".into(),
            index: 0,
        },
    }
}

fn app() -> Router {
    let svc = CrowdService::new(
        CrowdConfig::default(),
        JudgmentStore::in_memory(),
        11,
        Box::new(LogicalClock::new()),
    );
    let tests = (0..14)
        .map(|i| TestQuestion {
            item: item(format!("t{i:02}")),
            expected: LabelSet::from([ClassLabel::Stability]),
        })
        .collect();
    svc.add_phase(
        PhaseId::P3Prime,
        (0..36).map(|i| item(format!("i{i:02}"))).collect(),
        tests,
        default_job(PhaseId::P3Prime),
    );
    router(Arc::new(svc))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String, Option<String>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let excluded = resp
        .headers()
        .get(EXCLUDED_HEADER)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap(), excluded)
}

fn parse(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn assert_no_test_flags(payload: &str) {
    assert!(
        !payload.contains("is_test") && !payload.contains("expected") && !payload.contains("correct"),
        "{payload}"
    );
}

#[tokio::test]
async fn scripted_session_quiz_then_four_pages() {
    let app = app();
    let (status, body, _) = call(&app, "POST", "/sessions", Some(json!({"phase": "P3prime"}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_no_test_flags(&body);
    let view = parse(&body);
    let sid = view["session_id"].as_str().unwrap().to_string();
    assert!(view["worker_id"].as_str().unwrap().starts_with("w-"));
    assert_eq!(view["page"]["items"].as_array().unwrap().len(), 10);
    assert_eq!(view["page"]["labels"].as_array().unwrap().len(), 7);
    assert!(!view["page"]["instructions"].as_str().unwrap().is_empty());

    let answers = vec!["Stability"; 10];
    let (status, body, _) = call(&app, "POST", &format!("/sessions/{sid}/quiz"), Some(json!({ "answers": answers }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(parse(&body)["status"], "eligible");

    let mut judged = 0;
    for n in 2..=5 {
        let (status, body, _) = call(&app, "GET", &format!("/sessions/{sid}/pages/{n}"), None).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        assert_no_test_flags(&body);
        for it in parse(&body)["items"].as_array().unwrap() {
            let payload = json!({"item_id": it["item_id"], "label": "Stability"});
            let (status, ack, _) = call(&app, "POST", &format!("/sessions/{sid}/judgments"), Some(payload)).await;
            assert_eq!(status, StatusCode::CREATED, "{ack}");
            assert_no_test_flags(&ack);
            judged += 1;
        }
    }
    assert_eq!(judged, 40);
    let (_, body, _) = call(&app, "GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(parse(&body)["state"], "complete");

    let (status, body, excluded) = call(&app, "GET", "/export?phase=P3prime", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(excluded.as_deref(), Some("0"));
    let lines: Vec<JudgmentRecord> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 36);
    assert!(lines.iter().all(|r| !r.is_test));
    assert!(lines.windows(2).all(|w| w[0].item_id <= w[1].item_id));

    let (_, body, _) = call(&app, "GET", "/export/tests?phase=P3prime", None).await;
    let grades: Vec<JudgmentRecord> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(grades.len(), 14);
    assert!(grades.iter().all(|g| g.is_test && g.correct == Some(true)));
}

#[tokio::test]
async fn failed_quiz_is_blocked_from_page_two() {
    let app = app();
    let (_, body, _) = call(&app, "POST", "/sessions", Some(json!({"worker_id": "alice", "phase": "P3prime"}))).await;
    let sid = parse(&body)["session_id"].as_str().unwrap().to_string();
    let mut answers = vec!["Stability"; 6];
    answers.extend(["None"; 4]);
    let (status, body, _) = call(&app, "POST", &format!("/sessions/{sid}/quiz"), Some(json!({ "answers": answers }))).await;
    assert_eq!(status, StatusCode::OK);
    let verdict = parse(&body);
    assert_eq!(verdict["status"], "rejected");
    assert_eq!(verdict["correct"], 6);

    let (status, body, _) = call(&app, "GET", &format!("/sessions/{sid}/pages/2"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(parse(&body)["kind"], "page-locked");
    let (status, _, _) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/judgments"),
        Some(json!({"item_id": "i00", "label": "Stability"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body, _) = call(&app, "POST", "/sessions", Some(json!({"worker_id": "alice", "phase": "P3prime"}))).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(parse(&body)["kind"], "worker-rejected");
}

#[tokio::test]
async fn rejections_map_to_status_codes() {
    let app = app();
    let (status, _, _) = call(&app, "GET", "/sessions/none/pages/1", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = call(&app, "POST", "/sessions", Some(json!({"phase": "P1"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = call(&app, "POST", "/sessions", Some(json!({"phase": "P9"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, body, _) = call(&app, "POST", "/sessions", Some(json!({"worker_id": "bob", "phase": "P3prime"}))).await;
    let sid = parse(&body)["session_id"].as_str().unwrap().to_string();
    let (status, body, _) = call(&app, "POST", &format!("/sessions/{sid}/quiz"), Some(json!({"answers": ["Stability"]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&body)["kind"], "answer-count");
    let (status, _, _) = call(&app, "GET", &format!("/sessions/{sid}/pages/9"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    call(&app, "POST", &format!("/sessions/{sid}/quiz"), Some(json!({"answers": vec!["Stability"; 10]}))).await;

    let (_, body, _) = call(&app, "GET", &format!("/sessions/{sid}/pages/2"), None).await;
    let first = parse(&body)["items"][0]["item_id"].as_str().unwrap().to_string();
    let url = format!("/sessions/{sid}/judgments");
    let (status, body, _) = call(&app, "POST", &url, Some(json!({"item_id": first, "label": "Helpful"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&body)["kind"], "illegal-label");
    let (status, _, _) = call(&app, "POST", &url, Some(json!({"item_id": first, "label": "Banana"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _, _) = call(&app, "POST", &url, Some(json!({"item_id": first, "label": "Stability"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, body, _) = call(&app, "POST", &url, Some(json!({"item_id": first, "label": "Stability"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(parse(&body)["kind"], "duplicate");

    let (status, _, _) = call(&app, "POST", &format!("/sessions/{sid}/abandon"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (_, body, _) = call(&app, "GET", "/export?phase=P3prime", None).await;
    assert_eq!(body.lines().count(), 1);
    let (_, body, _) = call(&app, "GET", "/export?phase=P1", None).await;
    assert!(body.is_empty());
}
