mod common;

use std::collections::BTreeMap;

use axum::http::StatusCode;
use common::{annotation, app, call, mock_cases};
use qi_workbench::domain::Metric;
use qi_workbench::ledger::{los_fixture, Split};
use qi_workbench::service::{AnnotationLog, ANNOTATION_LOG};
use serde_json::Value;

#[tokio::test]
async fn empty_store_gives_empty_page_and_empty_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let st = app(Vec::new(), BTreeMap::new(), &dir.path().join(ANNOTATION_LOG), &[]);
    let (s, v) = call(&st, "GET", "/v1/cases", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], 0);
    assert_eq!(v["items"].as_array().unwrap().len(), 0);
    let (s, v) = call(&st, "GET", "/v1/metrics", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["empty"], true);
}

#[tokio::test]
async fn listing_counts_and_paginates() {
    let dir = tempfile::tempdir().unwrap();
    let st = app(mock_cases(Metric::Los, 52, 3, 0..=3), BTreeMap::new(), &dir.path().join(ANNOTATION_LOG), &[]);
    let (_, v) = call(&st, "GET", "/v1/cases?metric=LOS&per_page=20&page=3", None, None).await;
    assert_eq!(v["total"], 52);
    assert_eq!(v["items"].as_array().unwrap().len(), 12);
    let (_, v) = call(&st, "GET", "/v1/cases?metric=READMISSION", None, None).await;
    assert_eq!(v["total"], 0);
    let (s, v) = call(&st, "GET", "/v1/cases?metric=MORTALITY", None, None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "bad_request");
}

#[tokio::test]
async fn case_view_anchors_every_verified_fragment() {
    let dir = tempfile::tempdir().unwrap();
    let mut cases = mock_cases(Metric::Los, 2, 8, 2..=2);
    // fault injection: a case-changed quote only matches fuzzily
    let f = &mut cases[1].result.scored_factors[0].factor;
    f.relevant_quotes = f.relevant_quotes.to_uppercase();
    let st = app(cases.clone(), BTreeMap::new(), &dir.path().join(ANNOTATION_LOG), &[]);

    let (s, v) = call(&st, "GET", "/v1/cases/los-0001", None, None).await;
    assert_eq!(s, StatusCode::OK);
    let notes: BTreeMap<&str, &str> = v["notes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| (n["note_id"].as_str().unwrap(), n["text"].as_str().unwrap()))
        .collect();
    assert_eq!(v["scored_factors"].as_array().unwrap().len(), 2);
    for f in v["scored_factors"].as_array().unwrap() {
        assert_eq!(f["quote_status"], "VERIFIED");
        for c in f["quote_checks"].as_array().unwrap() {
            let a = &c["anchor"];
            let text = notes[a["note_id"].as_str().unwrap()];
            let (lo, hi) = (a["start"].as_u64().unwrap() as usize, a["end"].as_u64().unwrap() as usize);
            assert_eq!(&text[lo..hi], c["fragment"].as_str().unwrap());
        }
    }

    let (_, v) = call(&st, "GET", "/v1/cases/los-0002", None, None).await;
    let f0 = &v["scored_factors"][0];
    assert_eq!(f0["quote_status"], "FUZZY");
    assert!(f0["quote_checks"][0].get("anchor").is_none_or(Value::is_null));

    let (s, v) = call(&st, "GET", "/v1/cases/nope", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "not_found");
}

#[tokio::test]
async fn annotation_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join(ANNOTATION_LOG);
    let st = app(mock_cases(Metric::Los, 1, 5, 2..=2), BTreeMap::new(), &log, &["alice", "bob"]);

    let (s, v) = call(&st, "POST", "/v1/annotations", Some("tok-alice"), Some(annotation("los-0001", 0, "alice", 4, 1))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["likert"], 4);
    assert_eq!(st.store.log_len(), 1);

    // upsert: log grows, latest wins
    call(&st, "POST", "/v1/annotations", Some("tok-alice"), Some(annotation("los-0001", 0, "alice", 2, 1))).await;
    assert_eq!(st.store.log_len(), 2);
    let current = st.store.annotations();
    assert_eq!(current.len(), 1);
    assert_eq!(current[0].likert.value(), 2);

    let (s, v) = call(&st, "POST", "/v1/annotations", Some("tok-alice"), Some(annotation("los-0001", 0, "alice", 6, 1))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "validation");
    let (s, _) = call(&st, "POST", "/v1/annotations", Some("tok-alice"), Some(annotation("los-0001", 0, "alice", 0, 1))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&st, "POST", "/v1/annotations", Some("tok-alice"), Some(annotation("los-0001", 9, "alice", 3, 1))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&st, "POST", "/v1/annotations", None, Some(annotation("los-0001", 0, "alice", 3, 1))).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&st, "POST", "/v1/annotations", Some("tok-mallory"), Some(annotation("los-0001", 0, "alice", 3, 1))).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&st, "POST", "/v1/annotations", Some("tok-bob"), Some(annotation("los-0001", 0, "alice", 3, 1))).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    assert_eq!(st.store.log_len(), 2);

    // replay reconstructs the same state
    let (_, replay) = AnnotationLog::open(&log).unwrap();
    assert_eq!(replay.annotations.len(), 2);
    assert_eq!(qi_workbench::eval::latest_per_key(replay.annotations), current);

    let (_, v) = call(&st, "GET", "/v1/cases?round=1", None, None).await;
    assert_eq!(v["items"][0]["annotated_factors"], 1);
    assert_eq!(v["items"][0]["raters"][0], "alice");
}

#[tokio::test]
async fn holdout_enforced_by_service() {
    let dir = tempfile::tempdir().unwrap();
    let mut ledger = los_fixture();
    ledger.register_case("los-0001", Split::Test).unwrap();
    ledger.register_case("los-0002", Split::Train).unwrap();
    let last = ledger.last_round().unwrap();
    let ledgers = BTreeMap::from([(Metric::Los, ledger.clone())]);
    let st = app(mock_cases(Metric::Los, 2, 5, 1..=1), ledgers, &dir.path().join(ANNOTATION_LOG), &["alice"]);

    let (s, v) = call(&st, "POST", "/v1/annotations", Some("tok-alice"), Some(annotation("los-0001", 0, "alice", 3, 2))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "holdout_violation");
    let (s, _) = call(&st, "POST", "/v1/annotations", Some("tok-alice"), Some(annotation("los-0002", 0, "alice", 3, 2))).await;
    assert_eq!(s, StatusCode::CREATED);

    // after finalization the final round is open for TEST cases
    let mut finalized = ledger;
    finalized.finalize().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let st = app(
        mock_cases(Metric::Los, 2, 5, 1..=1),
        BTreeMap::from([(Metric::Los, finalized)]),
        &dir2.path().join(ANNOTATION_LOG),
        &["alice"],
    );
    let (s, _) = call(&st, "POST", "/v1/annotations", Some("tok-alice"), Some(annotation("los-0001", 0, "alice", 3, last))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, _) = call(&st, "POST", "/v1/annotations", Some("tok-alice"), Some(annotation("los-0001", 0, "alice", 3, last - 1))).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

fn report<'a>(v: &'a Value, kind: &str, mode: &str) -> &'a Value {
    v["agreement"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["kind"] == kind && r["mode"] == mode)
        .unwrap_or_else(|| panic!("no {kind}/{mode} report in {v}"))
}

#[tokio::test]
async fn metrics_delegate_to_eval() {
    let dir = tempfile::tempdir().unwrap();
    let st = app(mock_cases(Metric::Los, 1, 12, 4..=4), BTreeMap::new(), &dir.path().join(ANNOTATION_LOG), &["a", "b"]);
    for (i, (x, y)) in [(3, 3), (2, 4), (5, 5), (1, 2)].into_iter().enumerate() {
        call(&st, "POST", "/v1/annotations", Some("tok-a"), Some(annotation("los-0001", i, "a", x, 1))).await;
        call(&st, "POST", "/v1/annotations", Some("tok-b"), Some(annotation("los-0001", i, "b", y, 1))).await;
    }
    let (s, v) = call(&st, "GET", "/v1/metrics?metric=LOS&round=1", None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["empty"], false);
    assert_eq!(v["n_annotations"], 8);
    let ir = report(&v, "INTER_RATER", "EXACT");
    assert_eq!(ir["rate"], 0.5);
    assert_eq!(ir["n_pairs"], 4);
    assert_eq!(report(&v, "INTER_RATER", "WITHIN_ONE")["rate"], 0.75);
    assert_eq!(report(&v, "AI_RATER", "EXACT")["n_pairs"], 8);
    let n: u64 = v["calibration"].as_array().unwrap().iter().map(|b| b["n"].as_u64().unwrap()).sum();
    assert_eq!(n, 8);

    let (_, v) = call(&st, "GET", "/v1/metrics?round=2", None, None).await;
    assert_eq!(v["empty"], true);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writers_lose_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join(ANNOTATION_LOG);
    let raters: Vec<String> = (0..16).map(|i| format!("r{i:02}")).collect();
    let refs: Vec<&str> = raters.iter().map(String::as_str).collect();
    let st = app(mock_cases(Metric::Los, 4, 7, 3..=3), BTreeMap::new(), &log, &refs);
    let mut tasks = Vec::new();
    for r in raters.clone() {
        let st = st.clone();
        tasks.push(tokio::spawn(async move {
            for e in 1..=4 {
                for i in 0..3 {
                    let body = annotation(&format!("los-{e:04}"), i, &r, 3, 1);
                    let (s, _) = call(&st, "POST", "/v1/annotations", Some(&format!("tok-{r}")), Some(body)).await;
                    assert_eq!(s, StatusCode::CREATED);
                }
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    let n = 16 * 4 * 3;
    assert_eq!(st.store.log_len(), n);
    let (_, replay) = AnnotationLog::open(&log).unwrap();
    assert_eq!(replay.annotations.len(), n);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), n);
}

#[tokio::test]
async fn cors_preflight_allowed() {
    use axum::body::Body;
    use axum::http::Request;
    use tower::ServiceExt;
    let dir = tempfile::tempdir().unwrap();
    let st = app(Vec::new(), BTreeMap::new(), &dir.path().join(ANNOTATION_LOG), &[]);
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/v1/annotations")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = qi_workbench::service::router(st).oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}
