#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use qi_workbench::domain::Metric;
use qi_workbench::gateway::{Gateway, RetryPolicy};
use qi_workbench::ledger::Ledger;
use qi_workbench::pipeline::{run_cohort, CohortFilter, PipelineConfig};
use qi_workbench::service::{router, AppState, Case, RaterConfig, Store, Tokens};
use qi_workbench::synth::{synthesize, SynthConfig};
use serde_json::Value;
use tower::ServiceExt;

pub fn policy(k: usize) -> RetryPolicy {
    RetryPolicy {
        max_concurrency: k,
        ..RetryPolicy::default()
    }
}

/// Synthesizes `n` encounters and runs them through the mock pipeline.
pub fn mock_cases(metric: Metric, n: usize, seed: u64, factors: std::ops::RangeInclusive<usize>) -> Vec<Case> {
    let mut cfg = SynthConfig::new(metric, n, seed);
    cfg.factors_per_encounter = factors;
    let s = synthesize(&cfg).unwrap();
    let out = run_cohort(&s.corpus, &CohortFilter::default(), &PipelineConfig::mock(metric), &Gateway::mock(), &policy(4))
        .unwrap();
    s.corpus
        .bundles
        .into_iter()
        .map(|b| {
            let result = out.results[&b.encounter_id].clone();
            Case { bundle: b, result }
        })
        .collect()
}

pub fn tokens(raters: &[&str]) -> Tokens {
    Tokens(
        raters
            .iter()
            .map(|r| {
                (
                    format!("tok-{r}"),
                    RaterConfig {
                        rater_id: r.to_string(),
                        tier: None,
                        assigned: Vec::new(),
                    },
                )
            })
            .collect(),
    )
}

pub fn app(cases: Vec<Case>, ledgers: BTreeMap<Metric, Ledger>, log: &Path, raters: &[&str]) -> Arc<AppState> {
    let (store, _) = Store::new(cases, ledgers, log).unwrap();
    Arc::new(AppState {
        store,
        tokens: tokens(raters),
    })
}

pub async fn call(state: &Arc<AppState>, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

pub fn annotation(encounter: &str, idx: usize, rater: &str, likert: i64, round: u32) -> Value {
    serde_json::json!({
        "factor_ref": {"encounter_id": encounter, "factor_index": idx},
        "rater_id": rater,
        "rater_tier": "HIGH",
        "likert": likert,
        "round_id": round,
    })
}
