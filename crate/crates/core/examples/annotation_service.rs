// The reviewer API in-process: load a data directory, list cases, open one,
// post scores, and read back agreement and calibration.
//
// ```bash
// cargo run --example annotation_service
// ```

use std::collections::BTreeMap;
use std::error::Error;
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use qi_workbench::domain::Metric;
use qi_workbench::gateway::{Gateway, RetryPolicy};
use qi_workbench::pipeline::{run_cohort, CohortFilter, PipelineConfig};
use qi_workbench::service::{router, AppState, RaterConfig, Store, Tokens};
use qi_workbench::synth::{generate, SynthConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn send(state: &Arc<AppState>, req: Request<Body>) -> Result<(u16, Value), Box<dyn Error>> {
    let resp = router(state.clone()).oneshot(req).await?;
    let status = resp.status().as_u16();
    let body = resp.into_body().collect().await?.to_bytes();
    Ok((status, serde_json::from_slice(&body)?))
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(token: &str, body: Value) -> Request<Body> {
    Request::post("/v1/annotations")
        .header("authorization", format!("Bearer {token}"))
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let mut cfg = SynthConfig::new(Metric::Los, 3, 12);
    cfg.factors_per_encounter = 2..=2;
    let s = generate(&cfg, &dir.path().join("corpus"))?;
    run_cohort(&s.corpus, &CohortFilter::default(), &PipelineConfig::mock(Metric::Los), &Gateway::mock(), &RetryPolicy::default())?
        .write_dir(dir.path())?;

    let (store, _) = Store::open(dir.path())?;
    let rater = |id: &str| RaterConfig {
        rater_id: id.into(),
        tier: None,
        assigned: Vec::new(),
    };
    let state = Arc::new(AppState {
        store,
        tokens: Tokens(BTreeMap::from([("t-ana".into(), rater("ana")), ("t-ben".into(), rater("ben"))])),
    });

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let (_, page) = send(&state, get("/v1/cases?metric=LOS")).await?;
        println!("{} cases", page["total"]);
        let (_, case) = send(&state, get("/v1/cases/los-0001")).await?;
        for f in case["scored_factors"].as_array().unwrap() {
            println!("  {} ({}): {}", f["factor"]["reason"], f["confidence"], f["quote_status"]);
        }
        for (token, rater, scores) in [("t-ana", "ana", [4, 2]), ("t-ben", "ben", [4, 3])] {
            for (i, likert) in scores.into_iter().enumerate() {
                let body = json!({
                    "factor_ref": {"encounter_id": "los-0001", "factor_index": i},
                    "rater_id": rater, "rater_tier": "HIGH", "likert": likert, "round_id": 1,
                });
                let (status, _) = send(&state, post(token, body)).await?;
                assert_eq!(status, 201);
            }
        }
        let bad = json!({
            "factor_ref": {"encounter_id": "los-0001", "factor_index": 0},
            "rater_id": "ana", "rater_tier": "HIGH", "likert": 6, "round_id": 1,
        });
        let (status, err) = send(&state, post("t-ana", bad)).await?;
        println!("likert 6 -> {status} {}", err["message"]);

        let (_, m) = send(&state, get("/v1/metrics?metric=LOS&round=1")).await?;
        for r in m["agreement"].as_array().unwrap() {
            println!("  {} {} rate {} over {} pairs", r["kind"], r["mode"], r["rate"], r["n_pairs"]);
        }
        Ok::<_, Box<dyn Error>>(())
    })?;
    println!("log holds {} records", state.store.log_len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
