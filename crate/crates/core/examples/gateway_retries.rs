// Retry with exponential backoff, attempt logs, and choosing a live backend
// from the environment.
//
// ```bash
// cargo run --example gateway_retries
// OPENAI_API_KEY=... cargo run --example gateway_retries -- live:gpt-4o
// ```

use std::error::Error;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use qi_workbench::gateway::{gateway_from_spec, BackendError, CompletionRequest, Gateway, RetryPolicy};

pub fn run() -> Result<(), Box<dyn Error>> {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let flaky = move |_: &CompletionRequest| {
        if c.fetch_add(1, Ordering::SeqCst) < 2 {
            Err(BackendError::Status {
                status: 429,
                body: "slow down".into(),
            })
        } else {
            Ok("{\"ok\": true}".to_string())
        }
    };
    // record the waits instead of sleeping through them
    let gw = Gateway::new().with_fallback(Arc::new(flaky)).with_sleeper(|_| {});
    let policy = RetryPolicy {
        max_attempts: 3,
        base_backoff: Duration::from_secs(10),
        backoff_multiplier: 2.0,
        max_concurrency: 1,
    };
    let done = gw.complete(&CompletionRequest::new("any-model", "hello"), &policy)?;
    println!("{} after {} attempts, backoffs {:?}", done.text, done.attempts, done.backoffs);
    for a in &done.log {
        println!("  attempt {}: {}", a.attempt, a.error.as_deref().unwrap_or("ok"));
    }

    // a fatal error is not retried
    let gw = Gateway::new().with_fallback(Arc::new(|_: &CompletionRequest| Err::<String, _>(BackendError::Fatal("bad key".into()))));
    let err = gw.complete(&CompletionRequest::new("m", "p"), &policy).unwrap_err();
    println!("fatal: {err} ({} attempt)", err.attempt_log().len());

    if let Some(spec) = std::env::args().nth(1) {
        let (gw, model) = gateway_from_spec(&spec)?;
        let reply = gw.complete(&CompletionRequest::new(model, "Reply with the word ready."), &RetryPolicy::default())?;
        println!("live: {}", reply.text);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
