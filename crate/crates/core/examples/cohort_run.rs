// Filtering a corpus and running it concurrently, with per-encounter
// failure isolation and on-disk outputs.
//
// ```bash
// cargo run --example cohort_run
// ```

use std::error::Error;

use qi_workbench::domain::Metric;
use qi_workbench::gateway::{Gateway, RetryPolicy};
use qi_workbench::pipeline::{load_results, run_cohort, CohortFilter, PipelineConfig};
use qi_workbench::synth::{synthesize, SynthConfig};

pub fn run() -> Result<(), Box<dyn Error>> {
    let mut s = synthesize(&SynthConfig::new(Metric::Los, 40, 2024))?;
    // one encounter whose mock reply will not parse
    s.corpus.bundles[5].notes[0].text.push_str("\n[[FACTOR|bad|x|high|q]]\n");

    let policy = RetryPolicy {
        max_concurrency: 8,
        ..RetryPolicy::default()
    };
    let out = run_cohort(
        &s.corpus,
        &CohortFilter::los_default(),
        &PipelineConfig::mock(Metric::Los),
        &Gateway::mock(),
        &policy,
    )?;
    println!("{:?}", out.summary);
    for (id, f) in &out.failures {
        println!("{id} failed at {:?}: {}", f.stage, f.error);
    }

    let dir = tempfile::tempdir()?;
    out.write_dir(dir.path())?;
    assert_eq!(load_results(dir.path())?.len(), out.summary.succeeded);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
