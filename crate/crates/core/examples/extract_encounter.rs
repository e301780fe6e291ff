// One encounter through GANTT -> FACTORS -> SCORING on the mock backend.
//
// ```bash
// cargo run --example extract_encounter
// ```

use std::error::Error;

use qi_workbench::domain::{confidence_to_likert, BandMap, Metric};
use qi_workbench::gateway::{Gateway, RetryPolicy};
use qi_workbench::pipeline::{run_encounter, PipelineConfig};
use qi_workbench::synth::{synthesize, SynthConfig};

pub fn run() -> Result<(), Box<dyn Error>> {
    let mut cfg = SynthConfig::new(Metric::Los, 1, 3);
    cfg.factors_per_encounter = 3..=3;
    let s = synthesize(&cfg)?;
    let result = run_encounter(
        &s.corpus.bundles[0],
        &PipelineConfig::mock(Metric::Los),
        &Gateway::mock(),
        &RetryPolicy::default(),
    )?;

    println!("{}", result.gantt.index_admission_summary);
    for e in &result.gantt.events {
        println!("  [{}] {:<28} {} -> {}", e.event_id, e.label, e.start_time, e.end_time);
    }
    let bands = BandMap::default();
    for f in &result.scored_factors {
        println!(
            "  {:<36} conf {:>3} (likert {})  quotes {:?}",
            f.factor.reason,
            f.confidence.value(),
            confidence_to_likert(f.confidence, &bands).value(),
            f.quote_status
        );
    }
    for a in &result.audit {
        println!("  audit {:?} {} attempt {} -> {}", a.stage, a.template_id, a.attempt, a.validation.as_deref().unwrap_or("-"));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
