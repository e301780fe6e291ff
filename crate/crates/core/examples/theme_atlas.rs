// Grouping free-text factor reasons into themes and tallying them, with the
// exact-match strategy and a model-backed one.
//
// ```bash
// cargo run --example theme_atlas
// ```

use std::collections::BTreeMap;
use std::error::Error;
use std::sync::Arc;

use qi_workbench::domain::Metric;
use qi_workbench::gateway::{CompletionRequest, Gateway, RetryPolicy};
use qi_workbench::pipeline::{run_cohort, CohortFilter, PipelineConfig};
use qi_workbench::synth::{synthesize, SynthConfig};
use qi_workbench::themes::{assign, collect_factors, populate, propose_themes, tally, tally_csv, LeanLookup, LlmStrategy, Strategy};

pub fn run() -> Result<(), Box<dyn Error>> {
    let s = synthesize(&SynthConfig::new(Metric::Los, 25, 77))?;
    let out = run_cohort(&s.corpus, &CohortFilter::default(), &PipelineConfig::mock(Metric::Los), &Gateway::mock(), &RetryPolicy::default())?;
    let factors = collect_factors(&out.results);
    let reasons: Vec<&str> = factors.iter().map(|(_, r)| r.as_str()).collect();

    let themes = propose_themes(&reasons, &Strategy::Exact)?;
    let mut themes = populate(&themes, &assign(&factors, &themes, &Strategy::Exact)?);
    LeanLookup(BTreeMap::from([("awaiting mri availability".into(), "Waiting".into())])).apply(&mut themes);
    print!("{}", tally_csv(&tally(&themes)));

    // a stand-in model that buckets everything about waiting together
    let model = |req: &CompletionRequest| {
        let p = &req.prompt;
        Ok(if p.contains("Reply with JSON only: {\"themes\"") {
            r#"{"themes": ["Waiting on resources", "Care coordination"]}"#.to_string()
        } else if p.lines().any(|l| l.starts_with("Factor:") && (l.contains("awaiting") || l.contains("waiting") || l.contains("delayed"))) {
            r#"{"theme": "Waiting on resources"}"#.to_string()
        } else {
            r#"{"theme": "Care coordination"}"#.to_string()
        })
    };
    let gw = Gateway::new().with_fallback(Arc::new(model));
    let llm = Strategy::Llm(LlmStrategy {
        gateway: &gw,
        model_id: "stand-in".into(),
        policy: RetryPolicy::default(),
        max_themes: 10,
    });
    let themes = propose_themes(&reasons, &llm)?;
    let themes = populate(&themes, &assign(&factors, &themes, &llm)?);
    print!("{}", tally_csv(&tally(&themes)));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
