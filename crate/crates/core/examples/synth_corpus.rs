// Deterministic synthetic corpus with ground-truth sidecars.
//
// ```bash
// cargo run --example synth_corpus
// ```

use std::error::Error;

use qi_workbench::corpus::Corpus;
use qi_workbench::domain::Metric;
use qi_workbench::synth::{generate, load_truth, synthesize, SynthConfig};

pub fn run() -> Result<(), Box<dyn Error>> {
    let cfg = SynthConfig::new(Metric::Readmission, 5, 42);
    let dir = tempfile::tempdir()?;
    let written = generate(&cfg, dir.path())?;

    // same seed, same bytes
    assert_eq!(synthesize(&cfg)?, written);

    let corpus = Corpus::load_dir(dir.path())?;
    assert!(corpus.validate().is_empty());
    let truth = load_truth(dir.path())?;
    for b in &corpus.bundles {
        let t = &truth[&b.encounter_id];
        println!(
            "{} {:<10} age {:>2}  {} notes, {} linked encounters, truth: {} events / {} factors",
            b.encounter_id,
            b.cohort.drg_or_dx_group,
            b.cohort.age_years,
            b.notes.len(),
            b.linked_encounters.len(),
            t.events.len(),
            t.factors.len()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
