// Checking model-cited quotes against the source notes.
//
// ```bash
// cargo run --example verify_quotes
// ```

use std::error::Error;

use qi_workbench::domain::Metric;
use qi_workbench::pipeline::{aggregate_status, split_fragments, QuoteIndex};
use qi_workbench::synth::{synthesize, SynthConfig};

pub fn run() -> Result<(), Box<dyn Error>> {
    let mut cfg = SynthConfig::new(Metric::Los, 1, 9);
    cfg.factors_per_encounter = 1..=1;
    let s = synthesize(&cfg)?;
    let bundle = &s.corpus.bundles[0];
    let real = &s.truths[0].factors[0].quote;

    let index = QuoteIndex::new(bundle);
    let cited = format!("\"{real}\" ... \"{}\" ... \"never written anywhere\"", real.to_uppercase());
    println!("fragments: {:?}", split_fragments(&cited));
    let checks = index.verify(&cited);
    for c in &checks {
        match &c.anchor {
            Some(a) => {
                let text = &bundle.note(&a.note_id).unwrap().text;
                println!("{:?} {}[{}..{}] = {:?}", c.status, a.note_id, a.start, a.end, &text[a.start..a.end]);
            }
            None => println!("{:?} {:?}", c.status, c.fragment),
        }
    }
    println!("overall: {:?}", aggregate_status(&checks));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
