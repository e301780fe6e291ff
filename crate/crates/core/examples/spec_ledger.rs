// Versioned task specifications: round history, change heatmap, spec
// sheets, and the train/test holdout rule.
//
// ```bash
// cargo run --example spec_ledger
// ```

use std::collections::BTreeMap;
use std::error::Error;

use qi_workbench::eval::RaterTier;
use qi_workbench::ledger::{los_fixture, CaseOutcome, Ledger, Round, SpecKey, Split};

pub fn run() -> Result<(), Box<dyn Error>> {
    let history = los_fixture();
    print!("{}", history.heatmap()?.to_csv());
    println!("{}", history.spec_sheet(history.last_round().unwrap()));

    // a fresh ledger of our own
    let mut l = Ledger::new();
    l.record_round(Round {
        round_id: 1,
        changed: SpecKey::ALL.into_iter().map(|k| (k, format!("first draft of {}", k.title()))).collect(),
        annotator_tier: RaterTier::Low,
        notes: String::new(),
    })?;
    l.register_case("enc-a", Split::Train)?;
    l.register_case("enc-b", Split::Test)?;
    l.record_case_status("enc-a", 1, CaseOutcome::SemiWrong)?;
    let err = l.record_case_status("enc-b", 1, CaseOutcome::Correct).unwrap_err();
    println!("blocked: {err}");

    l.record_round(Round {
        round_id: 2,
        changed: BTreeMap::from([(SpecKey::PromptTuning, "ask for quotes per claim".to_string())]),
        annotator_tier: RaterTier::High,
        notes: "tightened evidence requirements".into(),
    })?;
    l.finalize()?;
    l.record_case_status("enc-a", 2, CaseOutcome::Correct)?;
    l.record_case_status("enc-b", 2, CaseOutcome::Correct)?;
    for (case, row) in l.grid() {
        println!("{case}: {row:?}");
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("ledger.jsonl");
    l.save(&path)?;
    assert_eq!(Ledger::load(&path)?, l);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
