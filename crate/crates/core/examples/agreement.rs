// Exact and within-one agreement with Wilson and patient-clustered
// bootstrap intervals.
//
// ```bash
// cargo run --example agreement
// ```

use std::error::Error;

use qi_workbench::domain::LikertScore;
use qi_workbench::eval::{agreement, agreement_csv, wilson, AgreementKind, AgreementMode, CiMethod, ScorePair};

fn pair(a: i64, b: i64, patient: &str) -> ScorePair {
    ScorePair::new(LikertScore::new(a).unwrap(), LikertScore::new(b).unwrap(), patient)
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let pairs = vec![
        pair(3, 3, "p1"),
        pair(2, 4, "p1"),
        pair(5, 5, "p2"),
        pair(1, 2, "p3"),
        pair(4, 3, "p3"),
        pair(4, 4, "p4"),
    ];
    let mut reports = Vec::new();
    for ci in [CiMethod::Analytic, CiMethod::bootstrap()] {
        for mode in [AgreementMode::Exact, AgreementMode::WithinOne] {
            reports.push(agreement(&pairs, mode, AgreementKind::InterRater, ci)?);
        }
    }
    print!("{}", agreement_csv(&reports));

    for (k, n) in [(0, 10), (5, 10), (10, 10)] {
        let (lo, hi) = wilson(k, n)?;
        println!("wilson {k}/{n}: [{lo:.4}, {hi:.4}]");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
