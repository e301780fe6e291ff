// Does a higher model confidence mean a higher reviewer score?
//
// ```bash
// cargo run --example calibration > /dev/null   # writes calibration.svg to a temp dir
// ```

use std::error::Error;

use qi_workbench::domain::{confidence_to_likert, BandMap, ConfidenceDecile, LikertScore, Metric};
use qi_workbench::eval::{calibrate, calibration_csv, calibration_svg, default_edges, CalibrationItem, CiMethod};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<(), Box<dyn Error>> {
    let bands = BandMap::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // a reviewer who mostly agrees with the model, give or take one point
    let items: Vec<CalibrationItem> = (0..300)
        .map(|i| {
            let confidence = ConfidenceDecile::new(rng.random_range(0..=10) * 10).unwrap();
            let ai = confidence_to_likert(confidence, &bands).value() as i64;
            let likert = LikertScore::new((ai + rng.random_range(-1..=1)).clamp(1, 5)).unwrap();
            CalibrationItem {
                confidence,
                likert,
                encounter_id: format!("p{}", i % 60),
            }
        })
        .collect();

    for metric in Metric::all() {
        let bins = calibrate(&items, &default_edges(metric), CiMethod::Analytic)?;
        println!("{metric}");
        print!("{}", calibration_csv(&bins));
        let dir = tempfile::tempdir()?;
        std::fs::write(dir.path().join("calibration.svg"), calibration_svg(&bins, &format!("{metric} calibration")))?;
    }
    let clustered = calibrate(&items, &default_edges(Metric::Los), CiMethod::bootstrap())?;
    println!("bootstrap, first bin: {:?}", clustered[0]);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
