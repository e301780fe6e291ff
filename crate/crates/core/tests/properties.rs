mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use qi_workbench::domain::{confidence_to_likert, BandMap, ConfidenceDecile, LikertScore, Metric};
use qi_workbench::eval::{
    agreement, ai_rater_pairs, calibrate, calibration_items, default_edges, AgreementKind, AgreementMode, Annotation,
    CalibrationItem, CiMethod, RaterTier, ScorePair,
};
use qi_workbench::gateway::{mock_extract, Gateway};
use qi_workbench::ledger::{CaseOutcome, Ledger, LedgerEvent, Round, SpecKey, Split};
use qi_workbench::pipeline::{run_cohort, CohortFilter, FactorRef, PipelineConfig, QuoteStatus};
use qi_workbench::prompt::Stage;
use qi_workbench::service::{AnnotationLog, ANNOTATION_LOG};
use qi_workbench::synth::{synthesize, SynthConfig};
use qi_workbench::themes::{self, assign, populate, propose_themes, tally};

fn likert() -> impl Strategy<Value = LikertScore> {
    (1i64..=5).prop_map(|v| LikertScore::new(v).unwrap())
}

fn decile() -> impl Strategy<Value = ConfidenceDecile> {
    (0i64..=10).prop_map(|d| ConfidenceDecile::new(d * 10).unwrap())
}

fn metric() -> impl Strategy<Value = Metric> {
    prop_oneof![Just(Metric::Los), Just(Metric::Readmission)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mock_pipeline_reproduces_truth(seed in any::<u64>(), m in metric(), n in 1usize..6, k in 1usize..5) {
        let s = synthesize(&SynthConfig::new(m, n, seed)).unwrap();
        let run = |k| run_cohort(&s.corpus, &CohortFilter::default(), &PipelineConfig::mock(m), &Gateway::mock(), &common::policy(k)).unwrap();
        let out = run(k);
        prop_assert!(out.failures.is_empty());
        for t in &s.truths {
            let r = &out.results[&t.encounter_id];
            prop_assert_eq!(r.gantt.events.len(), t.events.len());
            for (e, te) in r.gantt.events.iter().zip(&t.events) {
                prop_assert_eq!(&e.label, &te.label);
                prop_assert_eq!((e.start_time, e.end_time), (te.start_time, te.end_time));
            }
            let got: Vec<_> = r.scored_factors.iter().map(|f| (f.factor.reason.as_str(), f.confidence.value())).collect();
            let want: Vec<_> = t.factors.iter().map(|f| (f.reason.as_str(), ((f.raw_confidence as u32 + 5) / 10 * 10) as u8)).collect();
            prop_assert_eq!(got, want);
            prop_assert!(r.all_quote_checks().all(|c| c.status == QuoteStatus::Verified));
        }
        prop_assert_eq!(out.outcome(), run(1).outcome());
    }

    #[test]
    fn mock_extract_is_deterministic(seed in any::<u64>(), m in metric()) {
        let s = synthesize(&SynthConfig::new(m, 1, seed)).unwrap();
        let text: String = s.corpus.bundles[0].notes.iter().map(|n| n.text.as_str()).collect::<Vec<_>>().join("\n");
        for stage in Stage::ALL {
            prop_assert_eq!(mock_extract(stage, m, &text).unwrap(), mock_extract(stage, m, &text.clone()).unwrap());
        }
    }
}

proptest! {
    #[test]
    fn within_one_dominates_and_agreement_is_symmetric(raw in proptest::collection::vec((likert(), likert()), 1..80)) {
        let pairs: Vec<ScorePair> = raw.iter().enumerate().map(|(i, &(a, b))| ScorePair::new(a, b, format!("p{}", i % 9))).collect();
        let swapped: Vec<ScorePair> = raw.iter().enumerate().map(|(i, &(a, b))| ScorePair::new(b, a, format!("p{}", i % 9))).collect();
        let rate = |p: &[ScorePair], mode| agreement(p, mode, AgreementKind::InterRater, CiMethod::Analytic).unwrap();
        let (e, w) = (rate(&pairs, AgreementMode::Exact), rate(&pairs, AgreementMode::WithinOne));
        prop_assert!(w.rate >= e.rate);
        prop_assert!(e.ci_low <= e.rate && e.rate <= e.ci_high);
        prop_assert_eq!(&rate(&swapped, AgreementMode::Exact), &e);
        prop_assert_eq!(&rate(&swapped, AgreementMode::WithinOne), &w);
    }

    #[test]
    fn calibration_conserves_counts(items in proptest::collection::vec((decile(), likert(), 0u8..20), 1..150), m in metric()) {
        let items: Vec<CalibrationItem> = items
            .into_iter()
            .map(|(confidence, likert, p)| CalibrationItem { confidence, likert, encounter_id: format!("p{p}") })
            .collect();
        for ci in [CiMethod::Analytic, CiMethod::PatientBootstrap { draws: 50, seed: 1 }] {
            let bins = calibrate(&items, &default_edges(m), ci).unwrap();
            prop_assert_eq!(bins.iter().map(|b| b.n).sum::<usize>(), items.len());
            for b in &bins {
                prop_assert!(b.ci_low <= b.mean_likert && b.mean_likert <= b.ci_high);
                prop_assert!((1.0..=5.0).contains(&b.mean_likert));
            }
        }
    }

    #[test]
    fn banded_annotations_agree_perfectly(confs in proptest::collection::vec(decile(), 1..40)) {
        let bands = BandMap::default();
        let mut cases = common::mock_cases(Metric::Los, 1, 3, 0..=0);
        let case = cases.remove(0);
        let mut result = case.result;
        let template = common::mock_cases(Metric::Los, 1, 3, 1..=1).remove(0).result.scored_factors.remove(0);
        result.scored_factors = confs.iter().map(|&c| {
            let mut f = template.clone();
            f.confidence = c;
            f
        }).collect();
        let anns: Vec<Annotation> = confs.iter().enumerate().map(|(i, &c)| Annotation {
            annotation_id: uuid::Uuid::nil(),
            factor_ref: FactorRef { encounter_id: result.encounter_id.clone(), factor_index: i },
            rater_id: "r".into(),
            rater_tier: RaterTier::High,
            likert: confidence_to_likert(c, &bands),
            comment: None,
            round_id: 1,
            timestamp: chrono::DateTime::UNIX_EPOCH,
        }).collect();
        let results = BTreeMap::from([(result.encounter_id.clone(), result)]);
        let pairs = ai_rater_pairs(&results, &anns, &bands).unwrap();
        prop_assert_eq!(agreement(&pairs, AgreementMode::Exact, AgreementKind::AiRater, CiMethod::Analytic).unwrap().rate, 1.0);
        let edges: Vec<u8> = [0, 30, 50, 70, 90, 100].into();
        for b in calibrate(&calibration_items(&results, &anns).unwrap(), &edges, CiMethod::Analytic).unwrap() {
            let band = confidence_to_likert(ConfidenceDecile::new(i64::from(b.lo)).unwrap(), &bands);
            prop_assert_eq!(b.mean_likert, f64::from(band.value()));
        }
    }

    #[test]
    fn theme_tallies_conserve_and_ignore_order(
        raw in proptest::collection::vec((0u8..12, prop::sample::select(vec!["Bed wait", "bed  wait!", "late consult", "transport delay", "pending placement"])), 1..60),
        rot in any::<prop::sample::Index>(),
    ) {
        let factors: Vec<(FactorRef, String)> = raw.iter().enumerate()
            .map(|(i, (e, r))| (FactorRef { encounter_id: format!("e{e}"), factor_index: i }, r.to_string()))
            .collect();
        let run = |fs: &[(FactorRef, String)]| {
            let reasons: Vec<&str> = fs.iter().map(|(_, r)| r.as_str()).collect();
            let th = propose_themes(&reasons, &themes::Strategy::Exact).unwrap();
            tally(&populate(&th, &assign(fs, &th, &themes::Strategy::Exact).unwrap()))
        };
        let t = run(&factors);
        prop_assert_eq!(t.iter().map(|x| x.reasons).sum::<usize>(), factors.len());
        prop_assert!(t.iter().all(|x| x.encounters <= x.reasons));
        let mut rotated = factors.clone();
        rotated.rotate_left(rot.index(factors.len()));
        rotated.reverse();
        prop_assert_eq!(run(&rotated), t);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Round(Vec<usize>),
    Finalize,
    Case(u8, bool),
    Status(u8, u32),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => proptest::collection::vec(0usize..9, 0..4).prop_map(Op::Round),
        1 => Just(Op::Finalize),
        2 => (0u8..6, any::<bool>()).prop_map(|(c, t)| Op::Case(c, t)),
        4 => (0u8..6, 1u32..8).prop_map(|(c, r)| Op::Status(c, r)),
    ]
}

proptest! {
    #[test]
    fn ledger_replay_and_holdout(ops in proptest::collection::vec(op(), 0..40)) {
        let mut l = Ledger::new();
        l.record_round(Round {
            round_id: 1,
            changed: SpecKey::ALL.into_iter().map(|k| (k, format!("{} v1", k.as_str()))).collect(),
            annotator_tier: RaterTier::Low,
            notes: String::new(),
        }).unwrap();
        for o in ops {
            let ev = match o {
                Op::Round(keys) => LedgerEvent::Round(Round {
                    round_id: l.last_round().unwrap() + 1,
                    changed: keys.into_iter().map(|i| (SpecKey::ALL[i], format!("text {i}"))).collect(),
                    annotator_tier: RaterTier::Medium,
                    notes: String::new(),
                }),
                Op::Finalize => LedgerEvent::Finalize { round_id: l.last_round().unwrap() },
                Op::Case(c, test) => LedgerEvent::Case { case_id: format!("c{c}"), split: if test { Split::Test } else { Split::Train } },
                Op::Status(c, r) => LedgerEvent::CaseStatus { case_id: format!("c{c}"), round_id: r, status: CaseOutcome::Correct },
            };
            // rejected events leave no trace
            let before = l.clone();
            if l.apply(ev).is_err() {
                prop_assert_eq!(&l, &before);
            }
        }
        for (case, row) in l.grid() {
            if l.split_of(&case) == Some(Split::Test) {
                for (i, s) in row.iter().enumerate() {
                    let round = l.rounds()[i].round_id;
                    prop_assert!(*s == CaseOutcome::Unscored || l.finalized() == Some(round));
                }
            }
        }
        let again = Ledger::from_jsonl(&l.to_jsonl()).unwrap();
        prop_assert_eq!(again.current_spec(), l.current_spec());
        let h = l.heatmap().unwrap();
        prop_assert_eq!(again.heatmap().unwrap().to_csv(), h.to_csv());
        prop_assert_eq!(again.heatmap().unwrap().to_svg("t"), h.to_svg("t"));
    }

    #[test]
    fn torn_log_replays_complete_prefix(n in 1usize..8, cut_frac in 0.0f64..1.0) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ANNOTATION_LOG);
        let records: Vec<Annotation> = (0..n).map(|i| Annotation {
            annotation_id: uuid::Uuid::from_u128(i as u128),
            factor_ref: FactorRef { encounter_id: "e".into(), factor_index: i },
            rater_id: "r".into(),
            rater_tier: RaterTier::Low,
            likert: LikertScore::new(3).unwrap(),
            comment: None,
            round_id: 1,
            timestamp: chrono::DateTime::UNIX_EPOCH,
        }).collect();
        {
            let (mut log, _) = AnnotationLog::open(&path).unwrap();
            for r in &records {
                log.append(r).unwrap();
            }
        }
        let full = std::fs::read(&path).unwrap();
        let cut = (full.len() as f64 * cut_frac) as usize;
        std::fs::write(&path, &full[..cut]).unwrap();
        let complete = full[..cut].iter().filter(|b| **b == b'\n').count();
        let (_, replay) = AnnotationLog::open(&path).unwrap();
        prop_assert_eq!(&replay.annotations[..], &records[..complete]);
        let (_, again) = AnnotationLog::open(&path).unwrap();
        prop_assert_eq!(again.dropped_bytes, 0);
        prop_assert_eq!(again.annotations, replay.annotations);
    }
}
