//! Seeded synthetic corpora whose notes carry marker lines, plus a sidecar
//! ground-truth document per encounter.
//!
//! Every marker sits on its own line and is followed by distractor prose
//! that repeats the marker's quote verbatim, so quote verification has real
//! text to find. Markers are placed only in notes the metric's final input
//! spec selects, in chronological order, so the sidecar order equals the
//! order the pipeline sees them.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{create_dir, read_json, write_json, Corpus, CorpusError};
use crate::domain::{
    ClinicalNote, CohortMeta, EncounterBundle, EncounterRelation, LinkedEncounter, Metric, NoteType,
    BUNDLE_SCHEMA_VERSION,
};
use crate::markers::{EventMarker, FactorMarker};
use crate::pipeline::{gantt_time, LOS_GROUPS, MAX_FACTORS, READMISSION_GROUPS};
use crate::prompt::InputSpec;

pub const TRUTH_DIR: &str = "truth";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub metric: Metric,
    pub n_encounters: usize,
    pub events_per_encounter: RangeInclusive<usize>,
    pub factors_per_encounter: RangeInclusive<usize>,
    pub seed: u64,
    /// Reason names factors are drawn from (without replacement per encounter).
    pub theme_vocabulary: Vec<String>,
}

impl SynthConfig {
    pub fn new(metric: Metric, n_encounters: usize, seed: u64) -> Self {
        let vocab: &[&str] = match metric {
            Metric::Los => &LOS_VOCABULARY,
            Metric::Readmission => &READMISSION_VOCABULARY,
        };
        Self {
            metric,
            n_encounters,
            events_per_encounter: 2..=6,
            factors_per_encounter: 0..=5,
            seed,
            theme_vocabulary: vocab.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_encounters == 0 {
            return bad("n_encounters must be >= 1".into());
        }
        if self.events_per_encounter.is_empty() {
            return bad("events_per_encounter is an empty range".into());
        }
        if self.factors_per_encounter.is_empty() || *self.factors_per_encounter.end() > MAX_FACTORS {
            return bad(format!("factors_per_encounter must lie within 0..={MAX_FACTORS}"));
        }
        if self.theme_vocabulary.len() < *self.factors_per_encounter.end() {
            return bad(format!(
                "theme_vocabulary has {} reasons but up to {} are drawn per encounter",
                self.theme_vocabulary.len(),
                self.factors_per_encounter.end()
            ));
        }
        if let Some(r) = self
            .theme_vocabulary
            .iter()
            .find(|r| r.trim().is_empty() || r.contains('|') || r.contains("]]") || r.contains('\n'))
        {
            return bad(format!("reason {r:?} cannot be embedded in a marker"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub label: String,
    pub category: String,
    #[serde(with = "gantt_time")]
    pub start_time: NaiveDateTime,
    #[serde(with = "gantt_time")]
    pub end_time: NaiveDateTime,
    pub quote: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthFactor {
    pub reason: String,
    pub category: String,
    /// Confidence written into the marker, before decile rounding.
    pub raw_confidence: u8,
    pub quote: String,
}

/// What the markers of one encounter encode, in pipeline order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub encounter_id: String,
    pub metric: Metric,
    pub events: Vec<TruthEvent>,
    pub factors: Vec<TruthFactor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub truths: Vec<GroundTruth>,
}

/// Builds the corpus in memory. Equal configs give equal output.
pub fn synthesize(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut bundles = Vec::with_capacity(config.n_encounters);
    let mut truths = Vec::with_capacity(config.n_encounters);
    for i in 0..config.n_encounters {
        let id = format!("{}-{:04}", config.metric.slug(), i + 1);
        let (b, t) = encounter(&mut rng, config, id);
        bundles.push(b);
        truths.push(t);
    }
    Ok(SynthCorpus {
        corpus: Corpus::new(bundles)?,
        truths,
    })
}

/// Synthesizes and writes the corpus to `dir`, with `truth/{id}.json`
/// sidecars.
pub fn generate(config: &SynthConfig, dir: &Path) -> Result<SynthCorpus, SynthError> {
    let out = synthesize(config)?;
    out.corpus.write_dir(dir)?;
    let truth_dir = dir.join(TRUTH_DIR);
    create_dir(&truth_dir)?;
    for t in &out.truths {
        write_json(&truth_dir.join(format!("{}.json", t.encounter_id)), t)?;
    }
    Ok(out)
}

/// Reads every sidecar listed in the corpus manifest under `dir`.
pub fn load_truth(dir: &Path) -> Result<BTreeMap<String, GroundTruth>, SynthError> {
    let corpus = Corpus::load_dir(dir)?;
    let mut out = BTreeMap::new();
    for b in &corpus.bundles {
        let t: GroundTruth = read_json(&dir.join(TRUTH_DIR).join(format!("{}.json", b.encounter_id)))?;
        out.insert(b.encounter_id.clone(), t);
    }
    Ok(out)
}

pub const LOS_VOCABULARY: [&str; 12] = [
    "delayed skilled nursing facility placement",
    "late social work consult",
    "awaiting MRI availability",
    "delayed specialty consult response",
    "pending insurance authorization",
    "late physical therapy evaluation",
    "awaiting operating room time",
    "delayed echocardiogram read",
    "conservatorship paperwork delay",
    "waiting for IV antibiotic plan",
    "late discharge medication reconciliation",
    "transport scheduling delay",
];

pub const READMISSION_VOCABULARY: [&str; 12] = [
    "no follow-up appointment scheduled",
    "medication access barrier after discharge",
    "incomplete discharge education",
    "missed outpatient diuretic titration",
    "home oxygen not arranged",
    "unaddressed housing instability",
    "pending lab results not followed",
    "no primary care provider assigned",
    "inhaler technique not reviewed",
    "early discharge before clinical stability",
    "missed cardiology referral",
    "substance use relapse without support",
];

const EVENT_KINDS: [(&str, &str); 10] = [
    ("Initial workup", "admission"),
    ("IV antibiotics", "treatment"),
    ("Imaging", "procedure"),
    ("Waiting for consult", "waiting"),
    ("Placement coordination", "coordination"),
    ("Discharge planning", "discharge_planning"),
    ("Wound debridement", "procedure"),
    ("Awaiting bed", "waiting"),
    ("Rehab evaluation", "treatment"),
    ("Discharge", "discharge"),
];

const FACTOR_CATEGORIES: [&str; 5] = ["operational", "social", "clinical", "coordination", "access"];

const FILLER: [&str; 12] = [
    "Vitals reviewed and stable overnight.",
    "Patient seen and examined at bedside.",
    "Tolerating diet without nausea.",
    "Labs reviewed with the team this morning.",
    "Pain controlled on current regimen.",
    "Family updated by phone.",
    "No acute events reported by nursing.",
    "Ambulating in hallway with assistance.",
    "Plan discussed with attending.",
    "Afebrile for the past day.",
    "Remains on room air.",
    "Continue current management.",
];

fn filler(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| *FILLER.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

struct NoteSlot {
    note_type: NoteType,
    role: &'static str,
    encounter: Option<String>,
    timestamp: NaiveDateTime,
    selected: bool,
    markers: Vec<String>,
}

fn encounter(rng: &mut ChaCha8Rng, cfg: &SynthConfig, id: String) -> (EncounterBundle, GroundTruth) {
    let base = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let admit = base + Duration::days(rng.random_range(0..330)) + Duration::minutes(rng.random_range(0..1440));
    let los_minutes: i64 = rng.random_range(4 * 1440..=20 * 1440);
    let discharge = admit + Duration::minutes(los_minutes);
    let groups: &[&str] = match cfg.metric {
        Metric::Los => &LOS_GROUPS,
        Metric::Readmission => &READMISSION_GROUPS,
    };
    let cohort = CohortMeta {
        drg_or_dx_group: groups.choose(rng).unwrap().to_string(),
        los_days: los_minutes as f64 / 1440.0,
        admit_time: admit,
        discharge_time: discharge,
        age_years: rng.random_range(18..=95),
    };

    // Note skeleton, strictly increasing timestamps.
    use NoteType::*;
    let mut plan: Vec<(NoteType, &'static str, Option<String>)> = vec![(Admission, "ED physician", None), (Hp, "Hospitalist", None)];
    let progress = rng.random_range(2..=5);
    for _ in 0..progress {
        let t = *[Consult, Other, OrderEvent, CarePlan].choose(rng).unwrap();
        plan.push((t, if t == Consult { "Consultant" } else { "Hospitalist" }, None));
    }
    plan.push((DischargeSummary, "Hospitalist", None));
    plan.push((DischargeInstructions, "Nurse", None));
    let mut linked = Vec::new();
    if cfg.metric == Metric::Readmission {
        let op = format!("{id}-OP1");
        let re = format!("{id}-R1");
        plan.push((Outpatient, "Primary care", Some(op.clone())));
        plan.push((EdProvider, "ED physician", Some(re.clone())));
        plan.push((Hp, "Hospitalist", Some(re.clone())));
        plan.push((DischargeSummary, "Hospitalist", Some(re.clone())));
        linked.push(LinkedEncounter {
            encounter_id: op,
            relation: EncounterRelation::Outpatient,
        });
        linked.push(LinkedEncounter {
            encounter_id: re,
            relation: EncounterRelation::Readmission,
        });
    }
    let spec = InputSpec::final_for(cfg.metric);
    let index_notes = plan.iter().filter(|p| p.2.is_none()).count();
    let step = (los_minutes / (index_notes as i64 + 1)).max(1);
    let mut slots: Vec<NoteSlot> = plan
        .into_iter()
        .enumerate()
        .map(|(k, (note_type, role, encounter))| {
            let timestamp = if k < index_notes {
                admit + Duration::minutes(step * k as i64 + rng.random_range(0..step.min(60)))
            } else {
                discharge + Duration::days(3 * (k - index_notes) as i64 + 2) + Duration::minutes(rng.random_range(0..600))
            };
            let relation = match &encounter {
                None => EncounterRelation::Index,
                Some(e) if e.ends_with("-OP1") => EncounterRelation::Outpatient,
                Some(_) => EncounterRelation::Readmission,
            };
            NoteSlot {
                note_type,
                role,
                encounter,
                timestamp,
                selected: spec.includes(relation, note_type),
                markers: Vec::new(),
            }
        })
        .collect();
    let selected: Vec<usize> = (0..slots.len()).filter(|&k| slots[k].selected).collect();
    let span_end = slots.last().unwrap().timestamp;

    // Events: chronological placement across selected notes.
    let n_events = rng.random_range(cfg.events_per_encounter.clone());
    let mut event_slots: Vec<usize> = (0..n_events).map(|_| *selected.choose(rng).unwrap()).collect();
    event_slots.sort_unstable();
    let mut events = Vec::with_capacity(n_events);
    for (j, &slot) in event_slots.iter().enumerate() {
        let (label, category) = *EVENT_KINDS.choose(rng).unwrap();
        let total = (span_end - admit).num_minutes().max(1);
        let start = admit + Duration::minutes(rng.random_range(0..total));
        let end = (start + Duration::minutes(rng.random_range(30..=4 * 1440))).min(span_end.max(start));
        let quote = format!("{} started {} per team (item {})", label, start.format("%m/%d"), j + 1);
        let m = EventMarker {
            label: label.to_string(),
            category: category.to_string(),
            start: start.format(gantt_time::FORMAT).to_string(),
            end: end.format(gantt_time::FORMAT).to_string(),
            quote: quote.clone(),
        };
        slots[slot].markers.push(format!("{}\n{} {}.", m.to_line(), filler(rng, 1), quote));
        events.push(TruthEvent {
            label: m.label,
            category: m.category,
            start_time: start,
            end_time: end,
            quote,
        });
    }

    // Factors: distinct reasons, also in note order. Placed after events of
    // the same note; order between kinds is irrelevant to the pipeline.
    let n_factors = rng.random_range(cfg.factors_per_encounter.clone());
    let reasons: Vec<&String> = cfg.theme_vocabulary.choose_multiple(rng, n_factors).collect();
    let mut factor_slots: Vec<usize> = (0..n_factors).map(|_| *selected.choose(rng).unwrap()).collect();
    factor_slots.sort_unstable();
    let mut factors = Vec::with_capacity(n_factors);
    for (reason, &slot) in reasons.into_iter().zip(&factor_slots) {
        let raw_confidence: u8 = rng.random_range(0..=100);
        let quote = format!("documented: {reason}");
        let m = FactorMarker {
            reason: reason.clone(),
            category: FACTOR_CATEGORIES.choose(rng).unwrap().to_string(),
            confidence: raw_confidence,
            quote: quote.clone(),
        };
        slots[slot].markers.push(format!("{}\nTeam note {}. {}", m.to_line(), quote, filler(rng, 1)));
        factors.push(TruthFactor {
            reason: m.reason,
            category: m.category,
            raw_confidence,
            quote,
        });
    }

    let notes = slots
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            let mut text = filler(rng, 2);
            for m in &s.markers {
                text.push('\n');
                text.push_str(m);
            }
            text.push('\n');
            text.push_str(&filler(rng, 1));
            text.push('\n');
            ClinicalNote {
                note_id: format!("{id}-N{:02}", k + 1),
                note_type: s.note_type,
                author_role: s.role.to_string(),
                timestamp: s.timestamp,
                text,
                encounter_id: s.encounter,
            }
        })
        .collect();

    let bundle = EncounterBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        encounter_id: id.clone(),
        metric: cfg.metric,
        cohort,
        notes,
        linked_encounters: linked,
    };
    let truth = GroundTruth {
        encounter_id: id,
        metric: cfg.metric,
        events,
        factors,
    };
    (bundle, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_bundle;
    use crate::markers::parse_markers;
    use crate::prompt::assemble_note_context;

    #[test]
    fn bundles_valid_and_truth_matches_markers_in_context() {
        for metric in Metric::all() {
            let out = synthesize(&SynthConfig::new(metric, 25, 3)).unwrap();
            for (b, t) in out.corpus.bundles.iter().zip(&out.truths) {
                assert!(validate_bundle(b).is_empty(), "{:?}", validate_bundle(b));
                let ctx = assemble_note_context(b, &InputSpec::final_for(metric)).unwrap();
                let m = parse_markers(&ctx).unwrap();
                assert_eq!(m.events.iter().map(|e| &e.label).collect::<Vec<_>>(), t.events.iter().map(|e| &e.label).collect::<Vec<_>>());
                assert_eq!(m.factors.iter().map(|f| &f.reason).collect::<Vec<_>>(), t.factors.iter().map(|f| &f.reason).collect::<Vec<_>>());
                // every marker in the bundle is visible to the pipeline
                let all: usize = b.notes.iter().map(|n| parse_markers(&n.text).unwrap().events.len()).sum();
                assert_eq!(all, t.events.len());
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = synthesize(&SynthConfig::new(Metric::Los, 10, 7)).unwrap();
        let b = synthesize(&SynthConfig::new(Metric::Los, 10, 7)).unwrap();
        assert_eq!(a, b);
        let c = synthesize(&SynthConfig::new(Metric::Los, 10, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_factor_range() {
        let mut cfg = SynthConfig::new(Metric::Readmission, 20, 1);
        cfg.factors_per_encounter = 0..=0;
        assert!(synthesize(&cfg).unwrap().truths.iter().all(|t| t.factors.is_empty()));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = SynthConfig::new(Metric::Los, 5, 1);
        cfg.factors_per_encounter = 0..=6;
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::new(Metric::Los, 5, 1);
        cfg.theme_vocabulary = vec!["a|b".into(); 5];
        assert!(cfg.validate().is_err());
        assert!(SynthConfig::new(Metric::Los, 0, 1).validate().is_err());
    }
}
