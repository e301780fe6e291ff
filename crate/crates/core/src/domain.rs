//! Core value types shared by every stage of the workbench: encounter bundles,
//! clinical notes, confidence deciles, Likert scores and the band map that
//! puts the two scales side by side.
//!
//! All types are plain immutable values (`Send + Sync`) and serialize to the
//! JSON layout used on disk for corpora.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current on-disk schema version for [`EncounterBundle`] documents.
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

/// Tolerance, in days, between `los_days` and the admit/discharge span.
pub const LOS_TOLERANCE_DAYS: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("value {value} out of range for {what} (expected {expected})")]
    Range {
        what: &'static str,
        value: i64,
        expected: &'static str,
    },
    #[error("invalid band map: {0}")]
    BandConfig(String),
    #[error("unknown {what}: {value:?}")]
    Unknown { what: &'static str, value: String },
}

/// Quality metric a pipeline is tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Metric {
    Los,
    Readmission,
}

impl Metric {
    /// Short name used in file names and CLI flags (`los`, `readm`).
    pub fn slug(self) -> &'static str {
        match self {
            Metric::Los => "los",
            Metric::Readmission => "readm",
        }
    }

    pub fn all() -> [Metric; 2] {
        [Metric::Los, Metric::Readmission]
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Los => "LOS",
            Metric::Readmission => "READMISSION",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "los" => Ok(Metric::Los),
            "readm" | "readmission" => Ok(Metric::Readmission),
            _ => Err(DomainError::Unknown {
                what: "metric",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NoteType {
    Admission,
    Hp,
    Consult,
    Outpatient,
    DischargeSummary,
    DischargeInstructions,
    EdProvider,
    CarePlan,
    OrderEvent,
    Other,
}

impl NoteType {
    pub const ALL: [NoteType; 10] = [
        NoteType::Admission,
        NoteType::Hp,
        NoteType::Consult,
        NoteType::Outpatient,
        NoteType::DischargeSummary,
        NoteType::DischargeInstructions,
        NoteType::EdProvider,
        NoteType::CarePlan,
        NoteType::OrderEvent,
        NoteType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoteType::Admission => "ADMISSION",
            NoteType::Hp => "HP",
            NoteType::Consult => "CONSULT",
            NoteType::Outpatient => "OUTPATIENT",
            NoteType::DischargeSummary => "DISCHARGE_SUMMARY",
            NoteType::DischargeInstructions => "DISCHARGE_INSTRUCTIONS",
            NoteType::EdProvider => "ED_PROVIDER",
            NoteType::CarePlan => "CARE_PLAN",
            NoteType::OrderEvent => "ORDER_EVENT",
            NoteType::Other => "OTHER",
        }
    }
}

impl fmt::Display for NoteType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a linked encounter relates to the bundle's index encounter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EncounterRelation {
    Index,
    Outpatient,
    Readmission,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedEncounter {
    pub encounter_id: String,
    pub relation: EncounterRelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMeta {
    pub drg_or_dx_group: String,
    pub los_days: f64,
    pub admit_time: NaiveDateTime,
    pub discharge_time: NaiveDateTime,
    pub age_years: u32,
}

impl CohortMeta {
    /// Admit-to-discharge span in fractional days.
    pub fn span_days(&self) -> f64 {
        (self.discharge_time - self.admit_time).num_seconds() as f64 / 86_400.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub note_id: String,
    pub note_type: NoteType,
    pub author_role: String,
    pub timestamp: NaiveDateTime,
    pub text: String,
    /// Encounter the note was written in. `None` means the bundle's own
    /// (index) encounter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encounter_id: Option<String>,
}

/// One patient case: cohort metadata plus the ordered clinical notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterBundle {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub encounter_id: String,
    pub metric: Metric,
    pub cohort: CohortMeta,
    pub notes: Vec<ClinicalNote>,
    #[serde(default)]
    pub linked_encounters: Vec<LinkedEncounter>,
}

fn default_schema_version() -> u32 {
    BUNDLE_SCHEMA_VERSION
}

impl EncounterBundle {
    /// Relation of the encounter a note belongs to.
    pub fn relation_of(&self, note: &ClinicalNote) -> Option<EncounterRelation> {
        match note.encounter_id.as_deref() {
            None => Some(EncounterRelation::Index),
            Some(id) if id == self.encounter_id => Some(EncounterRelation::Index),
            Some(id) => self
                .linked_encounters
                .iter()
                .find(|l| l.encounter_id == id)
                .map(|l| l.relation),
        }
    }

    pub fn note(&self, note_id: &str) -> Option<&ClinicalNote> {
        self.notes.iter().find(|n| n.note_id == note_id)
    }
}

/// One broken invariant found by [`validate_bundle`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
    pub value: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: &str, value: impl fmt::Display) -> Self {
        Self {
            field: field.into(),
            rule: rule.to_string(),
            value: value.to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violates {} (value: {})", self.field, self.rule, self.value)
    }
}

/// Checks every bundle invariant. Violations are data: an empty list means the
/// bundle is valid.
pub fn validate_bundle(bundle: &EncounterBundle) -> Vec<Violation> {
    let mut out = Vec::new();

    if bundle.encounter_id.trim().is_empty() {
        out.push(Violation::new("encounter_id", "nonempty", "\"\""));
    }
    if bundle.notes.is_empty() {
        out.push(Violation::new("notes", "nonempty", 0));
    }

    let cohort = &bundle.cohort;
    if !cohort.los_days.is_finite() || cohort.los_days < 0.0 {
        out.push(Violation::new("cohort.los_days", "nonnegative", cohort.los_days));
    }
    if cohort.discharge_time < cohort.admit_time {
        out.push(Violation::new(
            "cohort.discharge_time",
            "after_admit",
            cohort.discharge_time,
        ));
    } else if (cohort.los_days - cohort.span_days()).abs() > LOS_TOLERANCE_DAYS {
        out.push(Violation::new("cohort.los_days", "consistency", cohort.los_days));
    }

    match bundle.metric {
        Metric::Los if !bundle.linked_encounters.is_empty() => out.push(Violation::new(
            "linked_encounters",
            "empty_for_los",
            bundle.linked_encounters.len(),
        )),
        _ => {}
    }

    let mut seen_ids = HashSet::new();
    let mut last_ts: BTreeMap<Option<&str>, NaiveDateTime> = BTreeMap::new();
    for (i, note) in bundle.notes.iter().enumerate() {
        if !seen_ids.insert(note.note_id.as_str()) {
            out.push(Violation::new(format!("notes[{i}].note_id"), "unique", &note.note_id));
        }
        if note.text.is_empty() {
            out.push(Violation::new(format!("notes[{i}].text"), "nonempty", "\"\""));
        }
        if bundle.relation_of(note).is_none() {
            out.push(Violation::new(
                format!("notes[{i}].encounter_id"),
                "resolves",
                note.encounter_id.as_deref().unwrap_or_default(),
            ));
        }
        let key = match note.encounter_id.as_deref() {
            Some(id) if id != bundle.encounter_id => Some(id),
            _ => None,
        };
        if let Some(prev) = last_ts.get(&key) {
            if note.timestamp < *prev {
                out.push(Violation::new(
                    format!("notes[{i}].timestamp"),
                    "non_decreasing",
                    note.timestamp,
                ));
            }
        }
        last_ts.insert(key, note.timestamp);
    }

    out
}

/// Pipeline confidence rounded to a multiple of ten, 0..=100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct ConfidenceDecile(u8);

impl ConfidenceDecile {
    pub fn new(value: i64) -> Result<Self, DomainError> {
        if (0..=100).contains(&value) && value % 10 == 0 {
            Ok(Self(value as u8))
        } else {
            Err(DomainError::Range {
                what: "confidence decile",
                value,
                expected: "a multiple of 10 in 0..=100",
            })
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for ConfidenceDecile {
    type Error = DomainError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ConfidenceDecile> for u8 {
    fn from(c: ConfidenceDecile) -> u8 {
        c.0
    }
}

impl fmt::Display for ConfidenceDecile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rounds a raw 0..=100 confidence to the nearest decile, ties upward.
pub fn round_to_decile(raw: i64) -> Result<ConfidenceDecile, DomainError> {
    if !(0..=100).contains(&raw) {
        return Err(DomainError::Range {
            what: "raw confidence",
            value: raw,
            expected: "0..=100",
        });
    }
    ConfidenceDecile::new((raw + 5) / 10 * 10)
}

/// Expert rating on the 1..=5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct LikertScore(u8);

impl LikertScore {
    pub fn new(value: i64) -> Result<Self, DomainError> {
        if (1..=5).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(DomainError::Range {
                what: "likert score",
                value,
                expected: "1..=5",
            })
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for LikertScore {
    type Error = DomainError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LikertScore> for u8 {
    fn from(l: LikertScore) -> u8 {
        l.0
    }
}

impl fmt::Display for LikertScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One band of a [`BandMap`]: `[lo, hi)`, or `[lo, hi]` for the top band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertBand {
    pub lo: u8,
    pub hi: u8,
    pub likert: u8,
}

/// Partition of the 0..=100 confidence axis into five contiguous bands that
/// map onto Likert 1..=5. Only constructible in a valid state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LikertBand>", into = "Vec<LikertBand>")]
pub struct BandMap {
    bands: Vec<LikertBand>,
}

impl BandMap {
    pub fn new(mut bands: Vec<LikertBand>) -> Result<Self, DomainError> {
        if bands.len() != 5 {
            return Err(DomainError::BandConfig(format!(
                "expected 5 bands, got {}",
                bands.len()
            )));
        }
        bands.sort_by_key(|b| (b.lo, b.hi));
        if bands[0].lo != 0 {
            return Err(DomainError::BandConfig(format!(
                "gap: first band starts at {}, not 0",
                bands[0].lo
            )));
        }
        if bands[4].hi != 100 {
            return Err(DomainError::BandConfig(format!(
                "gap: last band ends at {}, not 100",
                bands[4].hi
            )));
        }
        for (i, b) in bands.iter().enumerate() {
            if b.lo >= b.hi {
                return Err(DomainError::BandConfig(format!("empty band [{}, {})", b.lo, b.hi)));
            }
            if usize::from(b.likert) != i + 1 {
                return Err(DomainError::BandConfig(format!(
                    "band [{}, {}) maps to {} but position {} requires {}",
                    b.lo,
                    b.hi,
                    b.likert,
                    i,
                    i + 1
                )));
            }
        }
        for w in bands.windows(2) {
            if w[0].hi < w[1].lo {
                return Err(DomainError::BandConfig(format!("gap between {} and {}", w[0].hi, w[1].lo)));
            }
            if w[0].hi > w[1].lo {
                return Err(DomainError::BandConfig(format!(
                    "overlap between [{}, {}) and [{}, {})",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
        }
        Ok(Self { bands })
    }

    /// Builds a band map from six cut points `0 = e0 < e1 < ... < e5 = 100`.
    pub fn from_edges(edges: [u8; 6]) -> Result<Self, DomainError> {
        let bands = edges
            .windows(2)
            .enumerate()
            .map(|(i, w)| LikertBand {
                lo: w[0],
                hi: w[1],
                likert: i as u8 + 1,
            })
            .collect();
        Self::new(bands)
    }

    pub fn bands(&self) -> &[LikertBand] {
        &self.bands
    }
}

impl Default for BandMap {
    /// `[0,30)→1, [30,50)→2, [50,70)→3, [70,90)→4, [90,100]→5`.
    fn default() -> Self {
        Self::from_edges([0, 30, 50, 70, 90, 100]).expect("default bands are valid")
    }
}

impl TryFrom<Vec<LikertBand>> for BandMap {
    type Error = DomainError;
    fn try_from(v: Vec<LikertBand>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<BandMap> for Vec<LikertBand> {
    fn from(m: BandMap) -> Self {
        m.bands
    }
}

/// Likert value of the band containing `c`.
pub fn confidence_to_likert(c: ConfidenceDecile, bands: &BandMap) -> LikertScore {
    let v = c.value();
    let band = bands
        .bands
        .iter()
        .find(|b| v >= b.lo && (v < b.hi || (b.hi == 100 && v == 100)))
        .expect("band map covers 0..=100");
    LikertScore(band.likert)
}
