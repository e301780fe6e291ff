use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::domain::{ConfidenceDecile, Metric};

/// Serde adapter for Gantt timestamps. Accepts `YYYY-MM-DD HH:MM`, with or
/// without seconds and with either a space or `T` separator; always writes
/// `YYYY-MM-DD HH:MM`.
pub mod gantt_time {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub const FORMAT: &str = "%Y-%m-%d %H:%M";
    const ACCEPTED: [&str; 4] = ["%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S"];

    pub fn parse(s: &str) -> Option<NaiveDateTime> {
        let s = s.trim();
        ACCEPTED
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
    }

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format(FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).ok_or_else(|| serde::de::Error::custom(format!("unrecognized timestamp {raw:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUncertainty {
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GanttEvent {
    pub event_id: u32,
    pub label: String,
    /// Open set; the bundled prompts seed it with admission, treatment,
    /// procedure, waiting, coordination, discharge and the readmission
    /// categories. Some prompt examples omit it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub description: String,
    #[serde(with = "gantt_time")]
    pub start_time: NaiveDateTime,
    #[serde(with = "gantt_time")]
    pub end_time: NaiveDateTime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_uncertainty: Option<TimeUncertainty>,
    pub relevant_quotes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GanttChart {
    pub index_admission_summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readmission_summary: Option<String>,
    pub events: Vec<GanttEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub reason: String,
    pub category: String,
    pub explanation_support: String,
    pub explanation_contrary: String,
    pub relevant_quotes: String,
    pub process_improvement: String,
}

/// Stage-2 document shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorsDoc {
    pub reasons: Vec<Factor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfidenceEntry {
    pub reason: String,
    pub confidence: i64,
    #[serde(default)]
    pub confidence_reason: String,
}

/// Stage-3 document shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringDoc {
    pub confidences: Vec<ConfidenceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuoteStatus {
    Verified,
    Fuzzy,
    Unverified,
}

/// Location of a verified fragment: byte range into the original note text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteAnchor {
    pub note_id: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteCheck {
    pub fragment: String,
    pub status: QuoteStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<QuoteAnchor>,
}

impl QuoteCheck {
    pub fn note_id(&self) -> Option<&str> {
        self.anchor.as_ref().map(|a| a.note_id.as_str())
    }
}

/// Worst status across a set of checks; an empty set counts as verified.
pub fn aggregate_status(checks: &[QuoteCheck]) -> QuoteStatus {
    checks.iter().map(|c| c.status).max().unwrap_or(QuoteStatus::Verified)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredFactor {
    pub factor: Factor,
    pub confidence: ConfidenceDecile,
    pub confidence_reason: String,
    pub quote_status: QuoteStatus,
    #[serde(default)]
    pub quote_checks: Vec<QuoteCheck>,
}

/// Reference to one factor of one encounter result.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactorRef {
    pub encounter_id: String,
    pub factor_index: usize,
}

/// One backend attempt as recorded in an encounter's audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub encounter_id: String,
    pub stage: crate::prompt::Stage,
    pub template_id: String,
    pub model_id: String,
    pub attempt: u32,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: u64,
    /// Outcome of parsing/validating the response; set on the final attempt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterResult {
    pub encounter_id: String,
    pub metric: Metric,
    pub gantt: GanttChart,
    /// Quote checks per Gantt event, keyed by event_id.
    pub gantt_quotes: BTreeMap<u32, Vec<QuoteCheck>>,
    pub scored_factors: Vec<ScoredFactor>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub audit: Vec<AuditRecord>,
}

impl EncounterResult {
    pub fn factor(&self, index: usize) -> Option<&ScoredFactor> {
        self.scored_factors.get(index)
    }

    pub fn factor_refs(&self) -> impl Iterator<Item = (FactorRef, &ScoredFactor)> {
        self.scored_factors.iter().enumerate().map(|(i, f)| {
            (
                FactorRef {
                    encounter_id: self.encounter_id.clone(),
                    factor_index: i,
                },
                f,
            )
        })
    }

    /// Every quote check in the result (events then factors).
    pub fn all_quote_checks(&self) -> impl Iterator<Item = &QuoteCheck> {
        self.gantt_quotes
            .values()
            .flatten()
            .chain(self.scored_factors.iter().flat_map(|f| f.quote_checks.iter()))
    }
}
