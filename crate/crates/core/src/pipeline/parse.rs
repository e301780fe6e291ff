//! Parsing and schema validation of each stage's raw model output.

use std::collections::BTreeSet;
use std::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{ConfidenceDecile, Metric};

use super::json::extract_json_object;
use super::types::{
    aggregate_status, gantt_time, Factor, GanttChart, ScoredFactor, ScoringDoc,
};

/// At most this many factors per encounter.
pub const MAX_FACTORS: usize = 5;
/// Soft limit on LOS factor quote length, in characters.
pub const LOS_QUOTE_SOFT_LIMIT: usize = 200;
/// Minimum token-set Jaccard similarity between paired reason names.
pub const REASON_ALIGNMENT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldProblem {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON object found in model output")]
    NoJson,
    #[error("schema validation failed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Validation(Vec<FieldProblem>),
}

impl ParseError {
    pub fn problems(&self) -> &[FieldProblem] {
        match self {
            ParseError::Validation(p) => p,
            ParseError::NoJson => &[],
        }
    }
}

#[derive(Default)]
struct Problems(Vec<FieldProblem>);

impl Problems {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldProblem {
            field: field.into(),
            message: message.into(),
        });
    }

    fn require_str<'a>(&mut self, obj: &'a Map<String, Value>, path: &str, key: &str) -> Option<&'a str> {
        match obj.get(key) {
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                self.push(format!("{path}{key}"), "must be a string");
                None
            }
            None => {
                self.push(format!("{path}{key}"), "is required");
                None
            }
        }
    }

    fn optional_str<'a>(&mut self, obj: &'a Map<String, Value>, path: &str, key: &str) -> Option<&'a str> {
        match obj.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                self.push(format!("{path}{key}"), "must be a string");
                None
            }
        }
    }

    fn require_array<'a>(&mut self, obj: &'a Map<String, Value>, key: &str) -> Option<&'a Vec<Value>> {
        match obj.get(key) {
            Some(Value::Array(a)) => Some(a),
            Some(_) => {
                self.push(key, "must be an array");
                None
            }
            None => {
                self.push(key, "is required");
                None
            }
        }
    }

    fn finish(self) -> Result<(), ParseError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ParseError::Validation(self.0))
        }
    }
}

fn root_object(raw: &str) -> Result<Map<String, Value>, ParseError> {
    match extract_json_object(raw) {
        Some(Value::Object(m)) => Ok(m),
        _ => Err(ParseError::NoJson),
    }
}

fn object_at<'a>(p: &mut Problems, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
    match v {
        Value::Object(m) => Some(m),
        _ => {
            p.push(path, "must be an object");
            None
        }
    }
}

/// Parses and validates a Stage-1 (Gantt chart) response.
pub fn parse_gantt(raw: &str, metric: Metric) -> Result<GanttChart, ParseError> {
    let root = root_object(raw)?;
    let mut p = Problems::default();

    p.require_str(&root, "", "index_admission_summary");
    let readm = p.optional_str(&root, "", "readmission_summary");
    match (metric, readm) {
        (Metric::Readmission, None) => p.push("readmission_summary", "is required for READMISSION"),
        (Metric::Los, Some(_)) => p.push("readmission_summary", "must be absent for LOS"),
        _ => {}
    }

    let mut ids = Vec::new();
    if let Some(events) = p.require_array(&root, "events") {
        for (i, ev) in events.iter().enumerate() {
            let path = format!("events[{i}].");
            let Some(obj) = object_at(&mut p, ev, &format!("events[{i}]")) else {
                continue;
            };
            match obj.get("event_id").and_then(Value::as_u64) {
                Some(id) if id >= 1 => ids.push(id),
                _ => p.push(format!("{path}event_id"), "must be a positive integer"),
            }
            p.require_str(obj, &path, "label");
            p.optional_str(obj, &path, "category");
            p.require_str(obj, &path, "description");
            p.require_str(obj, &path, "relevant_quotes");
            let mut time = |key: &str| {
                let s = p.require_str(obj, &path, key)?;
                let t = gantt_time::parse(s);
                if t.is_none() {
                    p.push(format!("{path}{key}"), format!("unrecognized timestamp {s:?}"));
                }
                t
            };
            let (start, end) = (time("start_time"), time("end_time"));
            if let (Some(s), Some(e)) = (start, end) {
                if s > e {
                    p.push(format!("{path}start_time"), "start_time <= end_time violated");
                }
            }
            if let Some(u) = p.optional_str(obj, &path, "time_uncertainty") {
                if u != "estimated" {
                    p.push(format!("{path}time_uncertainty"), format!("unknown value {u:?}"));
                }
            }
        }
    }
    let unique: BTreeSet<u64> = ids.iter().copied().collect();
    if unique.len() != ids.len() {
        p.push("events", "event_id values must be unique");
    } else if !ids.is_empty() && unique != (1..=ids.len() as u64).collect() {
        p.push("events", "event_id values must be contiguous from 1");
    }
    p.finish()?;

    serde_json::from_value(Value::Object(root)).map_err(|e| {
        ParseError::Validation(vec![FieldProblem {
            field: "$".into(),
            message: e.to_string(),
        }])
    })
}

/// Stage-2 output plus soft-limit warnings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFactors {
    pub factors: Vec<Factor>,
    pub warnings: Vec<String>,
}

const FACTOR_FIELDS: [&str; 6] = [
    "reason",
    "category",
    "explanation_support",
    "explanation_contrary",
    "relevant_quotes",
    "process_improvement",
];

/// Parses and validates a Stage-2 (factor extraction) response.
pub fn parse_factors(raw: &str, metric: Metric) -> Result<ParsedFactors, ParseError> {
    let root = root_object(raw)?;
    let mut p = Problems::default();
    let mut factors = Vec::new();
    let mut warnings = Vec::new();

    if let Some(reasons) = p.require_array(&root, "reasons") {
        if reasons.len() > MAX_FACTORS {
            p.push("reasons", format!("at most {MAX_FACTORS} factors allowed, found {}", reasons.len()));
        }
        for (i, r) in reasons.iter().enumerate() {
            let path = format!("reasons[{i}].");
            let Some(obj) = object_at(&mut p, r, &format!("reasons[{i}]")) else {
                continue;
            };
            let fields: Vec<Option<&str>> = FACTOR_FIELDS.iter().map(|k| p.require_str(obj, &path, k)).collect();
            if let [Some(reason), Some(category), Some(support), Some(contrary), Some(quotes), Some(improvement)] =
                fields[..]
            {
                if metric == Metric::Los && quotes.chars().count() > LOS_QUOTE_SOFT_LIMIT {
                    warnings.push(format!(
                        "{path}relevant_quotes is {} characters (soft limit {LOS_QUOTE_SOFT_LIMIT})",
                        quotes.chars().count()
                    ));
                }
                factors.push(Factor {
                    reason: reason.into(),
                    category: category.into(),
                    explanation_support: support.into(),
                    explanation_contrary: contrary.into(),
                    relevant_quotes: quotes.into(),
                    process_improvement: improvement.into(),
                });
            }
        }
    }
    p.finish()?;
    Ok(ParsedFactors { factors, warnings })
}

/// Parses and validates a Stage-3 (confidence scoring) response.
pub fn parse_scoring(raw: &str) -> Result<ScoringDoc, ParseError> {
    let root = root_object(raw)?;
    let mut p = Problems::default();
    if let Some(entries) = p.require_array(&root, "confidences") {
        for (i, e) in entries.iter().enumerate() {
            let path = format!("confidences[{i}].");
            let Some(obj) = object_at(&mut p, e, &format!("confidences[{i}]")) else {
                continue;
            };
            p.require_str(obj, &path, "reason");
            p.optional_str(obj, &path, "confidence_reason");
            if obj.get("confidence").and_then(Value::as_i64).is_none() {
                p.push(format!("{path}confidence"), "must be an integer");
            }
        }
    }
    p.finish()?;
    serde_json::from_value(Value::Object(root)).map_err(|e| {
        ParseError::Validation(vec![FieldProblem {
            field: "$".into(),
            message: e.to_string(),
        }])
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignmentError {
    #[error("{factors} factor(s) but {confidences} confidence entr(ies)")]
    LengthMismatch { factors: usize, confidences: usize },
    #[error("position {index}: factor {factor_reason:?} paired with {scored_reason:?} (similarity {similarity:.2})")]
    Misaligned {
        index: usize,
        factor_reason: String,
        scored_reason: String,
        similarity: f64,
    },
    #[error("position {index}: confidence {value} is not a decile")]
    BadDecile { index: usize, value: i64 },
}

fn reason_tokens(s: &str) -> BTreeSet<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Token-set Jaccard similarity of two reason names after normalization.
pub fn reason_similarity(a: &str, b: &str) -> f64 {
    let (ta, tb) = (reason_tokens(a), reason_tokens(b));
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let inter = ta.intersection(&tb).count() as f64;
    let union = ta.union(&tb).count() as f64;
    inter / union
}

/// Pairs factors with scoring entries by position. Quote fields are left
/// empty for the caller to fill.
pub fn attach_confidences(factors: &[Factor], scoring: &ScoringDoc) -> Result<Vec<ScoredFactor>, AlignmentError> {
    if factors.len() != scoring.confidences.len() {
        return Err(AlignmentError::LengthMismatch {
            factors: factors.len(),
            confidences: scoring.confidences.len(),
        });
    }
    factors
        .iter()
        .zip(&scoring.confidences)
        .enumerate()
        .map(|(index, (f, c))| {
            let similarity = reason_similarity(&f.reason, &c.reason);
            if similarity < REASON_ALIGNMENT_THRESHOLD {
                return Err(AlignmentError::Misaligned {
                    index,
                    factor_reason: f.reason.clone(),
                    scored_reason: c.reason.clone(),
                    similarity,
                });
            }
            let confidence = ConfidenceDecile::new(c.confidence).map_err(|_| AlignmentError::BadDecile {
                index,
                value: c.confidence,
            })?;
            Ok(ScoredFactor {
                factor: f.clone(),
                confidence,
                confidence_reason: c.confidence_reason.clone(),
                quote_status: aggregate_status(&[]),
                quote_checks: Vec::new(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::types::ConfidenceEntry;

    fn factor(reason: &str) -> Factor {
        Factor {
            reason: reason.into(),
            category: "operational".into(),
            explanation_support: "s".into(),
            explanation_contrary: "c".into(),
            relevant_quotes: "q".into(),
            process_improvement: "p".into(),
        }
    }

    fn scoring(entries: &[(&str, i64)]) -> ScoringDoc {
        ScoringDoc {
            confidences: entries
                .iter()
                .map(|(r, c)| ConfidenceEntry {
                    reason: r.to_string(),
                    confidence: *c,
                    confidence_reason: String::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn prose_only_has_no_json() {
        assert_eq!(parse_gantt("I could not find anything.", Metric::Los), Err(ParseError::NoJson));
    }

    #[test]
    fn end_before_start_rejected() {
        let raw = r#"{"index_admission_summary":"s","events":[{"event_id":1,"label":"l","description":"d",
            "start_time":"2024-01-15 12:00","end_time":"2024-01-10 08:00","relevant_quotes":"q"}]}"#;
        let err = parse_gantt(raw, Metric::Los).unwrap_err();
        assert!(err.problems().iter().any(|p| p.message.contains("start_time <= end_time")), "{err}");
    }

    #[test]
    fn gantt_lists_all_field_problems() {
        let raw = r#"{"events":[{"event_id":0,"label":3,"start_time":"soon","end_time":"2024-01-10 08:00"}]}"#;
        let err = parse_gantt(raw, Metric::Readmission).unwrap_err();
        let fields: Vec<_> = err.problems().iter().map(|p| p.field.as_str()).collect();
        for f in [
            "index_admission_summary",
            "readmission_summary",
            "events[0].event_id",
            "events[0].label",
            "events[0].description",
            "events[0].relevant_quotes",
            "events[0].start_time",
        ] {
            assert!(fields.contains(&f), "missing {f} in {fields:?}");
        }
    }

    #[test]
    fn event_ids_must_be_contiguous() {
        let ev = |id: u32| {
            format!(
                r#"{{"event_id":{id},"label":"l","description":"d","start_time":"2024-01-10 08:00","end_time":"2024-01-10 09:00","relevant_quotes":"q"}}"#
            )
        };
        let raw = format!(r#"{{"index_admission_summary":"s","events":[{},{}]}}"#, ev(1), ev(3));
        assert!(parse_gantt(&raw, Metric::Los).is_err());
        let raw = format!(r#"{{"index_admission_summary":"s","events":[{},{}]}}"#, ev(2), ev(1));
        assert_eq!(parse_gantt(&raw, Metric::Los).unwrap().events.len(), 2);
    }

    #[test]
    fn empty_reasons_is_legal() {
        assert!(parse_factors(r#"{"reasons": []}"#, Metric::Los).unwrap().factors.is_empty());
    }

    #[test]
    fn six_factors_rejected() {
        let one = serde_json::to_value(factor("x")).unwrap();
        let doc = serde_json::json!({ "reasons": vec![one; 6] }).to_string();
        let err = parse_factors(&doc, Metric::Los).unwrap_err();
        assert!(err.to_string().contains("at most 5"), "{err}");
        let one = serde_json::to_value(factor("x")).unwrap();
        let doc = serde_json::json!({ "reasons": vec![one; 5] }).to_string();
        assert_eq!(parse_factors(&doc, Metric::Los).unwrap().factors.len(), 5);
    }

    #[test]
    fn long_los_quote_is_a_warning_only() {
        let mut f = factor("x");
        f.relevant_quotes = "a".repeat(201);
        let doc = serde_json::json!({ "reasons": [f] }).to_string();
        let parsed = parse_factors(&doc, Metric::Los).unwrap();
        assert_eq!(parsed.factors.len(), 1);
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parse_factors(&doc, Metric::Readmission).unwrap().warnings.is_empty());
    }

    #[test]
    fn identity_alignment() {
        let fs = [factor("late SNF coordination"), factor("delayed TTE")];
        let out = attach_confidences(&fs, &scoring(&[("late SNF coordination", 80), ("Delayed TTE.", 90)])).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].confidence.value(), 90);
    }

    #[test]
    fn length_mismatch() {
        let fs = [factor("a"), factor("b"), factor("c")];
        assert_eq!(
            attach_confidences(&fs, &scoring(&[("a", 50), ("b", 50)])).unwrap_err(),
            AlignmentError::LengthMismatch { factors: 3, confidences: 2 }
        );
    }

    #[test]
    fn misaligned_names_rejected() {
        // oracle: token sets {late,snf,coordination} vs {delayed,discharge,imaging} share nothing
        assert_eq!(reason_similarity("late SNF coordination", "delayed discharge imaging"), 0.0);
        let err = attach_confidences(
            &[factor("late SNF coordination")],
            &scoring(&[("delayed discharge imaging", 80)]),
        )
        .unwrap_err();
        assert!(matches!(err, AlignmentError::Misaligned { index: 0, .. }));
        assert!(err.to_string().contains("late SNF coordination"));
        assert!(err.to_string().contains("delayed discharge imaging"));
    }

    #[test]
    fn non_decile_confidence_rejected() {
        assert!(matches!(
            attach_confidences(&[factor("a")], &scoring(&[("a", 85)])),
            Err(AlignmentError::BadDecile { value: 85, .. })
        ));
    }

    #[test]
    fn scoring_doc_with_trailing_comma_parses() {
        let raw = "{\n  \"confidences\": [\n    {\n      \"reason\": \"a\",\n      \"confidence\": 90,\n      \"confidence_reason\": \"....\",\n    }\n  ]\n}";
        assert_eq!(parse_scoring(raw).unwrap().confidences[0].confidence, 90);
    }
}
