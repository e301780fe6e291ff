use crate::domain::{round_to_decile, Metric};
use crate::markers::{parse_markers, MarkerError};
use crate::pipeline::types::{
    gantt_time, ConfidenceEntry, Factor, FactorsDoc, GanttChart, GanttEvent, ScoringDoc,
};
use crate::prompt::Stage;

use super::{Backend, BackendError, CompletionRequest};

/// Deterministic backend that answers from marker lines in the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

/// Stage a rendered prompt belongs to, judged by the output key it asks for.
pub fn infer_stage(prompt: &str) -> Stage {
    if prompt.contains("\"confidences\"") {
        Stage::Scoring
    } else if prompt.contains("\"reasons\"") {
        Stage::Factors
    } else {
        Stage::Gantt
    }
}

fn infer_metric(prompt: &str) -> Metric {
    if prompt.contains("\"readmission_summary\"") {
        Metric::Readmission
    } else {
        Metric::Los
    }
}

impl Backend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let stage = infer_stage(&req.prompt);
        let doc = mock_extract(stage, infer_metric(&req.prompt), &req.prompt)
            .map_err(|e| BackendError::Fatal(e.to_string()))?;
        Ok(doc)
    }
}

/// Produces the stage document the markers in `notes_text` describe, as
/// pretty JSON. Equal inputs give byte-identical output.
pub fn mock_extract(stage: Stage, metric: Metric, notes_text: &str) -> Result<String, MarkerError> {
    let markers = parse_markers(notes_text)?;
    let json = match stage {
        Stage::Gantt => {
            let mut events = Vec::with_capacity(markers.events.len());
            for (i, m) in markers.events.iter().enumerate() {
                let bad_time = |what: &str, v: &str| MarkerError {
                    line: 0,
                    reason: format!("event {} has unparseable {what} {v:?}", i + 1),
                };
                events.push(GanttEvent {
                    event_id: i as u32 + 1,
                    label: m.label.clone(),
                    category: (!m.category.is_empty()).then(|| m.category.clone()),
                    description: format!("{} (from marker {})", m.label, i + 1),
                    start_time: gantt_time::parse(&m.start).ok_or_else(|| bad_time("start", &m.start))?,
                    end_time: gantt_time::parse(&m.end).ok_or_else(|| bad_time("end", &m.end))?,
                    time_uncertainty: None,
                    relevant_quotes: m.quote.clone(),
                });
            }
            let chart = GanttChart {
                index_admission_summary: format!("Synthetic encounter with {} mapped events.", events.len()),
                readmission_summary: (metric == Metric::Readmission)
                    .then(|| "Synthetic readmission following the index stay.".to_string()),
                events,
            };
            serde_json::to_string_pretty(&chart)
        }
        Stage::Factors => {
            let reasons = markers
                .factors
                .iter()
                .map(|m| Factor {
                    reason: m.reason.clone(),
                    category: m.category.clone(),
                    explanation_support: format!("Supporting evidence for {}.", m.reason),
                    explanation_contrary: format!("Contrary evidence for {}.", m.reason),
                    relevant_quotes: m.quote.clone(),
                    process_improvement: format!("Address {} earlier in the stay.", m.reason),
                })
                .collect();
            serde_json::to_string_pretty(&FactorsDoc { reasons })
        }
        Stage::Scoring => {
            let confidences = markers
                .factors
                .iter()
                .map(|m| ConfidenceEntry {
                    reason: m.reason.clone(),
                    confidence: i64::from(
                        round_to_decile(i64::from(m.confidence))
                            .expect("marker confidence already range-checked")
                            .value(),
                    ),
                    confidence_reason: format!("Marker confidence {}.", m.confidence),
                })
                .collect();
            serde_json::to_string_pretty(&ScoringDoc { confidences })
        }
    };
    Ok(json.expect("stage documents serialize"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOTES: &str = "Admitted overnight.\n\
[[EVENT|IV antibiotics|treatment|2024-01-10 08:00|2024-01-15 12:00|Started on IV vancomycin]]\n\
Started on IV vancomycin for infection.\n\
[[EVENT|Waiting for MRI|waiting|2024-01-15 10:00|2024-01-18 14:00|waiting 3 days]]\n";

    #[test]
    fn two_event_markers_give_ids_one_and_two() {
        let out = mock_extract(Stage::Gantt, Metric::Los, NOTES).unwrap();
        let chart: GanttChart = serde_json::from_str(&out).unwrap();
        assert_eq!(chart.events.iter().map(|e| e.event_id).collect::<Vec<_>>(), [1, 2]);
        assert!(chart.readmission_summary.is_none());
        let readm: GanttChart =
            serde_json::from_str(&mock_extract(Stage::Gantt, Metric::Readmission, NOTES).unwrap()).unwrap();
        assert!(readm.readmission_summary.is_some());
    }

    #[test]
    fn no_factor_markers_gives_empty_reasons() {
        let out = mock_extract(Stage::Factors, Metric::Los, NOTES).unwrap();
        let doc: FactorsDoc = serde_json::from_str(&out).unwrap();
        assert!(doc.reasons.is_empty());
    }

    #[test]
    fn scoring_rounds_marker_confidence() {
        let notes = "[[FACTOR|late SW consult|social|87|SW consulted late]]\n";
        let doc: ScoringDoc =
            serde_json::from_str(&mock_extract(Stage::Scoring, Metric::Los, notes).unwrap()).unwrap();
        assert_eq!(doc.confidences[0].confidence, 90);
    }

    #[test]
    fn deterministic_output() {
        let a = mock_extract(Stage::Gantt, Metric::Los, NOTES).unwrap();
        let b = mock_extract(Stage::Gantt, Metric::Los, NOTES).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stage_inference_from_templates() {
        use crate::prompt::TemplateLibrary;
        let lib = TemplateLibrary::builtin();
        for t in lib.iter() {
            assert_eq!(infer_stage(&t.body), t.stage, "{}", t.template_id);
        }
        assert_eq!(
            infer_metric(&lib.latest(Metric::Readmission, Stage::Gantt).unwrap().body),
            Metric::Readmission
        );
        assert_eq!(infer_metric(&lib.latest(Metric::Los, Stage::Gantt).unwrap().body), Metric::Los);
    }

    #[test]
    fn malformed_marker_is_fatal_for_backend() {
        let req = CompletionRequest::new("mock", "[[FACTOR|x|y|zz|q]]");
        assert!(matches!(MockBackend.complete(&req), Err(BackendError::Fatal(_))));
    }
}
