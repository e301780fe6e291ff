//! The three-stage extraction pipeline: stage-output parsing and validation,
//! quote verification, per-encounter orchestration and cohort runs.

mod json;
mod parse;
mod quotes;
mod run;
pub mod types;

pub use json::extract_json_object;
pub use parse::{
    attach_confidences, parse_factors, parse_gantt, parse_scoring, reason_similarity, AlignmentError, FieldProblem,
    ParseError, ParsedFactors, LOS_QUOTE_SOFT_LIMIT, MAX_FACTORS, REASON_ALIGNMENT_THRESHOLD,
};
pub use quotes::{normalize_ws, split_fragments, verify_quotes, QuoteIndex, QUOTE_SEPARATOR};
pub use run::{
    load_results,
    run_cohort, run_encounter, CohortError, CohortFilter, CohortResult, CohortSummary, EncounterError,
    EncounterErrorKind, EncounterFailure, PipelineConfig, QuoteMode, LOS_GROUPS, READMISSION_CONFIDENCE_FLOOR,
    READMISSION_GROUPS,
};
pub use types::*;
