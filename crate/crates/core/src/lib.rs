//! Workbench for discovering modifiable contributing factors behind hospital
//! quality metrics (length of stay, readmission) from clinical notes.
//!
//! The pieces, roughly in pipeline order:
//!
//! - [`domain`]: encounter bundles, notes, confidence deciles, Likert bands.
//! - [`synth`] / [`corpus`]: seeded synthetic corpora with known ground truth.
//! - [`prompt`]: versioned stage templates and note-context assembly.
//! - [`gateway`]: retrying, concurrency-bounded model access (mock or live).
//! - [`pipeline`]: GANTT → FACTORS → SCORING with quote verification.
//! - [`eval`]: agreement rates and confidence calibration.
//! - [`themes`]: clustering factors into Lean themes.
//! - [`ledger`]: round-by-round specification history and holdout rules.
//! - [`service`]: HTTP API for reviewer annotation.

pub mod corpus;
pub mod domain;
pub mod eval;
pub mod gateway;
pub mod ledger;
pub mod markers;
pub mod pipeline;
pub mod prompt;
pub mod service;
pub mod synth;
pub mod themes;
