//! Round-by-round history of the nine natural-language pipeline
//! specifications, plus the train/test case grid with its holdout rule:
//! a TEST case can only be scored in the final round, after `finalize`.
//!
//! The ledger is an append-only list of events persisted as JSONL; loading
//! replays every event through the same checks used when writing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{xml_escape, RaterTier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpecKey {
    Objective,
    Population,
    LabelDefinition,
    EstimatorInputs,
    EstimatorOutput,
    ModelFamily,
    PromptTuning,
    WhatValidated,
    HowValidated,
}

impl SpecKey {
    pub const ALL: [SpecKey; 9] = [
        SpecKey::Objective,
        SpecKey::Population,
        SpecKey::LabelDefinition,
        SpecKey::EstimatorInputs,
        SpecKey::EstimatorOutput,
        SpecKey::ModelFamily,
        SpecKey::PromptTuning,
        SpecKey::WhatValidated,
        SpecKey::HowValidated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpecKey::Objective => "OBJECTIVE",
            SpecKey::Population => "POPULATION",
            SpecKey::LabelDefinition => "LABEL_DEFINITION",
            SpecKey::EstimatorInputs => "ESTIMATOR_INPUTS",
            SpecKey::EstimatorOutput => "ESTIMATOR_OUTPUT",
            SpecKey::ModelFamily => "MODEL_FAMILY",
            SpecKey::PromptTuning => "PROMPT_TUNING",
            SpecKey::WhatValidated => "WHAT_VALIDATED",
            SpecKey::HowValidated => "HOW_VALIDATED",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            SpecKey::Objective => "Objective",
            SpecKey::Population => "Population",
            SpecKey::LabelDefinition => "Label definition",
            SpecKey::EstimatorInputs => "Estimator inputs",
            SpecKey::EstimatorOutput => "Estimator output",
            SpecKey::ModelFamily => "Model family",
            SpecKey::PromptTuning => "Prompt tuning",
            SpecKey::WhatValidated => "What gets validated",
            SpecKey::HowValidated => "How output is validated",
        }
    }

    /// Development stage the component belongs to.
    pub fn stage(self) -> &'static str {
        match self {
            SpecKey::Objective | SpecKey::Population | SpecKey::LabelDefinition => "Problem Formalization",
            SpecKey::EstimatorInputs | SpecKey::EstimatorOutput | SpecKey::ModelFamily | SpecKey::PromptTuning => {
                "Model Learning"
            }
            SpecKey::WhatValidated | SpecKey::HowValidated => "Model Validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub round_id: u32,
    /// Components rewritten this round, with their new text.
    pub changed: BTreeMap<SpecKey, String>,
    pub annotator_tier: RaterTier,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseOutcome {
    Correct,
    SemiWrong,
    Wrong,
    Unscored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LedgerEvent {
    Round(Round),
    Finalize { round_id: u32 },
    Case { case_id: String, split: Split },
    CaseStatus { case_id: String, round_id: u32, status: CaseOutcome },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("round {got} out of sequence (expected {expected})")]
    Sequencing { expected: u32, got: u32 },
    #[error("round 1 must define every component; missing {0:?}")]
    Incomplete(Vec<SpecKey>),
    #[error("ledger is finalized at round {0}; no further rounds")]
    Finalized(u32),
    #[error("ledger has no rounds")]
    Empty,
    #[error("unknown case {0:?}")]
    UnknownCase(String),
    #[error("case {0:?} is already registered")]
    DuplicateCase(String),
    #[error("unknown round {0}")]
    UnknownRound(u32),
    #[error("holdout violation: TEST case {case_id:?} can only be scored in the final round after finalize (round {round_id})")]
    Holdout { case_id: String, round_id: u32 },
    #[error("ledger io: {0}")]
    Io(String),
    #[error("ledger line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledger {
    events: Vec<LedgerEvent>,
    rounds: Vec<Round>,
    finalized: Option<u32>,
    cases: BTreeMap<String, Split>,
    statuses: BTreeMap<String, BTreeMap<u32, CaseOutcome>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Cell {
    Initial,
    Changed,
    Unchanged,
}

/// Component × round change matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heatmap {
    pub rounds: Vec<u32>,
    pub rows: BTreeMap<SpecKey, Vec<Cell>>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn last_round(&self) -> Option<u32> {
        self.rounds.last().map(|r| r.round_id)
    }

    pub fn finalized(&self) -> Option<u32> {
        self.finalized
    }

    pub fn apply(&mut self, event: LedgerEvent) -> Result<(), LedgerError> {
        match &event {
            LedgerEvent::Round(r) => {
                if let Some(f) = self.finalized {
                    return Err(LedgerError::Finalized(f));
                }
                let expected = self.last_round().unwrap_or(0) + 1;
                if r.round_id != expected {
                    return Err(LedgerError::Sequencing {
                        expected,
                        got: r.round_id,
                    });
                }
                if r.round_id == 1 {
                    let missing: Vec<SpecKey> = SpecKey::ALL.into_iter().filter(|k| !r.changed.contains_key(k)).collect();
                    if !missing.is_empty() {
                        return Err(LedgerError::Incomplete(missing));
                    }
                }
                self.rounds.push(r.clone());
            }
            LedgerEvent::Finalize { round_id } => {
                if let Some(f) = self.finalized {
                    return Err(LedgerError::Finalized(f));
                }
                let last = self.last_round().ok_or(LedgerError::Empty)?;
                if *round_id != last {
                    return Err(LedgerError::Sequencing {
                        expected: last,
                        got: *round_id,
                    });
                }
                self.finalized = Some(last);
            }
            LedgerEvent::Case { case_id, split } => {
                if self.cases.contains_key(case_id) {
                    return Err(LedgerError::DuplicateCase(case_id.clone()));
                }
                self.cases.insert(case_id.clone(), *split);
            }
            LedgerEvent::CaseStatus {
                case_id,
                round_id,
                status,
            } => {
                if !self.cases.contains_key(case_id) {
                    return Err(LedgerError::UnknownCase(case_id.clone()));
                }
                if !self.rounds.iter().any(|r| r.round_id == *round_id) {
                    return Err(LedgerError::UnknownRound(*round_id));
                }
                if *status != CaseOutcome::Unscored {
                    self.check_scoring_allowed(case_id, *round_id)?;
                }
                self.statuses.entry(case_id.clone()).or_default().insert(*round_id, *status);
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn record_round(&mut self, round: Round) -> Result<(), LedgerError> {
        self.apply(LedgerEvent::Round(round))
    }

    /// Declares the latest round final, unlocking TEST-case scoring in it.
    pub fn finalize(&mut self) -> Result<u32, LedgerError> {
        let last = self.last_round().ok_or(LedgerError::Empty)?;
        self.apply(LedgerEvent::Finalize { round_id: last })?;
        Ok(last)
    }

    pub fn register_case(&mut self, case_id: impl Into<String>, split: Split) -> Result<(), LedgerError> {
        self.apply(LedgerEvent::Case {
            case_id: case_id.into(),
            split,
        })
    }

    pub fn record_case_status(&mut self, case_id: &str, round_id: u32, status: CaseOutcome) -> Result<(), LedgerError> {
        self.apply(LedgerEvent::CaseStatus {
            case_id: case_id.to_string(),
            round_id,
            status,
        })
    }

    pub fn split_of(&self, case_id: &str) -> Option<Split> {
        self.cases.get(case_id).copied()
    }

    /// Holdout rule. Unregistered and TRAIN cases are always scorable.
    pub fn check_scoring_allowed(&self, case_id: &str, round_id: u32) -> Result<(), LedgerError> {
        match self.split_of(case_id) {
            Some(Split::Test) if self.finalized != Some(round_id) => Err(LedgerError::Holdout {
                case_id: case_id.to_string(),
                round_id,
            }),
            _ => Ok(()),
        }
    }

    pub fn status(&self, case_id: &str, round_id: u32) -> CaseOutcome {
        self.statuses
            .get(case_id)
            .and_then(|m| m.get(&round_id))
            .copied()
            .unwrap_or(CaseOutcome::Unscored)
    }

    /// Case × round grid, every cell filled (UNSCORED by default).
    pub fn grid(&self) -> BTreeMap<String, Vec<CaseOutcome>> {
        self.cases
            .keys()
            .map(|c| (c.clone(), self.rounds.iter().map(|r| self.status(c, r.round_id)).collect()))
            .collect()
    }

    /// Text and version (round it was last written) of each component as of
    /// `round_id`.
    pub fn spec_at(&self, round_id: u32) -> BTreeMap<SpecKey, (String, u32)> {
        let mut out = BTreeMap::new();
        for r in self.rounds.iter().take_while(|r| r.round_id <= round_id) {
            for (k, text) in &r.changed {
                out.insert(*k, (text.clone(), r.round_id));
            }
        }
        out
    }

    pub fn current_spec(&self) -> BTreeMap<SpecKey, (String, u32)> {
        self.spec_at(u32::MAX)
    }

    pub fn heatmap(&self) -> Result<Heatmap, LedgerError> {
        if self.rounds.is_empty() {
            return Err(LedgerError::Empty);
        }
        let rows = SpecKey::ALL
            .into_iter()
            .map(|k| {
                let cells = self
                    .rounds
                    .iter()
                    .map(|r| match (r.round_id, r.changed.contains_key(&k)) {
                        (1, _) => Cell::Initial,
                        (_, true) => Cell::Changed,
                        (_, false) => Cell::Unchanged,
                    })
                    .collect();
                (k, cells)
            })
            .collect();
        Ok(Heatmap {
            rounds: self.rounds.iter().map(|r| r.round_id).collect(),
            rows,
        })
    }

    /// Spec sheet as of `round_id`, grouped by development stage.
    pub fn spec_sheet(&self, round_id: u32) -> String {
        let spec = self.spec_at(round_id);
        let mut s = String::new();
        if let Some(r) = self.rounds.iter().find(|r| r.round_id == round_id) {
            let tier = serde_json::to_value(r.annotator_tier).unwrap();
            let _ = writeln!(s, "Round {round_id} (annotators: {})", tier.as_str().unwrap_or_default());
            if !r.notes.is_empty() {
                let _ = writeln!(s, "  {}", r.notes);
            }
        }
        let mut stage = "";
        for k in SpecKey::ALL {
            if k.stage() != stage {
                stage = k.stage();
                let _ = writeln!(s, "\n{stage}");
            }
            if let Some((text, v)) = spec.get(&k) {
                let _ = writeln!(s, "  {} (v{v}): {text}", k.title());
            }
        }
        s
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).expect("ledger events serialize"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LedgerError> {
        let mut l = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ev: LedgerEvent = serde_json::from_str(line).map_err(|e| LedgerError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            l.apply(ev).map_err(|e| LedgerError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(l)
    }

    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        let text = fs::read_to_string(path).map_err(|e| LedgerError::Io(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        fs::write(path, self.to_jsonl()).map_err(|e| LedgerError::Io(format!("{}: {e}", path.display())))
    }

    /// Applies `event` and appends it to the JSONL file at `path`.
    pub fn append(&mut self, path: &Path, event: LedgerEvent) -> Result<(), LedgerError> {
        self.apply(event.clone())?;
        let io = |e: std::io::Error| LedgerError::Io(format!("{}: {e}", path.display()));
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        writeln!(f, "{}", serde_json::to_string(&event).expect("ledger events serialize")).map_err(io)
    }
}

/// Bundled history for the LOS study (8 rounds).
pub fn los_fixture() -> Ledger {
    Ledger::from_jsonl(include_str!("../fixtures/ledger/los.jsonl")).expect("bundled LOS ledger is valid")
}

/// Bundled history for the readmission study (6 rounds).
pub fn readmission_fixture() -> Ledger {
    Ledger::from_jsonl(include_str!("../fixtures/ledger/readm.jsonl")).expect("bundled readmission ledger is valid")
}

impl Heatmap {
    pub fn cell(&self, key: SpecKey, round_id: u32) -> Option<Cell> {
        let col = self.rounds.iter().position(|r| *r == round_id)?;
        self.rows.get(&key).map(|r| r[col])
    }

    /// Keys marked CHANGED in `round_id`.
    pub fn changed_in(&self, round_id: u32) -> Vec<SpecKey> {
        SpecKey::ALL
            .into_iter()
            .filter(|k| self.cell(*k, round_id) == Some(Cell::Changed))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("component");
        for r in &self.rounds {
            let _ = write!(s, ",round_{r}");
        }
        s.push('\n');
        for k in SpecKey::ALL {
            s.push_str(k.as_str());
            for c in &self.rows[&k] {
                let v = serde_json::to_value(c).unwrap();
                let _ = write!(s, ",{}", v.as_str().unwrap());
            }
            s.push('\n');
        }
        s
    }

    pub fn to_svg(&self, title: &str) -> String {
        const CW: f64 = 56.0;
        const RH: f64 = 24.0;
        const LW: f64 = 170.0;
        let colors = |stage: &str| match stage {
            "Problem Formalization" => ("#f4a582", "#ca0020"),
            "Model Learning" => ("#92c5de", "#0571b0"),
            _ => ("#b8e186", "#4d9221"),
        };
        let w = LW + CW * self.rounds.len() as f64 + 10.0;
        let h = 50.0 + RH * 9.0 + 10.0;
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
        let _ = writeln!(s, r#"<text x="8" y="18" font-size="13">{}</text>"#, xml_escape(title));
        for (j, r) in self.rounds.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{:.1}" y="42" text-anchor="middle">R{r}</text>"#, LW + CW * (j as f64 + 0.5));
        }
        for (i, k) in SpecKey::ALL.iter().enumerate() {
            let y = 50.0 + RH * i as f64;
            let _ = writeln!(s, r#"<text x="8" y="{:.1}">{}</text>"#, y + 16.0, k.title());
            let (light, dark) = colors(k.stage());
            for (j, c) in self.rows[k].iter().enumerate() {
                let fill = match c {
                    Cell::Initial => light,
                    Cell::Changed => dark,
                    Cell::Unchanged => "#d9d9d9",
                };
                let v = serde_json::to_value(c).unwrap();
                let _ = writeln!(
                    s,
                    r#"<rect class="{}" x="{:.1}" y="{y:.1}" width="{}" height="{}" fill="{fill}" stroke="white"/>"#,
                    v.as_str().unwrap().to_lowercase(),
                    LW + CW * j as f64,
                    CW,
                    RH
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}
