//! Per-encounter orchestration and cohort fan-out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{create_dir, read_json, write_json, Corpus, CorpusError};
use crate::domain::{validate_bundle, EncounterBundle, Metric, Violation};
use crate::gateway::{AttemptRecord, CompletionRequest, Gateway, GatewayError, RetryPolicy};
use crate::prompt::{assemble_note_context, render, InputSpec, PromptError, RenderContext, Stage, TemplateLibrary};

use super::parse::{attach_confidences, parse_factors, parse_gantt, parse_scoring, AlignmentError, ParseError};
use super::quotes::QuoteIndex;
use super::types::{aggregate_status, AuditRecord, EncounterResult, QuoteStatus};

/// Readmission factors are expected to score at least this; lower scores are
/// kept but flagged.
pub const READMISSION_CONFIDENCE_FLOOR: u8 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuoteMode {
    /// Any quote fragment short of VERIFIED fails the encounter.
    Strict,
    /// Statuses are recorded and the factor is kept; non-verified quotes
    /// become warnings.
    Flag,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub metric: Metric,
    pub templates: TemplateLibrary,
    pub input_spec: InputSpec,
    pub model_id: String,
    pub quote_mode: QuoteMode,
    pub extraction_temperature: f64,
    pub scoring_temperature: f64,
    pub timeout: Duration,
    pub max_output_tokens: u32,
}

impl PipelineConfig {
    /// Final templates and input spec for `metric`, flag-mode quotes.
    pub fn new(metric: Metric, model_id: impl Into<String>) -> Self {
        Self {
            metric,
            templates: TemplateLibrary::builtin(),
            input_spec: InputSpec::final_for(metric),
            model_id: model_id.into(),
            quote_mode: QuoteMode::Flag,
            extraction_temperature: 1.0,
            scoring_temperature: 0.0,
            timeout: Duration::from_secs(300),
            max_output_tokens: 16_000,
        }
    }

    /// Configuration for the mock backend: strict quotes.
    pub fn mock(metric: Metric) -> Self {
        Self {
            quote_mode: QuoteMode::Strict,
            ..Self::new(metric, "mock")
        }
    }

    fn request(&self, stage: Stage, prompt: String) -> CompletionRequest {
        CompletionRequest {
            prompt,
            model_id: self.model_id.clone(),
            max_output_tokens: self.max_output_tokens,
            timeout: self.timeout,
            temperature: match stage {
                Stage::Scoring => self.scoring_temperature,
                _ => self.extraction_temperature,
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum EncounterErrorKind {
    #[error("invalid bundle: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidBundle(Vec<Violation>),
    #[error("bundle metric {bundle} does not match pipeline metric {pipeline}")]
    MetricMismatch { bundle: Metric, pipeline: Metric },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error("quote verification failed for {} fragment(s): {}", .0.len(), .0.join(" | "))]
    QuoteVerification(Vec<String>),
}

/// Failure of one encounter, tagged with the stage it happened in (`None`
/// before any stage ran) and carrying the audit collected so far.
#[derive(Debug, Error)]
pub struct EncounterError {
    pub encounter_id: String,
    pub stage: Option<Stage>,
    #[source]
    pub kind: EncounterErrorKind,
    pub audit: Vec<AuditRecord>,
}

impl fmt::Display for EncounterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(s) => write!(f, "encounter {} failed at {s}: {}", self.encounter_id, self.kind),
            None => write!(f, "encounter {} rejected: {}", self.encounter_id, self.kind),
        }
    }
}

struct Run<'a> {
    bundle: &'a EncounterBundle,
    config: &'a PipelineConfig,
    gateway: &'a Gateway,
    policy: &'a RetryPolicy,
    audit: Vec<AuditRecord>,
}

impl Run<'_> {
    fn fail(&mut self, stage: Option<Stage>, kind: impl Into<EncounterErrorKind>) -> EncounterError {
        EncounterError {
            encounter_id: self.bundle.encounter_id.clone(),
            stage,
            kind: kind.into(),
            audit: std::mem::take(&mut self.audit),
        }
    }

    fn record(&mut self, stage: Stage, template_id: &str, log: &[AttemptRecord]) {
        self.audit.extend(log.iter().map(|a| AuditRecord {
            encounter_id: self.bundle.encounter_id.clone(),
            stage,
            template_id: template_id.to_string(),
            model_id: a.model_id.clone(),
            attempt: a.attempt,
            prompt: a.prompt.clone(),
            response: a.response.clone(),
            error: a.error.clone(),
            latency_ms: a.latency_ms,
            validation: None,
        }));
    }

    fn validated(&mut self, outcome: Result<(), String>) {
        if let Some(last) = self.audit.last_mut() {
            last.validation = Some(match outcome {
                Ok(()) => "ok".to_string(),
                Err(e) => e,
            });
        }
    }

    /// Renders and sends one stage, then parses the reply with `parse`.
    fn stage<T, E: Into<EncounterErrorKind> + ToString>(
        &mut self,
        stage: Stage,
        ctx: RenderContext<'_>,
        parse: impl FnOnce(&str) -> Result<T, E>,
    ) -> Result<T, EncounterError> {
        let template = match self.config.templates.latest(self.config.metric, stage) {
            Ok(t) => t,
            Err(e) => return Err(self.fail(Some(stage), e)),
        };
        let prompt = match render(template, &ctx) {
            Ok(p) => p,
            Err(e) => return Err(self.fail(Some(stage), e)),
        };
        let req = self.config.request(stage, prompt);
        let text = match self.gateway.complete(&req, self.policy) {
            Ok(c) => {
                self.record(stage, &template.template_id, &c.log);
                c.text
            }
            Err(e) => {
                self.record(stage, &template.template_id, e.attempt_log());
                return Err(self.fail(Some(stage), e));
            }
        };
        match parse(&text) {
            Ok(v) => {
                self.validated(Ok(()));
                Ok(v)
            }
            Err(e) => {
                self.validated(Err(e.to_string()));
                Err(self.fail(Some(stage), e))
            }
        }
    }
}

/// Runs GANTT → FACTORS → SCORING for one bundle. Scoring is skipped when
/// no factors were extracted.
pub fn run_encounter(
    bundle: &EncounterBundle,
    config: &PipelineConfig,
    gateway: &Gateway,
    policy: &RetryPolicy,
) -> Result<EncounterResult, EncounterError> {
    let mut run = Run {
        bundle,
        config,
        gateway,
        policy,
        audit: Vec::new(),
    };
    let violations = validate_bundle(bundle);
    if !violations.is_empty() {
        return Err(run.fail(None, EncounterErrorKind::InvalidBundle(violations)));
    }
    if bundle.metric != config.metric {
        return Err(run.fail(
            None,
            EncounterErrorKind::MetricMismatch {
                bundle: bundle.metric,
                pipeline: config.metric,
            },
        ));
    }
    let notes = match assemble_note_context(bundle, &config.input_spec) {
        Ok(n) => n,
        Err(e) => return Err(run.fail(Some(Stage::Gantt), e)),
    };
    let metric = config.metric;

    let ctx = RenderContext {
        notes_text: &notes,
        ..Default::default()
    };
    let gantt = run.stage(Stage::Gantt, ctx, |raw| parse_gantt(raw, metric))?;
    let gantt_json = serde_json::to_string_pretty(&gantt).expect("gantt serializes");

    let ctx = RenderContext {
        notes_text: &notes,
        gantt_json: Some(&gantt_json),
        factors_json: None,
    };
    let parsed = run.stage(Stage::Factors, ctx, |raw| parse_factors(raw, metric))?;
    let mut warnings = parsed.warnings;

    let mut scored = if parsed.factors.is_empty() {
        Vec::new()
    } else {
        let factors_json = serde_json::to_string_pretty(&super::types::FactorsDoc {
            reasons: parsed.factors.clone(),
        })
        .expect("factors serialize");
        let ctx = RenderContext {
            notes_text: &notes,
            gantt_json: Some(&gantt_json),
            factors_json: Some(&factors_json),
        };
        let factors = &parsed.factors;
        run.stage(Stage::Scoring, ctx, |raw| {
            let doc = parse_scoring(raw).map_err(EncounterErrorKind::from)?;
            attach_confidences(factors, &doc).map_err(EncounterErrorKind::from)
        })?
    };

    let index = QuoteIndex::new(bundle);
    let gantt_quotes: BTreeMap<u32, _> = gantt
        .events
        .iter()
        .map(|e| (e.event_id, index.verify(&e.relevant_quotes)))
        .collect();
    for f in &mut scored {
        f.quote_checks = index.verify(&f.factor.relevant_quotes);
        f.quote_status = aggregate_status(&f.quote_checks);
    }

    let mut result = EncounterResult {
        encounter_id: bundle.encounter_id.clone(),
        metric,
        gantt,
        gantt_quotes,
        scored_factors: scored,
        warnings: Vec::new(),
        audit: Vec::new(),
    };
    let bad: Vec<String> = result
        .all_quote_checks()
        .filter(|c| c.status != QuoteStatus::Verified)
        .map(|c| format!("{:?} ({:?})", c.fragment, c.status))
        .collect();
    if !bad.is_empty() {
        match config.quote_mode {
            QuoteMode::Strict => {
                let stage = Some(Stage::Scoring);
                return Err(run.fail(stage, EncounterErrorKind::QuoteVerification(bad)));
            }
            QuoteMode::Flag => warnings.extend(bad.into_iter().map(|b| format!("quote not verified: {b}"))),
        }
    }
    if metric == Metric::Readmission {
        for f in &result.scored_factors {
            if f.confidence.value() < READMISSION_CONFIDENCE_FLOOR {
                warnings.push(format!(
                    "factor {:?} scored {} (below {READMISSION_CONFIDENCE_FLOOR})",
                    f.factor.reason,
                    f.confidence.value()
                ));
            }
        }
    }
    result.warnings = warnings;
    result.audit = run.audit;
    Ok(result)
}

/// Which encounters a cohort run processes. Unset fields do not filter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub los_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub los_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_age: Option<u32>,
}

pub const LOS_GROUPS: [&str; 5] = [
    "Sepsis",
    "Skin and Soft Tissue Infection",
    "Ischemic Stroke",
    "Blunt Head Injury",
    "Alcohol Use Disorder",
];
pub const READMISSION_GROUPS: [&str; 4] = ["COPD", "HF", "AMI", "Pneumonia"];

impl CohortFilter {
    /// Adult inpatients in the five LOS groups with LOS in [4, 20] days.
    pub fn los_default() -> Self {
        Self {
            metric: Some(Metric::Los),
            los_min: Some(4.0),
            los_max: Some(20.0),
            groups: Some(LOS_GROUPS.iter().map(|s| s.to_string()).collect()),
            min_age: Some(18),
        }
    }

    /// Adults in the four readmission diagnosis groups.
    pub fn readmission_default() -> Self {
        Self {
            metric: Some(Metric::Readmission),
            groups: Some(READMISSION_GROUPS.iter().map(|s| s.to_string()).collect()),
            min_age: Some(18),
            ..Self::default()
        }
    }

    pub fn default_for(metric: Metric) -> Self {
        match metric {
            Metric::Los => Self::los_default(),
            Metric::Readmission => Self::readmission_default(),
        }
    }

    pub fn accepts(&self, b: &EncounterBundle) -> bool {
        let c = &b.cohort;
        self.metric.is_none_or(|m| m == b.metric)
            && self.los_min.is_none_or(|lo| c.los_days >= lo)
            && self.los_max.is_none_or(|hi| c.los_days <= hi)
            && self.groups.as_ref().is_none_or(|g| g.contains(&c.drg_or_dx_group))
            && self.min_age.is_none_or(|a| c.age_years >= a)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub succeeded: usize,
    pub failed: usize,
    pub skipped_by_filter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterFailure {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    pub error: String,
    #[serde(default)]
    pub audit: Vec<AuditRecord>,
}

impl From<EncounterError> for EncounterFailure {
    fn from(e: EncounterError) -> Self {
        Self {
            stage: e.stage,
            error: e.to_string(),
            audit: e.audit,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortResult {
    pub results: BTreeMap<String, EncounterResult>,
    pub failures: BTreeMap<String, EncounterFailure>,
    pub summary: CohortSummary,
}

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("no encounter passes the cohort filter ({skipped} skipped)")]
    EmptyCohort { skipped: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl CohortResult {
    /// Results and failures without audit trails (which hold latencies), for
    /// comparing runs.
    pub fn outcome(&self) -> serde_json::Value {
        let results: BTreeMap<_, _> = self
            .results
            .iter()
            .map(|(k, r)| {
                let mut r = r.clone();
                r.audit.clear();
                (k.clone(), r)
            })
            .collect();
        let failures: BTreeMap<_, _> = self
            .failures
            .iter()
            .map(|(k, f)| (k.clone(), (f.stage, f.error.clone())))
            .collect();
        serde_json::json!({ "results": results, "failures": failures, "summary": self.summary })
    }

    /// Writes `results/{id}.json`, `audit/{id}.jsonl`, `failures.json` and
    /// `summary.json` under `out`.
    pub fn write_dir(&self, out: &Path) -> Result<(), CorpusError> {
        let results_dir = out.join("results");
        let audit_dir = out.join("audit");
        create_dir(&results_dir)?;
        create_dir(&audit_dir)?;
        let io = |path: &Path, source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let audits = self
            .results
            .iter()
            .map(|(id, r)| (id, &r.audit))
            .chain(self.failures.iter().map(|(id, f)| (id, &f.audit)));
        for (id, audit) in audits {
            let path = audit_dir.join(format!("{id}.jsonl"));
            let mut text = String::new();
            for rec in audit {
                text.push_str(&serde_json::to_string(rec).expect("audit serializes"));
                text.push('\n');
            }
            std::fs::write(&path, text).map_err(|e| io(&path, e))?;
        }
        for (id, r) in &self.results {
            let mut r = r.clone();
            r.audit.clear();
            write_json(&results_dir.join(format!("{id}.json")), &r)?;
        }
        let failures: BTreeMap<_, _> = self
            .failures
            .iter()
            .map(|(k, f)| (k, serde_json::json!({ "stage": f.stage, "error": f.error })))
            .collect();
        write_json(&out.join("failures.json"), &failures)?;
        write_json(&out.join("summary.json"), &self.summary)
    }
}

/// Reads every `results/*.json` under a run directory written by
/// [`CohortResult::write_dir`].
pub fn load_results(run_dir: &Path) -> Result<BTreeMap<String, EncounterResult>, CorpusError> {
    let dir = run_dir.join("results");
    let entries = std::fs::read_dir(&dir).map_err(|source| CorpusError::Io { path: dir.clone(), source })?;
    let mut out = BTreeMap::new();
    for e in entries {
        let path = e.map_err(|source| CorpusError::Io { path: dir.clone(), source })?.path();
        if path.extension().is_some_and(|x| x == "json") {
            let r: EncounterResult = read_json(&path)?;
            out.insert(r.encounter_id.clone(), r);
        }
    }
    Ok(out)
}

/// Runs every bundle that passes `filter`, at most `policy.max_concurrency`
/// encounters at a time. A failing encounter never stops the run.
pub fn run_cohort(
    corpus: &Corpus,
    filter: &CohortFilter,
    config: &PipelineConfig,
    gateway: &Gateway,
    policy: &RetryPolicy,
) -> Result<CohortResult, CohortError> {
    policy.validate()?;
    let (selected, skipped): (Vec<&EncounterBundle>, Vec<_>) = corpus.bundles.iter().partition(|b| filter.accepts(b));
    if selected.is_empty() {
        return Err(CohortError::EmptyCohort { skipped: skipped.len() });
    }

    let next = AtomicUsize::new(0);
    let merged = Mutex::new(CohortResult::default());
    let workers = policy.max_concurrency.min(selected.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(b) = selected.get(i) else { break };
                let outcome = run_encounter(b, config, gateway, policy);
                let mut m = merged.lock().unwrap();
                match outcome {
                    Ok(r) => {
                        m.results.insert(b.encounter_id.clone(), r);
                    }
                    Err(e) => {
                        m.failures.insert(b.encounter_id.clone(), e.into());
                    }
                }
            });
        }
    });

    let mut out = merged.into_inner().unwrap();
    out.summary = CohortSummary {
        succeeded: out.results.len(),
        failed: out.failures.len(),
        skipped_by_filter: skipped.len(),
    };
    Ok(out)
}
