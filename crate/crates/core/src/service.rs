//! Reviewer-facing HTTP API (under `/v1`) and its append-only annotation
//! log.
//!
//! Data directory layout:
//!
//! ```text
//! DIR/corpus/            corpus (manifest.json + encounters/)
//! DIR/results/{id}.json  pipeline results
//! DIR/ledger/{los|readm}.jsonl   optional spec ledgers (holdout rules)
//! DIR/annotations.jsonl  annotation log, created on first start
//! ```
//!
//! The log is the only mutable state. Every write appends one JSON line
//! under a single lock; on open, a torn trailing line (no newline) is
//! dropped and the file truncated back to the last complete record.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::CorsLayer;
use uuid::Uuid;

use crate::corpus::{read_json, Corpus, CorpusError};
use crate::domain::{BandMap, EncounterBundle, LikertScore, Metric, NoteType};
use crate::eval::{
    agreement, ai_rater_pairs, calibrate, calibration_items, default_edges, interrater_pairs, latest_per_key,
    AgreementKind, AgreementMode, AgreementReport, Annotation, AnnotationKey, CalibrationBin, CiMethod, RaterTier,
};
use crate::ledger::{Ledger, LedgerError, Split};
use crate::pipeline::{aggregate_status, load_results, EncounterResult, FactorRef, GanttChart, QuoteCheck, QuoteIndex, ScoredFactor};

pub const ANNOTATION_LOG: &str = "annotations.jsonl";
pub const DEFAULT_PAGE_SIZE: usize = 50;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("annotation log {path} line {line} is corrupt: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error("result for {0:?} has no bundle in the corpus")]
    OrphanResult(String),
}

/// What [`AnnotationLog::open`] found on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub annotations: Vec<Annotation>,
    /// Bytes of a torn trailing record that were discarded.
    pub dropped_bytes: usize,
}

/// Append-only JSONL file of annotations.
#[derive(Debug)]
pub struct AnnotationLog {
    path: PathBuf,
    file: File,
    records: usize,
}

impl AnnotationLog {
    /// Opens (creating if needed) and replays the log, repairing a torn tail.
    pub fn open(path: &Path) -> Result<(Self, Replay), StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };
        let (annotations, complete) = parse_log(&bytes, path)?;
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        let dropped_bytes = bytes.len() - complete;
        if dropped_bytes > 0 {
            file.set_len(complete as u64).map_err(io_err)?;
        }
        let log = Self {
            path: path.to_path_buf(),
            file,
            records: annotations.len(),
        };
        Ok((
            log,
            Replay {
                annotations,
                dropped_bytes,
            },
        ))
    }

    /// Writes one record as a single `write_all` of line + newline.
    pub fn append(&mut self, a: &Annotation) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(a).expect("annotations serialize");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })?;
        self.records += 1;
        Ok(())
    }

    /// Records in the log, superseded ones included.
    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }
}

/// Complete records and the byte length they span; a torn tail is ignored.
fn parse_log(bytes: &[u8], path: &Path) -> Result<(Vec<Annotation>, usize), StoreError> {
    let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let mut annotations = Vec::new();
    for (i, line) in bytes[..complete].split(|b| *b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let a: Annotation = serde_json::from_slice(line).map_err(|e| StoreError::CorruptLog {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        annotations.push(a);
    }
    Ok((annotations, complete))
}

/// Read-only replay: current annotations (latest per key) without repairing
/// the file.
pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>, StoreError> {
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(latest_per_key(parse_log(&bytes, path)?.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub bundle: EncounterBundle,
    pub result: EncounterResult,
}

struct Annotations {
    log: AnnotationLog,
    latest: BTreeMap<AnnotationKey, Annotation>,
}

/// Cases, ledgers and the annotation log behind one writer lock.
pub struct Store {
    cases: BTreeMap<String, Case>,
    ledgers: BTreeMap<Metric, Ledger>,
    annotations: Mutex<Annotations>,
}

impl Store {
    pub fn new(cases: Vec<Case>, ledgers: BTreeMap<Metric, Ledger>, log_path: &Path) -> Result<(Self, Replay), StoreError> {
        let (log, replay) = AnnotationLog::open(log_path)?;
        let latest = latest_per_key(replay.annotations.iter().cloned()).into_iter().map(|a| (a.key(), a)).collect();
        let store = Self {
            cases: cases.into_iter().map(|c| (c.bundle.encounter_id.clone(), c)).collect(),
            ledgers,
            annotations: Mutex::new(Annotations { log, latest }),
        };
        Ok((store, replay))
    }

    /// Loads the data-directory layout described in the module docs.
    pub fn open(dir: &Path) -> Result<(Self, Replay), StoreError> {
        let corpus = Corpus::load_dir(&dir.join("corpus"))?;
        let mut bundles: BTreeMap<String, EncounterBundle> =
            corpus.bundles.into_iter().map(|b| (b.encounter_id.clone(), b)).collect();
        let mut cases = Vec::new();
        if dir.join("results").is_dir() {
            for (id, result) in load_results(dir)? {
                let bundle = bundles.remove(&id).ok_or(StoreError::OrphanResult(id))?;
                cases.push(Case { bundle, result });
            }
        }
        let mut ledgers = BTreeMap::new();
        for m in Metric::all() {
            let p = dir.join("ledger").join(format!("{}.jsonl", m.slug()));
            if p.exists() {
                ledgers.insert(m, Ledger::load(&p)?);
            }
        }
        Self::new(cases, ledgers, &dir.join(ANNOTATION_LOG))
    }

    pub fn case_count(&self) -> usize {
        self.cases.len()
    }

    /// Current (latest-per-key) annotations.
    pub fn annotations(&self) -> Vec<Annotation> {
        self.annotations.lock().unwrap().latest.values().cloned().collect()
    }

    pub fn log_len(&self) -> usize {
        self.annotations.lock().unwrap().log.len()
    }

    fn resolve(&self, r: &FactorRef) -> Option<(&Case, &ScoredFactor)> {
        let c = self.cases.get(&r.encounter_id)?;
        Some((c, c.result.factor(r.factor_index)?))
    }

    pub fn submit(&self, req: AnnotationRequest, authenticated_rater: &str) -> Result<Annotation, ApiError> {
        if req.rater_id != authenticated_rater {
            return Err(ApiError::Forbidden(format!(
                "token belongs to rater {authenticated_rater:?}, not {:?}",
                req.rater_id
            )));
        }
        let likert = LikertScore::new(req.likert).map_err(|e| ApiError::Validation(e.to_string()))?;
        let (case, _) = self
            .resolve(&req.factor_ref)
            .ok_or_else(|| ApiError::NotFound(format!("no factor {:?}", req.factor_ref)))?;
        if let Some(l) = self.ledgers.get(&case.bundle.metric) {
            l.check_scoring_allowed(&req.factor_ref.encounter_id, req.round_id)
                .map_err(|e| ApiError::Holdout(e.to_string()))?;
        }
        let a = Annotation {
            annotation_id: Uuid::new_v4(),
            factor_ref: req.factor_ref,
            rater_id: req.rater_id,
            rater_tier: req.rater_tier,
            likert,
            comment: req.comment,
            round_id: req.round_id,
            timestamp: Utc::now(),
        };
        let mut guard = self.annotations.lock().unwrap();
        guard.log.append(&a).map_err(|e| ApiError::Internal(e.to_string()))?;
        guard.latest.insert(a.key(), a.clone());
        Ok(a)
    }

    fn split_of(&self, c: &Case) -> Option<Split> {
        self.ledgers.get(&c.bundle.metric).and_then(|l| l.split_of(&c.bundle.encounter_id))
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unauthorized(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Holdout(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ApiError::Unauthorized(_) => (StatusCode::UNAUTHORIZED, "unauthorized"),
            ApiError::Forbidden(_) => (StatusCode::FORBIDDEN, "forbidden"),
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Holdout(_) => (StatusCode::CONFLICT, "holdout_violation"),
            ApiError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.parts();
        let body = ErrorBody {
            error: code.to_string(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

/// One rater's credentials entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterConfig {
    pub rater_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<RaterTier>,
    /// Cases this rater should review; empty means all.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assigned: Vec<String>,
}

/// Bearer token → rater, loaded from a JSON object.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tokens(pub BTreeMap<String, RaterConfig>);

impl Tokens {
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Ok(read_json(path)?)
    }

    fn rater(&self, headers: &HeaderMap) -> Result<&RaterConfig, ApiError> {
        let token = headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(|| ApiError::Unauthorized("missing bearer token".into()))?;
        self.0
            .get(token.trim())
            .ok_or_else(|| ApiError::Unauthorized("unknown token".into()))
    }

    fn by_rater(&self, rater_id: &str) -> Option<&RaterConfig> {
        self.0.values().find(|r| r.rater_id == rater_id)
    }
}

pub struct AppState {
    pub store: Store,
    pub tokens: Tokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub factor_ref: FactorRef,
    pub rater_id: String,
    pub rater_tier: RaterTier,
    /// Checked against 1..=5 by the handler.
    pub likert: i64,
    #[serde(default)]
    pub comment: Option<String>,
    pub round_id: u32,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CaseQuery {
    pub metric: Option<String>,
    pub round: Option<u32>,
    pub assigned_to: Option<String>,
    pub page: Option<usize>,
    pub per_page: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub encounter_id: String,
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub n_events: usize,
    pub n_factors: usize,
    /// Factors with at least one annotation (in `round`, when given).
    pub annotated_factors: usize,
    pub n_annotations: usize,
    pub raters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePage {
    pub total: usize,
    pub page: usize,
    pub per_page: usize,
    pub items: Vec<CaseSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteView {
    pub note_id: String,
    pub note_type: NoteType,
    pub author_role: String,
    pub timestamp: NaiveDateTime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encounter_id: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub encounter_id: String,
    pub metric: Metric,
    pub notes: Vec<NoteView>,
    pub gantt: GanttChart,
    pub gantt_quotes: BTreeMap<u32, Vec<QuoteCheck>>,
    pub scored_factors: Vec<ScoredFactor>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct MetricsQuery {
    pub metric: Option<String>,
    pub round: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    pub n_annotations: usize,
    /// True when there is nothing to report.
    pub empty: bool,
    pub agreement: Vec<AgreementReport>,
    pub calibration: Vec<CalibrationBin>,
}

fn parse_metric(m: Option<&str>) -> Result<Option<Metric>, ApiError> {
    m.map(|s| s.parse::<Metric>().map_err(|e| ApiError::BadRequest(e.to_string())))
        .transpose()
}

async fn list_cases(State(st): State<Arc<AppState>>, Query(q): Query<CaseQuery>) -> Result<Json<CasePage>, ApiError> {
    let metric = parse_metric(q.metric.as_deref())?;
    let assigned: Option<BTreeSet<&str>> = match &q.assigned_to {
        Some(r) => {
            let cfg = st
                .tokens
                .by_rater(r)
                .ok_or_else(|| ApiError::BadRequest(format!("unknown rater {r:?}")))?;
            (!cfg.assigned.is_empty()).then(|| cfg.assigned.iter().map(String::as_str).collect())
        }
        None => None,
    };
    let per_page = q.per_page.unwrap_or(DEFAULT_PAGE_SIZE).clamp(1, 500);
    let page = q.page.unwrap_or(1).max(1);
    let annotations = st.store.annotations();
    let mut by_case: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
    for a in annotations.iter().filter(|a| q.round.is_none_or(|r| a.round_id == r)) {
        by_case.entry(a.factor_ref.encounter_id.as_str()).or_default().push(a);
    }
    let matching: Vec<&Case> = st
        .store
        .cases
        .values()
        .filter(|c| metric.is_none_or(|m| c.bundle.metric == m))
        .filter(|c| assigned.as_ref().is_none_or(|s| s.contains(c.bundle.encounter_id.as_str())))
        .collect();
    let items = matching
        .iter()
        .skip((page - 1) * per_page)
        .take(per_page)
        .map(|c| {
            let anns = by_case.get(c.bundle.encounter_id.as_str()).map(Vec::as_slice).unwrap_or_default();
            CaseSummary {
                encounter_id: c.bundle.encounter_id.clone(),
                metric: c.bundle.metric,
                split: st.store.split_of(c),
                n_events: c.result.gantt.events.len(),
                n_factors: c.result.scored_factors.len(),
                annotated_factors: anns.iter().map(|a| a.factor_ref.factor_index).collect::<BTreeSet<_>>().len(),
                n_annotations: anns.len(),
                raters: anns.iter().map(|a| a.rater_id.clone()).collect::<BTreeSet<_>>().into_iter().collect(),
            }
        })
        .collect();
    Ok(Json(CasePage {
        total: matching.len(),
        page,
        per_page,
        items,
    }))
}

/// Full case view; quote anchors are recomputed against the bundle.
pub fn case_view(case: &Case) -> CaseView {
    let index = QuoteIndex::new(&case.bundle);
    let r = &case.result;
    let scored_factors = r
        .scored_factors
        .iter()
        .map(|f| {
            let quote_checks = index.verify(&f.factor.relevant_quotes);
            ScoredFactor {
                quote_status: aggregate_status(&quote_checks),
                quote_checks,
                ..f.clone()
            }
        })
        .collect();
    CaseView {
        encounter_id: r.encounter_id.clone(),
        metric: r.metric,
        notes: case
            .bundle
            .notes
            .iter()
            .map(|n| NoteView {
                note_id: n.note_id.clone(),
                note_type: n.note_type,
                author_role: n.author_role.clone(),
                timestamp: n.timestamp,
                encounter_id: n.encounter_id.clone(),
                text: n.text.clone(),
            })
            .collect(),
        gantt: r.gantt.clone(),
        gantt_quotes: r.gantt.events.iter().map(|e| (e.event_id, index.verify(&e.relevant_quotes))).collect(),
        scored_factors,
        warnings: r.warnings.clone(),
    }
}

async fn get_case(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<CaseView>, ApiError> {
    let c = st
        .store
        .cases
        .get(&id)
        .ok_or_else(|| ApiError::NotFound(format!("no case {id:?}")))?;
    Ok(Json(case_view(c)))
}

async fn post_annotation(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Result<Json<AnnotationRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Json<Annotation>), ApiError> {
    let rater = st.tokens.rater(&headers)?.rater_id.clone();
    let Json(req) = body.map_err(|e| ApiError::Validation(e.body_text()))?;
    let st2 = st.clone();
    let a = tokio::task::spawn_blocking(move || st2.store.submit(req, &rater))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(a)))
}

/// Agreement and calibration over the current annotations.
pub fn metrics(store: &Store, metric: Option<Metric>, round: Option<u32>) -> MetricsReport {
    let anns: Vec<Annotation> = store
        .annotations()
        .into_iter()
        .filter(|a| round.is_none_or(|r| a.round_id == r))
        .filter(|a| metric.is_none_or(|m| store.cases.get(&a.factor_ref.encounter_id).is_some_and(|c| c.bundle.metric == m)))
        .collect();
    let results: BTreeMap<String, EncounterResult> =
        store.cases.iter().map(|(k, c)| (k.clone(), c.result.clone())).collect();
    let mut agreement_reports = Vec::new();
    let bands = BandMap::default();
    // annotations were resolved when stored, so pairing cannot dangle
    let ai = ai_rater_pairs(&results, &anns, &bands).unwrap_or_default();
    let ir = interrater_pairs(&anns);
    for (kind, pairs) in [(AgreementKind::AiRater, &ai), (AgreementKind::InterRater, &ir)] {
        for mode in [AgreementMode::Exact, AgreementMode::WithinOne] {
            if let Ok(r) = agreement(pairs, mode, kind, CiMethod::Analytic) {
                agreement_reports.push(r);
            }
        }
    }
    let edges = default_edges(metric.unwrap_or(Metric::Los));
    let calibration = calibration_items(&results, &anns)
        .and_then(|items| calibrate(&items, &edges, CiMethod::Analytic))
        .unwrap_or_default();
    MetricsReport {
        metric,
        round,
        n_annotations: anns.len(),
        empty: anns.is_empty(),
        agreement: agreement_reports,
        calibration,
    }
}

async fn get_metrics(State(st): State<Arc<AppState>>, Query(q): Query<MetricsQuery>) -> Result<Json<MetricsReport>, ApiError> {
    let metric = parse_metric(q.metric.as_deref())?;
    Ok(Json(metrics(&st.store, metric, q.round)))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/cases", get(list_cases))
        .route("/v1/cases/{id}", get(get_case))
        .route("/v1/annotations", post(post_annotation))
        .route("/v1/metrics", get(get_metrics))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
