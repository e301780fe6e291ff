//! Concordance between scores (AI vs rater, rater vs rater) and calibration
//! of AI confidence against expert Likert scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;
use uuid::Uuid;

use crate::domain::{confidence_to_likert, BandMap, ConfidenceDecile, LikertScore, Metric};
use crate::pipeline::{EncounterResult, FactorRef};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;
pub const DEFAULT_BOOTSTRAP_DRAWS: usize = 2000;
pub const DEFAULT_BOOTSTRAP_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RaterTier {
    Low,
    Medium,
    High,
}

/// One rater's Likert score for one factor in one refinement round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: Uuid,
    pub factor_ref: FactorRef,
    pub rater_id: String,
    pub rater_tier: RaterTier,
    pub likert: LikertScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub round_id: u32,
    pub timestamp: DateTime<Utc>,
}

/// Identity of an annotation slot; at most one annotation per key.
pub type AnnotationKey = (FactorRef, String, u32);

impl Annotation {
    pub fn key(&self) -> AnnotationKey {
        (self.factor_ref.clone(), self.rater_id.clone(), self.round_id)
    }
}

/// Keeps the last annotation per key, in first-seen key order.
pub fn latest_per_key(annotations: impl IntoIterator<Item = Annotation>) -> Vec<Annotation> {
    let mut order = Vec::new();
    let mut by_key: BTreeMap<AnnotationKey, Annotation> = BTreeMap::new();
    for a in annotations {
        let k = a.key();
        if !by_key.contains_key(&k) {
            order.push(k.clone());
        }
        by_key.insert(k, a);
    }
    order.into_iter().map(|k| by_key.remove(&k).unwrap()).collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no score pairs to compare")]
    EmptyPairs,
    #[error("invalid proportion: k={k}, n={n}")]
    Proportion { k: usize, n: usize },
    #[error("invalid bin edges {edges:?}: {reason}")]
    Edges { edges: Vec<u8>, reason: String },
    #[error("annotation references {0:?}, which has no scored factor")]
    DanglingRef(FactorRef),
    #[error("bootstrap needs at least one draw")]
    NoDraws,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgreementMode {
    Exact,
    WithinOne,
}

impl AgreementMode {
    pub fn agrees(self, a: LikertScore, b: LikertScore) -> bool {
        let d = a.value().abs_diff(b.value());
        match self {
            AgreementMode::Exact => d == 0,
            AgreementMode::WithinOne => d <= 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgreementKind {
    AiRater,
    InterRater,
}

/// Interval method for proportions and means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum CiMethod {
    /// Wilson score interval for proportions; Student t for means.
    Analytic,
    /// Percentile bootstrap resampling whole encounters with replacement.
    PatientBootstrap { draws: usize, seed: u64 },
}

impl CiMethod {
    pub fn bootstrap() -> Self {
        CiMethod::PatientBootstrap {
            draws: DEFAULT_BOOTSTRAP_DRAWS,
            seed: DEFAULT_BOOTSTRAP_SEED,
        }
    }
}

/// Two scores for the same factor; `encounter_id` is the resampling cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorePair {
    pub a: LikertScore,
    pub b: LikertScore,
    pub encounter_id: String,
}

impl ScorePair {
    pub fn new(a: LikertScore, b: LikertScore, encounter_id: impl Into<String>) -> Self {
        Self {
            a,
            b,
            encounter_id: encounter_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub mode: AgreementMode,
    pub kind: AgreementKind,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_pairs: usize,
    pub n_agree: usize,
}

/// Wilson score interval at 95%.
pub fn wilson(k: usize, n: usize) -> Result<(f64, f64), EvalError> {
    if n == 0 || k > n {
        return Err(EvalError::Proportion { k, n });
    }
    let (k_f, n_f) = (k as f64, n as f64);
    let p = k_f / n_f;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z_95 / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

/// Interpolated (type 7) quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap of `stat` over clusters resampled with replacement.
/// `stat` gets the multiset of drawn cluster indices.
fn cluster_bootstrap(n_clusters: usize, draws: usize, seed: u64, stat: impl Fn(&[usize]) -> f64) -> Result<(f64, f64), EvalError> {
    if draws == 0 {
        return Err(EvalError::NoDraws);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0; n_clusters];
    let mut stats: Vec<f64> = (0..draws)
        .map(|_| {
            for i in idx.iter_mut() {
                *i = rng.random_range(0..n_clusters);
            }
            stat(&idx)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    Ok((quantile(&stats, 0.025), quantile(&stats, 0.975)))
}

/// Groups per-item values by cluster id, in sorted cluster order.
fn clusters<T: Copy>(items: impl IntoIterator<Item = (String, T)>) -> Vec<Vec<T>> {
    let mut by: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for (c, v) in items {
        by.entry(c).or_default().push(v);
    }
    by.into_values().collect()
}

/// Percentile bootstrap for a proportion, resampling clusters (patients).
pub fn bootstrap_proportion(outcomes: &[(String, bool)], draws: usize, seed: u64) -> Result<(f64, f64), EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Proportion { k: 0, n: 0 });
    }
    let groups: Vec<(usize, usize)> = clusters(outcomes.iter().map(|(c, ok)| (c.clone(), *ok)))
        .into_iter()
        .map(|g| (g.iter().filter(|x| **x).count(), g.len()))
        .collect();
    cluster_bootstrap(groups.len(), draws, seed, |idx| {
        let (k, n) = idx.iter().fold((0, 0), |(k, n), &i| (k + groups[i].0, n + groups[i].1));
        k as f64 / n as f64
    })
}

/// Interval for `k` successes out of `n` under `method`. Bootstrap needs
/// cluster labels, so it treats every trial as its own patient here; use
/// [`bootstrap_proportion`] when clusters are known.
pub fn proportion_ci(k: usize, n: usize, method: CiMethod) -> Result<(f64, f64), EvalError> {
    match method {
        CiMethod::Analytic => wilson(k, n),
        CiMethod::PatientBootstrap { draws, seed } => {
            if n == 0 || k > n {
                return Err(EvalError::Proportion { k, n });
            }
            let outcomes: Vec<(String, bool)> = (0..n).map(|i| (format!("{i:08}"), i < k)).collect();
            bootstrap_proportion(&outcomes, draws, seed)
        }
    }
}

fn clamp_ci(rate: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
    (lo.min(rate), hi.max(rate))
}

pub fn agreement(pairs: &[ScorePair], mode: AgreementMode, kind: AgreementKind, ci: CiMethod) -> Result<AgreementReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let n = pairs.len();
    let k = pairs.iter().filter(|p| mode.agrees(p.a, p.b)).count();
    let rate = k as f64 / n as f64;
    let interval = match ci {
        CiMethod::Analytic => wilson(k, n)?,
        CiMethod::PatientBootstrap { draws, seed } => {
            let outcomes: Vec<_> = pairs.iter().map(|p| (p.encounter_id.clone(), mode.agrees(p.a, p.b))).collect();
            bootstrap_proportion(&outcomes, draws, seed)?
        }
    };
    let (ci_low, ci_high) = clamp_ci(rate, interval);
    Ok(AgreementReport {
        mode,
        kind,
        rate,
        ci_low,
        ci_high,
        n_pairs: n,
        n_agree: k,
    })
}

/// All unordered rater pairs per (factor, round) with two or more raters.
pub fn interrater_pairs(annotations: &[Annotation]) -> Vec<ScorePair> {
    let mut groups: BTreeMap<(FactorRef, u32), BTreeMap<&str, LikertScore>> = BTreeMap::new();
    for a in annotations {
        groups
            .entry((a.factor_ref.clone(), a.round_id))
            .or_default()
            .insert(&a.rater_id, a.likert);
    }
    let mut out = Vec::new();
    for ((fr, _), raters) in groups {
        let scores: Vec<LikertScore> = raters.into_values().collect();
        for i in 0..scores.len() {
            for j in i + 1..scores.len() {
                out.push(ScorePair::new(scores[i], scores[j], fr.encounter_id.clone()));
            }
        }
    }
    out
}

fn resolve(results: &BTreeMap<String, EncounterResult>, r: &FactorRef) -> Result<ConfidenceDecile, EvalError> {
    results
        .get(&r.encounter_id)
        .and_then(|res| res.factor(r.factor_index))
        .map(|f| f.confidence)
        .ok_or_else(|| EvalError::DanglingRef(r.clone()))
}

/// (AI score mapped through `bands`, human score), one pair per annotation.
pub fn ai_rater_pairs(
    results: &BTreeMap<String, EncounterResult>,
    annotations: &[Annotation],
    bands: &BandMap,
) -> Result<Vec<ScorePair>, EvalError> {
    annotations
        .iter()
        .map(|a| {
            let c = resolve(results, &a.factor_ref)?;
            Ok(ScorePair::new(confidence_to_likert(c, bands), a.likert, a.factor_ref.encounter_id.clone()))
        })
        .collect()
}

/// One annotated factor for calibration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationItem {
    pub confidence: ConfidenceDecile,
    pub likert: LikertScore,
    pub encounter_id: String,
}

/// Joins annotations to their factors' confidences; each annotation is one
/// item.
pub fn calibration_items(
    results: &BTreeMap<String, EncounterResult>,
    annotations: &[Annotation],
) -> Result<Vec<CalibrationItem>, EvalError> {
    annotations
        .iter()
        .map(|a| {
            Ok(CalibrationItem {
                confidence: resolve(results, &a.factor_ref)?,
                likert: a.likert,
                encounter_id: a.factor_ref.encounter_id.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: u8,
    pub hi: u8,
    pub n: usize,
    pub mean_likert: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn default_edges(metric: Metric) -> Vec<u8> {
    match metric {
        Metric::Los => vec![0, 60, 70, 80, 90, 100],
        Metric::Readmission => vec![0, 50, 60, 70, 80, 90, 100],
    }
}

pub fn check_edges(edges: &[u8]) -> Result<(), EvalError> {
    let bad = |reason: &str| {
        Err(EvalError::Edges {
            edges: edges.to_vec(),
            reason: reason.into(),
        })
    };
    if edges.len() < 2 {
        return bad("need at least two edges");
    }
    if edges[0] != 0 || *edges.last().unwrap() != 100 {
        return bad("edges must start at 0 and end at 100");
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return bad("edges must be strictly increasing");
    }
    Ok(())
}

/// Index of the bin holding `c`: `[lo, hi)`, top bin closed.
pub fn bin_index(edges: &[u8], c: u8) -> usize {
    let last = edges.len() - 2;
    (0..=last).find(|&i| c >= edges[i] && c < edges[i + 1]).unwrap_or(last)
}

/// Student-t 95% interval for a mean; degenerate at the mean for n = 1.
pub fn t_interval(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, mean);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975);
    let half = t * (var / n as f64).sqrt();
    (mean - half, mean + half)
}

/// Mean Likert per confidence bin, empty bins omitted.
pub fn calibrate(items: &[CalibrationItem], edges: &[u8], ci: CiMethod) -> Result<Vec<CalibrationBin>, EvalError> {
    check_edges(edges)?;
    let mut bins: Vec<Vec<&CalibrationItem>> = vec![Vec::new(); edges.len() - 1];
    for it in items {
        bins[bin_index(edges, it.confidence.value())].push(it);
    }
    let mut out = Vec::new();
    for (i, members) in bins.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let values: Vec<f64> = members.iter().map(|m| f64::from(m.likert.value())).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let interval = match ci {
            CiMethod::Analytic => t_interval(&values),
            CiMethod::PatientBootstrap { draws, seed } => {
                let groups = clusters(members.iter().map(|m| (m.encounter_id.clone(), f64::from(m.likert.value()))));
                cluster_bootstrap(groups.len(), draws, seed, |idx| {
                    let (s, n) = idx.iter().fold((0.0, 0), |(s, n), &g| (s + groups[g].iter().sum::<f64>(), n + groups[g].len()));
                    s / n as f64
                })?
            }
        };
        let (ci_low, ci_high) = clamp_ci(mean, interval);
        out.push(CalibrationBin {
            lo: edges[i],
            hi: edges[i + 1],
            n: values.len(),
            mean_likert: mean,
            ci_low,
            ci_high,
        });
    }
    Ok(out)
}

pub fn agreement_csv(reports: &[AgreementReport]) -> String {
    let mut s = String::from("kind,mode,n_pairs,n_agree,rate,ci_low,ci_high\n");
    for r in reports {
        let kind = serde_json::to_value(r.kind).unwrap();
        let mode = serde_json::to_value(r.mode).unwrap();
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            kind.as_str().unwrap(),
            mode.as_str().unwrap(),
            r.n_pairs,
            r.n_agree,
            r.rate,
            r.ci_low,
            r.ci_high
        )
        .unwrap();
    }
    s
}

pub fn calibration_csv(bins: &[CalibrationBin]) -> String {
    let mut s = String::from("lo,hi,n,mean_likert,ci_low,ci_high\n");
    for b in bins {
        writeln!(s, "{},{},{},{},{},{}", b.lo, b.hi, b.n, b.mean_likert, b.ci_low, b.ci_high).unwrap();
    }
    s
}

/// Calibration plot: bin means with CI whiskers over confidence (x) and
/// Likert 1–5 (y).
pub fn calibration_svg(bins: &[CalibrationBin], title: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const M: f64 = 48.0;
    let x = |c: f64| M + c / 100.0 * (W - 2.0 * M);
    let y = |l: f64| H - M - (l.clamp(1.0, 5.0) - 1.0) / 4.0 * (H - 2.0 * M);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, xml_escape(title)).unwrap();
    writeln!(s, r#"<line x1="{M}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, H - M, W - M).unwrap();
    writeln!(s, r#"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#, H - M).unwrap();
    for c in (0..=100).step_by(10) {
        writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{c}</text>"#, x(c as f64), H - M + 16.0).unwrap();
    }
    for l in 1..=5 {
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{l}</text>"#, M - 6.0, y(l as f64) + 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">AI confidence (%)</text>"#, W / 2.0, H - 10.0).unwrap();
    writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {0})" text-anchor="middle">mean expert Likert</text>"#, H / 2.0).unwrap();
    for b in bins {
        let cx = x((f64::from(b.lo) + f64::from(b.hi)) / 2.0);
        writeln!(
            s,
            r#"<line class="ci" x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="steelblue"/>"#,
            y(b.ci_low),
            y(b.ci_high)
        )
        .unwrap();
        writeln!(
            s,
            r#"<circle class="bin" cx="{cx:.1}" cy="{:.1}" r="4" fill="steelblue"><title>[{}, {}) n={} mean={:.3}</title></circle>"#,
            y(b.mean_likert),
            b.lo,
            b.hi,
            b.n,
            b.mean_likert
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

pub(crate) fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Distinct encounters covered by a set of annotations.
pub fn annotated_encounters(annotations: &[Annotation]) -> BTreeSet<&str> {
    annotations.iter().map(|a| a.factor_ref.encounter_id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(v: i64) -> LikertScore {
        LikertScore::new(v).unwrap()
    }

    fn pairs(raw: &[(i64, i64)]) -> Vec<ScorePair> {
        raw.iter().enumerate().map(|(i, &(a, b))| ScorePair::new(l(a), l(b), format!("E{i}"))).collect()
    }

    fn ann(enc: &str, idx: usize, rater: &str, likert: i64, round: u32) -> Annotation {
        Annotation {
            annotation_id: Uuid::nil(),
            factor_ref: FactorRef {
                encounter_id: enc.into(),
                factor_index: idx,
            },
            rater_id: rater.into(),
            rater_tier: RaterTier::High,
            likert: l(likert),
            comment: None,
            round_id: round,
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    #[test]
    fn agreement_counts() {
        let p = pairs(&[(3, 3), (2, 4), (5, 5), (1, 2)]);
        let ex = agreement(&p, AgreementMode::Exact, AgreementKind::AiRater, CiMethod::Analytic).unwrap();
        let w1 = agreement(&p, AgreementMode::WithinOne, AgreementKind::AiRater, CiMethod::Analytic).unwrap();
        assert_eq!((ex.rate, w1.rate), (0.5, 0.75));
        assert!(ex.ci_low <= ex.rate && ex.rate <= ex.ci_high);
        let same = pairs(&[(4, 4); 7]);
        for mode in [AgreementMode::Exact, AgreementMode::WithinOne] {
            assert_eq!(agreement(&same, mode, AgreementKind::InterRater, CiMethod::Analytic).unwrap().rate, 1.0);
        }
        assert_eq!(
            agreement(&[], AgreementMode::Exact, AgreementKind::AiRater, CiMethod::Analytic),
            Err(EvalError::EmptyPairs)
        );
    }

    #[test]
    fn interrater_pair_counts() {
        let a = [ann("E1", 0, "A", 3, 1), ann("E1", 0, "B", 4, 1), ann("E1", 0, "C", 3, 1)];
        assert_eq!(interrater_pairs(&a).len(), 3);
        let single = [ann("E1", 0, "A", 3, 1), ann("E1", 1, "B", 4, 1)];
        assert!(interrater_pairs(&single).is_empty());
        let two = [
            ann("E1", 0, "A", 3, 1),
            ann("E1", 0, "B", 4, 1),
            ann("E2", 0, "A", 3, 1),
            ann("E2", 0, "B", 4, 1),
        ];
        assert_eq!(interrater_pairs(&two).len(), 2);
        // different rounds never pair
        let rounds = [ann("E1", 0, "A", 3, 1), ann("E1", 0, "B", 4, 2)];
        assert!(interrater_pairs(&rounds).is_empty());
    }

    #[test]
    fn wilson_boundaries() {
        let (lo, hi) = wilson(10, 10).unwrap();
        assert!(lo < 1.0 && hi == 1.0);
        let (lo, hi) = wilson(0, 10).unwrap();
        assert!(lo == 0.0 && hi > 0.0);
        assert!(wilson(1, 0).is_err());
        assert!(wilson(3, 2).is_err());
    }

    #[test]
    fn t_interval_df1_closed_form() {
        // {2,4}: mean 3, s = sqrt(2), se = 1, t_{0.975,1} = tan(0.475*pi)
        let (lo, hi) = t_interval(&[2.0, 4.0]);
        let t = (0.475 * std::f64::consts::PI).tan();
        assert!((lo - (3.0 - t)).abs() < 1e-9 && (hi - (3.0 + t)).abs() < 1e-9);
    }

    #[test]
    fn calibration_bins() {
        let item = |c: i64, lk: i64| CalibrationItem {
            confidence: ConfidenceDecile::new(c).unwrap(),
            likert: l(lk),
            encounter_id: "E".into(),
        };
        let bins = calibrate(&[item(80, 3), item(80, 3), item(80, 3)], &[0, 100], CiMethod::Analytic).unwrap();
        assert_eq!((bins[0].mean_likert, bins[0].ci_low, bins[0].ci_high), (3.0, 3.0, 3.0));
        let edges = [0, 50, 60, 70, 80, 90, 100];
        assert_eq!(bin_index(&edges, 50), 1);
        assert_eq!(bin_index(&edges, 100), 5);
        assert_eq!(bin_index(&edges, 90), 5);
        assert!(calibrate(&[], &[0, 50, 50, 100], CiMethod::Analytic).is_err());
        assert!(calibrate(&[], &[10, 100], CiMethod::Analytic).is_err());
    }

    #[test]
    fn bootstrap_is_seeded_and_brackets_rate() {
        let p: Vec<ScorePair> = (0..40).map(|i| ScorePair::new(l(1 + i % 5), l(1 + (i / 2) % 5), format!("P{}", i / 3))).collect();
        let ci = CiMethod::bootstrap();
        let a = agreement(&p, AgreementMode::WithinOne, AgreementKind::AiRater, ci).unwrap();
        let b = agreement(&p, AgreementMode::WithinOne, AgreementKind::AiRater, ci).unwrap();
        assert_eq!(a, b);
        assert!(a.ci_low <= a.rate && a.rate <= a.ci_high && a.ci_low < a.ci_high);
    }

    #[test]
    fn latest_annotation_wins() {
        let first = ann("E1", 0, "A", 2, 1);
        let second = ann("E1", 0, "A", 5, 1);
        let other = ann("E1", 1, "A", 1, 1);
        let out = latest_per_key([first, other.clone(), second.clone()]);
        assert_eq!(out, vec![second, other]);
    }

    #[test]
    fn dangling_ref() {
        let err = ai_rater_pairs(&BTreeMap::new(), &[ann("nope", 0, "A", 3, 1)], &BandMap::default()).unwrap_err();
        assert!(matches!(err, EvalError::DanglingRef(_)));
    }
}
