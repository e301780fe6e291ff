//! Grouping extracted factors into named themes and tallying them.
//!
//! Two strategies: `Exact` (one theme per distinct normalized reason, no
//! model calls) and `Llm` (a backend proposes theme names, then classifies
//! each factor into one of them). Every factor ends up in exactly one theme;
//! anything that cannot be placed goes to [`UNCLUSTERED`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{read_json, CorpusError};
use crate::eval::xml_escape;
use crate::gateway::{CompletionRequest, Gateway, GatewayError, RetryPolicy};
use crate::pipeline::{extract_json_object, EncounterResult, FactorRef};

pub const UNCLUSTERED: &str = "UNCLUSTERED";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub theme_id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lean_category: Option<String>,
    #[serde(default)]
    pub members: Vec<FactorRef>,
}

impl Theme {
    fn named(theme_id: String, name: String) -> Self {
        Self {
            theme_id,
            name,
            lean_category: None,
            members: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeTally {
    pub theme_id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lean_category: Option<String>,
    pub encounters: usize,
    pub reasons: usize,
}

#[derive(Debug, Error)]
pub enum ThemeError {
    #[error("cannot propose themes from an empty sample")]
    EmptySample,
    #[error("cannot assign factors without themes")]
    NoThemes,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("model reply is not a usable theme list: {0}")]
    BadReply(String),
    #[error(transparent)]
    Lookup(#[from] CorpusError),
}

/// Model-backed clustering settings.
pub struct LlmStrategy<'a> {
    pub gateway: &'a Gateway,
    pub model_id: String,
    pub policy: RetryPolicy,
    pub max_themes: usize,
}

pub enum Strategy<'a> {
    Exact,
    Llm(LlmStrategy<'a>),
}

/// Lowercase, strip punctuation, collapse whitespace.
pub fn normalize_reason(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Every scored factor across `results`, with its reason.
pub fn collect_factors(results: &BTreeMap<String, EncounterResult>) -> Vec<(FactorRef, String)> {
    results
        .values()
        .flat_map(|r| r.factor_refs().map(|(fr, f)| (fr, f.factor.reason.clone())))
        .collect()
}

fn theme_id(i: usize) -> String {
    format!("T{:03}", i + 1)
}

fn llm_call(s: &LlmStrategy<'_>, prompt: String) -> Result<Value, ThemeError> {
    let mut req = CompletionRequest::new(s.model_id.clone(), prompt);
    req.temperature = 0.0;
    let reply = s.gateway.complete(&req, &s.policy)?;
    extract_json_object(&reply.text).ok_or(ThemeError::BadReply(reply.text))
}

fn proposal_prompt(reasons: &[&str], max_themes: usize) -> String {
    let mut p = format!(
        "Group the following hospital quality-improvement factors into at most {max_themes} themes. \
         Give each theme a short canonical name.\n\nFactors:\n"
    );
    for r in reasons {
        let _ = writeln!(p, "- {r}");
    }
    p.push_str("\nReply with JSON only: {\"themes\": [\"theme name\", ...]}\n");
    p
}

fn classify_prompt(reason: &str, themes: &[Theme]) -> String {
    let mut p = String::from("Choose the single theme that best fits the factor below.\n\nThemes:\n");
    for t in themes {
        let _ = writeln!(p, "- {}", t.name);
    }
    let _ = write!(
        p,
        "\nFactor: {reason}\n\nReply with JSON only: {{\"theme\": \"<one theme name from the list, or {UNCLUSTERED}>\"}}\n"
    );
    p
}

/// Theme names (members empty) for a sample of reasons.
pub fn propose_themes(sample: &[&str], strategy: &Strategy<'_>) -> Result<Vec<Theme>, ThemeError> {
    if sample.is_empty() {
        return Err(ThemeError::EmptySample);
    }
    let names: Vec<String> = match strategy {
        Strategy::Exact => sample
            .iter()
            .map(|r| normalize_reason(r))
            .filter(|n| !n.is_empty())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        Strategy::Llm(s) => {
            let v = llm_call(s, proposal_prompt(sample, s.max_themes))?;
            let list = v["themes"]
                .as_array()
                .ok_or_else(|| ThemeError::BadReply(v.to_string()))?;
            let mut seen = BTreeSet::new();
            list.iter()
                .filter_map(Value::as_str)
                .map(|n| n.trim().to_string())
                .filter(|n| !n.is_empty() && n != UNCLUSTERED && seen.insert(normalize_reason(n)))
                .take(s.max_themes)
                .collect()
        }
    };
    Ok(names.into_iter().enumerate().map(|(i, n)| Theme::named(theme_id(i), n)).collect())
}

/// factor → theme_id. Unplaceable factors map to [`UNCLUSTERED`].
pub type Assignments = BTreeMap<FactorRef, String>;

pub fn assign(factors: &[(FactorRef, String)], themes: &[Theme], strategy: &Strategy<'_>) -> Result<Assignments, ThemeError> {
    if themes.is_empty() {
        return Err(ThemeError::NoThemes);
    }
    let by_name: BTreeMap<String, &str> = themes.iter().map(|t| (normalize_reason(&t.name), t.theme_id.as_str())).collect();
    let lookup = |name: &str| by_name.get(&normalize_reason(name)).map(|s| s.to_string()).unwrap_or_else(|| UNCLUSTERED.to_string());
    let mut out = Assignments::new();
    for (fr, reason) in factors {
        let theme = match strategy {
            Strategy::Exact => lookup(reason),
            Strategy::Llm(s) => {
                let v = llm_call(s, classify_prompt(reason, themes))?;
                v["theme"].as_str().map(lookup).unwrap_or_else(|| UNCLUSTERED.to_string())
            }
        };
        out.insert(fr.clone(), theme);
    }
    Ok(out)
}

/// Themes with members filled from `assignments`; empty themes dropped, the
/// UNCLUSTERED theme appended when used.
pub fn populate(themes: &[Theme], assignments: &Assignments) -> Vec<Theme> {
    let mut members: BTreeMap<&str, Vec<FactorRef>> = BTreeMap::new();
    for (fr, t) in assignments {
        members.entry(t.as_str()).or_default().push(fr.clone());
    }
    let mut out: Vec<Theme> = themes
        .iter()
        .filter_map(|t| {
            let m = members.remove(t.theme_id.as_str())?;
            Some(Theme { members: m, ..t.clone() })
        })
        .collect();
    if let Some(m) = members.remove(UNCLUSTERED) {
        out.push(Theme {
            members: m,
            ..Theme::named(UNCLUSTERED.into(), UNCLUSTERED.into())
        });
    }
    out
}

/// Unique encounters and total reasons per populated theme, most encounters
/// first.
pub fn tally(themes: &[Theme]) -> Vec<ThemeTally> {
    let mut out: Vec<ThemeTally> = themes
        .iter()
        .filter(|t| !t.members.is_empty())
        .map(|t| ThemeTally {
            theme_id: t.theme_id.clone(),
            name: t.name.clone(),
            lean_category: t.lean_category.clone(),
            encounters: t.members.iter().map(|m| &m.encounter_id).collect::<BTreeSet<_>>().len(),
            reasons: t.members.len(),
        })
        .collect();
    out.sort_by(|a, b| {
        b.encounters
            .cmp(&a.encounters)
            .then(b.reasons.cmp(&a.reasons))
            .then_with(|| a.theme_id.cmp(&b.theme_id))
    });
    out
}

/// Manually curated theme-name → Lean category map.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LeanLookup(pub BTreeMap<String, String>);

impl LeanLookup {
    pub fn load(path: &Path) -> Result<Self, ThemeError> {
        Ok(read_json(path)?)
    }

    pub fn apply(&self, themes: &mut [Theme]) {
        let norm: BTreeMap<String, &String> = self.0.iter().map(|(k, v)| (normalize_reason(k), v)).collect();
        for t in themes {
            if let Some(c) = norm.get(&normalize_reason(&t.name)) {
                t.lean_category = Some((*c).clone());
            }
        }
    }
}

pub fn tally_csv(tallies: &[ThemeTally]) -> String {
    let esc = |s: &str| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    let mut s = String::from("theme_id,name,lean_category,encounters,reasons\n");
    for t in tallies {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            esc(&t.theme_id),
            esc(&t.name),
            esc(t.lean_category.as_deref().unwrap_or("")),
            t.encounters,
            t.reasons
        );
    }
    s
}

/// Horizontal bars (dark = encounters, light = reasons), grouped by Lean
/// category, each group ordered by encounter count.
pub fn tally_svg(tallies: &[ThemeTally], title: &str) -> String {
    let mut groups: Vec<(Option<&str>, Vec<&ThemeTally>)> = Vec::new();
    for t in tallies {
        let cat = t.lean_category.as_deref();
        match groups.iter_mut().find(|(c, _)| *c == cat) {
            Some((_, v)) => v.push(t),
            None => groups.push((cat, vec![t])),
        }
    }
    const ROW: f64 = 18.0;
    const LABEL: f64 = 260.0;
    const BAR: f64 = 360.0;
    let max = tallies.iter().map(|t| t.reasons).max().unwrap_or(1).max(1) as f64;
    let rows = tallies.len() + groups.len();
    let height = 40.0 + rows as f64 * ROW + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="11">"#,
        LABEL + BAR + 60.0
    );
    let _ = writeln!(s, r#"<text x="8" y="18" font-size="13">{}</text>"#, xml_escape(title));
    let mut y = 36.0;
    for (cat, members) in groups {
        let _ = writeln!(
            s,
            r#"<text x="8" y="{:.1}" font-weight="bold">{}</text>"#,
            y + 12.0,
            xml_escape(cat.unwrap_or("Uncategorized"))
        );
        y += ROW;
        for t in members {
            let wr = t.reasons as f64 / max * BAR;
            let we = t.encounters as f64 / max * BAR;
            let _ = writeln!(s, r#"<text x="16" y="{:.1}">{}</text>"#, y + 12.0, xml_escape(&t.name));
            let _ = writeln!(s, r##"<rect class="reasons" x="{LABEL}" y="{:.1}" width="{wr:.1}" height="14" fill="#c6dbef"/>"##, y + 2.0);
            let _ = writeln!(s, r##"<rect class="encounters" x="{LABEL}" y="{:.1}" width="{we:.1}" height="14" fill="#2171b5"/>"##, y + 2.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{} / {}</text>"#, LABEL + wr + 4.0, y + 12.0, t.encounters, t.reasons);
            y += ROW;
        }
    }
    s.push_str("</svg>\n");
    s
}
