//! Exact-quote verification against the bundle's note text.
//!
//! Marker lines are never valid evidence: a quote that only matches inside a
//! `[[EVENT ...]]` / `[[FACTOR ...]]` line does not count.

use std::ops::Range;

use crate::domain::EncounterBundle;
use crate::markers::is_marker_line;

use super::types::{QuoteAnchor, QuoteCheck, QuoteStatus};

/// Separator models use to join quotes from different places.
pub const QUOTE_SEPARATOR: &str = "...";

/// Lowercase and collapse every whitespace run to one space.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Splits on the separator and trims whitespace and wrapping quote marks.
pub fn split_fragments(quotes: &str) -> Vec<String> {
    quotes
        .split(QUOTE_SEPARATOR)
        .map(|f| f.trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '“' | '”' | '‘' | '’')))
        .filter(|f| !f.is_empty())
        .map(str::to_string)
        .collect()
}

struct IndexedNote<'a> {
    note_id: &'a str,
    text: &'a str,
    marker_lines: Vec<Range<usize>>,
    normalized: String,
}

impl IndexedNote<'_> {
    fn in_marker(&self, r: &Range<usize>) -> bool {
        self.marker_lines.iter().any(|m| r.start < m.end && m.start < r.end)
    }

    fn exact(&self, fragment: &str) -> Option<Range<usize>> {
        self.text
            .match_indices(fragment)
            .map(|(i, _)| i..i + fragment.len())
            .find(|r| !self.in_marker(r))
    }
}

/// Per-bundle lookup structure; build once, verify many quotes.
pub struct QuoteIndex<'a> {
    notes: Vec<IndexedNote<'a>>,
}

impl<'a> QuoteIndex<'a> {
    pub fn new(bundle: &'a EncounterBundle) -> Self {
        let notes = bundle
            .notes
            .iter()
            .map(|n| {
                let mut marker_lines = Vec::new();
                let mut plain = String::with_capacity(n.text.len());
                let mut offset = 0;
                for line in n.text.split_inclusive('\n') {
                    if is_marker_line(line) {
                        marker_lines.push(offset..offset + line.len());
                        plain.push('\n');
                    } else {
                        plain.push_str(line);
                    }
                    offset += line.len();
                }
                IndexedNote {
                    note_id: &n.note_id,
                    text: &n.text,
                    marker_lines,
                    normalized: normalize_ws(&plain),
                }
            })
            .collect();
        Self { notes }
    }

    pub fn check_fragment(&self, fragment: &str) -> QuoteCheck {
        for n in &self.notes {
            if let Some(r) = n.exact(fragment) {
                return QuoteCheck {
                    fragment: fragment.to_string(),
                    status: QuoteStatus::Verified,
                    anchor: Some(QuoteAnchor {
                        note_id: n.note_id.to_string(),
                        start: r.start,
                        end: r.end,
                    }),
                };
            }
        }
        let needle = normalize_ws(fragment);
        let status = if !needle.is_empty() && self.notes.iter().any(|n| n.normalized.contains(&needle)) {
            QuoteStatus::Fuzzy
        } else {
            QuoteStatus::Unverified
        };
        QuoteCheck {
            fragment: fragment.to_string(),
            status,
            anchor: None,
        }
    }

    pub fn verify(&self, quotes: &str) -> Vec<QuoteCheck> {
        split_fragments(quotes).iter().map(|f| self.check_fragment(f)).collect()
    }
}

/// One-shot form of [`QuoteIndex::verify`].
pub fn verify_quotes(quotes: &str, bundle: &EncounterBundle) -> Vec<QuoteCheck> {
    QuoteIndex::new(bundle).verify(quotes)
}
