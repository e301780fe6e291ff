//! Marker grammar embedded in synthetic notes.
//!
//! ```text
//! [[EVENT|label|category|start|end|quote]]
//! [[FACTOR|reason|category|confidence|quote]]
//! ```
//!
//! A marker occupies a whole line. The mock backend turns markers into stage
//! outputs, and the corpus synthesizer writes them alongside the ground truth
//! they encode. Fields may not contain `|` or `]]`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed marker on line {line}: {reason}")]
pub struct MarkerError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventMarker {
    pub label: String,
    pub category: String,
    pub start: String,
    pub end: String,
    pub quote: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorMarker {
    pub reason: String,
    pub category: String,
    /// Raw 0..=100 confidence, before decile rounding.
    pub confidence: u8,
    pub quote: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Markers {
    pub events: Vec<EventMarker>,
    pub factors: Vec<FactorMarker>,
}

/// True for lines the grammar claims (`[[EVENT...` or `[[FACTOR...`).
pub fn is_marker_line(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("[[EVENT") || t.starts_with("[[FACTOR")
}

/// Parses every marker line in `text`, in order. Line numbers are 1-based.
pub fn parse_markers(text: &str) -> Result<Markers, MarkerError> {
    let mut out = Markers::default();
    for (idx, raw) in text.lines().enumerate() {
        if !is_marker_line(raw) {
            continue;
        }
        let line = idx + 1;
        let err = |reason: String| MarkerError { line, reason };
        let inner = raw
            .trim()
            .strip_prefix("[[")
            .and_then(|s| s.strip_suffix("]]"))
            .ok_or_else(|| err("marker must be wrapped in [[ ]]".into()))?;
        let fields: Vec<&str> = inner.split('|').collect();
        let check_nonempty = |name: &str, v: &str| {
            if v.trim().is_empty() {
                Err(err(format!("{name} is empty")))
            } else {
                Ok(())
            }
        };
        match fields[0] {
            "EVENT" => {
                if fields.len() != 6 {
                    return Err(err(format!("EVENT needs 5 fields, found {}", fields.len() - 1)));
                }
                check_nonempty("label", fields[1])?;
                check_nonempty("start", fields[3])?;
                check_nonempty("end", fields[4])?;
                out.events.push(EventMarker {
                    label: fields[1].to_string(),
                    category: fields[2].to_string(),
                    start: fields[3].to_string(),
                    end: fields[4].to_string(),
                    quote: fields[5].to_string(),
                });
            }
            "FACTOR" => {
                if fields.len() != 5 {
                    return Err(err(format!("FACTOR needs 4 fields, found {}", fields.len() - 1)));
                }
                check_nonempty("reason", fields[1])?;
                let confidence: u8 = fields[3]
                    .trim()
                    .parse()
                    .ok()
                    .filter(|c| *c <= 100)
                    .ok_or_else(|| err(format!("confidence {:?} is not an integer in 0..=100", fields[3])))?;
                out.factors.push(FactorMarker {
                    reason: fields[1].to_string(),
                    category: fields[2].to_string(),
                    confidence,
                    quote: fields[4].to_string(),
                });
            }
            other => return Err(err(format!("unknown marker kind {other:?}"))),
        }
    }
    Ok(out)
}

impl EventMarker {
    pub fn to_line(&self) -> String {
        format!(
            "[[EVENT|{}|{}|{}|{}|{}]]",
            self.label, self.category, self.start, self.end, self.quote
        )
    }
}

impl FactorMarker {
    pub fn to_line(&self) -> String {
        format!(
            "[[FACTOR|{}|{}|{}|{}]]",
            self.reason, self.category, self.confidence, self.quote
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_kinds_in_order() {
        let text = "prose\n[[EVENT|IV abx|treatment|2024-01-10 08:00|2024-01-12 08:00|Started IV]]\nmore\n  [[FACTOR|late SW consult|social|87|SW consulted late]]\n";
        let m = parse_markers(text).unwrap();
        assert_eq!(m.events.len(), 1);
        assert_eq!(m.events[0].label, "IV abx");
        assert_eq!(m.factors[0].confidence, 87);
        assert_eq!(m.factors[0].quote, "SW consulted late");
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let e = parse_markers("ok\nok\n[[FACTOR|r|c|abc|q]]").unwrap_err();
        assert_eq!(e.line, 3);
        let e = parse_markers("[[EVENT|a|b|c]]").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(parse_markers("[[FACTOR|r|c|101|q]]").is_err());
        assert!(parse_markers("[[EVENT|a|b|c|d|e").is_err());
        assert!(parse_markers("[[EVENTS|a|b|c|d|e]]").is_err());
    }

    #[test]
    fn round_trip_through_lines() {
        let f = FactorMarker {
            reason: "r".into(),
            category: "c".into(),
            confidence: 55,
            quote: "q".into(),
        };
        assert_eq!(parse_markers(&f.to_line()).unwrap().factors, vec![f]);
    }
}
