//! Pulls a JSON object out of free-form model output.

use serde_json::Value;

/// Byte range of the balanced `{...}` starting at `start`, honoring strings.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Removes commas that directly precede `}` or `]` outside strings.
pub fn strip_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_str = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_str = true;
        } else if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// First balanced top-level object in `raw` that parses as JSON (after
/// tolerating trailing commas). Surrounding prose and code fences are ignored.
pub fn extract_json_object(raw: &str) -> Option<Value> {
    let mut from = 0;
    while let Some(off) = raw[from..].find('{') {
        let start = from + off;
        if let Some(end) = balanced_end(raw, start) {
            let candidate = &raw[start..end];
            let parsed = serde_json::from_str::<Value>(candidate)
                .ok()
                .or_else(|| serde_json::from_str::<Value>(&strip_trailing_commas(candidate)).ok());
            if let Some(v @ Value::Object(_)) = parsed {
                return Some(v);
            }
        }
        from = start + 1;
    }
    None
}
