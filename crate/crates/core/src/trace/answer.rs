//! Final-answer extraction, normalization and grading.

use std::sync::LazyLock;

use regex::Regex;

use super::parse::{ANSWER_MARKER, BRACKETED};

/// Absolute tolerance when both answers are numeric.
pub const NUMERIC_TOLERANCE: f64 = 1e-6;

static PLAIN_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)$").unwrap());

static GROUPED_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?\d{1,3}(?:,\d{3})+(?:\.\d*)?$").unwrap());

/// Parses a numeric answer, accepting a leading `$` and comma thousands
/// separators. Exponents, `inf` and `nan` are rejected.
pub fn parse_number(text: &str) -> Option<f64> {
    let (sign, rest) = match text.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", text.strip_prefix('+').unwrap_or(text)),
    };
    let rest = rest.strip_prefix('$').unwrap_or(rest);
    let candidate = format!("{sign}{rest}");
    let plain = if GROUPED_NUMBER.is_match(&candidate) {
        candidate.replace(',', "")
    } else if PLAIN_NUMBER.is_match(&candidate) {
        candidate
    } else {
        return None;
    };
    plain.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn canonical_number(value: f64) -> String {
    if value == value.trunc() && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

fn strip_wrapping(text: &str) -> &str {
    let mut s = text.trim();
    loop {
        let before = s.len();
        s = s
            .trim_matches(['*', '_'])
            .trim_start_matches('[')
            .trim_end_matches([']', '.'])
            .trim();
        // A leading period is only wrapping when it cannot be a decimal point.
        if let Some(rest) = s.strip_prefix('.') {
            if !rest.starts_with(|c: char| c.is_ascii_digit()) {
                s = rest.trim();
            }
        }
        if s.len() == before {
            return s;
        }
    }
}

/// Normalizes an answer string: strips surrounding brackets, periods and
/// markdown emphasis, collapses whitespace, then renders numbers canonically
/// and lowercases everything else. Returns `None` when nothing remains.
pub fn normalize_answer(text: &str) -> Option<String> {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let core = strip_wrapping(&collapsed);
    if core.is_empty() {
        return None;
    }
    Some(match parse_number(core) {
        Some(value) => canonical_number(value),
        None => core.to_lowercase(),
    })
}

/// Extracts and normalizes the final answer of a raw completion.
///
/// The last bracketed token wins unless an `Answer:`/`Final Answer:` marker
/// follows it, in which case the rest of that marker's line is used (and an
/// empty line means no answer).
pub fn extract_final_answer(raw_output: &str) -> Option<String> {
    let bracket = BRACKETED.captures_iter(raw_output).last();
    let marker = ANSWER_MARKER.find_iter(raw_output).last();

    let from_bracket = || {
        bracket
            .as_ref()
            .and_then(|c| normalize_answer(c.get(1).map_or("", |m| m.as_str())))
    };
    let marker_after_bracket = match (&marker, &bracket) {
        (Some(m), Some(b)) => m.start() > b.get(0).unwrap().start(),
        (Some(_), None) => true,
        _ => false,
    };
    if marker_after_bracket {
        let m = marker.unwrap();
        normalize_answer(raw_output[m.end()..].lines().next().unwrap_or(""))
    } else {
        from_bracket()
    }
}

/// Grades a predicted answer against the gold answer. Both sides are
/// normalized; numeric pairs compare within [`NUMERIC_TOLERANCE`].
pub fn check_answer(predicted: &str, gold: &str) -> bool {
    let (Some(p), Some(g)) = (normalize_answer(predicted), normalize_answer(gold)) else {
        return false;
    };
    match (parse_number(&p), parse_number(&g)) {
        (Some(a), Some(b)) => (a - b).abs() <= NUMERIC_TOLERANCE,
        _ => p == g,
    }
}
