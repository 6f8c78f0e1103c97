//! Splits raw model output into numbered reasoning steps.
//!
//! A step marker is `step <n>:` (case-insensitive, optional space before the
//! colon) that starts a line or follows a sentence boundary. The answer
//! region (a trailing `Answer:`/`Final Answer:` marker, or failing that a
//! trailing bracketed answer) is excluded from the last step.

use std::sync::LazyLock;

use regex::Regex;

use super::ReasoningStep;

static STEP_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)step (\d+) ?:(?:\*\*|__)?").unwrap());

pub(super) static ANSWER_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:final\s+)?answer\s*:").unwrap());

pub(super) static BRACKETED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[([^\[\]\n]+)\]").unwrap());

/// Characters allowed between a boundary and a marker: indentation and
/// markdown list/emphasis/heading decoration.
fn is_decoration(c: char) -> bool {
    matches!(c, ' ' | '\t' | '*' | '#' | '>' | '-' | '_')
}

fn at_boundary(text: &str, start: usize) -> bool {
    let before = text[..start].trim_end_matches(is_decoration);
    match before.chars().next_back() {
        None => true,
        Some(c) => matches!(c, '\n' | '\r' | '.' | '!' | '?' | ':' | ';'),
    }
}

/// Byte ranges `(marker_start, body_start)` of every accepted step marker.
fn step_markers(text: &str) -> Vec<(usize, usize)> {
    STEP_MARKER
        .find_iter(text)
        .filter(|m| at_boundary(text, m.start()))
        .map(|m| (m.start(), m.end()))
        .collect()
}

/// Start of the trailing answer region, searching only at or after `from`.
fn answer_region_start(text: &str, from: usize) -> Option<usize> {
    let tail = &text[from..];
    ANSWER_MARKER
        .find_iter(tail)
        .last()
        .or_else(|| BRACKETED.find_iter(tail).last())
        .map(|m| from + m.start())
}

fn trimmed_span(text: &str, start: usize, end: usize) -> Option<(usize, usize)> {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    let (s, e) = (start + lead, end - trail);
    (s < e).then_some((s, e))
}

/// Extracts ordered steps from `raw_output`.
///
/// Steps are renumbered `1..=n` in textual order regardless of the numbers
/// the model wrote. Text before the first marker is discarded. Without any
/// marker the whole non-answer text becomes a single step.
pub fn parse_steps(raw_output: &str) -> Vec<ReasoningStep> {
    let markers = step_markers(raw_output);
    let search_from = markers.last().map_or(0, |&(_, body)| body);
    let region = answer_region_start(raw_output, search_from).map_or(raw_output.len(), |start| {
        raw_output[..start].trim_end_matches(is_decoration).len().max(search_from)
    });

    let spans: Vec<(usize, usize)> = if markers.is_empty() {
        trimmed_span(raw_output, 0, region).into_iter().collect()
    } else {
        markers
            .iter()
            .enumerate()
            .filter_map(|(i, &(_, body))| {
                // Decoration in front of the next marker belongs to that marker.
                let end = markers.get(i + 1).map_or(region, |&(next, _)| {
                    raw_output[..next].trim_end_matches(is_decoration).len().max(body)
                });
                trimmed_span(raw_output, body, end)
            })
            .collect()
    };

    spans
        .into_iter()
        .zip(1u32..)
        .map(|((start, end), index)| ReasoningStep {
            index,
            text: raw_output[start..end].to_string(),
            char_span: (start, end),
        })
        .collect()
}

/// Renders steps back into the canonical `Step n: ...` layout, closed by an
/// answer line. The answer is bracketed unless it contains a bracket itself;
/// without an answer the line is a bare `Answer:`, which keeps brackets in
/// the last step from being read as the answer when the output is reparsed.
pub fn reassemble(steps: &[ReasoningStep], final_answer: Option<&str>) -> String {
    let mut out = String::new();
    for step in steps {
        out.push_str(&format!("Step {}: {}\n", step.index, step.text));
    }
    match final_answer {
        Some(answer) if answer.contains(['[', ']']) => out.push_str(&format!("Answer: {answer}")),
        Some(answer) => out.push_str(&format!("Answer: [{answer}]")),
        None => out.push_str("Answer:"),
    }
    out
}
