//! Citation-marked answers.
//!
//! Grammar: a mark is `[` ASCII digits `]`. A run is a maximal sequence of
//! marks, where adjacent marks may be separated by whitespace. A segment is
//! the text between the end of one run and the start of the next (or the
//! string boundaries), and it binds to the run that follows it. Text that
//! looks like a bracket but is not a mark (`[a]`, `[ 1]`, `[]`) is literal.
//!
//! Runs are normalized to `[a][b]` with no inner whitespace, duplicate marks
//! collapse to their first occurrence, and marks outside
//! `1..=reference_count` are dropped with a [`CitationWarning`]. A run left
//! with no marks is removed and does not split the text, so every parsed
//! answer renders and parses back to itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CitedAnswer, Locale, ReferenceCard, Segment};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationWarning {
    /// The mark as written, e.g. `[9]`.
    pub mark: String,
    /// Index of the segment the mark was attached to.
    pub segment: usize,
    pub reference_count: usize,
}

impl std::fmt::Display for CitationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "citation {} on segment {} is outside 1..={}",
            self.mark, self.segment, self.reference_count
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub answer: CitedAnswer,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<CitationWarning>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("answer cites reference {0}, which is not in the provided list")]
    MissingReference(usize),
}

/// Matches a single mark at byte offset `at`, returning its value (None on
/// overflow) and the offset just past the closing bracket.
fn mark_at(raw: &str, at: usize) -> Option<(Option<usize>, usize)> {
    let bytes = raw.as_bytes();
    if bytes.get(at) != Some(&b'[') {
        return None;
    }
    let digits_start = at + 1;
    let mut end = digits_start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == digits_start || bytes.get(end) != Some(&b']') {
        return None;
    }
    let value = raw[digits_start..end].parse::<usize>().ok();
    Some((value, end + 1))
}

fn skip_whitespace(raw: &str, mut at: usize) -> usize {
    while let Some(c) = raw[at..].chars().next() {
        if !c.is_whitespace() {
            break;
        }
        at += c.len_utf8();
    }
    at
}

/// Splits a raw model answer into segments and validated citation sets.
pub fn parse_citations(raw: &str, reference_count: usize) -> ParsedAnswer {
    let mut segments = Vec::new();
    let mut warnings = Vec::new();
    // Text of the segment being built; spans around fully dropped runs
    // accumulate here.
    let mut text = String::new();
    let mut span_start = 0;
    let mut at = 0;

    while at < raw.len() {
        let Some((first, mut run_end)) = mark_at(raw, at) else {
            at += raw[at..].chars().next().map_or(1, char::len_utf8);
            continue;
        };
        let segment_index = segments.len();
        let mut citations = Vec::new();
        let mut accept = |value: Option<usize>, mark: &str| match value {
            Some(v) if (1..=reference_count).contains(&v) => {
                if !citations.contains(&v) {
                    citations.push(v);
                }
            }
            _ => warnings.push(CitationWarning {
                mark: mark.to_owned(),
                segment: segment_index,
                reference_count,
            }),
        };
        accept(first, &raw[at..run_end]);
        loop {
            let next = skip_whitespace(raw, run_end);
            match mark_at(raw, next) {
                Some((value, end)) => {
                    accept(value, &raw[next..end]);
                    run_end = end;
                }
                None => break,
            }
        }
        text.push_str(&raw[span_start..at]);
        if !citations.is_empty() {
            segments.push(Segment::new(std::mem::take(&mut text), citations));
        }
        span_start = run_end;
        at = run_end;
    }
    text.push_str(&raw[span_start..]);
    if !text.is_empty() {
        segments.push(Segment::new(text, Vec::new()));
    }

    ParsedAnswer {
        answer: CitedAnswer {
            segments,
            reference_count,
            llm_only: reference_count == 0,
        },
        warnings,
    }
}

/// Renders the answer text with normalized citation runs.
pub fn render_text(answer: &CitedAnswer) -> String {
    let mut out = String::new();
    for segment in &answer.segments {
        out.push_str(&segment.text);
        for c in &segment.citations {
            out.push('[');
            out.push_str(&c.to_string());
            out.push(']');
        }
    }
    out
}

/// Normalized form of a raw answer: what [`render_text`] produces after
/// parsing it.
pub fn normalize(raw: &str, reference_count: usize) -> String {
    render_text(&parse_citations(raw, reference_count).answer)
}

fn reference_header(locale: Locale) -> &'static str {
    match locale {
        Locale::En => "References:",
        Locale::Zh => "参考资料：",
    }
}

/// Display string: the answer text, then one line per cited reference.
///
/// Markup is limited to `**bold**` and `<url>` autolinks. Uncited references
/// are omitted; they stay visible on the result cards.
pub fn render(
    answer: &CitedAnswer,
    references: &[ReferenceCard],
    locale: Locale,
) -> Result<String, RenderError> {
    let mut out = render_text(answer);
    let cited = answer.cited_ranks();
    if cited.is_empty() {
        return Ok(out);
    }
    out.push_str("\n\n");
    out.push_str(reference_header(locale));
    for rank in cited {
        let card = references
            .iter()
            .find(|c| c.rank == rank)
            .ok_or(RenderError::MissingReference(rank))?;
        out.push_str(&format!("\n{}. **{}** <{}>", card.rank, card.title, card.link));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn card(rank: usize, title: &str) -> ReferenceCard {
        ReferenceCard {
            rank,
            title: title.into(),
            link: format!("https://ex.example/{rank}"),
            reference: format!("ref {rank}"),
            source_rank: rank,
        }
    }

    #[test]
    fn splits_segments_at_runs() {
        let parsed = parse_citations("Paris is the capital [1][2]. Population 2M [3].", 3);
        assert!(parsed.warnings.is_empty());
        assert_eq!(
            parsed.answer.segments,
            vec![
                Segment::new("Paris is the capital ", vec![1, 2]),
                Segment::new(". Population 2M ", vec![3]),
                Segment::new(".", vec![]),
            ]
        );
        assert!(!parsed.answer.llm_only);
    }

    #[test]
    fn plain_answer_without_references_is_llm_only() {
        let parsed = parse_citations("No citations here.", 0);
        assert_eq!(parsed.answer.segments, vec![Segment::new("No citations here.", vec![])]);
        assert!(parsed.answer.llm_only);
        assert!(parsed.answer.validate().is_ok());
    }

    #[test]
    fn out_of_range_mark_is_dropped_with_warning() {
        let parsed = parse_citations("Claim [9].", 3);
        assert_eq!(parsed.answer.segments, vec![Segment::new("Claim .", vec![])]);
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.warnings[0].mark, "[9]");
        assert_eq!(parsed.warnings[0].segment, 0);
        assert!(parsed.answer.validate().is_ok());
    }

    #[test]
    fn dropped_run_does_not_split_text() {
        let raw = "a [9] b [1] c [0][7] d";
        let parsed = parse_citations(raw, 2);
        assert_eq!(
            parsed.answer.segments,
            vec![Segment::new("a  b ", vec![1]), Segment::new(" c  d", vec![])]
        );
        assert_eq!(
            parsed.warnings.iter().map(|w| w.segment).collect::<Vec<_>>(),
            vec![0, 1, 1]
        );
        let rendered = render_text(&parsed.answer);
        assert_eq!(parse_citations(&rendered, 2).answer, parsed.answer);
    }

    #[test]
    fn only_dropped_marks_leave_no_segments() {
        let parsed = parse_citations("[3]", 2);
        assert!(parsed.answer.segments.is_empty());
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn zero_and_overflowing_marks_are_out_of_range() {
        let parsed = parse_citations("a [0] b [99999999999999999999999]", 2);
        assert_eq!(parsed.warnings.len(), 2);
        assert!(parsed.answer.segments.iter().all(|s| s.citations.is_empty()));
    }

    #[test]
    fn marks_in_llm_only_answer_are_all_warnings() {
        let parsed = parse_citations("Made up [1].", 0);
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.answer.validate().is_ok());
    }

    #[test]
    fn whitespace_inside_run_is_normalized() {
        let raw = "A [1] [2]\t[2] b";
        let parsed = parse_citations(raw, 2);
        assert_eq!(
            parsed.answer.segments,
            vec![Segment::new("A ", vec![1, 2]), Segment::new(" b", vec![])]
        );
        assert_eq!(normalize(raw, 2), "A [1][2] b");
    }

    #[test]
    fn non_marks_stay_literal() {
        let raw = "x [a] [ 1] [] [1";
        let parsed = parse_citations(raw, 3);
        assert_eq!(parsed.answer.segments, vec![Segment::new(raw, vec![])]);
    }

    #[test]
    fn leading_run_yields_empty_first_segment() {
        let parsed = parse_citations("[2] then text", 2);
        assert_eq!(
            parsed.answer.segments,
            vec![Segment::new("", vec![2]), Segment::new(" then text", vec![])]
        );
    }

    #[test]
    fn multibyte_text_is_preserved() {
        let raw = "庆余年第二季的主演是张若昀[1]。";
        let parsed = parse_citations(raw, 1);
        assert_eq!(parsed.answer.segments[0].text, "庆余年第二季的主演是张若昀");
        assert_eq!(render_text(&parsed.answer), raw);
    }

    #[test]
    fn empty_input_has_no_segments() {
        assert!(parse_citations("", 3).answer.segments.is_empty());
    }

    #[test]
    fn render_lists_only_cited_references() {
        let refs = vec![card(1, "One"), card(2, "Two"), card(3, "Three")];
        let answer = parse_citations("Alpha [1]. Beta [3].", 3).answer;
        let shown = render(&answer, &refs, Locale::En).unwrap();
        assert_eq!(
            shown,
            "Alpha [1]. Beta [3].\n\nReferences:\n1. **One** <https://ex.example/1>\n3. **Three** <https://ex.example/3>"
        );
    }

    #[test]
    fn render_llm_only_has_no_reference_block() {
        let answer = parse_citations("Just text.", 0).answer;
        assert_eq!(render(&answer, &[], Locale::Zh).unwrap(), "Just text.");
    }

    #[test]
    fn bracket_in_title_is_not_escaped_or_parsed() {
        let refs = vec![card(1, "Weird ] title [2]")];
        let answer = parse_citations("Claim [1].", 1).answer;
        let shown = render(&answer, &refs, Locale::En).unwrap();
        assert!(shown.ends_with("1. **Weird ] title [2]** <https://ex.example/1>"));
        // Only the answer text is ever parsed for marks.
        assert_eq!(parse_citations(&render_text(&answer), 1).answer, answer);
    }

    #[test]
    fn render_reports_missing_reference() {
        let answer = CitedAnswer {
            segments: vec![Segment::new("x", vec![2])],
            reference_count: 2,
            llm_only: false,
        };
        assert_eq!(
            render(&answer, &[card(1, "One")], Locale::En),
            Err(RenderError::MissingReference(2))
        );
    }
}
