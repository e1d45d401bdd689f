//! Recovers `N: explanation` records from a raw completion.
//!
//! Rules:
//! - a record starts at a line of the form `N: text` (optionally `Line N:`
//!   or behind a `-`/`*` bullet);
//! - following non-blank lines fold into the open record, joined by a space;
//! - a blank line closes the open record;
//! - unnumbered text outside a record, markdown fences, out-of-range
//!   numbers, empty records and overwritten duplicates land in `dropped`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{GatewayError, RawCompletion};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DropReason {
    /// Line number outside `1..=line_count`; `number` is the digits as written.
    OutOfRange { number: String },
    EmptyText,
    /// Superseded by a later record for the same line.
    Duplicate { line: u32 },
    Unnumbered,
    Noise,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::OutOfRange { number } => write!(f, "line {number} out of range"),
            DropReason::EmptyText => f.write_str("empty explanation"),
            DropReason::Duplicate { line } => write!(f, "superseded duplicate for line {line}"),
            DropReason::Unnumbered => f.write_str("text outside any numbered record"),
            DropReason::Noise => f.write_str("formatting noise"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedFragment {
    pub fragment: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRound {
    pub round: u32,
    pub line_count: u32,
    pub by_line: BTreeMap<u32, String>,
    pub dropped: Vec<DroppedFragment>,
}

impl ParsedRound {
    pub fn empty(round: u32, line_count: u32) -> Self {
        Self {
            round,
            line_count,
            by_line: BTreeMap::new(),
            dropped: Vec::new(),
        }
    }

    /// Explanation texts concatenated in line order.
    pub fn joined_text(&self) -> String {
        self.by_line.values().cloned().collect::<Vec<_>>().join("\n")
    }
}

fn record_start() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:[-*]\s+)?(?i:line\s+)?([0-9]+)\s*:(.*)$").expect("valid regex")
    })
}

struct OpenRecord {
    number: String,
    parts: Vec<String>,
    raw: Vec<String>,
}

pub fn parse_line_explanations(
    raw: &RawCompletion,
    line_count: u32,
) -> Result<ParsedRound, GatewayError> {
    let mut parsed = ParsedRound::empty(raw.round, line_count);
    let mut records: Vec<OpenRecord> = Vec::new();
    let mut open = false;
    let mut saw_content = false;

    for line in raw.response_text.split('\n') {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            open = false;
            continue;
        }
        saw_content = true;
        if line.trim_start().starts_with("```") {
            open = false;
            parsed.dropped.push(DroppedFragment {
                fragment: line.to_owned(),
                reason: DropReason::Noise,
            });
            continue;
        }
        if let Some(caps) = record_start().captures(line) {
            let text = caps[2].trim();
            records.push(OpenRecord {
                number: caps[1].to_owned(),
                parts: if text.is_empty() { vec![] } else { vec![text.to_owned()] },
                raw: vec![line.to_owned()],
            });
            open = true;
        } else if open {
            let record = records.last_mut().expect("open record exists");
            record.parts.push(line.trim().to_owned());
            record.raw.push(line.to_owned());
        } else {
            parsed.dropped.push(DroppedFragment {
                fragment: line.to_owned(),
                reason: DropReason::Unnumbered,
            });
        }
    }

    if records.is_empty() && saw_content {
        return Err(GatewayError::UnparseableResponse {
            round: raw.round,
            excerpt: raw.response_text.chars().take(80).collect(),
        });
    }

    let mut fragments: BTreeMap<u32, String> = BTreeMap::new();
    for record in records {
        let fragment = record.raw.join("\n");
        let text = record.parts.join(" ");
        let number = record
            .number
            .parse::<u32>()
            .ok()
            .filter(|n| (1..=line_count).contains(n));
        let Some(number) = number else {
            parsed.dropped.push(DroppedFragment {
                fragment,
                reason: DropReason::OutOfRange {
                    number: record.number,
                },
            });
            continue;
        };
        if text.is_empty() {
            parsed.dropped.push(DroppedFragment {
                fragment,
                reason: DropReason::EmptyText,
            });
            continue;
        }
        if let Some(earlier) = fragments.insert(number, fragment) {
            parsed.dropped.push(DroppedFragment {
                fragment: earlier,
                reason: DropReason::Duplicate { line: number },
            });
        }
        parsed.by_line.insert(number, text);
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    fn raw(text: &str) -> RawCompletion {
        RawCompletion {
            round: 1,
            request_digest: String::new(),
            response_text: text.to_owned(),
            latency: Duration::ZERO,
            token_counts: None,
        }
    }

    #[test]
    fn well_formed() {
        let parsed = parse_line_explanations(&raw("1: declares x\n2: prints x"), 2).unwrap();
        assert_eq!(parsed.by_line[&1], "declares x");
        assert_eq!(parsed.by_line[&2], "prints x");
        assert!(parsed.dropped.is_empty());
    }

    #[test]
    fn out_of_range() {
        let parsed = parse_line_explanations(&raw("99: ghost"), 10).unwrap();
        assert!(parsed.by_line.is_empty());
        assert_eq!(
            parsed.dropped,
            vec![DroppedFragment {
                fragment: "99: ghost".into(),
                reason: DropReason::OutOfRange { number: "99".into() }
            }]
        );
        let parsed = parse_line_explanations(&raw("0: zero\n99999999999999: big"), 10).unwrap();
        assert_eq!(parsed.dropped.len(), 2);
    }

    #[test]
    fn prose_is_unparseable() {
        assert!(matches!(
            parse_line_explanations(&raw("sorry, here is prose without numbers"), 10),
            Err(GatewayError::UnparseableResponse { round: 1, .. })
        ));
    }

    #[test]
    fn whitespace_only_is_an_empty_round() {
        let parsed = parse_line_explanations(&raw(" \n\t\n"), 3).unwrap();
        assert!(parsed.by_line.is_empty());
        assert!(parsed.dropped.is_empty());
    }

    #[test]
    fn continuation_and_blank_line_rules() {
        let text = "Here are the explanations:\n1: Declares the class\n   named Initials.\n\nThat wraps it up.\n2: Opens main.";
        let parsed = parse_line_explanations(&raw(text), 5).unwrap();
        assert_eq!(parsed.by_line[&1], "Declares the class named Initials.");
        assert_eq!(parsed.by_line[&2], "Opens main.");
        let reasons: Vec<_> = parsed.dropped.iter().map(|d| d.reason.clone()).collect();
        assert_eq!(reasons, vec![DropReason::Unnumbered, DropReason::Unnumbered]);
    }

    #[test]
    fn duplicate_keeps_last() {
        let parsed = parse_line_explanations(&raw("3: first\n3: second"), 5).unwrap();
        assert_eq!(parsed.by_line[&3], "second");
        assert_eq!(
            parsed.dropped,
            vec![DroppedFragment {
                fragment: "3: first".into(),
                reason: DropReason::Duplicate { line: 3 }
            }]
        );
    }

    #[test]
    fn tolerated_variants() {
        let text = "```\nLine 1: a\n- 2: b\n* 3 : c\r\n4:\n```";
        let parsed = parse_line_explanations(&raw(text), 5).unwrap();
        assert_eq!(parsed.by_line.len(), 3);
        assert_eq!(parsed.by_line[&3], "c");
        let reasons: Vec<_> = parsed.dropped.iter().map(|d| d.reason.clone()).collect();
        assert_eq!(
            reasons,
            vec![DropReason::Noise, DropReason::Noise, DropReason::EmptyText]
        );
    }

    #[test]
    fn empty_record_filled_by_continuation() {
        let parsed = parse_line_explanations(&raw("2:\n  prints the value"), 2).unwrap();
        assert_eq!(parsed.by_line[&2], "prints the value");
    }
}
