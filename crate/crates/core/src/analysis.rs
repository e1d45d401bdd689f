//! Round-to-round novelty, merging rounds into leveled explanations, and
//! lexical detection of structural lines.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::example::{ExplanationLevel, Origin, WorkedExample};
use crate::gateway::ParsedRound;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("round {round} was parsed against {parsed} lines but the example has {actual}")]
    RoundExampleMismatch { round: u32, parsed: u32, actual: u32 },
    #[error("invalid merge policy: {0}")]
    InvalidPolicy(String),
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|token| !token.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn term_frequencies(text: &str) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for token in tokenize(text) {
        *counts.entry(token).or_insert(0) += 1;
    }
    counts
}

/// Cosine similarity of term-frequency vectors, in `[0, 1]`.
///
/// Two texts without tokens are identical (1); one empty side gives 0.
pub fn cosine_similarity(a: &str, b: &str) -> f64 {
    let left = term_frequencies(a);
    let right = term_frequencies(b);
    match (left.is_empty(), right.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let dot: u128 = left
        .iter()
        .filter_map(|(term, x)| right.get(term).map(|y| (*x as u128) * (*y as u128)))
        .sum();
    let norm = |v: &HashMap<String, u64>| v.values().map(|x| (*x as u128) * (*x as u128)).sum::<u128>();
    let denominator = ((norm(&left) as f64) * (norm(&right) as f64)).sqrt();
    (dot as f64 / denominator).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundScore {
    pub round: u32,
    /// `None` when the round produced no explanations at all.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineScore {
    pub round: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub example_id: String,
    pub per_round: Vec<RoundScore>,
    pub per_line: BTreeMap<u32, Vec<LineScore>>,
}

impl SimilarityReport {
    pub fn latest(&self) -> Option<RoundScore> {
        self.per_round.last().copied()
    }

    /// `example,round,score` rows; `--` marks a round without output.
    pub fn to_csv(&self, include_header: bool) -> String {
        let mut out = String::new();
        if include_header {
            out.push_str("example,round,score\n");
        }
        for entry in &self.per_round {
            let score = entry
                .score
                .map_or_else(|| "--".to_owned(), |s| format!("{s:.6}"));
            let _ = writeln!(out, "{},{},{}", self.example_id, entry.round, score);
        }
        out
    }
}

/// Scores each round against its predecessor.
pub fn round_similarity(example_id: &str, rounds: &[ParsedRound]) -> SimilarityReport {
    let mut ordered: Vec<&ParsedRound> = rounds.iter().collect();
    ordered.sort_by_key(|r| r.round);

    let mut per_round = Vec::new();
    let mut per_line: BTreeMap<u32, Vec<LineScore>> = BTreeMap::new();
    for pair in ordered.windows(2) {
        let (previous, current) = (pair[0], pair[1]);
        let score = if current.by_line.is_empty() {
            None
        } else {
            Some(cosine_similarity(&current.joined_text(), &previous.joined_text()))
        };
        per_round.push(RoundScore {
            round: current.round,
            score,
        });
        for (line, text) in &current.by_line {
            if let Some(before) = previous.by_line.get(line) {
                per_line.entry(*line).or_default().push(LineScore {
                    round: current.round,
                    score: cosine_similarity(text, before),
                });
            }
        }
    }
    SimilarityReport {
        example_id: example_id.to_owned(),
        per_round,
        per_line,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergePolicy {
    /// A round's text at or above this similarity to an existing level is dropped.
    pub duplicate_threshold: f64,
    /// Generation stops once a round scores at or above this against the previous one.
    pub saturation_threshold: f64,
}

impl Default for MergePolicy {
    fn default() -> Self {
        Self {
            duplicate_threshold: 0.95,
            saturation_threshold: 0.95,
        }
    }
}

impl MergePolicy {
    pub fn check(&self) -> Result<(), AnalysisError> {
        for (name, value) in [
            ("duplicate_threshold", self.duplicate_threshold),
            ("saturation_threshold", self.saturation_threshold),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(AnalysisError::InvalidPolicy(format!("{name} {value} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Folds parsed rounds into per-line levels. Round `r` text becomes the
/// next level on its line unless it duplicates an existing level; a line
/// first explained in round `r` starts at level 1. Idempotent.
pub fn merge_rounds(
    example: &WorkedExample,
    rounds: &[ParsedRound],
    policy: &MergePolicy,
    now: DateTime<Utc>,
) -> Result<WorkedExample, AnalysisError> {
    policy.check()?;
    let actual = example.line_count();
    for round in rounds {
        let out_of_range = round.by_line.keys().any(|line| *line == 0 || *line > actual);
        if round.line_count != actual || out_of_range {
            return Err(AnalysisError::RoundExampleMismatch {
                round: round.round,
                parsed: round.line_count,
                actual,
            });
        }
    }
    let mut ordered: Vec<&ParsedRound> = rounds.iter().collect();
    ordered.sort_by_key(|r| r.round);

    let mut merged = example.clone();
    let mut changed = false;
    for round in ordered {
        for (number, text) in &round.by_line {
            let line = &mut merged.lines[*number as usize - 1];
            let duplicate = line
                .explanations
                .iter()
                .any(|level| cosine_similarity(text, &level.text) >= policy.duplicate_threshold);
            if duplicate {
                continue;
            }
            line.explanations.push(ExplanationLevel {
                level: line.explanations.len() as u32 + 1,
                text: text.clone(),
                origin: Origin::Generated,
                source_round: Some(round.round),
            });
            changed = true;
        }
    }
    if changed {
        merged.touch(now);
    }
    Ok(merged)
}

fn class_declaration() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(?:(?:public|private|protected|abstract|final|static|sealed|strictfp)\s+)*(?:class|interface|enum|record)\s+[A-Za-z_$][\w$]*\b",
        )
        .expect("valid regex")
    })
}

fn main_signature() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:(?:public|static|final)\s+)+void\s+main\s*\(")
            .expect("valid regex")
    })
}

/// True when `text` contains `=` used as (compound) assignment rather than
/// as part of `==`, `!=`, `<=` or `>=`.
pub fn has_assignment(text: &str) -> bool {
    let chars: Vec<char> = text.chars().collect();
    chars.iter().enumerate().any(|(i, c)| {
        if *c != '=' {
            return false;
        }
        let previous = if i > 0 { chars[i - 1] } else { ' ' };
        let next = chars.get(i + 1).copied().unwrap_or(' ');
        !matches!(previous, '=' | '!' | '<' | '>') && next != '='
    })
}

fn strip_line_comment(text: &str) -> &str {
    text.find("//").map_or(text, |at| &text[..at])
}

/// Whether a single line of code is structural under the lexical rules.
pub fn is_structural(text: &str) -> bool {
    if has_assignment(text) {
        return false;
    }
    let code = strip_line_comment(text).trim();
    if code.is_empty() {
        return false;
    }
    let closing = code.contains('}') && code.chars().all(|c| matches!(c, '}' | ')' | ';' | ']') || c.is_whitespace());
    closing
        || class_declaration().is_match(code)
        || (main_signature().is_match(code) && code.contains("static"))
}

/// Sets `structural` on every line and returns the flagged line numbers.
/// Explanations are never touched.
pub fn flag_structural_lines(example: &mut WorkedExample) -> BTreeSet<u32> {
    let mut flagged = BTreeSet::new();
    for line in &mut example.lines {
        line.structural = is_structural(&line.text);
        if line.structural {
            flagged.insert(line.number);
        }
    }
    flagged
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn round(number: u32, line_count: u32, entries: &[(u32, &str)]) -> ParsedRound {
        let mut parsed = ParsedRound::empty(number, line_count);
        for (line, text) in entries {
            parsed.by_line.insert(*line, (*text).to_owned());
        }
        parsed
    }

    fn ten_lines() -> WorkedExample {
        let source = (1..=10).map(|i| format!("int v{i} = {i};")).collect::<Vec<_>>().join("\n");
        WorkedExample::create("T", "", &source, "java", t0()).unwrap()
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine_similarity("declares x", "declares x"), 1.0);
        assert_eq!(cosine_similarity("foo bar", "baz qux"), 0.0);
        assert!((cosine_similarity("a a b", "a b b") - 0.8).abs() < 1e-9);
        assert_eq!(cosine_similarity("", ""), 1.0);
        assert_eq!(cosine_similarity("...", "  "), 1.0);
        assert_eq!(cosine_similarity("x", ""), 0.0);
        assert_eq!(cosine_similarity("Declares X!", "declares, x"), 1.0);
    }

    #[test]
    fn tokenizer() {
        assert_eq!(
            tokenize("The 'fullName' variable, i.e. fullName2"),
            vec!["the", "fullname", "variable", "i", "e", "fullname2"]
        );
    }

    #[test]
    fn similarity_report() {
        let r1 = round(1, 3, &[(1, "declares a"), (2, "adds one")]);
        let r2 = r1.clone();
        let report = round_similarity("ex", &[r1.clone(), ParsedRound { round: 2, ..r2 }]);
        assert_eq!(report.per_round, vec![RoundScore { round: 2, score: Some(1.0) }]);
        assert_eq!(report.per_line[&1], vec![LineScore { round: 2, score: 1.0 }]);

        let single = round_similarity("ex", std::slice::from_ref(&r1));
        assert!(single.per_round.is_empty());
        assert!(single.per_line.is_empty());

        let empty = round(2, 3, &[]);
        let report = round_similarity("ex", &[r1, empty]);
        assert_eq!(report.per_round, vec![RoundScore { round: 2, score: None }]);
        assert_eq!(report.to_csv(true), "example,round,score\nex,2,--\n");
    }

    #[test]
    fn similarity_two_line_fixture_matches_hand_value() {
        // round 1 joined: "prints the sum\nadds the numbers"
        //   tf: prints 1, the 2, sum 1, adds 1, numbers 1   -> |v|^2 = 8
        // round 2 joined: "prints the total sum\nadds two numbers"
        //   tf: prints 1, the 1, total 1, sum 1, adds 1, two 1, numbers 1 -> |w|^2 = 7
        // dot = 1 + 2 + 1 + 1 + 1 = 6  ->  6 / sqrt(56)
        let r1 = round(1, 2, &[(1, "prints the sum"), (2, "adds the numbers")]);
        let r2 = round(2, 2, &[(1, "prints the total sum"), (2, "adds two numbers")]);
        let report = round_similarity("two", &[r2, r1]);
        let expected = 6.0 / 56f64.sqrt();
        assert!((report.per_round[0].score.unwrap() - expected).abs() < 1e-9);
        // line 1: (prints, the, sum) vs (prints, the, total, sum) = 3 / sqrt(12)
        assert!((report.per_line[&1][0].score - 3.0 / 12f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn merge_duplicate_is_dropped() {
        let example = ten_lines();
        let r1 = round(1, 10, &[(3, "Declares v3 and stores three.")]);
        let r2 = round(2, 10, &[(3, "Declares v3 and stores three.")]);
        let merged = merge_rounds(&example, &[r1, r2], &MergePolicy::default(), t0()).unwrap();
        assert_eq!(merged.lines[2].explanations.len(), 1);
        assert_eq!(merged.lines[2].explanations[0].source_round, Some(1));
    }

    #[test]
    fn merge_novel_text_adds_level() {
        let example = ten_lines();
        let r1 = round(1, 10, &[(3, "Declares v3.")]);
        let r2 = round(2, 10, &[(3, "The int type holds whole numbers, so v3 keeps 3 exactly."), (7, "Declares v7.")]);
        let merged = merge_rounds(&example, &[r1, r2], &MergePolicy::default(), t0()).unwrap();
        let line3 = &merged.lines[2].explanations;
        assert_eq!(line3.len(), 2);
        assert_eq!((line3[1].level, line3[1].source_round), (2, Some(2)));
        assert_eq!(line3[1].origin, Origin::Generated);
        let line7 = &merged.lines[6].explanations;
        assert_eq!(line7.len(), 1);
        assert_eq!((line7[0].level, line7[0].source_round), (1, Some(2)));
        assert!(merged.validate().is_empty());
    }

    #[test]
    fn merge_rejects_mismatched_rounds() {
        let example = ten_lines();
        let wrong = round(1, 12, &[(11, "x")]);
        assert_eq!(
            merge_rounds(&example, &[wrong], &MergePolicy::default(), t0()),
            Err(AnalysisError::RoundExampleMismatch {
                round: 1,
                parsed: 12,
                actual: 10
            })
        );
    }

    #[test]
    fn structural_lines() {
        for text in ["}", "    };", "})", "  }  // end main", "public class Initials {", "class Point", "public static void main(String[] args) {", "static public void main(String... a)"] {
            assert!(is_structural(text), "{text:?} should be flagged");
        }
        for text in ["int x = 0;", "", "// comment", "System.out.println(x);", "return x;", "Point p = new Point();", "classes++;", "String classic = \"}\";"] {
            assert!(!is_structural(text), "{text:?} should not be flagged");
        }
    }

    #[test]
    fn flagging_keeps_explanations() {
        let mut example = WorkedExample::create(
            "T",
            "",
            "public class A {\n  public static void main(String[] args) {\n    int x = 0;\n  }\n}",
            "java",
            t0(),
        )
        .unwrap();
        example
            .attach_explanation(5, "Ends the class.", Origin::HumanAuthored, None, t0())
            .unwrap();
        let flagged = flag_structural_lines(&mut example);
        assert_eq!(flagged, BTreeSet::from([1, 2, 4, 5]));
        assert!(example.lines[4].structural && !example.lines[2].structural);
        assert_eq!(example.lines[4].explanations.len(), 1);
    }

    #[test]
    fn assignment_detection() {
        assert!(has_assignment("x = 1"));
        assert!(has_assignment("x += 1"));
        assert!(!has_assignment("a == b"));
        assert!(!has_assignment("a <= b && c >= d && e != f"));
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "x", "line", "prints", "The", "int"]), 0..12)
            .prop_map(|v| v.into_iter().map(str::to_owned).collect())
    }

    fn rounds_strategy() -> impl Strategy<Value = Vec<ParsedRound>> {
        prop::collection::vec(prop::collection::btree_map(1u32..=10, words(), 0..6), 1..4).prop_map(|rounds| {
            rounds
                .into_iter()
                .enumerate()
                .map(|(i, map)| {
                    let mut parsed = ParsedRound::empty(i as u32 + 1, 10);
                    for (line, words) in map {
                        if !words.is_empty() {
                            parsed.by_line.insert(line, words.join(" "));
                        }
                    }
                    parsed
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_reflexive(a in ".{0,40}", b in ".{0,40}") {
            let ab = cosine_similarity(&a, &b);
            prop_assert!((ab - cosine_similarity(&b, &a)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((cosine_similarity(&a, &a) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn cosine_bag_of_words(mut a in words(), b in words(), seed in any::<u64>()) {
            let before = cosine_similarity(&a.join(" "), &b.join(" "));
            let len = a.len().max(1);
            a.rotate_left((seed as usize) % len);
            a.reverse();
            prop_assert!((before - cosine_similarity(&a.join(" "), &b.join(" "))).abs() < 1e-9);
        }

        #[test]
        fn merge_is_idempotent_and_monotone(rounds in rounds_strategy()) {
            let example = ten_lines();
            let once = merge_rounds(&example, &rounds, &MergePolicy::default(), t0()).unwrap();
            let twice = merge_rounds(&once, &rounds, &MergePolicy::default(), t0()).unwrap();
            prop_assert_eq!(&once, &twice);
            for (before, after) in example.lines.iter().zip(&once.lines) {
                prop_assert!(after.explanations.len() >= before.explanations.len());
            }
            prop_assert!(once.validate().is_empty());
        }

        #[test]
        fn assignments_never_flagged(prefix in "[ a-z}{();]{0,10}", op in prop::sample::select(vec!["=", "+=", "-=", "*=", "|="]), suffix in "[ a-z0-9}{();]{0,10}") {
            let line = format!("{prefix}{op}{suffix}");
            prop_assume!(!line.contains("=="));
            prop_assert!(!is_structural(&line));
        }
    }
}
