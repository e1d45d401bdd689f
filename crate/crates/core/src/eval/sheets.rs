use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::comparable::{filter_comparable, StudyExample};
use super::{EvalError, Source};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetItem {
    pub example_id: String,
    pub line_number: u32,
    pub code: String,
    pub slot_a: String,
    pub slot_b: String,
    /// Source shown in slot A; slot B holds the other one. Never rendered.
    pub slot_a_source: Source,
}

impl SheetItem {
    pub fn source_of(&self, slot_a: bool) -> Source {
        if slot_a {
            self.slot_a_source
        } else {
            self.slot_a_source.other()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetExample {
    pub example_id: String,
    pub title: String,
    pub description: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonSheet {
    pub sheet_id: String,
    pub evaluator_id: String,
    pub seed: u64,
    pub examples: Vec<SheetExample>,
    pub items: Vec<SheetItem>,
}

/// One sheet per evaluator over every comparable line of `examples`.
///
/// Each evaluator gets an independent ChaCha8 stream of `seed`; within a
/// sheet exactly `n / 2` items (plus one coin flip when `n` is odd) show
/// the generated explanation in slot A.
pub fn build_sheets(
    examples: &[StudyExample],
    evaluators: &[String],
    seed: u64,
) -> Result<Vec<ComparisonSheet>, EvalError> {
    let comparable = filter_comparable(examples.iter().flat_map(|e| e.lines.iter())).comparable;
    if comparable.is_empty() {
        return Err(EvalError::NoComparableLines);
    }
    let headers: Vec<SheetExample> = examples
        .iter()
        .filter(|e| comparable.iter().any(|c| c.example_id == e.example_id))
        .map(|e| SheetExample {
            example_id: e.example_id.clone(),
            title: e.title.clone(),
            description: e.description.clone(),
            source: e.source.clone(),
        })
        .collect();

    let sheets = evaluators
        .iter()
        .enumerate()
        .map(|(index, evaluator)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let n = comparable.len();
            let mut generated_first = n / 2;
            if n % 2 == 1 && rng.gen_bool(0.5) {
                generated_first += 1;
            }
            let mut slots: Vec<bool> = (0..n).map(|i| i < generated_first).collect();
            slots.shuffle(&mut rng);

            let items = comparable
                .iter()
                .zip(slots)
                .map(|(line, generated_in_a)| {
                    let generated = line.generated.clone().expect("comparable");
                    let expert = line.expert.clone().expect("comparable");
                    let (slot_a, slot_b, slot_a_source) = if generated_in_a {
                        (generated, expert, Source::Generated)
                    } else {
                        (expert, generated, Source::Expert)
                    };
                    SheetItem {
                        example_id: line.example_id.clone(),
                        line_number: line.line,
                        code: line.code.clone(),
                        slot_a,
                        slot_b,
                        slot_a_source,
                    }
                })
                .collect();
            ComparisonSheet {
                sheet_id: format!("sheet-{:03}", index + 1),
                evaluator_id: evaluator.clone(),
                seed,
                examples: headers.clone(),
                items,
            }
        })
        .collect();
    Ok(sheets)
}

impl ComparisonSheet {
    /// Evaluator-facing form. Does not reveal which slot holds which source.
    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Explanation comparison ({})\n", self.sheet_id);
        let _ = writeln!(out, "Evaluator: {}\n", self.evaluator_id);
        out.push_str("For each line, rate both explanations and compare them.\n\n");
        out.push_str("- Explanation 1 / 2 is sufficiently complete: Not complete (0), Complete (1), Very complete (2)\n");
        out.push_str("- Which explanation is better? Both are the same (0), Explanation 1 is better (1), Explanation 2 is better (2)\n");
        for example in &self.examples {
            let _ = writeln!(out, "\n## {}\n", example.title);
            if !example.description.trim().is_empty() {
                let _ = writeln!(out, "{}\n", example.description.trim_end());
            }
            out.push_str("```java\n");
            for (index, line) in example.source.split('\n').enumerate() {
                let _ = writeln!(out, "{:>3}  {}", index + 1, line);
            }
            out.push_str("```\n");
            for item in self.items.iter().filter(|i| i.example_id == example.example_id) {
                let _ = writeln!(out, "\n### Line {}: `{}`\n", item.line_number, item.code.trim());
                let _ = writeln!(out, "**Explanation 1:** {}\n", item.slot_a);
                let _ = writeln!(out, "**Explanation 2:** {}\n", item.slot_b);
                out.push_str("- Explanation 1 is sufficiently complete (0/1/2): ___\n");
                out.push_str("- Explanation 2 is sufficiently complete (0/1/2): ___\n");
                out.push_str("- Which explanation is better? (0/1/2): ___\n");
            }
        }
        out
    }

    /// Blinded CSV with empty rating columns, ready to be filled in.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| EvalError::Csv(e.to_string());
        writer
            .write_record([
                "sheet_id",
                "evaluator_id",
                "example_id",
                "line",
                "code",
                "explanation_1",
                "explanation_2",
                "completeness_a",
                "completeness_b",
                "preference",
            ])
            .map_err(csv_err)?;
        for item in &self.items {
            writer
                .write_record([
                    self.sheet_id.as_str(),
                    self.evaluator_id.as_str(),
                    item.example_id.as_str(),
                    &item.line_number.to_string(),
                    item.code.as_str(),
                    item.slot_a.as_str(),
                    item.slot_b.as_str(),
                    "",
                    "",
                    "",
                ])
                .map_err(csv_err)?;
        }
        String::from_utf8(writer.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?)
            .map_err(|e| EvalError::Csv(e.to_string()))
    }
}

/// Hidden slot assignment, keyed by (evaluator, example, line).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerKey {
    entries: HashMap<(String, String, u32), Source>,
}

#[derive(Debug, Serialize, Deserialize)]
struct KeyRow {
    evaluator_id: String,
    example_id: String,
    line: u32,
    slot_a_source: Source,
}

impl AnswerKey {
    pub fn from_sheets(sheets: &[ComparisonSheet]) -> Self {
        let mut key = Self::default();
        for sheet in sheets {
            for item in &sheet.items {
                key.insert(&sheet.evaluator_id, &item.example_id, item.line_number, item.slot_a_source);
            }
        }
        key
    }

    pub fn insert(&mut self, evaluator_id: &str, example_id: &str, line: u32, slot_a_source: Source) {
        self.entries
            .insert((evaluator_id.to_owned(), example_id.to_owned(), line), slot_a_source);
    }

    pub fn slot_a_source(&self, evaluator_id: &str, example_id: &str, line: u32) -> Option<Source> {
        self.entries
            .get(&(evaluator_id.to_owned(), example_id.to_owned(), line))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV with columns `evaluator_id,example_id,line,slot_a_source`, sorted.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut rows: Vec<_> = self.entries.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let mut writer = csv::Writer::from_writer(Vec::new());
        for ((evaluator_id, example_id, line), source) in rows {
            writer
                .serialize(KeyRow {
                    evaluator_id: evaluator_id.clone(),
                    example_id: example_id.clone(),
                    line: *line,
                    slot_a_source: *source,
                })
                .map_err(|e| EvalError::Csv(e.to_string()))?;
        }
        String::from_utf8(writer.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?)
            .map_err(|e| EvalError::Csv(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut key = Self::default();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        for (index, row) in reader.deserialize::<KeyRow>().enumerate() {
            let row = row.map_err(|e| EvalError::InvalidRating {
                row: index + 2,
                message: e.to_string(),
            })?;
            key.insert(&row.evaluator_id, &row.example_id, row.line, row.slot_a_source);
        }
        Ok(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::CandidateLine;
    use std::collections::HashSet;

    fn corpus(lines: u32) -> Vec<StudyExample> {
        vec![StudyExample {
            example_id: "ex".into(),
            title: "Ex".into(),
            description: "desc".into(),
            source: (1..=lines).map(|i| format!("s{i};")).collect::<Vec<_>>().join("\n"),
            lines: (1..=lines)
                .map(|i| CandidateLine {
                    example_id: "ex".into(),
                    line: i,
                    code: format!("s{i};"),
                    generated: Some(format!("generated {i}")),
                    expert: Some(format!("expert {i}")),
                })
                .collect(),
        }]
    }

    fn evaluators(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("e{i:02}")).collect()
    }

    #[test]
    fn same_seed_same_sheets() {
        let a = build_sheets(&corpus(45), &evaluators(3), 7).unwrap();
        let b = build_sheets(&corpus(45), &evaluators(3), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_give_distinct_assignments() {
        let mut seen = HashSet::new();
        for seed in 0..100 {
            let sheet = &build_sheets(&corpus(45), &evaluators(1), seed).unwrap()[0];
            let pattern: Vec<Source> = sheet.items.iter().map(|i| i.slot_a_source).collect();
            seen.insert(pattern);
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn assignment_is_balanced() {
        for n in [1, 2, 7, 45, 46] {
            for seed in 0..20 {
                for sheet in build_sheets(&corpus(n), &evaluators(4), seed).unwrap() {
                    let generated_a = sheet
                        .items
                        .iter()
                        .filter(|i| i.slot_a_source == Source::Generated)
                        .count() as f64;
                    assert!((generated_a - n as f64 / 2.0).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn slots_hold_the_right_text() {
        for sheet in build_sheets(&corpus(10), &evaluators(2), 3).unwrap() {
            for item in &sheet.items {
                let (g, e) = match item.slot_a_source {
                    Source::Generated => (&item.slot_a, &item.slot_b),
                    Source::Expert => (&item.slot_b, &item.slot_a),
                };
                assert!(g.starts_with("generated"));
                assert!(e.starts_with("expert"));
            }
        }
    }

    #[test]
    fn no_comparable_lines() {
        let mut examples = corpus(3);
        for line in &mut examples[0].lines {
            line.expert = None;
        }
        assert_eq!(build_sheets(&examples, &evaluators(1), 1), Err(EvalError::NoComparableLines));
    }

    #[test]
    fn rendering_hides_the_assignment() {
        let sheet = &build_sheets(&corpus(4), &evaluators(1), 9).unwrap()[0];
        let markdown = sheet.render_markdown();
        let csv = sheet.to_csv().unwrap();
        for text in [&markdown, &csv] {
            assert!(!text.to_lowercase().contains("slot_a_source"));
            assert!(!text.contains("Generated") && !text.contains("Expert"));
        }
        assert!(markdown.contains("Not complete (0)"));
        assert!(markdown.contains("Both are the same (0)"));
    }

    #[test]
    fn key_csv_round_trip() {
        let sheets = build_sheets(&corpus(5), &evaluators(2), 11).unwrap();
        let key = AnswerKey::from_sheets(&sheets);
        let parsed = AnswerKey::from_csv(&key.to_csv().unwrap()).unwrap();
        assert_eq!(parsed, key);
        assert_eq!(key.len(), 10);
    }
}
