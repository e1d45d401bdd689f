use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::example::{CodeLine, WorkedExample};

/// Which explanation levels make up the text shown to evaluators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextMode {
    /// Every level, separated by a blank line.
    #[default]
    AllLevels,
    FirstLevel,
}

impl TextMode {
    fn text(self, line: &CodeLine) -> Option<String> {
        match self {
            _ if !line.is_explained() => None,
            TextMode::AllLevels => Some(line.joined_explanations()),
            TextMode::FirstLevel => Some(line.explanations[0].text.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateLine {
    pub example_id: String,
    pub line: u32,
    pub code: String,
    pub generated: Option<String>,
    pub expert: Option<String>,
}

/// One example as prepared for a comparison study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyExample {
    pub example_id: String,
    pub title: String,
    pub description: String,
    pub source: String,
    pub lines: Vec<CandidateLine>,
}

impl StudyExample {
    /// Pairs the generated and expert versions of the same code.
    pub fn from_pair(
        generated: &WorkedExample,
        expert: &WorkedExample,
        mode: TextMode,
    ) -> Result<Self, EvalError> {
        let same_code = generated.line_count() == expert.line_count()
            && generated
                .lines
                .iter()
                .zip(&expert.lines)
                .all(|(a, b)| a.text.trim_end() == b.text.trim_end());
        if !same_code {
            return Err(EvalError::ExampleMismatch(generated.id.clone()));
        }
        let lines = generated
            .lines
            .iter()
            .zip(&expert.lines)
            .map(|(g, e)| CandidateLine {
                example_id: generated.id.clone(),
                line: g.number,
                code: g.text.clone(),
                generated: mode.text(g),
                expert: mode.text(e),
            })
            .collect();
        Ok(Self {
            example_id: generated.id.clone(),
            title: generated.title.clone(),
            description: generated.description.clone(),
            source: generated.source(),
            lines,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparableSet {
    pub comparable: Vec<CandidateLine>,
    pub generated_only: usize,
    pub expert_only: usize,
}

/// Keeps lines explained by both sources and counts the one-sided ones.
/// Lines explained by neither are ignored.
pub fn filter_comparable<'a>(lines: impl IntoIterator<Item = &'a CandidateLine>) -> ComparableSet {
    let mut set = ComparableSet {
        comparable: Vec::new(),
        generated_only: 0,
        expert_only: 0,
    };
    for line in lines {
        match (&line.generated, &line.expert) {
            (Some(_), Some(_)) => set.comparable.push(line.clone()),
            (Some(_), None) => set.generated_only += 1,
            (None, Some(_)) => set.expert_only += 1,
            (None, None) => {}
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::Origin;
    use chrono::{TimeZone, Utc};

    fn candidate(line: u32, generated: bool, expert: bool) -> CandidateLine {
        CandidateLine {
            example_id: "ex".into(),
            line,
            code: format!("line {line}"),
            generated: generated.then(|| "g".to_owned()),
            expert: expert.then(|| "e".to_owned()),
        }
    }

    #[test]
    fn counts_one_sided_lines() {
        let mut lines = Vec::new();
        let mut n = 0;
        for (count, g, e) in [(45, true, true), (18, true, false), (5, false, true), (7, false, false)] {
            for _ in 0..count {
                n += 1;
                lines.push(candidate(n, g, e));
            }
        }
        let set = filter_comparable(&lines);
        assert_eq!((set.comparable.len(), set.generated_only, set.expert_only), (45, 18, 5));
    }

    #[test]
    fn edge_cases() {
        let both: Vec<_> = (1..=4).map(|i| candidate(i, true, true)).collect();
        let set = filter_comparable(&both);
        assert_eq!((set.comparable.len(), set.generated_only, set.expert_only), (4, 0, 0));
        let one_sided: Vec<_> = (1..=4).map(|i| candidate(i, i % 2 == 0, i % 2 == 1)).collect();
        let set = filter_comparable(&one_sided);
        assert!(set.comparable.is_empty());
        assert_eq!((set.generated_only, set.expert_only), (2, 2));
    }

    #[test]
    fn pairing_uses_text_mode() {
        let t = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let base = WorkedExample::create("T", "", "a;\nb;", "java", t).unwrap().with_id("t");
        let mut generated = base.clone();
        generated.attach_explanation(1, "first", Origin::Generated, Some(1), t).unwrap();
        generated.attach_explanation(1, "second", Origin::Generated, Some(2), t).unwrap();
        let mut expert = base.clone();
        expert.attach_explanation(1, "expert", Origin::HumanAuthored, None, t).unwrap();
        expert.attach_explanation(2, "only expert", Origin::HumanAuthored, None, t).unwrap();

        let all = StudyExample::from_pair(&generated, &expert, TextMode::AllLevels).unwrap();
        assert_eq!(all.lines[0].generated.as_deref(), Some("first\n\nsecond"));
        assert_eq!(all.lines[1].generated, None);
        let first = StudyExample::from_pair(&generated, &expert, TextMode::FirstLevel).unwrap();
        assert_eq!(first.lines[0].generated.as_deref(), Some("first"));

        let other = WorkedExample::create("T", "", "a;\nc;", "java", t).unwrap();
        assert!(matches!(
            StudyExample::from_pair(&generated, &other, TextMode::AllLevels),
            Err(EvalError::ExampleMismatch(_))
        ));
    }
}
