//! Worked-example content model: numbered code lines, leveled per-line
//! explanations and challenge annotations.
//!
//! Mutating operations are all-or-nothing: every precondition is checked
//! before the example is touched, so a failed call leaves it unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Errors raised by the model operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("title must not be empty")]
    EmptyTitle,
    #[error("source must not be empty")]
    EmptySource,
    #[error("line {line} is out of range 1..={count}")]
    LineOutOfRange { line: u32, count: u32 },
    #[error("line {line} has no explanation level {level}")]
    LevelOutOfRange { line: u32, level: u32 },
    #[error("explanation text must not be empty")]
    EmptyExplanation,
    #[error("a challenge needs at least one distractor")]
    NoDistractors,
    #[error("distractor {distractor:?} equals the true text of line {line}")]
    DistractorEqualsTruth { line: u32, distractor: String },
    #[error("a generated explanation must name its source round")]
    MissingSourceRound,
}

/// Where an explanation's text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Generated,
    Edited,
    HumanAuthored,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Generated => "generated",
            Origin::Edited => "edited",
            Origin::HumanAuthored => "human-authored",
        })
    }
}

/// One level of detail for a line (1 = brief, higher = more detail).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationLevel {
    pub level: u32,
    pub text: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_round: Option<u32>,
}

/// Marks a line as blanked in challenge mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeSpec {
    pub distractors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeLine {
    pub number: u32,
    pub text: String,
    #[serde(default)]
    pub explanations: Vec<ExplanationLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub challenge: Option<ChallengeSpec>,
    #[serde(default)]
    pub structural: bool,
    /// Fields this version does not understand, kept for forward compatibility.
    #[serde(flatten)]
    pub extensions: BTreeMap<String, Value>,
}

impl CodeLine {
    fn new(number: u32, text: &str) -> Self {
        Self {
            number,
            text: text.to_owned(),
            explanations: Vec::new(),
            challenge: None,
            structural: false,
            extensions: BTreeMap::new(),
        }
    }

    pub fn is_explained(&self) -> bool {
        !self.explanations.is_empty()
    }

    /// All levels joined with a blank line.
    pub fn joined_explanations(&self) -> String {
        self.explanations
            .iter()
            .map(|level| level.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkedExample {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub language_tag: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub lines: Vec<CodeLine>,
    #[serde(flatten)]
    pub extensions: BTreeMap<String, Value>,
}

/// A single invariant violation found by [`WorkedExample::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    EmptyTitle,
    /// Line at `position` (0-based) carries `found` where `expected` was due.
    LineNumberGap { position: usize, expected: u32, found: u32 },
    DuplicateLineNumber { number: u32 },
    LevelNumberGap { line: u32, expected: u32, found: u32 },
    EmptyExplanation { line: u32, level: u32 },
    GeneratedWithoutRound { line: u32, level: u32 },
    ChallengeWithoutDistractors { line: u32 },
    DistractorEqualsTruth { line: u32, distractor: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTitle => write!(f, "title is empty"),
            Violation::LineNumberGap { position, expected, found } => write!(
                f,
                "line at position {position} is numbered {found}, expected {expected}"
            ),
            Violation::DuplicateLineNumber { number } => {
                write!(f, "line number {number} appears more than once")
            }
            Violation::LevelNumberGap { line, expected, found } => write!(
                f,
                "line {line}: explanation level {found} found where {expected} was expected"
            ),
            Violation::EmptyExplanation { line, level } => {
                write!(f, "line {line}: explanation level {level} is empty")
            }
            Violation::GeneratedWithoutRound { line, level } => write!(
                f,
                "line {line}: generated explanation level {level} has no source round"
            ),
            Violation::ChallengeWithoutDistractors { line } => {
                write!(f, "line {line}: challenge has no distractors")
            }
            Violation::DistractorEqualsTruth { line, distractor } => {
                write!(f, "line {line}: distractor {distractor:?} equals the true line")
            }
        }
    }
}

impl WorkedExample {
    /// Splits `source` on `\n` into numbered lines. A single trailing newline
    /// is not treated as an extra blank line.
    pub fn create(
        title: &str,
        description: &str,
        source: &str,
        language_tag: &str,
        now: DateTime<Utc>,
    ) -> Result<Self, ModelError> {
        if title.trim().is_empty() {
            return Err(ModelError::EmptyTitle);
        }
        let body = source.strip_suffix('\n').unwrap_or(source);
        if body.trim().is_empty() {
            return Err(ModelError::EmptySource);
        }
        let lines = body
            .split('\n')
            .enumerate()
            .map(|(index, text)| CodeLine::new(index as u32 + 1, text))
            .collect();
        Ok(Self {
            id: new_example_id(title),
            title: title.to_owned(),
            description: description.to_owned(),
            language_tag: language_tag.to_owned(),
            created_at: now,
            updated_at: now,
            lines,
            extensions: BTreeMap::new(),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn line_count(&self) -> u32 {
        self.lines.len() as u32
    }

    /// The code with lines joined by `\n`.
    pub fn source(&self) -> String {
        self.lines
            .iter()
            .map(|line| line.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn line(&self, number: u32) -> Result<&CodeLine, ModelError> {
        let count = self.line_count();
        if number == 0 || number > count {
            return Err(ModelError::LineOutOfRange { line: number, count });
        }
        Ok(&self.lines[number as usize - 1])
    }

    fn line_mut(&mut self, number: u32) -> Result<&mut CodeLine, ModelError> {
        self.line(number)?;
        Ok(&mut self.lines[number as usize - 1])
    }

    /// Appends `text` as the next level on `line`.
    pub fn attach_explanation(
        &mut self,
        line: u32,
        text: &str,
        origin: Origin,
        source_round: Option<u32>,
        now: DateTime<Utc>,
    ) -> Result<u32, ModelError> {
        if text.trim().is_empty() {
            return Err(ModelError::EmptyExplanation);
        }
        if origin == Origin::Generated && source_round.is_none() {
            return Err(ModelError::MissingSourceRound);
        }
        let target = self.line_mut(line)?;
        let level = target.explanations.len() as u32 + 1;
        target.explanations.push(ExplanationLevel {
            level,
            text: text.to_owned(),
            origin,
            source_round,
        });
        self.touch(now);
        Ok(level)
    }

    /// Replaces the text of an existing level. Generated text becomes
    /// `Edited`; the source round is kept.
    pub fn edit_explanation(
        &mut self,
        line: u32,
        level: u32,
        text: &str,
        now: DateTime<Utc>,
    ) -> Result<(), ModelError> {
        if text.trim().is_empty() {
            return Err(ModelError::EmptyExplanation);
        }
        let target = self.line_mut(line)?;
        let entry = level
            .checked_sub(1)
            .and_then(|index| target.explanations.get_mut(index as usize))
            .ok_or(ModelError::LevelOutOfRange { line, level })?;
        if entry.text != text {
            entry.text = text.to_owned();
            if entry.origin == Origin::Generated {
                entry.origin = Origin::Edited;
            }
        }
        self.touch(now);
        Ok(())
    }

    /// Removes one level; later levels move up so numbering stays 1..k.
    pub fn remove_explanation(
        &mut self,
        line: u32,
        level: u32,
        now: DateTime<Utc>,
    ) -> Result<ExplanationLevel, ModelError> {
        let target = self.line_mut(line)?;
        if level == 0 || level as usize > target.explanations.len() {
            return Err(ModelError::LevelOutOfRange { line, level });
        }
        let removed = target.explanations.remove(level as usize - 1);
        for (index, entry) in target.explanations.iter_mut().enumerate() {
            entry.level = index as u32 + 1;
        }
        self.touch(now);
        Ok(removed)
    }

    pub fn mark_challenge(
        &mut self,
        line: u32,
        distractors: &[String],
        prompt_hint: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<(), ModelError> {
        let target = self.line(line)?;
        if distractors.is_empty() {
            return Err(ModelError::NoDistractors);
        }
        if let Some(same) = distractors.iter().find(|d| d.trim() == target.text.trim()) {
            return Err(ModelError::DistractorEqualsTruth {
                line,
                distractor: same.clone(),
            });
        }
        self.line_mut(line)?.challenge = Some(ChallengeSpec {
            distractors: distractors.to_vec(),
            prompt_hint,
        });
        self.touch(now);
        Ok(())
    }

    pub fn clear_challenge(&mut self, line: u32, now: DateTime<Utc>) -> Result<(), ModelError> {
        self.line_mut(line)?.challenge = None;
        self.touch(now);
        Ok(())
    }

    /// Every invariant violation, in line order. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.title.trim().is_empty() {
            violations.push(Violation::EmptyTitle);
        }

        let mut seen = BTreeSet::new();
        let mut reported = BTreeSet::new();
        for (position, line) in self.lines.iter().enumerate() {
            if !seen.insert(line.number) {
                if reported.insert(line.number) {
                    violations.push(Violation::DuplicateLineNumber { number: line.number });
                }
                continue;
            }
            let expected = position as u32 + 1;
            if line.number != expected && !self.lines.iter().any(|l| l.number == expected) {
                violations.push(Violation::LineNumberGap {
                    position,
                    expected,
                    found: line.number,
                });
            }
        }

        for line in &self.lines {
            for (index, level) in line.explanations.iter().enumerate() {
                let expected = index as u32 + 1;
                if level.level != expected {
                    violations.push(Violation::LevelNumberGap {
                        line: line.number,
                        expected,
                        found: level.level,
                    });
                }
                if level.text.trim().is_empty() {
                    violations.push(Violation::EmptyExplanation {
                        line: line.number,
                        level: level.level,
                    });
                }
                if level.origin == Origin::Generated && level.source_round.is_none() {
                    violations.push(Violation::GeneratedWithoutRound {
                        line: line.number,
                        level: level.level,
                    });
                }
            }
            if let Some(challenge) = &line.challenge {
                if challenge.distractors.is_empty() {
                    violations.push(Violation::ChallengeWithoutDistractors { line: line.number });
                }
                for distractor in &challenge.distractors {
                    if distractor.trim() == line.text.trim() {
                        violations.push(Violation::DistractorEqualsTruth {
                            line: line.number,
                            distractor: distractor.clone(),
                        });
                    }
                }
            }
        }
        violations
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Advances `updated_at`: to `now`, or one millisecond past the previous
    /// value when the clock has not moved.
    pub fn touch(&mut self, now: DateTime<Utc>) {
        let floor = self.updated_at + Duration::milliseconds(1);
        self.updated_at = now.max(floor);
    }
}

fn new_example_id(title: &str) -> String {
    let slug: String = title
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect::<String>()
        .split('-')
        .filter(|part| !part.is_empty())
        .collect::<Vec<_>>()
        .join("-");
    let suffix = uuid::Uuid::new_v4().simple().to_string();
    if slug.is_empty() {
        suffix[..12].to_owned()
    } else {
        format!("{}-{}", slug, &suffix[..8])
    }
}

/// Ids become directory names, so they are restricted to a safe alphabet.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
}
