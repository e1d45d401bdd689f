//! Blind pairwise comparison studies and internal rating summaries.
//!
//! The external study pairs a generated and an expert explanation for each
//! code line, hides which is which behind randomized slots, and analyzes
//! the completeness and preference ratings evaluators return. Percentages
//! are computed over (line, evaluator) observations.

mod comparable;
mod internal;
mod kappa;
mod ratings;
mod sheets;
mod tables;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use comparable::{filter_comparable, CandidateLine, ComparableSet, StudyExample, TextMode};
pub use internal::{
    internal_rating_summary, read_internal_ratings_csv, InternalMetric, InternalRating, InternalSection,
    InternalSummary, MetricSummary,
};
pub use kappa::{fleiss_kappa, preference_counts, AgreementReport};
pub use ratings::{read_ratings_csv, unblind, RatingRecord, SlotPreference, SourcePreference, UnblindedRating};
pub use sheets::{build_sheets, AnswerKey, ComparisonSheet, SheetExample, SheetItem};
pub use tables::{
    completeness_distribution, mean_stdev_summary, preference_distribution, round_percentages,
    CompletenessRow, CompletenessTable, MeanStdevCell, MeanStdevTable, Metric, PreferenceRow, PreferenceTable, Summary,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no line has both a generated and an expert explanation")]
    NoComparableLines,
    #[error("generated and expert versions of {0:?} have different code")]
    ExampleMismatch(String),
    #[error("rating by {evaluator_id} for {example_id}:{line} matches no sheet item")]
    OrphanRating {
        evaluator_id: String,
        example_id: String,
        line: u32,
    },
    #[error("no ratings for {metric} / {group}")]
    EmptyCell { metric: String, group: String },
    #[error("rating matrix is not rectangular: {0}")]
    RaggedMatrix(String),
    #[error("every rating falls in one category; kappa is undefined")]
    DegenerateAgreement,
    #[error("rating for {rater_id} {example_id}:{line} round {round} mixes description conditions")]
    MixedConditionLine {
        rater_id: String,
        example_id: String,
        line: u32,
        round: u32,
    },
    #[error("invalid rating at row {row}: {message}")]
    InvalidRating { row: usize, message: String },
    #[error("CSV error: {0}")]
    Csv(String),
}

/// Who wrote an explanation shown in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Generated,
    Expert,
}

impl Source {
    pub fn other(self) -> Self {
        match self {
            Source::Generated => Source::Expert,
            Source::Expert => Source::Generated,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Source::Generated => "Generated",
            Source::Expert => "Expert",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Generated => "generated",
            Source::Expert => "expert",
        })
    }
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "generated" => Ok(Source::Generated),
            "expert" => Ok(Source::Expert),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorGroup {
    Students,
    Authors,
}

impl EvaluatorGroup {
    pub fn label(self) -> &'static str {
        match self {
            EvaluatorGroup::Students => "Students",
            EvaluatorGroup::Authors => "Authors",
        }
    }
}

impl std::str::FromStr for EvaluatorGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "students" | "student" => Ok(EvaluatorGroup::Students),
            "authors" | "author" => Ok(EvaluatorGroup::Authors),
            other => Err(format!("unknown evaluator group {other:?}")),
        }
    }
}

/// Column of a report table: one evaluator group, or everyone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupColumn {
    Students,
    Authors,
    Overall,
}

impl GroupColumn {
    pub const ALL: [GroupColumn; 3] = [GroupColumn::Students, GroupColumn::Authors, GroupColumn::Overall];

    pub fn contains(self, group: EvaluatorGroup) -> bool {
        match self {
            GroupColumn::Students => group == EvaluatorGroup::Students,
            GroupColumn::Authors => group == EvaluatorGroup::Authors,
            GroupColumn::Overall => true,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GroupColumn::Students => "Students",
            GroupColumn::Authors => "Authors",
            GroupColumn::Overall => "Overall",
        }
    }
}
