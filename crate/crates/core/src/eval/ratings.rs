use serde::{Deserialize, Serialize};

use super::sheets::AnswerKey;
use super::{EvalError, EvaluatorGroup, Source};

/// Slot-level answer to "Which explanation is better?".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotPreference {
    Same,
    First,
    Second,
}

/// Source-level preference after un-blinding. Codes follow the report
/// tables: 0 same, 1 expert better, 2 generated better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourcePreference {
    Same,
    ExpertBetter,
    GeneratedBetter,
}

impl SlotPreference {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SlotPreference::Same),
            1 => Some(SlotPreference::First),
            2 => Some(SlotPreference::Second),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            SlotPreference::Same => 0,
            SlotPreference::First => 1,
            SlotPreference::Second => 2,
        }
    }

    pub fn to_source(self, slot_a_source: Source) -> SourcePreference {
        let winner = match self {
            SlotPreference::Same => return SourcePreference::Same,
            SlotPreference::First => slot_a_source,
            SlotPreference::Second => slot_a_source.other(),
        };
        match winner {
            Source::Generated => SourcePreference::GeneratedBetter,
            Source::Expert => SourcePreference::ExpertBetter,
        }
    }
}

impl SourcePreference {
    pub const ALL: [SourcePreference; 3] = [
        SourcePreference::Same,
        SourcePreference::ExpertBetter,
        SourcePreference::GeneratedBetter,
    ];

    pub fn code(self) -> u8 {
        match self {
            SourcePreference::Same => 0,
            SourcePreference::ExpertBetter => 1,
            SourcePreference::GeneratedBetter => 2,
        }
    }

    pub fn to_slot(self, slot_a_source: Source) -> SlotPreference {
        let winner = match self {
            SourcePreference::Same => return SlotPreference::Same,
            SourcePreference::ExpertBetter => Source::Expert,
            SourcePreference::GeneratedBetter => Source::Generated,
        };
        if winner == slot_a_source {
            SlotPreference::First
        } else {
            SlotPreference::Second
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SourcePreference::Same => "Both are the same = 0",
            SourcePreference::ExpertBetter => "Expert is better = 1",
            SourcePreference::GeneratedBetter => "Generated is better = 2",
        }
    }
}

/// One evaluator's answers for one line, as collected (still blinded).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub evaluator_id: String,
    #[serde(rename = "group")]
    pub evaluator_group: EvaluatorGroup,
    pub example_id: String,
    #[serde(rename = "line")]
    pub line_number: u32,
    pub completeness_a: u8,
    pub completeness_b: u8,
    pub preference: u8,
}

impl RatingRecord {
    fn check(&self, row: usize) -> Result<(), EvalError> {
        for (name, value) in [
            ("completeness_a", self.completeness_a),
            ("completeness_b", self.completeness_b),
            ("preference", self.preference),
        ] {
            if value > 2 {
                return Err(EvalError::InvalidRating {
                    row,
                    message: format!("{name} must be 0, 1 or 2, got {value}"),
                });
            }
        }
        Ok(())
    }

    pub fn slot_preference(&self) -> SlotPreference {
        SlotPreference::from_code(self.preference).expect("validated on ingest")
    }
}

/// Reads the ratings CSV. All rows parse or the whole file is rejected.
pub fn read_ratings_csv(text: &str) -> Result<Vec<RatingRecord>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (index, row) in reader.deserialize::<RatingRecord>().enumerate() {
        let row_number = index + 2;
        let record = row.map_err(|e| EvalError::InvalidRating {
            row: row_number,
            message: e.to_string(),
        })?;
        record.check(row_number)?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnblindedRating {
    pub evaluator_id: String,
    pub group: EvaluatorGroup,
    pub example_id: String,
    pub line: u32,
    pub generated_completeness: u8,
    pub expert_completeness: u8,
    pub preference: SourcePreference,
}

impl UnblindedRating {
    pub fn completeness(&self, source: Source) -> u8 {
        match source {
            Source::Generated => self.generated_completeness,
            Source::Expert => self.expert_completeness,
        }
    }
}

pub fn unblind(rating: &RatingRecord, key: &AnswerKey) -> Result<UnblindedRating, EvalError> {
    let slot_a = key
        .slot_a_source(&rating.evaluator_id, &rating.example_id, rating.line_number)
        .ok_or_else(|| EvalError::OrphanRating {
            evaluator_id: rating.evaluator_id.clone(),
            example_id: rating.example_id.clone(),
            line: rating.line_number,
        })?;
    let (generated, expert) = match slot_a {
        Source::Generated => (rating.completeness_a, rating.completeness_b),
        Source::Expert => (rating.completeness_b, rating.completeness_a),
    };
    Ok(UnblindedRating {
        evaluator_id: rating.evaluator_id.clone(),
        group: rating.evaluator_group,
        example_id: rating.example_id.clone(),
        line: rating.line_number,
        generated_completeness: generated,
        expert_completeness: expert,
        preference: rating.slot_preference().to_source(slot_a),
    })
}
