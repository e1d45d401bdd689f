use serde::{Deserialize, Serialize};

use crate::analysis::SimilarityReport;
use crate::gateway::{ParsedRound, RawCompletion};

/// Everything produced while generating explanations for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTranscript {
    pub example_id: String,
    pub rounds: Vec<TranscriptRound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRound {
    pub prompt_hash: String,
    pub completion: RawCompletion,
    pub parsed: ParsedRound,
}

impl GenerationTranscript {
    pub fn new(example_id: impl Into<String>) -> Self {
        Self {
            example_id: example_id.into(),
            rounds: Vec::new(),
            similarity: None,
        }
    }

    pub fn parsed_rounds(&self) -> Vec<ParsedRound> {
        self.rounds.iter().map(|round| round.parsed.clone()).collect()
    }
}
