//! Generation rounds and the accept step that turns a staged transcript
//! into explanations on the example.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{merge_rounds, round_similarity, AnalysisError, MergePolicy};
use crate::example::{ModelError, Origin, WorkedExample};
use crate::gateway::{
    parse_line_explanations, ChatProvider, DropReason, DroppedFragment, GatewayError, ParsedRound,
};
use crate::prompt::{build_round_prompt, PromptConfig, PromptError};
use crate::transcript::{GenerationTranscript, TranscriptRound};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("transcript belongs to example {found:?}, not {expected:?}")]
    TranscriptMismatch { expected: String, found: String },
}

/// A follow-up round that answers in prose ("nothing new to add") is an
/// empty round, not a failure.
fn lenient_parse(round: &crate::gateway::RawCompletion, line_count: u32) -> Result<ParsedRound, GatewayError> {
    match parse_line_explanations(round, line_count) {
        Err(GatewayError::UnparseableResponse { .. }) if round.round > 1 => {
            let mut parsed = ParsedRound::empty(round.round, line_count);
            parsed.dropped = round
                .response_text
                .split('\n')
                .filter(|line| !line.trim().is_empty())
                .map(|line| DroppedFragment {
                    fragment: line.to_owned(),
                    reason: DropReason::Unnumbered,
                })
                .collect();
            Ok(parsed)
        }
        other => other,
    }
}

/// Runs rounds `1..=config.max_rounds`, stopping early once a round is
/// saturated (similarity to the previous round at or above
/// `policy.saturation_threshold`, or no output at all). `on_round` is
/// called after each completed round.
pub fn run_generation(
    example: &WorkedExample,
    config: &PromptConfig,
    provider: &dyn ChatProvider,
    policy: &MergePolicy,
    mut on_round: impl FnMut(&GenerationTranscript),
) -> Result<GenerationTranscript, PipelineError> {
    config.check()?;
    policy.check()?;
    let mut transcript = GenerationTranscript::new(&example.id);
    for _ in 0..config.max_rounds {
        let prompt = build_round_prompt(example, config, &transcript)?;
        let completion = provider.complete(&prompt, config)?;
        let parsed = lenient_parse(&completion, example.line_count())?;
        transcript.rounds.push(TranscriptRound {
            prompt_hash: prompt.rendered_hash,
            completion,
            parsed,
        });
        let report = round_similarity(&example.id, &transcript.parsed_rounds());
        transcript.similarity = Some(report.clone());
        on_round(&transcript);
        let saturated = report
            .latest()
            .is_some_and(|latest| latest.score.is_none_or(|s| s >= policy.saturation_threshold));
        if saturated {
            break;
        }
    }
    Ok(transcript)
}

/// Author decision for one line of a staged transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineDecision {
    pub include: bool,
    /// Replacement text keyed by the level number the merge produces.
    pub edits: BTreeMap<u32, String>,
}

impl Default for LineDecision {
    fn default() -> Self {
        Self {
            include: true,
            edits: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Selections {
    /// Applies to lines without an explicit decision.
    pub include_by_default: bool,
    pub lines: BTreeMap<u32, LineDecision>,
}

impl Default for Selections {
    fn default() -> Self {
        Self::accept_all()
    }
}

impl Selections {
    pub fn accept_all() -> Self {
        Self {
            include_by_default: true,
            lines: BTreeMap::new(),
        }
    }

    pub fn exclude(mut self, line: u32) -> Self {
        self.lines.entry(line).or_default().include = false;
        self
    }

    pub fn edit(mut self, line: u32, level: u32, text: impl Into<String>) -> Self {
        self.lines.entry(line).or_default().edits.insert(level, text.into());
        self
    }

    pub fn includes(&self, line: u32) -> bool {
        self.lines
            .get(&line)
            .map_or(self.include_by_default, |decision| decision.include)
    }
}

/// Merges the included lines of `transcript` into `example`, then applies
/// edits (which turn the edited level's origin into `Edited`).
pub fn accept_staged(
    example: &WorkedExample,
    transcript: &GenerationTranscript,
    selections: &Selections,
    policy: &MergePolicy,
    now: DateTime<Utc>,
) -> Result<WorkedExample, PipelineError> {
    if transcript.example_id != example.id {
        return Err(PipelineError::TranscriptMismatch {
            expected: example.id.clone(),
            found: transcript.example_id.clone(),
        });
    }
    for line in selections.lines.keys() {
        example.line(*line)?;
    }
    let rounds: Vec<ParsedRound> = transcript
        .rounds
        .iter()
        .map(|round| {
            let mut parsed = round.parsed.clone();
            parsed.by_line.retain(|line, _| selections.includes(*line));
            parsed
        })
        .collect();
    let mut merged = merge_rounds(example, &rounds, policy, now)?;
    for (line, decision) in &selections.lines {
        if !decision.include {
            continue;
        }
        for (level, text) in &decision.edits {
            merged.edit_explanation(*line, *level, text, now)?;
        }
    }
    Ok(merged)
}

/// What accepting everything would add, per line, without touching the example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedExplanation {
    pub line: u32,
    pub level: u32,
    pub text: String,
    pub source_round: Option<u32>,
}

pub fn staged_explanations(
    example: &WorkedExample,
    transcript: &GenerationTranscript,
    policy: &MergePolicy,
) -> Result<Vec<StagedExplanation>, PipelineError> {
    let merged = merge_rounds(example, &transcript.parsed_rounds(), policy, example.updated_at)?;
    let mut staged = Vec::new();
    for (before, after) in example.lines.iter().zip(&merged.lines) {
        for level in after.explanations.iter().skip(before.explanations.len()) {
            debug_assert_eq!(level.origin, Origin::Generated);
            staged.push(StagedExplanation {
                line: after.number,
                level: level.level,
                text: level.text.clone(),
                source_round: level.source_round,
            });
        }
    }
    Ok(staged)
}
