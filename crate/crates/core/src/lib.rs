//! Worked-example authoring toolkit.
//!
//! An author supplies Java code and a problem statement; an LLM proposes
//! line-by-line explanations over one or more rounds; the author reviews,
//! edits and accepts them. The [`eval`] module prepares blind comparison
//! studies and analyzes the collected ratings.

pub mod analysis;
pub mod eval;
pub mod example;
pub mod gateway;
pub mod interchange;
pub mod pipeline;
pub mod prompt;
pub mod transcript;

pub use analysis::{
    cosine_similarity, flag_structural_lines, merge_rounds, round_similarity, MergePolicy,
    SimilarityReport,
};
pub use example::{ChallengeSpec, CodeLine, ExplanationLevel, ModelError, Origin, Violation, WorkedExample};
pub use gateway::{
    complete, parse_line_explanations, ChatProvider, GatewayError, ParsedRound, ProviderKind,
    ProviderSpec, RawCompletion,
};
pub use interchange::{
    export_pcex, export_portable, import_line_explanations, import_portable, import_source, InterchangeError,
};
pub use pipeline::{accept_staged, run_generation, PipelineError, Selections};
pub use prompt::{build_round_prompt, default_config, number_lines, PromptConfig, RoundPrompt};
pub use transcript::{GenerationTranscript, TranscriptRound};
