use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use weat_core::ProviderKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    RoundRunning,
    AwaitingReview,
    Complete,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Complete | JobStatus::Failed)
    }

    /// A provider call may be in flight.
    pub fn is_running(self) -> bool {
        matches!(self, JobStatus::Pending | JobStatus::RoundRunning)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub example_id: String,
    pub status: JobStatus,
    pub rounds_done: u32,
    pub max_rounds: u32,
    pub provider: ProviderKind,
    /// File name of the transcript inside the example directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Lines the author left out when accepting. The transcript keeps their text.
    #[serde(default)]
    pub excluded_lines: Vec<u32>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl GenerationJob {
    pub fn new(example_id: &str, provider: ProviderKind, max_rounds: u32, now: DateTime<Utc>) -> Self {
        Self {
            example_id: example_id.to_owned(),
            status: JobStatus::Pending,
            rounds_done: 0,
            max_rounds,
            provider,
            transcript_ref: None,
            error: None,
            excluded_lines: Vec::new(),
            created_at: now,
            updated_at: now,
        }
    }

    pub fn fail(&mut self, message: impl Into<String>, now: DateTime<Utc>) {
        self.status = JobStatus::Failed;
        self.error = Some(message.into());
        self.updated_at = now;
    }
}
