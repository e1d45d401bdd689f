//! Chat-completion backends.
//!
//! Three provider kinds share one contract: `live` talks to an
//! OpenAI-compatible HTTP endpoint, `mock` serves canned fixture files and
//! `replay` serves responses previously recorded by `live`.
//!
//! Fixture layout is one directory per example holding `round-<r>.txt`
//! files with the verbatim response text. Live calls write the same layout
//! (plus a `round-<r>.digest` sidecar) into `fixture_path` when it is set.

mod fixtures;
mod live;
mod parse;

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{sha256_hex, PromptConfig, RoundPrompt};

pub use fixtures::{record_completion, resolve_fixture_dir, MockProvider, ReplayProvider};
pub use live::{chat_request_body, LiveProvider};
pub use parse::{parse_line_explanations, DropReason, DroppedFragment, ParsedRound};

pub const DEFAULT_CREDENTIAL_ENV: &str = "WEAT_LLM_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("provider unreachable after {attempts} attempt(s): {message}")]
    ProviderUnreachable { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("provider returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("no fixture for example {example_id:?} round {round} ({detail})")]
    FixtureMissing {
        example_id: String,
        round: u32,
        detail: String,
    },
    #[error("fixture I/O failed for {path}: {message}")]
    FixtureIo { path: PathBuf, message: String },
    #[error("invalid provider spec: {0}")]
    InvalidSpec(String),
    #[error("round {round}: no numbered explanations found in response starting {excerpt:?}")]
    UnparseableResponse { round: u32, excerpt: String },
}

impl GatewayError {
    /// Transport and rate-limit failures are worth retrying.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            GatewayError::ProviderUnreachable { .. } | GatewayError::RateLimited { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Live,
    Mock,
    Replay,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(ProviderKind::Live),
            "mock" => Ok(ProviderKind::Mock),
            "replay" => Ok(ProviderKind::Replay),
            other => Err(format!("unknown provider kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before retry `i` is `backoff_ms[min(i, len - 1)]`.
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_ms: vec![1000, 2000, 4000],
        }
    }
}

impl RetryPolicy {
    pub fn delay_before_retry(&self, retry: u32) -> Duration {
        let index = (retry as usize).min(self.backoff_ms.len().saturating_sub(1));
        Duration::from_millis(self.backoff_ms.get(index).copied().unwrap_or(0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer credential.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub credential_env: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
}

impl Default for ProviderSpec {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            credential_env: None,
            fixture_path: None,
            timeout_ms: 60_000,
            retry: RetryPolicy::default(),
        }
    }
}

impl ProviderSpec {
    pub fn mock(fixture_path: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Mock,
            fixture_path: Some(fixture_path.into()),
            ..Self::default()
        }
    }

    pub fn replay(fixture_path: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Replay,
            fixture_path: Some(fixture_path.into()),
            ..Self::default()
        }
    }

    pub fn live(endpoint: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::Live,
            endpoint: Some(endpoint.into()),
            credential_env: Some(DEFAULT_CREDENTIAL_ENV.to_owned()),
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        match self.kind {
            ProviderKind::Live => {
                if self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                    return Err(GatewayError::InvalidSpec("live provider needs an endpoint".into()));
                }
                if self
                    .credential_env
                    .as_deref()
                    .is_none_or(|c| c.trim().is_empty())
                {
                    return Err(GatewayError::InvalidSpec(
                        "live provider needs a credential reference".into(),
                    ));
                }
            }
            ProviderKind::Mock | ProviderKind::Replay => {
                if self.fixture_path.is_none() {
                    return Err(GatewayError::InvalidSpec(format!(
                        "{:?} provider needs a fixture_path",
                        self.kind
                    )));
                }
            }
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::InvalidSpec("retry.max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Builds the backend this spec describes.
    pub fn connect(&self) -> Result<Box<dyn ChatProvider>, GatewayError> {
        self.check()?;
        Ok(match self.kind {
            ProviderKind::Live => Box::new(LiveProvider::new(self.clone())?),
            ProviderKind::Mock => Box::new(MockProvider::new(fixture_root(self))),
            ProviderKind::Replay => Box::new(ReplayProvider::new(fixture_root(self))),
        })
    }
}

fn fixture_root(spec: &ProviderSpec) -> &Path {
    spec.fixture_path.as_deref().expect("checked by ProviderSpec::check")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u32,
    pub completion: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCompletion {
    pub round: u32,
    pub request_digest: String,
    /// Verbatim response text.
    pub response_text: String,
    pub latency: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_counts: Option<TokenCounts>,
}

/// A chat-completion backend. Implementations must be usable from several
/// threads at once for distinct examples.
pub trait ChatProvider: Send + Sync {
    fn complete(
        &self,
        prompt: &RoundPrompt,
        config: &PromptConfig,
    ) -> Result<RawCompletion, GatewayError>;
}

/// Digest of the exact wire payload (model, temperature, messages).
pub fn request_digest(prompt: &RoundPrompt, config: &PromptConfig) -> String {
    let body = chat_request_body(prompt, config);
    sha256_hex(body.to_string().as_bytes())
}

/// One completion for `prompt` through the provider described by `spec`.
pub fn complete(
    prompt: &RoundPrompt,
    spec: &ProviderSpec,
    config: &PromptConfig,
) -> Result<RawCompletion, GatewayError> {
    spec.connect()?.complete(prompt, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_checks() {
        assert!(ProviderSpec::mock("x").check().is_ok());
        assert!(ProviderSpec::live("http://localhost:1").check().is_ok());
        let mut spec = ProviderSpec::live("http://localhost:1");
        spec.credential_env = None;
        assert!(matches!(spec.check(), Err(GatewayError::InvalidSpec(_))));
        let spec = ProviderSpec {
            kind: ProviderKind::Replay,
            ..ProviderSpec::default()
        };
        assert!(matches!(spec.check(), Err(GatewayError::InvalidSpec(_))));
        let spec = ProviderSpec {
            kind: ProviderKind::Live,
            ..ProviderSpec::default()
        };
        assert!(matches!(spec.check(), Err(GatewayError::InvalidSpec(_))));
    }

    #[test]
    fn backoff_schedule() {
        let policy = RetryPolicy::default();
        assert_eq!(policy.delay_before_retry(0), Duration::from_secs(1));
        assert_eq!(policy.delay_before_retry(1), Duration::from_secs(2));
        assert_eq!(policy.delay_before_retry(2), Duration::from_secs(4));
        assert_eq!(policy.delay_before_retry(7), Duration::from_secs(4));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("replay".parse::<ProviderKind>(), Ok(ProviderKind::Replay));
        assert!("other".parse::<ProviderKind>().is_err());
    }
}
