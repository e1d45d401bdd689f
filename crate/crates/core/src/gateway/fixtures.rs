use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::{request_digest, ChatProvider, GatewayError, RawCompletion};
use crate::prompt::{PromptConfig, RoundPrompt};

/// `root/<example_id>` when that directory exists, otherwise `root` itself.
pub fn resolve_fixture_dir(root: &Path, example_id: &str) -> PathBuf {
    let nested = root.join(example_id);
    if !example_id.is_empty() && nested.is_dir() {
        nested
    } else {
        root.to_path_buf()
    }
}

fn read_verbatim(path: &Path) -> Result<Option<String>, GatewayError> {
    match fs::read(path) {
        Ok(bytes) => String::from_utf8(bytes).map(Some).map_err(|e| GatewayError::FixtureIo {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
        Err(e) => Err(GatewayError::FixtureIo {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
    }
}

fn completion(prompt: &RoundPrompt, digest: String, text: String) -> RawCompletion {
    RawCompletion {
        round: prompt.round,
        request_digest: digest,
        response_text: text,
        latency: Duration::ZERO,
        token_counts: None,
    }
}

/// Serves `<digest>.txt` if present, else `round-<r>.txt`.
#[derive(Debug, Clone)]
pub struct MockProvider {
    root: PathBuf,
}

impl MockProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl ChatProvider for MockProvider {
    fn complete(
        &self,
        prompt: &RoundPrompt,
        config: &PromptConfig,
    ) -> Result<RawCompletion, GatewayError> {
        let dir = resolve_fixture_dir(&self.root, &prompt.example_id);
        let digest = request_digest(prompt, config);
        let candidates = [
            dir.join(format!("{digest}.txt")),
            dir.join(format!("round-{}.txt", prompt.round)),
        ];
        for path in &candidates {
            if let Some(text) = read_verbatim(path)? {
                return Ok(completion(prompt, digest, text));
            }
        }
        Err(GatewayError::FixtureMissing {
            example_id: prompt.example_id.clone(),
            round: prompt.round,
            detail: format!("looked for {}", candidates[1].display()),
        })
    }
}

/// Serves responses recorded by a live provider. A `round-<r>.digest`
/// sidecar, when present, must match the request.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    root: PathBuf,
}

impl ReplayProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl ChatProvider for ReplayProvider {
    fn complete(
        &self,
        prompt: &RoundPrompt,
        config: &PromptConfig,
    ) -> Result<RawCompletion, GatewayError> {
        let dir = resolve_fixture_dir(&self.root, &prompt.example_id);
        let digest = request_digest(prompt, config);
        let response_path = dir.join(format!("round-{}.txt", prompt.round));
        let Some(text) = read_verbatim(&response_path)? else {
            return Err(GatewayError::FixtureMissing {
                example_id: prompt.example_id.clone(),
                round: prompt.round,
                detail: format!("no recording at {}", response_path.display()),
            });
        };
        if let Some(recorded) = read_verbatim(&dir.join(format!("round-{}.digest", prompt.round)))? {
            if recorded.trim() != digest {
                return Err(GatewayError::FixtureMissing {
                    example_id: prompt.example_id.clone(),
                    round: prompt.round,
                    detail: "recording was made for a different request".into(),
                });
            }
        }
        Ok(completion(prompt, digest, text))
    }
}

/// Writes a completion in replay layout under `dir`.
pub fn record_completion(dir: &Path, completion: &RawCompletion) -> Result<(), GatewayError> {
    let io = |path: &Path, e: std::io::Error| GatewayError::FixtureIo {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let text_path = dir.join(format!("round-{}.txt", completion.round));
    fs::write(&text_path, completion.response_text.as_bytes()).map_err(|e| io(&text_path, e))?;
    let digest_path = dir.join(format!("round-{}.digest", completion.round));
    fs::write(&digest_path, format!("{}\n", completion.request_digest))
        .map_err(|e| io(&digest_path, e))?;
    Ok(())
}
