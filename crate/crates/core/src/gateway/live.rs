use std::time::Instant;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{record_completion, request_digest, resolve_fixture_dir};
use super::{ChatProvider, GatewayError, ProviderSpec, RawCompletion, TokenCounts};
use crate::prompt::{PromptConfig, RoundPrompt};

/// Wire payload for an OpenAI-style `/chat/completions` call.
pub fn chat_request_body(prompt: &RoundPrompt, config: &PromptConfig) -> Value {
    let messages: Vec<Value> = prompt
        .messages
        .iter()
        .map(|m| json!({ "role": m.role, "content": m.content }))
        .collect();
    json!({
        "model": config.model_id,
        "messages": messages,
        "temperature": config.temperature,
        "n": 1,
    })
}

pub struct LiveProvider {
    spec: ProviderSpec,
    client: Client,
}

enum Attempt {
    Done(RawCompletion),
    Retry(GatewayError),
}

impl LiveProvider {
    pub fn new(spec: ProviderSpec) -> Result<Self, GatewayError> {
        spec.check()?;
        let client = Client::builder()
            .timeout(spec.timeout())
            .build()
            .map_err(|e| GatewayError::InvalidSpec(e.to_string()))?;
        Ok(Self { spec, client })
    }

    fn url(&self) -> String {
        let base = self.spec.endpoint.as_deref().unwrap_or_default();
        format!("{}/chat/completions", base.trim_end_matches('/'))
    }

    fn credential(&self) -> Result<String, GatewayError> {
        let name = self.spec.credential_env.as_deref().unwrap_or_default();
        match std::env::var(name) {
            Ok(value) if !value.trim().is_empty() => Ok(value),
            _ => Err(GatewayError::AuthFailed(format!(
                "environment variable {name} is not set"
            ))),
        }
    }

    fn attempt(
        &self,
        prompt: &RoundPrompt,
        body: &Value,
        key: &str,
        digest: &str,
        attempts: u32,
    ) -> Result<Attempt, GatewayError> {
        let started = Instant::now();
        let response = match self.client.post(self.url()).bearer_auth(key).json(body).send() {
            Ok(response) => response,
            Err(e) => {
                return Ok(Attempt::Retry(GatewayError::ProviderUnreachable {
                    attempts,
                    message: e.to_string(),
                }))
            }
        };
        let status = response.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Ok(Attempt::Retry(GatewayError::RateLimited { attempts }));
        }
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            let text = response.text().unwrap_or_default();
            return Err(GatewayError::AuthFailed(format!("HTTP {}: {}", status.as_u16(), text)));
        }
        let text = match response.text() {
            Ok(text) => text,
            Err(e) => {
                return Ok(Attempt::Retry(GatewayError::ProviderUnreachable {
                    attempts,
                    message: e.to_string(),
                }))
            }
        };
        if !status.is_success() {
            return Err(GatewayError::HttpStatus {
                status: status.as_u16(),
                body: text,
            });
        }
        let latency = started.elapsed();
        let value: Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::BadResponse("missing choices[0].message.content".into()))?;
        let token_counts = match (
            value.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
            value.pointer("/usage/completion_tokens").and_then(Value::as_u64),
        ) {
            (Some(prompt), Some(completion)) => Some(TokenCounts {
                prompt: prompt as u32,
                completion: completion as u32,
            }),
            _ => None,
        };
        Ok(Attempt::Done(RawCompletion {
            round: prompt.round,
            request_digest: digest.to_owned(),
            response_text: content.to_owned(),
            latency,
            token_counts,
        }))
    }
}

impl ChatProvider for LiveProvider {
    fn complete(
        &self,
        prompt: &RoundPrompt,
        config: &PromptConfig,
    ) -> Result<RawCompletion, GatewayError> {
        let key = self.credential()?;
        let body = chat_request_body(prompt, config);
        let digest = request_digest(prompt, config);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(prompt, &body, &key, &digest, attempts)? {
                Attempt::Done(completion) => {
                    if let Some(root) = &self.spec.fixture_path {
                        let dir = resolve_fixture_dir(root, &prompt.example_id);
                        record_completion(&dir, &completion)?;
                    }
                    return Ok(completion);
                }
                Attempt::Retry(error) if attempts >= self.spec.retry.max_attempts => {
                    return Err(error)
                }
                Attempt::Retry(_) => {
                    std::thread::sleep(self.spec.retry.delay_before_retry(attempts - 1));
                }
            }
        }
    }
}
