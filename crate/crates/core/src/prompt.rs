//! Prompt construction for iterative explanation generation.
//!
//! The default template lives in `templates/explain-v1/` and is compiled
//! in. Three slots can be overridden per request: the system preamble, the
//! output-format contract and the follow-up directive used from round 2 on.
//!
//! Round 1 is `[system, user]`. Round `r` replays every earlier response as
//! an assistant turn, each followed by the follow-up user turn, so the
//! message list for round 3 is
//! `[system, user, assistant(1), user(follow-up), assistant(2), user(follow-up)]`.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::example::WorkedExample;
use crate::transcript::GenerationTranscript;

pub const TEMPLATE_VERSION: &str = "explain-v1";

const PREAMBLE: &str = include_str!("../templates/explain-v1/preamble.txt");
const USER: &str = include_str!("../templates/explain-v1/user.txt");
const DESCRIPTION: &str = include_str!("../templates/explain-v1/description.txt");
const FORMAT_CONTRACT: &str = include_str!("../templates/explain-v1/format-contract.txt");
const NEW_ROUND_DIRECTIVE: &str = include_str!("../templates/explain-v1/new-round-directive.txt");
const FOLLOW_UP: &str = include_str!("../templates/explain-v1/follow-up.txt");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("source must not be empty")]
    EmptySource,
    #[error("round {round} exceeds the configured maximum of {max_rounds}")]
    RoundLimitExceeded { round: u32, max_rounds: u32 },
    #[error("invalid prompt configuration: {0}")]
    InvalidConfig(String),
    #[error("template refers to unknown slot {{{{{0}}}}}")]
    UnknownSlot(String),
}

/// Per-slot replacements for the default template text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TemplateOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preamble: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_contract: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_round_directive: Option<String>,
}

impl TemplateOverrides {
    pub fn is_empty(&self) -> bool {
        self.preamble.is_none() && self.format_contract.is_none() && self.new_round_directive.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_rounds: u32,
    pub include_description: bool,
    pub role_name: String,
    #[serde(skip_serializing_if = "TemplateOverrides::is_empty")]
    pub template_overrides: TemplateOverrides,
}

impl Default for PromptConfig {
    fn default() -> Self {
        default_config()
    }
}

/// gpt-3.5-turbo-16k at temperature 0, two rounds, description included.
pub fn default_config() -> PromptConfig {
    PromptConfig {
        model_id: "gpt-3.5-turbo-16k".to_owned(),
        temperature: 0.0,
        max_rounds: 2,
        include_description: true,
        role_name: "professor".to_owned(),
        template_overrides: TemplateOverrides::default(),
    }
}

impl PromptConfig {
    pub fn check(&self) -> Result<(), PromptError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(PromptError::InvalidConfig(format!(
                "temperature {} is outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_rounds == 0 {
            return Err(PromptError::InvalidConfig("max_rounds must be at least 1".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(PromptError::InvalidConfig("model_id must not be empty".into()));
        }
        Ok(())
    }

    fn preamble(&self) -> &str {
        self.template_overrides.preamble.as_deref().unwrap_or(PREAMBLE)
    }

    fn format_contract(&self) -> &str {
        self.template_overrides
            .format_contract
            .as_deref()
            .unwrap_or(FORMAT_CONTRACT)
    }

    fn new_round_directive(&self) -> &str {
        self.template_overrides
            .new_round_directive
            .as_deref()
            .unwrap_or(NEW_ROUND_DIRECTIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// A fully rendered request for one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPrompt {
    pub example_id: String,
    pub round: u32,
    pub messages: Vec<Message>,
    /// SHA-256 of [`RoundPrompt::render`], hex encoded.
    pub rendered_hash: String,
}

impl RoundPrompt {
    fn new(example_id: &str, round: u32, messages: Vec<Message>) -> Self {
        let mut prompt = Self {
            example_id: example_id.to_owned(),
            round,
            messages,
            rendered_hash: String::new(),
        };
        prompt.rendered_hash = sha256_hex(prompt.render().as_bytes());
        prompt
    }

    /// Canonical text form: one `=== role ===` header per message.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for message in &self.messages {
            out.push_str("=== ");
            out.push_str(&message.role.to_string());
            out.push_str(" ===\n");
            out.push_str(&message.content);
            out.push('\n');
        }
        out
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Prefixes each physical line with `N: `, counting from 1.
pub fn number_lines(source: &str) -> Result<String, PromptError> {
    if source.is_empty() {
        return Err(PromptError::EmptySource);
    }
    Ok(source
        .split('\n')
        .enumerate()
        .map(|(index, line)| format!("{}: {}", index + 1, line))
        .collect::<Vec<_>>()
        .join("\n"))
}

pub fn build_round_prompt(
    example: &WorkedExample,
    config: &PromptConfig,
    transcript: &GenerationTranscript,
) -> Result<RoundPrompt, PromptError> {
    config.check()?;
    let round = transcript.rounds.len() as u32 + 1;
    if round > config.max_rounds {
        return Err(PromptError::RoundLimitExceeded {
            round,
            max_rounds: config.max_rounds,
        });
    }
    let source = example.source();
    if source.trim().is_empty() {
        return Err(PromptError::EmptySource);
    }
    let numbered = number_lines(&source)?;

    let system = render_slots(config.preamble(), &[("role_name", &config.role_name)])?;

    let description_block = if config.include_description && !example.description.trim().is_empty() {
        render_slots(DESCRIPTION, &[("description_text", example.description.trim_end())])?
    } else {
        String::new()
    };
    let format_contract = config.format_contract().trim_end();
    let user = render_slots(
        USER,
        &[
            ("description", &description_block),
            ("numbered_code", &numbered),
            ("format_contract", format_contract),
        ],
    )?;

    let mut messages = vec![
        Message::new(Role::System, system.trim_end()),
        Message::new(Role::User, user.trim_end()),
    ];
    if round > 1 {
        let follow_up = render_slots(
            FOLLOW_UP,
            &[
                ("new_round_directive", config.new_round_directive().trim_end()),
                ("format_contract", format_contract),
            ],
        )?;
        for previous in &transcript.rounds {
            messages.push(Message::new(
                Role::Assistant,
                previous.completion.response_text.clone(),
            ));
            messages.push(Message::new(Role::User, follow_up.trim_end()));
        }
    }
    Ok(RoundPrompt::new(&example.id, round, messages))
}

/// Single-pass `{{name}}` substitution; inserted values are not rescanned.
fn render_slots(template: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = after[..end].trim();
        let value = values
            .iter()
            .find(|(slot, _)| *slot == name)
            .map(|(_, value)| *value)
            .ok_or_else(|| PromptError::UnknownSlot(name.to_owned()))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// The compiled-in template text for each overridable slot.
pub fn default_slot_text() -> TemplateOverrides {
    TemplateOverrides {
        preamble: Some(PREAMBLE.trim_end().to_owned()),
        format_contract: Some(FORMAT_CONTRACT.trim_end().to_owned()),
        new_round_directive: Some(NEW_ROUND_DIRECTIVE.trim_end().to_owned()),
    }
}
