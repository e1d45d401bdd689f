//! Document formats.
//!
//! `*.weat.json` is the portable format: every field of a
//! [`WorkedExample`] including provenance and unknown extension fields,
//! plus `schema_version`. `*.pcex.json` is a PCEX-style content model
//! (title, description, code lines with leveled explanations, inline
//! challenge distractors) without toolkit-internal fields.
//!
//! Both are UTF-8, LF, two-space indented JSON with a trailing newline and
//! fixed key order, so identical inputs produce identical bytes.

use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::analysis::flag_structural_lines;
use crate::example::{ModelError, Origin, Violation, WorkedExample};
use crate::gateway::{parse_line_explanations, GatewayError, RawCompletion};

pub const PORTABLE_SCHEMA_VERSION: &str = "1";
pub const PCEX_FORMAT: &str = "pcex-style";
pub const PCEX_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterchangeError {
    #[error("example is invalid: {}", join_violations(.0))]
    InvalidExample(Vec<Violation>),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unsupported schema_version {0:?}")]
    UnsupportedVersion(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Serialize)]
struct PortableDocument<'a> {
    schema_version: &'static str,
    #[serde(flatten)]
    example: &'a WorkedExample,
}

fn to_document<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("documents always serialize");
    text.push('\n');
    text
}

fn ensure_valid(example: &WorkedExample) -> Result<(), InterchangeError> {
    let violations = example.validate();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(InterchangeError::InvalidExample(violations))
    }
}

pub fn export_portable(example: &WorkedExample) -> Result<String, InterchangeError> {
    ensure_valid(example)?;
    Ok(to_document(&PortableDocument {
        schema_version: PORTABLE_SCHEMA_VERSION,
        example,
    }))
}

pub fn import_portable(document: &str) -> Result<WorkedExample, InterchangeError> {
    let mut value: Value = serde_json::from_str(document)
        .map_err(|e| InterchangeError::SchemaViolation(format!("not a JSON document: {e}")))?;
    let object = value
        .as_object_mut()
        .ok_or_else(|| InterchangeError::SchemaViolation("document must be a JSON object".into()))?;
    let version = match object.remove("schema_version") {
        Some(Value::String(v)) => v,
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => {
            return Err(InterchangeError::SchemaViolation("schema_version must be a string".into()))
        }
        None => return Err(InterchangeError::SchemaViolation("missing schema_version".into())),
    };
    if version != PORTABLE_SCHEMA_VERSION {
        return Err(InterchangeError::UnsupportedVersion(version));
    }
    let example: WorkedExample = serde_json::from_value(value)
        .map_err(|e| InterchangeError::SchemaViolation(e.to_string()))?;
    let violations = example.validate();
    if !violations.is_empty() {
        return Err(InterchangeError::SchemaViolation(join_violations(&violations)));
    }
    Ok(example)
}

/// Creates an example from raw source text and flags its structural lines.
pub fn import_source(
    title: &str,
    description: &str,
    source: &str,
    language_tag: &str,
    now: DateTime<Utc>,
) -> Result<WorkedExample, InterchangeError> {
    let mut example = WorkedExample::create(title, description, source, language_tag, now)?;
    flag_structural_lines(&mut example);
    Ok(example)
}

/// Attaches explanations written as `N: text` records (the same format the
/// model is asked to produce) as new levels with the given origin. Returns
/// the number of explanations attached. Nothing is attached on error.
pub fn import_line_explanations(
    example: &mut WorkedExample,
    text: &str,
    origin: Origin,
    now: DateTime<Utc>,
) -> Result<usize, InterchangeError> {
    let raw = RawCompletion {
        round: 1,
        request_digest: String::new(),
        response_text: text.to_owned(),
        latency: Duration::ZERO,
        token_counts: None,
    };
    let parsed = match parse_line_explanations(&raw, example.line_count()) {
        Ok(parsed) => parsed,
        Err(GatewayError::UnparseableResponse { .. }) => {
            return Err(InterchangeError::SchemaViolation("no `N: text` records found".into()))
        }
        Err(e) => return Err(InterchangeError::SchemaViolation(e.to_string())),
    };
    if let Some(dropped) = parsed.dropped.iter().find(|d| !d.fragment.trim().is_empty()) {
        return Err(InterchangeError::SchemaViolation(format!(
            "cannot use {:?}: {}",
            dropped.fragment, dropped.reason
        )));
    }
    let source_round = (origin != Origin::HumanAuthored).then_some(1);
    let mut updated = example.clone();
    for (line, explanation) in &parsed.by_line {
        updated.attach_explanation(*line, explanation, origin, source_round, now)?;
    }
    *example = updated;
    Ok(parsed.by_line.len())
}

#[derive(Serialize)]
struct PcexDocument<'a> {
    format: &'static str,
    format_version: &'static str,
    title: &'a str,
    description: &'a str,
    language: &'a str,
    lines: Vec<PcexLine<'a>>,
}

#[derive(Serialize)]
struct PcexLine<'a> {
    number: u32,
    code: &'a str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    explanations: Vec<PcexExplanation<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    challenge: Option<PcexChallenge<'a>>,
}

#[derive(Serialize)]
struct PcexExplanation<'a> {
    level: u32,
    text: &'a str,
}

#[derive(Serialize)]
struct PcexChallenge<'a> {
    distractors: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    hint: Option<&'a str>,
}

pub fn export_pcex(example: &WorkedExample) -> Result<String, InterchangeError> {
    ensure_valid(example)?;
    let lines = example
        .lines
        .iter()
        .map(|line| PcexLine {
            number: line.number,
            code: &line.text,
            explanations: line
                .explanations
                .iter()
                .map(|level| PcexExplanation {
                    level: level.level,
                    text: &level.text,
                })
                .collect(),
            challenge: line.challenge.as_ref().map(|challenge| PcexChallenge {
                distractors: &challenge.distractors,
                hint: challenge.prompt_hint.as_deref(),
            }),
        })
        .collect();
    Ok(to_document(&PcexDocument {
        format: PCEX_FORMAT,
        format_version: PCEX_FORMAT_VERSION,
        title: &example.title,
        description: &example.description,
        language: &example.language_tag,
        lines,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::Origin;
    use chrono::{TimeZone, Utc};

    fn sample() -> WorkedExample {
        let t = Utc.with_ymd_and_hms(2024, 3, 1, 12, 0, 0).unwrap();
        let mut example = WorkedExample::create(
            "Loop",
            "Counts to three.",
            "int i = 0;\nwhile (i < 3) {\n\ti += 1;\n}",
            "java",
            t,
        )
        .unwrap()
        .with_id("loop");
        example
            .attach_explanation(1, "Starts the counter at zero.", Origin::Generated, Some(1), t)
            .unwrap();
        example
            .attach_explanation(1, "An int holds whole numbers.", Origin::Generated, Some(2), t)
            .unwrap();
        example.edit_explanation(1, 2, "An int holds \"whole\" numbers.", t).unwrap();
        example
            .mark_challenge(3, &["i++;".into(), "i -= 1;".into()], Some("Advance i".into()), t)
            .unwrap();
        example.lines[3].structural = true;
        example
    }

    #[test]
    fn portable_round_trip_and_stability() {
        let example = sample();
        let first = export_portable(&example).unwrap();
        let second = export_portable(&example).unwrap();
        assert_eq!(first, second);
        assert!(first.ends_with("}\n"));
        assert!(first.starts_with("{\n  \"schema_version\": \"1\",\n  \"id\": \"loop\","));
        assert!(first.contains("\"i -= 1;\""));
        let back = import_portable(&first).unwrap();
        assert_eq!(back, example);
        assert_eq!(export_portable(&back).unwrap(), first);
        assert!(back.validate().is_empty());
    }

    #[test]
    fn unknown_fields_survive() {
        let document = export_portable(&sample()).unwrap();
        let mut value: Value = serde_json::from_str(&document).unwrap();
        value["x_future"] = serde_json::json!({"a": [1, 2]});
        value["lines"][0]["x_line_note"] = Value::String("kept".into());
        let imported = import_portable(&serde_json::to_string(&value).unwrap()).unwrap();
        let again = export_portable(&imported).unwrap();
        assert!(again.contains("\"x_future\""));
        assert!(again.contains("\"x_line_note\": \"kept\""));
    }

    #[test]
    fn import_errors() {
        let document = export_portable(&sample()).unwrap();
        let truncated = &document[..document.len() / 2];
        assert!(matches!(
            import_portable(truncated),
            Err(InterchangeError::SchemaViolation(_))
        ));
        let future = document.replace("\"schema_version\": \"1\"", "\"schema_version\": \"99\"");
        assert_eq!(
            import_portable(&future),
            Err(InterchangeError::UnsupportedVersion("99".into()))
        );
        let no_title = document.replace("\"title\": \"Loop\",", "");
        assert!(matches!(
            import_portable(&no_title),
            Err(InterchangeError::SchemaViolation(_))
        ));
        let renumbered = document.replace("\"number\": 2,", "\"number\": 7,");
        assert!(matches!(
            import_portable(&renumbered),
            Err(InterchangeError::SchemaViolation(_))
        ));
        let no_version = document.replace("\"schema_version\": \"1\",", "");
        assert!(matches!(
            import_portable(&no_version),
            Err(InterchangeError::SchemaViolation(_))
        ));
    }

    #[test]
    fn invalid_examples_are_not_exported() {
        let mut example = sample();
        example.lines[2].challenge.as_mut().unwrap().distractors.clear();
        assert!(matches!(
            export_portable(&example),
            Err(InterchangeError::InvalidExample(_))
        ));
        assert!(matches!(export_pcex(&example), Err(InterchangeError::InvalidExample(_))));
    }

    #[test]
    fn pcex_shape() {
        let document = export_pcex(&sample()).unwrap();
        let value: Value = serde_json::from_str(&document).unwrap();
        assert_eq!(value["format"], "pcex-style");
        let levels = value["lines"][0]["explanations"].as_array().unwrap();
        assert_eq!(levels.len(), 2);
        assert_eq!(levels[0]["text"], "Starts the counter at zero.");
        assert_eq!(levels[1]["level"], 2);
        assert_eq!(value["lines"][2]["challenge"]["distractors"][0], "i++;");
        assert_eq!(value["lines"][2]["code"], "\ti += 1;");
        for internal in ["structural", "origin", "source_round", "created_at", "\"id\""] {
            assert!(!document.contains(internal), "{internal} leaked into PCEX export");
        }
        assert_eq!(document, export_pcex(&sample()).unwrap());
    }

    #[test]
    fn pcex_without_challenges_has_no_challenge_key() {
        let mut example = sample();
        example.lines[2].challenge = None;
        let document = export_pcex(&example).unwrap();
        assert!(!document.contains("challenge"));
    }

    #[test]
    fn raw_source_import_flags_structure() {
        let t = Utc.with_ymd_and_hms(2024, 3, 1, 12, 0, 0).unwrap();
        let example = import_source("A", "", "class A {\n    int x = 1;\n}\n", "java", t).unwrap();
        assert_eq!(example.line_count(), 3);
        let flags: Vec<bool> = example.lines.iter().map(|l| l.structural).collect();
        assert_eq!(flags, [true, false, true]);
        assert!(matches!(import_source("", "", "x", "java", t), Err(InterchangeError::Model(_))));
    }

    #[test]
    fn line_explanation_import() {
        let t = Utc.with_ymd_and_hms(2024, 3, 1, 12, 0, 0).unwrap();
        let mut example = sample();
        let before = example.clone();
        let count =
            import_line_explanations(&mut example, "2: Loops while i is small.\n3: Adds one.\n", Origin::HumanAuthored, t)
                .unwrap();
        assert_eq!(count, 2);
        assert_eq!(example.lines[1].explanations[0].origin, Origin::HumanAuthored);
        assert_eq!(example.lines[1].explanations[0].source_round, None);

        let mut untouched = before.clone();
        let err = import_line_explanations(&mut untouched, "2: ok\n9: out of range\n", Origin::HumanAuthored, t);
        assert!(matches!(err, Err(InterchangeError::SchemaViolation(_))));
        assert_eq!(untouched, before);
        assert!(import_line_explanations(&mut untouched, "just prose", Origin::HumanAuthored, t).is_err());
    }
}
