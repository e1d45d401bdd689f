use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context as _};
use serde::Serialize;
use weat_core::WorkedExample;

use crate::args::OutputFormat;

pub fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn print(text: &str) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(text.as_bytes()).context("cannot write to stdout")?;
    if !text.is_empty() && !text.ends_with('\n') {
        stdout.write_all(b"\n").context("cannot write to stdout")?;
    }
    Ok(())
}

pub fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    print(&serde_json::to_string_pretty(value)?)
}

pub fn no_csv(format: OutputFormat, what: &str) -> anyhow::Result<()> {
    if format == OutputFormat::Csv {
        bail!("{what} has no CSV form; use --format text or json");
    }
    Ok(())
}

/// Code with each line's explanation levels underneath.
pub fn render_example(example: &WorkedExample, revision: Option<u64>) -> String {
    let mut out = String::new();
    let _ = write!(out, "{} [{}]", example.title, example.id);
    if let Some(revision) = revision {
        let _ = write!(out, " revision {revision}");
    }
    out.push('\n');
    if !example.description.trim().is_empty() {
        let _ = writeln!(out, "{}", example.description.trim_end());
    }
    out.push('\n');
    let width = example.line_count().to_string().len();
    for line in &example.lines {
        let _ = write!(out, "{:>width$} | {}", line.number, line.text);
        if line.structural {
            out.push_str("    (structural)");
        }
        out.push('\n');
        for level in &line.explanations {
            let round = level.source_round.map(|r| format!(", round {r}")).unwrap_or_default();
            let _ = writeln!(out, "{:>width$}     {}. [{}{}] {}", "", level.level, level.origin, round, level.text);
        }
        if let Some(challenge) = &line.challenge {
            let _ = writeln!(out, "{:>width$}     challenge: {}", "", challenge.distractors.join(" | "));
        }
    }
    let explained = example.lines.iter().filter(|l| l.is_explained()).count();
    let _ = writeln!(out, "\n{explained} of {} lines explained", example.line_count());
    out
}
