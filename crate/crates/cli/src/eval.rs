use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context as _};
use serde::{Deserialize, Serialize};
use weat_core::eval::{
    build_sheets, completeness_distribution, filter_comparable, fleiss_kappa, internal_rating_summary,
    mean_stdev_summary, preference_counts, preference_distribution, read_internal_ratings_csv, read_ratings_csv,
    AnswerKey, StudyExample, TextMode,
};
use weat_core::{import_portable, WorkedExample};

use crate::args::{EvalCommand, OutputFormat, TableArg, TextModeArg};
use crate::output::{print, print_json, read_text, write_text};
use crate::Context;

pub fn run(ctx: &Context, command: EvalCommand) -> anyhow::Result<()> {
    match command {
        EvalCommand::Sheets {
            generated,
            expert,
            evaluators,
            out,
            text_mode,
            format,
        } => sheets(ctx, &generated, &expert, &evaluators, &out, text_mode, format),
        EvalCommand::Report {
            ratings,
            key,
            table,
            format,
        } => report(&ratings, &key, table, format),
        EvalCommand::Kappa { ratings, key, format } => kappa(&ratings, key.as_deref(), format),
        EvalCommand::Internal { ratings, format } => {
            let summary = internal_rating_summary(&read_internal_ratings_csv(&read_text(&ratings)?)?)?;
            match format {
                OutputFormat::Text => print(&summary.render_text()),
                OutputFormat::Csv => print(&summary.to_csv()?),
                OutputFormat::Json => print_json(&summary),
            }
        }
    }
}

fn read_documents(paths: &[std::path::PathBuf]) -> anyhow::Result<Vec<WorkedExample>> {
    paths
        .iter()
        .map(|path| {
            import_portable(&read_text(path)?).with_context(|| format!("invalid document {}", path.display()))
        })
        .collect()
}

#[derive(Deserialize)]
struct EvaluatorRow {
    evaluator_id: String,
}

#[derive(Serialize)]
struct SheetsSummary {
    comparable: usize,
    generated_only: usize,
    expert_only: usize,
    sheets: usize,
    items_per_sheet: usize,
    seed: u64,
}

fn sheets(
    ctx: &Context,
    generated: &[std::path::PathBuf],
    expert: &[std::path::PathBuf],
    evaluators: &Path,
    out: &Path,
    text_mode: TextModeArg,
    format: OutputFormat,
) -> anyhow::Result<()> {
    let mode = match text_mode {
        TextModeArg::AllLevels => TextMode::AllLevels,
        TextModeArg::FirstLevel => TextMode::FirstLevel,
    };
    let generated = read_documents(generated)?;
    let experts: HashMap<String, WorkedExample> =
        read_documents(expert)?.into_iter().map(|e| (e.id.clone(), e)).collect();
    let mut study = Vec::new();
    for example in &generated {
        let Some(expert) = experts.get(&example.id) else {
            bail!("no expert document for example {:?}", example.id);
        };
        study.push(StudyExample::from_pair(example, expert, mode)?);
    }

    let roster = read_text(evaluators)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(roster.as_bytes());
    let ids = reader
        .deserialize::<EvaluatorRow>()
        .map(|row| row.map(|r| r.evaluator_id))
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("invalid evaluators file {}", evaluators.display()))?;
    if ids.is_empty() {
        bail!("{} lists no evaluators", evaluators.display());
    }

    let set = filter_comparable(study.iter().flat_map(|e| e.lines.iter()));
    let sheets = build_sheets(&study, &ids, ctx.seed)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for sheet in &sheets {
        write_text(&out.join(format!("{}.md", sheet.sheet_id)), &sheet.render_markdown())?;
        write_text(&out.join(format!("{}.csv", sheet.sheet_id)), &sheet.to_csv()?)?;
    }
    write_text(&out.join("answer-key.csv"), &AnswerKey::from_sheets(&sheets).to_csv()?)?;

    let summary = SheetsSummary {
        comparable: set.comparable.len(),
        generated_only: set.generated_only,
        expert_only: set.expert_only,
        sheets: sheets.len(),
        items_per_sheet: set.comparable.len(),
        seed: ctx.seed,
    };
    match format {
        OutputFormat::Json => print_json(&summary),
        OutputFormat::Csv => print(&format!(
            "comparable,generated_only,expert_only,sheets,seed\n{},{},{},{},{}\n",
            summary.comparable, summary.generated_only, summary.expert_only, summary.sheets, summary.seed
        )),
        OutputFormat::Text => print(&format!(
            "comparable lines: {}\ngenerated only (excluded): {}\nexpert only (excluded): {}\n\
             wrote {} sheet(s) and answer-key.csv to {}",
            summary.comparable,
            summary.generated_only,
            summary.expert_only,
            summary.sheets,
            out.display()
        )),
    }
}

fn report(ratings: &Path, key: &Path, table: TableArg, format: OutputFormat) -> anyhow::Result<()> {
    let ratings = read_ratings_csv(&read_text(ratings)?)?;
    let key = AnswerKey::from_csv(&read_text(key)?)?;
    let want = |t: TableArg| table == TableArg::All || table == t;

    let completeness = want(TableArg::Completeness)
        .then(|| completeness_distribution(&ratings, &key))
        .transpose()?;
    let preference = want(TableArg::Preference)
        .then(|| preference_distribution(&ratings, &key))
        .transpose()?;
    let mean_stdev = want(TableArg::MeanStdev)
        .then(|| mean_stdev_summary(&ratings, &key))
        .transpose()?;

    match format {
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Report<T, U, V> {
                #[serde(skip_serializing_if = "Option::is_none")]
                completeness: Option<T>,
                #[serde(skip_serializing_if = "Option::is_none")]
                preference: Option<U>,
                #[serde(skip_serializing_if = "Option::is_none")]
                mean_stdev: Option<V>,
            }
            print_json(&Report {
                completeness,
                preference,
                mean_stdev,
            })
        }
        OutputFormat::Csv => {
            let mut parts = Vec::new();
            if let Some(t) = &completeness {
                parts.push(t.to_csv()?);
            }
            if let Some(t) = &preference {
                parts.push(t.to_csv()?);
            }
            if let Some(t) = &mean_stdev {
                parts.push(t.to_csv()?);
            }
            print(&parts.join("\n"))
        }
        OutputFormat::Text => {
            let mut out = String::new();
            if let Some(t) = &completeness {
                let _ = writeln!(out, "Is the explanation sufficiently complete?\n{}", t.render_text());
            }
            if let Some(t) = &preference {
                let _ = writeln!(out, "Which explanation is better?\n{}", t.render_text());
            }
            if let Some(t) = &mean_stdev {
                let _ = writeln!(out, "Mean and standard deviation\n{}", t.render_text());
            }
            print(out.trim_end())
        }
    }
}

fn kappa(ratings: &Path, key: Option<&Path>, format: OutputFormat) -> anyhow::Result<()> {
    let ratings = read_ratings_csv(&read_text(ratings)?)?;
    let key = key.map(|path| read_text(path).and_then(|text| Ok(AnswerKey::from_csv(&text)?))).transpose()?;
    let report = fleiss_kappa(&preference_counts(&ratings, key.as_ref())?)?;
    match format {
        OutputFormat::Json => print_json(&report),
        OutputFormat::Csv => print(&format!(
            "kappa,z,p_value,subjects,raters,categories\n{:.6},{:.6},{:.6},{},{},{}\n",
            report.kappa, report.z, report.p_value, report.n_subjects, report.n_raters, report.n_categories
        )),
        OutputFormat::Text => print(&format!(
            "κ={:.3}  z={:.3}  p={:.4}  ({} subjects, {} raters, {} categories)",
            report.kappa, report.z, report.p_value, report.n_subjects, report.n_raters, report.n_categories
        )),
    }
}
