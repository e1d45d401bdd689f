use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _};
use serde::Serialize;
use weat_core::gateway::DEFAULT_ENDPOINT;
use weat_core::pipeline::staged_explanations;
use weat_core::{
    accept_staged, export_pcex, export_portable, import_line_explanations, import_portable, import_source,
    run_generation, GenerationTranscript, Origin, PromptConfig, ProviderKind, ProviderSpec, Selections,
    SimilarityReport, WorkedExample,
};
use weat_service::{GenerationJob, JobStatus, ServiceError};

use crate::args::{
    AcceptArgs, AnalyzeArgs, ExampleCommand, ExportArgs, ExportFormat, GenerateArgs, OriginArg, OutputFormat,
    ServeArgs, Target,
};
use crate::output::{no_csv, print, print_json, read_text, render_example, write_text};
use crate::Context;

#[derive(Serialize)]
struct ExampleView<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    revision: Option<u64>,
    example: &'a WorkedExample,
}

fn show(example: &WorkedExample, revision: Option<u64>, format: OutputFormat) -> anyhow::Result<()> {
    no_csv(format, "an example")?;
    match format {
        OutputFormat::Json => print_json(&ExampleView { revision, example }),
        _ => print(&render_example(example, revision)),
    }
}

fn read_document(path: &Path) -> anyhow::Result<WorkedExample> {
    import_portable(&read_text(path)?).with_context(|| format!("invalid document {}", path.display()))
}

struct Loaded {
    example: WorkedExample,
    revision: Option<u64>,
    path: Option<PathBuf>,
}

fn load_target(ctx: &Context, target: &Target) -> anyhow::Result<Loaded> {
    match (&target.id, &target.example) {
        (Some(id), _) => {
            let stored = ctx.store()?.load(id)?;
            Ok(Loaded {
                example: stored.example,
                revision: Some(stored.revision),
                path: None,
            })
        }
        (None, Some(path)) => Ok(Loaded {
            example: read_document(path)?,
            revision: None,
            path: Some(path.clone()),
        }),
        (None, None) => bail!("pass --id or --example"),
    }
}

pub fn example(ctx: &Context, command: ExampleCommand) -> anyhow::Result<()> {
    match command {
        ExampleCommand::Create {
            title,
            description,
            source,
            language,
            id,
            format,
        } => {
            let mut example = import_source(&title, &description, &read_text(&source)?, &language, ctx.now)?;
            if let Some(id) = id {
                example = example.with_id(id);
            }
            let stored = ctx.store()?.create(&example)?;
            created(&stored.example, stored.revision, format)
        }
        ExampleCommand::Import { file, format } => {
            let example = read_document(&file)?;
            let stored = ctx.store()?.create(&example)?;
            created(&stored.example, stored.revision, format)
        }
        ExampleCommand::Show { target, format } => {
            let loaded = load_target(ctx, &target)?;
            show(&loaded.example, loaded.revision, format)
        }
        ExampleCommand::Annotate {
            id,
            explanations,
            origin,
            format,
        } => {
            let store = ctx.store()?;
            let stored = store.load(&id)?;
            let mut example = stored.example;
            let origin = match origin {
                OriginArg::HumanAuthored => Origin::HumanAuthored,
                OriginArg::Generated => Origin::Generated,
            };
            let added = import_line_explanations(&mut example, &read_text(&explanations)?, origin, ctx.now)?;
            let revision = store.save(&example, stored.revision)?;
            match format {
                OutputFormat::Json => print_json(&ExampleView {
                    revision: Some(revision),
                    example: &example,
                }),
                _ => print(&format!("{id}: attached {added} explanations (revision {revision})")),
            }
        }
        ExampleCommand::List { format } => {
            let summaries = ctx.store()?.list()?;
            match format {
                OutputFormat::Json => print_json(&summaries),
                OutputFormat::Csv => {
                    let mut out = String::from("id,title,lines,explained_lines,revision,updated_at\n");
                    for s in &summaries {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{},{}",
                            s.id,
                            csv_field(&s.title),
                            s.line_count,
                            s.explained_lines,
                            s.revision,
                            s.updated_at.to_rfc3339()
                        );
                    }
                    print(&out)
                }
                OutputFormat::Text => {
                    let mut out = String::new();
                    for s in &summaries {
                        let _ = writeln!(
                            out,
                            "{}  {}  ({}/{} lines explained, revision {})",
                            s.id, s.title, s.explained_lines, s.line_count, s.revision
                        );
                    }
                    print(&out)
                }
            }
        }
    }
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_owned()
    }
}

fn created(example: &WorkedExample, revision: u64, format: OutputFormat) -> anyhow::Result<()> {
    match format {
        OutputFormat::Json => print_json(&ExampleView {
            revision: Some(revision),
            example,
        }),
        _ => print(&example.id),
    }
}

fn prompt_config(ctx: &Context, args: &GenerateArgs) -> anyhow::Result<PromptConfig> {
    let mut config = ctx.config.prompt.clone();
    if let Some(rounds) = args.max_rounds {
        config.max_rounds = rounds;
    }
    if args.no_description {
        config.include_description = false;
    }
    if let Some(model) = &args.model {
        config.model_id = model.clone();
    }
    if let Some(temperature) = args.temperature {
        config.temperature = temperature;
    }
    config.check()?;
    Ok(config)
}

/// `--fixtures` is the fixture root for mock/replay and the recording
/// directory for live runs.
fn provider_spec(
    ctx: &Context,
    fixtures: Option<&Path>,
    endpoint: Option<&str>,
    recordings: Option<PathBuf>,
) -> anyhow::Result<ProviderSpec> {
    let kind = ctx.provider;
    let mut spec = match ctx.config.providers.get(&kind) {
        Some(spec) => spec.clone(),
        None if kind == ProviderKind::Live => ProviderSpec::live(DEFAULT_ENDPOINT),
        None => ProviderSpec {
            kind,
            ..ProviderSpec::default()
        },
    };
    if let Some(fixtures) = fixtures {
        spec.fixture_path = Some(fixtures.to_path_buf());
    } else if spec.fixture_path.is_none() && kind != ProviderKind::Mock {
        spec.fixture_path = recordings;
    }
    if let Some(endpoint) = endpoint {
        spec.endpoint = Some(endpoint.to_owned());
    }
    spec.check()?;
    Ok(spec)
}

fn render_similarity(report: &SimilarityReport, per_line: bool, format: OutputFormat) -> anyhow::Result<()> {
    match format {
        OutputFormat::Json => print_json(report),
        OutputFormat::Csv if per_line => {
            let mut out = String::from("example,line,round,score\n");
            for (line, scores) in &report.per_line {
                for s in scores {
                    let _ = writeln!(out, "{},{},{},{:.6}", report.example_id, line, s.round, s.score);
                }
            }
            print(&out)
        }
        OutputFormat::Csv => print(&report.to_csv(true)),
        OutputFormat::Text => {
            let mut out = format!("{}\n", report.example_id);
            if report.per_round.is_empty() {
                out.push_str("  one round; nothing to compare\n");
            }
            for entry in &report.per_round {
                let score = entry.score.map_or_else(|| "no output".to_owned(), |s| format!("{s:.4}"));
                let _ = writeln!(out, "  round {} vs {}: {}", entry.round, entry.round - 1, score);
            }
            if per_line {
                for (line, scores) in &report.per_line {
                    for s in scores {
                        let _ = writeln!(out, "  line {line} round {}: {:.4}", s.round, s.score);
                    }
                }
            }
            print(&out)
        }
    }
}

fn transcript_path(example: &Path) -> PathBuf {
    let name = example.file_name().and_then(|n| n.to_str()).unwrap_or("example");
    let stem = name
        .strip_suffix(".weat.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(name);
    example.with_file_name(format!("{stem}.transcript.json"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn generate(ctx: &Context, args: GenerateArgs) -> anyhow::Result<()> {
    let config = prompt_config(ctx, &args)?;
    let policy = ctx.config.policy;
    let loaded = load_target(ctx, &args.target)?;
    let example = loaded.example;

    let transcript = match (&args.target.id, &loaded.path) {
        (Some(id), _) => {
            let store = ctx.store()?;
            if let Some(job) = store.load_job(id)? {
                if !job.status.is_terminal() {
                    return Err(ServiceError::JobConflict(id.clone()).into());
                }
            }
            let spec = provider_spec(ctx, args.fixtures.as_deref(), args.endpoint.as_deref(), Some(store.recordings_dir(id)?))?;
            let mut job = GenerationJob::new(id, spec.kind, config.max_rounds, ctx.now);
            job.status = JobStatus::RoundRunning;
            store.save_job(&job)?;
            let outcome = spec
                .connect()
                .map_err(Into::into)
                .and_then(|provider| run_generation(&example, &config, provider.as_ref(), &policy, |_| {}));
            match outcome {
                Ok(transcript) => {
                    store.save_transcript(&transcript)?;
                    job.status = JobStatus::AwaitingReview;
                    job.rounds_done = transcript.rounds.len() as u32;
                    job.transcript_ref = Some("transcript.json".to_owned());
                    job.updated_at = ctx.now;
                    store.save_job(&job)?;
                    transcript
                }
                Err(e) => {
                    job.fail(e.to_string(), ctx.now);
                    store.save_job(&job)?;
                    return Err(e.into());
                }
            }
        }
        (None, Some(path)) => {
            let spec = provider_spec(ctx, args.fixtures.as_deref(), args.endpoint.as_deref(), None)?;
            let provider = spec.connect()?;
            let transcript = run_generation(&example, &config, provider.as_ref(), &policy, |_| {})?;
            let out = args.transcript.clone().unwrap_or_else(|| transcript_path(path));
            write_json(&out, &transcript)?;
            transcript
        }
        _ => unreachable!("load_target checked the target"),
    };

    let staged = staged_explanations(&example, &transcript, &policy)?;
    let lines: std::collections::BTreeSet<u32> = staged.iter().map(|s| s.line).collect();
    eprintln!(
        "{}: {} round(s), {} staged explanation(s) on {} line(s); review with `weat accept`",
        example.id,
        transcript.rounds.len(),
        staged.len(),
        lines.len()
    );
    let report = transcript
        .similarity
        .clone()
        .unwrap_or_else(|| weat_core::round_similarity(&example.id, &transcript.parsed_rounds()));
    render_similarity(&report, false, args.format)
}

/// `LINE:LEVEL=TEXT`
fn parse_edit(spec: &str) -> anyhow::Result<(u32, u32, String)> {
    let (position, text) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("edit {spec:?} must look like LINE:LEVEL=TEXT"))?;
    let (line, level) = position
        .split_once(':')
        .ok_or_else(|| anyhow!("edit {spec:?} must look like LINE:LEVEL=TEXT"))?;
    let line = line.trim().parse().with_context(|| format!("bad line in edit {spec:?}"))?;
    let level = level.trim().parse().with_context(|| format!("bad level in edit {spec:?}"))?;
    Ok((line, level, text.to_owned()))
}

fn selections(args: &AcceptArgs) -> anyhow::Result<Selections> {
    let mut selections = match &args.selections {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .with_context(|| format!("invalid selections in {}", path.display()))?,
        None => Selections::accept_all(),
    };
    if args.none {
        selections.include_by_default = false;
    }
    for line in &args.include {
        selections.lines.entry(*line).or_default().include = true;
    }
    for line in &args.exclude {
        selections = selections.exclude(*line);
    }
    for spec in &args.edit {
        let (line, level, text) = parse_edit(spec)?;
        selections = selections.edit(line, level, text);
    }
    Ok(selections)
}

#[derive(Serialize)]
struct AcceptSummary<'a> {
    example_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    revision: Option<u64>,
    accepted_levels: usize,
    accepted_lines: usize,
    excluded_lines: Vec<u32>,
    example: &'a WorkedExample,
}

pub fn accept(ctx: &Context, args: AcceptArgs) -> anyhow::Result<()> {
    let selections = selections(&args)?;
    let policy = ctx.config.policy;
    let loaded = load_target(ctx, &args.target)?;
    let before = loaded.example;
    let store = match &args.target.id {
        Some(_) => Some(ctx.store()?),
        None => None,
    };

    let (transcript, mut job) = match (&args.target.id, &store) {
        (Some(id), Some(store)) => {
            let job = match store.load_job(id)? {
                Some(job) if job.status == JobStatus::AwaitingReview => job,
                _ => return Err(ServiceError::NoStagedJob(id.clone()).into()),
            };
            let transcript = store
                .load_transcript(id)?
                .ok_or_else(|| ServiceError::NoStagedJob(id.clone()))?;
            (transcript, Some(job))
        }
        _ => {
            let path = args
                .transcript
                .as_deref()
                .ok_or_else(|| anyhow!("--transcript is required with --example"))?;
            let transcript: GenerationTranscript = serde_json::from_str(&read_text(path)?)
                .with_context(|| format!("invalid transcript {}", path.display()))?;
            (transcript, None)
        }
    };

    let staged = staged_explanations(&before, &transcript, &policy)?;
    let accepted = accept_staged(&before, &transcript, &selections, &policy, ctx.now)?;
    let mut excluded: Vec<u32> = staged.iter().map(|s| s.line).filter(|l| !selections.includes(*l)).collect();
    excluded.dedup();

    let revision = match (&mut job, loaded.revision, &store) {
        (Some(job), Some(revision), Some(store)) => {
            let revision = store.save(&accepted, revision)?;
            job.status = JobStatus::Complete;
            job.excluded_lines = excluded.clone();
            job.updated_at = ctx.now;
            store.save_job(job)?;
            Some(revision)
        }
        _ => {
            let out = args.out.clone().or(loaded.path).expect("file mode has a path");
            write_text(&out, &export_portable(&accepted)?)?;
            None
        }
    };

    let mut added: BTreeMap<u32, usize> = BTreeMap::new();
    for (old, new) in before.lines.iter().zip(&accepted.lines) {
        let count = new.explanations.len().saturating_sub(old.explanations.len());
        if count > 0 {
            added.insert(new.number, count);
        }
    }
    let summary = AcceptSummary {
        example_id: &accepted.id,
        revision,
        accepted_levels: added.values().sum(),
        accepted_lines: added.len(),
        excluded_lines: excluded,
        example: &accepted,
    };
    no_csv(args.format, "accept")?;
    match args.format {
        OutputFormat::Json => print_json(&summary),
        _ => print(&format!(
            "{}: accepted {} explanation(s) on {} line(s); excluded lines: {}",
            summary.example_id,
            summary.accepted_levels,
            summary.accepted_lines,
            if summary.excluded_lines.is_empty() {
                "none".to_owned()
            } else {
                summary.excluded_lines.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
            }
        )),
    }
}

pub fn analyze(ctx: &Context, args: AnalyzeArgs) -> anyhow::Result<()> {
    let transcript: GenerationTranscript = match (&args.source.id, &args.source.transcript) {
        (Some(id), _) => ctx
            .store()?
            .load_transcript(id)?
            .ok_or_else(|| ServiceError::NotFound(format!("generation transcript for example {id:?}")))?,
        (None, Some(path)) => serde_json::from_str(&read_text(path)?)
            .with_context(|| format!("invalid transcript {}", path.display()))?,
        (None, None) => bail!("pass --id or --transcript"),
    };
    let report = weat_core::round_similarity(&transcript.example_id, &transcript.parsed_rounds());
    render_similarity(&report, args.lines, args.format)
}

pub fn export(ctx: &Context, args: ExportArgs) -> anyhow::Result<()> {
    let example = load_target(ctx, &args.target)?.example;
    let document = match args.format {
        ExportFormat::Portable => export_portable(&example)?,
        ExportFormat::Pcex => export_pcex(&example)?,
    };
    match &args.out {
        Some(path) => write_text(path, &document),
        None => print(&document),
    }
}

pub fn serve(ctx: Context, args: ServeArgs) -> anyhow::Result<()> {
    let mut config = ctx.config;
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    if let Some(dir) = args.ui_dir {
        config.ui_dir = Some(dir);
    }
    let runtime = tokio::runtime::Runtime::new().context("cannot start the async runtime")?;
    runtime.block_on(weat_service::serve(config))?;
    Ok(())
}
