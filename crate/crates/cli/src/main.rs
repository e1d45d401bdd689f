mod args;
mod commands;
mod eval;
mod output;

use std::process::ExitCode;

use anyhow::Context as _;
use chrono::{DateTime, Utc};
use clap::Parser as _;
use weat_core::{GatewayError, PipelineError, ProviderKind};
use weat_service::{FileStore, ServiceConfig, ServiceError};

use args::{Cli, Command};

/// Settings shared by every command.
pub struct Context {
    pub config: ServiceConfig,
    pub provider: ProviderKind,
    pub seed: u64,
    /// Timestamp for every change this run makes. `WEAT_NOW` pins it.
    pub now: DateTime<Utc>,
}

impl Context {
    fn new(cli: &Cli) -> anyhow::Result<Self> {
        let mut config = ServiceConfig::load(cli.config.as_deref())?;
        if let Some(root) = &cli.storage_root {
            config.storage_root = root.clone();
        }
        let provider = cli.provider.map(Into::into).unwrap_or(config.default_provider);
        config.default_provider = provider;
        let now = match std::env::var("WEAT_NOW") {
            Ok(text) => DateTime::parse_from_rfc3339(&text)
                .with_context(|| format!("WEAT_NOW {text:?} is not an RFC 3339 timestamp"))?
                .with_timezone(&Utc),
            Err(_) => Utc::now(),
        };
        Ok(Self {
            config,
            provider,
            seed: cli.seed.unwrap_or(0),
            now,
        })
    }

    pub fn store(&self) -> anyhow::Result<FileStore> {
        Ok(FileStore::open(&self.config.storage_root)?)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Context::new(&cli)?;
    match cli.command {
        Command::Example(command) => commands::example(&ctx, command),
        Command::Generate(args) => commands::generate(&ctx, args),
        Command::Accept(args) => commands::accept(&ctx, args),
        Command::Analyze(args) => commands::analyze(&ctx, args),
        Command::Export(args) => commands::export(&ctx, args),
        Command::Eval(command) => eval::run(&ctx, command),
        Command::Serve(args) => commands::serve(ctx, args),
    }
}

/// Exit code and stable error code: 2 for provider and I/O failures,
/// 1 for everything the user can fix by changing input.
fn classify(error: &anyhow::Error) -> (u8, &'static str) {
    for cause in error.chain() {
        if let Some(e) = cause.downcast_ref::<GatewayError>() {
            return gateway_failure(e);
        }
        if let Some(PipelineError::Gateway(e)) = cause.downcast_ref::<PipelineError>() {
            return gateway_failure(e);
        }
        if let Some(e) = cause.downcast_ref::<ServiceError>() {
            return match e {
                ServiceError::Io { .. } | ServiceError::CorruptRecord { .. } => (2, e.code()),
                _ => (1, e.code()),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (2, "io");
        }
    }
    (1, "validation")
}

fn gateway_failure(error: &GatewayError) -> (u8, &'static str) {
    match error {
        GatewayError::InvalidSpec(_) => (1, "provider_config"),
        GatewayError::FixtureMissing { .. } | GatewayError::FixtureIo { .. } => (2, "fixture"),
        _ => (2, "provider"),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("WEAT_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            let (code, name) = classify(&error);
            eprintln!("error[{name}]: {error:#}");
            ExitCode::from(code)
        }
    }
}
