use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use llmsim::backend::{
    ChatBackend, ChatCompletionsClient, LiveConfig, RetryPolicy, Retrying, ScriptedMock,
};
use llmsim::scenario::{
    first_difference, render_report, replay, run_scenario, ConfigError, Overrides,
    PromptInterjector, RunError, Scenario, ScenarioConfig, TranscriptFile,
};

#[derive(Parser)]
#[command(
    name = "llmsim",
    version,
    about = "Run and replay multi-agent LLM dialog simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Live,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its JSONL transcript.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "mock")]
        backend: BackendKind,
        /// Mock script (JSONL); overrides `backend.mock_script`.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value = "transcript.jsonl")]
        out: PathBuf,
        /// Persona generator seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_prompt_tokens: Option<u64>,
    },
    /// Re-run a transcript through a strict mock and compare byte for byte.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        /// Where to write the regenerated transcript.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the outcome and final prompt size of a transcript.
    Report {
        #[arg(long)]
        transcript: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Self::new(e.exit_code() as u8, e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e).into()
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            backend,
            script,
            out,
            seed,
            max_prompt_tokens,
        } => run(&config, backend, script, &out, seed, max_prompt_tokens),
        Command::Replay { transcript, out } => replay_cmd(&transcript, out.as_deref()),
        Command::Report { transcript } => report(&transcript),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(
    config_path: &Path,
    kind: BackendKind,
    script: Option<PathBuf>,
    out: &Path,
    seed: Option<u64>,
    max_prompt_tokens: Option<u64>,
) -> Result<(), Failure> {
    let mut config = ScenarioConfig::load(config_path)?;
    let script = script
        .map(|p| std::path::absolute(&p).map(|p| p.to_string_lossy().into_owned()))
        .transpose()
        .map_err(|e| Failure::new(2, format!("--script: {e}")))?;
    config.apply(&Overrides {
        mock_script: script,
        seed,
        max_prompt_tokens,
    })?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let resolved = config.resolve(base_dir)?;

    let backend: Box<dyn ChatBackend> = match kind {
        BackendKind::Mock => {
            let path = resolved.mock_script.as_ref().ok_or_else(|| {
                Failure::from(ConfigError::invalid(
                    "backend.mock_script",
                    "required for --backend mock",
                ))
            })?;
            let file = File::open(path)
                .map_err(|e| Failure::new(2, format!("mock script {}: {e}", path.display())))?;
            let mock = ScriptedMock::from_jsonl(BufReader::new(file))
                .map_err(|e| Failure::new(2, format!("mock script {}: {e}", path.display())))?;
            Box::new(mock)
        }
        BackendKind::Live => {
            let live = LiveConfig::from_env(resolved.base_url.clone())
                .map_err(|e| Failure::new(2, e.to_string()))?;
            Box::new(Retrying::new(
                ChatCompletionsClient::new(live),
                RetryPolicy::default(),
            ))
        }
    };

    let mut file = File::create(out)
        .map_err(|e| Failure::new(1, format!("cannot create {}: {e}", out.display())))?;
    let interactive = matches!(
        resolved.scenario,
        Scenario::OneToMany {
            interactive: true,
            ..
        }
    );
    let mut prompt = PromptInterjector::new(io::stdin().lock(), io::stderr());
    let interjector = interactive.then_some(&mut prompt as &mut dyn llmsim::engine::Interjector);
    let report = run_scenario(
        &config,
        &resolved,
        backend.as_ref(),
        interjector,
        Some(&mut file),
    )?;
    print!("{}", report.render());
    Ok(())
}

fn read_transcript(path: &Path) -> Result<(Vec<u8>, TranscriptFile), Failure> {
    let bytes =
        std::fs::read(path).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
    let file = TranscriptFile::read(bytes.as_slice())
        .map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
    Ok((bytes, file))
}

fn replay_cmd(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let (original, file) = read_transcript(path)?;
    let regenerated = replay(&file)?;
    if let Some(out) = out {
        std::fs::write(out, &regenerated)
            .map_err(|e| Failure::new(1, format!("cannot write {}: {e}", out.display())))?;
    }
    match first_difference(&original, &regenerated) {
        None => {
            println!("Replay identical: {} turns", file.turns.len());
            Ok(())
        }
        Some(line) => Err(Failure::new(1, format!("replay diverges at line {line}"))),
    }
}

fn report(path: &Path) -> Result<(), Failure> {
    let (_, file) = read_transcript(path)?;
    let kind = file.config.as_ref().map(|c| c.kind);
    print!("{}", render_report(kind, file.turns.len(), &file.summary));
    Ok(())
}
