//! `dataclaw`: initialize a workspace, serve the gateway, run one-shot turns, replay transcripts.
//!
//! Exit codes: 0 ok, 1 configuration or I/O error, 2 turn aborted.

mod replay;

use std::io::IsTerminal;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use dataclaw_core::engine::Outcome;
use dataclaw_core::llm::{load_script, Backend, BackendFactory, RemoteBackend, ScriptPerSession, SharedBackend};
use dataclaw_core::persist::{init_workspace, read_transcript, Workspace};
use dataclaw_core::types::{Clock, IdGen, RandomIds, SequentialIds, StepClock, SystemClock};
use dataclaw_core::{AgentConfig, AgentRuntime, Verbosity};
use dataclaw_gateway::{Gateway, GatewayOptions};

#[derive(Parser)]
#[command(name = "dataclaw", version, about = "Local-first autonomous data agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create the workspace layout (idempotent).
    Init { path: PathBuf },
    /// Run the HTTP gateway until interrupted.
    Serve {
        #[command(flatten)]
        ws: WorkspaceArg,
        #[arg(long, env = "DATACLAW_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Run one turn on a throwaway console session and print the answer.
    Ask {
        #[command(flatten)]
        ws: WorkspaceArg,
        text: String,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Print a transcript as a readable trace.
    Replay {
        transcript: PathBuf,
        #[arg(long, env = "DATACLAW_VERBOSITY", default_value = "full_trace")]
        verbosity: Verbosity,
    },
}

#[derive(clap::Args)]
struct WorkspaceArg {
    #[arg(long = "workspace", short = 'w', env = "DATACLAW_WORKSPACE", default_value = ".")]
    path: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendName {
    #[value(name = "scripted")]
    Scripted,
    #[value(name = "remote_chat_api")]
    RemoteChatApi,
}

#[derive(clap::Args)]
struct BackendArgs {
    /// Defaults to `scripted` when --script is given, `remote_chat_api` otherwise.
    #[arg(long, env = "DATACLAW_BACKEND")]
    backend: Option<BackendName>,
    /// JSON array of canned replies for the scripted backend.
    #[arg(long, env = "DATACLAW_SCRIPT")]
    script: Option<PathBuf>,
    /// OpenAI-compatible chat completions URL.
    #[arg(long, env = "DATACLAW_ENDPOINT")]
    endpoint: Option<String>,
    #[arg(long, env = "DATACLAW_MODEL")]
    model: Option<String>,
}

impl BackendArgs {
    fn name(&self) -> BackendName {
        self.backend.unwrap_or(if self.script.is_some() { BackendName::Scripted } else { BackendName::RemoteChatApi })
    }

    fn factory(&self) -> anyhow::Result<Arc<dyn BackendFactory>> {
        match self.name() {
            BackendName::Scripted => {
                let Some(path) = &self.script else { bail!("the scripted backend needs --script <file>") };
                Ok(Arc::new(ScriptPerSession::new(load_script(path)?)))
            }
            BackendName::RemoteChatApi => {
                let (Some(endpoint), Some(model)) = (&self.endpoint, &self.model) else {
                    bail!("the remote_chat_api backend needs --endpoint and --model (or DATACLAW_ENDPOINT / DATACLAW_MODEL)")
                };
                let backend: Arc<dyn Backend> = Arc::new(RemoteBackend::new(endpoint.clone(), model.clone()));
                Ok(Arc::new(SharedBackend(backend)))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let default_level = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default_level.into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    let result = match cli.command {
        Command::Init { path } => init(&path),
        Command::Serve { ws, bind, backend } => serve(&ws.path, bind, &backend),
        Command::Ask { ws, text, backend } => ask(&ws.path, &text, &backend),
        Command::Replay { transcript, verbosity } => replay(&transcript, verbosity),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn init(path: &Path) -> anyhow::Result<ExitCode> {
    let report = init_workspace(path).with_context(|| format!("cannot initialize {}", path.display()))?;
    let root = report.workspace.root();
    if report.already_initialized() {
        println!("{} is already initialized", root.display());
    } else {
        println!("initialized {}", root.display());
        for p in &report.created {
            let rel = p.strip_prefix(root).unwrap_or(p);
            if !rel.as_os_str().is_empty() {
                println!("  created {}", rel.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn open_workspace(path: &Path) -> anyhow::Result<(Workspace, AgentConfig)> {
    let ws = Workspace::open(path);
    if !ws.is_initialized() {
        bail!("{} is not a dataclaw workspace (run `dataclaw init {}` first)", path.display(), path.display());
    }
    let config = AgentConfig::load(&ws.config_path())?;
    Ok((ws, config))
}

fn serve(path: &Path, bind: SocketAddr, backend: &BackendArgs) -> anyhow::Result<ExitCode> {
    let (ws, config) = open_workspace(path)?;
    let factory = backend.factory()?;
    let capacity = config.max_concurrent_sessions;
    let rt = Arc::new(AgentRuntime::new(ws, config, factory, Arc::new(SystemClock), Arc::new(RandomIds)));
    let gateway = Arc::new(Gateway::new(rt.clone(), GatewayOptions::default())?);

    let tokio = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    tokio.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("cannot bind {bind}"))?;
        let channels: Vec<String> = gateway.channels().list().into_iter().map(|c| c.channel_id).collect();
        tracing::info!(
            workspace = %rt.workspace().root().display(),
            channels = %channels.join(", "),
            skills = rt.skills().bundles.len(),
            capacity,
            "dataclaw gateway starting"
        );
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        dataclaw_gateway::serve(listener, gateway, shutdown).await.context("server failed")
    })?;
    Ok(ExitCode::SUCCESS)
}

fn ask(path: &Path, text: &str, backend: &BackendArgs) -> anyhow::Result<ExitCode> {
    let (ws, config) = open_workspace(path)?;
    let factory = backend.factory()?;
    // scripted runs are reproducible: fixed clock, ids counted on from the sessions already on disk
    let (clock, ids): (Arc<dyn Clock>, Arc<dyn IdGen>) = match backend.name() {
        BackendName::Scripted => {
            let existing = std::fs::read_dir(ws.sessions_dir()).map(|d| d.count()).unwrap_or(0) as u128;
            (Arc::new(StepClock::fixed()), Arc::new(SequentialIds::starting_at(existing << 64)))
        }
        BackendName::RemoteChatApi => (Arc::new(SystemClock), Arc::new(RandomIds)),
    };
    let rt = AgentRuntime::new(ws, config, factory, clock, ids);
    let session = rt.open_session("console")?;
    let trace = rt.ask(&session.id, text)?;
    rt.close_session(&session.id)?;
    match &trace.outcome {
        Outcome::Final { text } => {
            println!("{text}");
            for a in &trace.artifacts {
                println!("artifact: {}", a.relative_path);
            }
            Ok(ExitCode::SUCCESS)
        }
        Outcome::Aborted { reason, detail } => {
            eprintln!("turn aborted ({}): {detail}", reason.as_str());
            Ok(ExitCode::from(2))
        }
    }
}

fn replay(transcript: &Path, verbosity: Verbosity) -> anyhow::Result<ExitCode> {
    let events = read_transcript(transcript).with_context(|| format!("{}", transcript.display()))?;
    print!("{}", replay::render(&events, verbosity));
    Ok(ExitCode::SUCCESS)
}
