//! `maod`: work with decomposed responses from the shell, or run the
//! servers.
//!
//! | exit | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | other failure |
//! | 2 | empty input |
//! | 3 | file error |
//! | 4 | unknown component |
//! | 5 | validation failure |

mod ops;

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use maod_core::a2a::DecompositionAgent;
use maod_core::composer::{ComposeError, Draft, ManipulationEvent};
use maod_core::{decompose, DecomposeError, DecomposedResponse, Profile};
use maod_service::config::{Config, DEFAULT_AGENT_PORT};
use serde_json::json;
use tokio::net::TcpListener;

#[derive(Parser)]
#[command(name = "maod", version, about = "Component-based response decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Document,
    Email,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Document => Profile::Document,
            ProfileArg::Email => Profile::Email,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Split a text file into components and write them as JSON.
    Decompose {
        /// Input text file, or `-` for standard input.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "document")]
        profile: ProfileArg,
        /// Output file; standard output when omitted or `-`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report component counts by type on standard error.
        #[arg(long)]
        stats: bool,
        /// Write reports and errors on standard error as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Apply an operation script to a decomposition and write the text.
    Recompose {
        /// Decomposition JSON, or `-` for standard input.
        #[arg(long = "in")]
        input: PathBuf,
        /// Script of `exclude`, `include` and `edit` lines.
        #[arg(long)]
        ops: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Check a decomposition JSON file and print a report.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the REST service (configured through MAOD_* variables).
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Run the decomposition agent.
    Agent {
        #[arg(long)]
        port: Option<u16>,
    },
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Failure { code, kind, message: message.into() }
    }

    fn file(path: &Path, e: io::Error) -> Self {
        Failure::new(3, "FileProcessingError", format!("{}: {e}", path.display()))
    }

    fn validation(message: impl Into<String>) -> Self {
        Failure::new(5, "ValidationError", message)
    }

    fn other(message: impl Into<String>) -> Self {
        Failure::new(1, "Error", message)
    }
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn read_text(path: &Path) -> Result<String, Failure> {
    if is_stdio(path) {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(|e| Failure::file(path, e))?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| Failure::file(path, e))
}

fn write_out(out: Option<&Path>, data: &str) -> Result<(), Failure> {
    match out {
        Some(path) if !is_stdio(path) => std::fs::write(path, data).map_err(|e| Failure::file(path, e)),
        _ => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(data.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| Failure::file(Path::new("-"), e))
        }
    }
}

fn read_response(path: &Path) -> Result<DecomposedResponse, Failure> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::validation(format!("{}: not a decomposition: {e}", path.display())))
}

fn cmd_decompose(
    input: &Path,
    profile: Profile,
    out: Option<&Path>,
    stats: bool,
    as_json: bool,
) -> Result<(), Failure> {
    let raw = read_text(input)?;
    let response = decompose(&raw, profile).map_err(|e| match e {
        DecomposeError::EmptyResponse => Failure::new(2, "EmptyResponse", e.to_string()),
        DecomposeError::DecompositionError(report) => Failure::validation(format!("decomposition failed: {report}")),
    })?;
    write_out(out, &response.to_canonical_json())?;
    if stats {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &response.components {
            *counts.entry(c.kind.as_str()).or_default() += 1;
        }
        if as_json {
            let report = json!({ "file": input.display().to_string(), "components": response.components.len(), "by_type": counts });
            eprintln!("{report}");
        } else {
            let parts: Vec<String> = counts.iter().map(|(k, n)| format!("{k}={n}")).collect();
            eprintln!("{}: {} components ({})", input.display(), response.components.len(), parts.join(", "));
        }
    }
    Ok(())
}

/// Content for an `edit` op. One trailing line break is dropped, since the
/// surrounding whitespace already belongs to the component layout.
fn edit_content(path: &Path) -> Result<String, Failure> {
    let mut text = std::fs::read_to_string(path).map_err(|e| Failure::file(path, e))?;
    if text.ends_with('\n') {
        text.pop();
        if text.ends_with('\r') {
            text.pop();
        }
    }
    Ok(text)
}

fn cmd_recompose(input: &Path, script: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let response = read_response(input)?;
    let report = response.validate();
    if !report.ok {
        return Err(Failure::validation(format!("invalid decomposition: {report}")));
    }
    let ops = match script {
        Some(path) => {
            ops::parse(&read_text(path)?).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?
        }
        None => Vec::new(),
    };
    let mut draft = Draft::new(response);
    for op in ops {
        let event_id = draft.next_event_id();
        let event = match op {
            ops::Op::Exclude(id) => ManipulationEvent::toggle(event_id, id, false),
            ops::Op::Include(id) => ManipulationEvent::toggle(event_id, id, true),
            ops::Op::Edit(id, path) => {
                // Resolve the target first so a missing id wins over a missing file.
                if draft.response().component(&id).is_none() {
                    return Err(Failure::new(4, "UnknownComponent", format!("unknown component {id}")));
                }
                ManipulationEvent::manual_edit(event_id, id, edit_content(&path)?)
            }
        };
        draft.apply(&event).map_err(|e| match e {
            ComposeError::UnknownComponent(_) => Failure::new(4, "UnknownComponent", e.to_string()),
            other => Failure::validation(other.to_string()),
        })?;
    }
    write_out(out, &draft.recompose().text)
}

fn cmd_validate(input: &Path, as_json: bool) -> Result<(), Failure> {
    let response = read_response(input)?;
    let report = response.validate();
    if as_json {
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
    } else if report.ok {
        println!("ok");
    } else {
        for v in &report.violations {
            println!("{v}");
        }
    }
    if report.ok {
        Ok(())
    } else {
        Err(Failure::new(5, "ValidationError", format!("{} violation(s)", report.violations.len())))
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .init();
    tokio::runtime::Runtime::new().map_err(|e| Failure::other(e.to_string()))
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn bind(port: u16) -> Result<TcpListener, Failure> {
    let listener =
        TcpListener::bind(("0.0.0.0", port)).await.map_err(|e| Failure::other(format!("bind {port}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| Failure::other(e.to_string()))?;
    eprintln!("listening on {addr}");
    Ok(listener)
}

fn cmd_serve(port: Option<u16>) -> Result<(), Failure> {
    let mut config = Config::from_env().map_err(Failure::other)?;
    if let Some(port) = port {
        config.port = port;
    }
    let orchestrator = Arc::new(maod_service::build_orchestrator(&config).map_err(Failure::other)?);
    runtime()?.block_on(async {
        let listener = bind(config.port).await?;
        maod_service::serve(listener, orchestrator, shutdown_signal()).await.map_err(|e| Failure::other(e.to_string()))
    })
}

fn cmd_agent(port: Option<u16>) -> Result<(), Failure> {
    runtime()?.block_on(async {
        let listener = bind(port.unwrap_or(DEFAULT_AGENT_PORT)).await?;
        maod_service::serve_agent(listener, DecompositionAgent::default(), shutdown_signal())
            .await
            .map_err(|e| Failure::other(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, as_json) = match cli.command {
        Command::Decompose { input, profile, out, stats, json } => {
            (cmd_decompose(&input, profile.into(), out.as_deref(), stats, json), json)
        }
        Command::Recompose { input, ops, out, json } => (cmd_recompose(&input, ops.as_deref(), out.as_deref()), json),
        Command::Validate { input, json } => (cmd_validate(&input, json), json),
        Command::Serve { port } => (cmd_serve(port), false),
        Command::Agent { port } => (cmd_agent(port), false),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if as_json {
                eprintln!("{}", json!({ "error": { "code": f.kind, "message": f.message } }));
            } else {
                eprintln!("maod: {}: {}", f.kind, f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
