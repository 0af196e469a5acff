use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agentlens_core::causetrace::{ImplicitOptions, Scope, DEFAULT_DELTA, DEFAULT_MAX_EDGES};
use agentlens_core::error::{Classify, ErrorClass};
use agentlens_core::export::{export_project, EXPORT_SEGMENTS};
use agentlens_core::ingest::adapt_reverie;
use agentlens_core::model::OperationRef;
use agentlens_core::project::{ingest_into, Access, Project, ProjectError, ProjectStore};
use agentlens_core::search::{SearchMode, SearchOptions, DEFAULT_SEMANTIC_THRESHOLD};
use agentlens_core::segment::{SegmentationParams, DEFAULT_TARGET_SEGMENTS};
use agentlens_core::summarize::provider::ProviderConfig;
use agentlens_server::{AppState, DEFAULT_PORT};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "agentlens", version, about = "Inspect agent simulation logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProviderArgs {
    /// Use the deterministic local summarizer and embedder.
    #[arg(long)]
    offline: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a log and create a project directory from it.
    Ingest {
        log: PathBuf,
        #[arg(long)]
        project: PathBuf,
    },
    /// Precompute point summaries and operation embeddings.
    Summarize {
        #[arg(long)]
        project: PathBuf,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Segment one agent's timeline and print the result as JSON.
    Segment {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_TARGET_SEGMENTS)]
        n: usize,
        /// Window width; derived from the range and `n` when omitted.
        #[arg(long)]
        window: Option<usize>,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Print explicit and implicit causes of one operation.
    Trace {
        #[arg(long)]
        project: PathBuf,
        /// `t,agent,op_index`
        #[arg(long)]
        op: OperationRef,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        /// `sameAgent` or `allAgents`
        #[arg(long, default_value = "sameAgent")]
        scope: Scope,
        /// 0 disables the cap.
        #[arg(long, default_value_t = DEFAULT_MAX_EDGES)]
        max_edges: usize,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Search operation texts.
    Search {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        q: String,
        /// `lexical` or `semantic`
        #[arg(long, default_value = "lexical")]
        mode: SearchMode,
        #[arg(long, default_value_t = DEFAULT_SEMANTIC_THRESHOLD)]
        threshold: f64,
        /// Search every operation kind, not only memories.
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Serve the HTTP API.
    Serve {
        /// Existing project directories to serve.
        #[arg(long)]
        project: Vec<PathBuf>,
        /// Directory where uploaded logs become projects.
        #[arg(long)]
        project_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Write a self-contained JSON export of a project.
    Export {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = EXPORT_SEGMENTS)]
        n: usize,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Convert a Reverie simulation directory into a native log.
    AdaptReverie {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<ProjectError> for Failure {
    fn from(e: ProjectError) -> Self {
        let mut message = e.to_string();
        if let ProjectError::Invalid(report) = &e {
            for d in report.errors.iter().take(20) {
                message.push_str(&format!("\n  {d}"));
            }
        }
        if e.class() == ErrorClass::Provider {
            message.push_str("\n  (set AGENTLENS_LLM_URL and AGENTLENS_EMBED_URL, or pass --offline)");
        }
        Failure {
            code: e.class().exit_code() as u8,
            message,
        }
    }
}

fn internal(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn open(dir: &Path, access: Access, p: &ProviderArgs) -> Result<Project, Failure> {
    Ok(Project::open(dir, access, &ProviderConfig::from_env(p.offline))?)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(v).map_err(internal)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest { log, project } => {
            let bytes = std::fs::read(&log).map_err(|e| Failure {
                code: 2,
                message: format!("cannot read {}: {e}", log.display()),
            })?;
            let (info, report) = ingest_into(&bytes, &project)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", info.id);
        }
        Command::Summarize { project, providers } => {
            let p = open(&project, Access::Exclusive, &providers)?;
            let report = p.summarize_all()?;
            println!(
                "{} time points, {} operations embedded, {} provider calls",
                report.time_points, report.operations_embedded, report.provider_calls
            );
        }
        Command::Segment {
            project,
            agent,
            from,
            to,
            n,
            window,
            providers,
        } => {
            let p = open(&project, Access::Exclusive, &providers)?;
            let range = p.range(from, to)?;
            let mut params = SegmentationParams::with_target(n);
            if let Some(w) = window {
                params = params.window(w);
            }
            print_json(&p.segmentation(&agent, range, &params)?)?;
        }
        Command::Trace {
            project,
            op,
            delta,
            scope,
            max_edges,
            providers,
        } => {
            let p = open(&project, Access::Exclusive, &providers)?;
            let opts = ImplicitOptions {
                delta,
                scope,
                max_edges: (max_edges > 0).then_some(max_edges),
            };
            print_json(&p.causes(&op, &opts)?)?;
        }
        Command::Search {
            project,
            q,
            mode,
            threshold,
            all,
            providers,
        } => {
            let p = open(&project, Access::Exclusive, &providers)?;
            let opts = SearchOptions {
                mode,
                threshold,
                all_operations: all,
            };
            print_json(&p.search(&q, &opts)?)?;
        }
        Command::Serve {
            project,
            project_dir,
            port,
            host,
            providers,
        } => {
            if project.is_empty() && project_dir.is_none() {
                return Err(Failure {
                    code: 2,
                    message: "give at least one --project or a --project-dir".into(),
                });
            }
            let store = ProjectStore::new(project_dir, ProviderConfig::from_env(providers.offline));
            for dir in &project {
                let id = store.register(dir)?;
                eprintln!("serving {} as {id}", dir.display());
            }
            let runtime = tokio::runtime::Runtime::new().map_err(internal)?;
            runtime
                .block_on(agentlens_server::serve(AppState::new(store), (host, port).into()))
                .map_err(internal)?;
        }
        Command::Export {
            project,
            out,
            n,
            providers,
        } => {
            let p = open(&project, Access::Exclusive, &providers)?;
            let doc = export_project(&p, n)?;
            std::fs::write(&out, doc.to_json()).map_err(internal)?;
            eprintln!("wrote {}", out.display());
        }
        Command::AdaptReverie { dir, out } => {
            let log = adapt_reverie(&dir).map_err(|e| Failure {
                code: 2,
                message: e.to_string(),
            })?;
            std::fs::write(&out, log).map_err(internal)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
