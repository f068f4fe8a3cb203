//! `teiresias`: scans, registry edits, reports and the API server.
//!
//! Exit codes: 0 success, 1 personal data found under `--fail-on-findings`, 2 any error.

mod render;

/// Like `print!`, but a closed stdout (e.g. `| head`) ends output quietly instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use teiresias_core::codeanalysis::{DirectoryListener, SourceOrigin, DEFAULT_DEBOUNCE};
use teiresias_core::config::{default_config_dir, write_defaults};
use teiresias_core::dataset::{write_dataset_file, DatasetKind};
use teiresias_core::discovery::DiscoveryService;
use teiresias_core::inventory::{EntryOrigin, Overrides, Trigger};
use teiresias_core::secret::Secret;
use teiresias_server::{default_state_dir, serve, AppState, ServerSettings};

#[derive(Parser)]
#[command(name = "teiresias", version, about = "Find storages in infrastructure code and report which hold personal data")]
struct Cli {
    /// Inventory store and registry location.
    #[arg(long, global = true, env = "TEIRESIAS_STATE_DIR")]
    state_dir: Option<PathBuf>,
    /// Settings and editable tables.
    #[arg(long, global = true, env = "TEIRESIAS_CONFIG_DIR")]
    config_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one discovery over a repository or directory.
    Scan(ScanArgs),
    /// Serve the HTTP API. Needs TEIRESIAS_TOKEN.
    Serve {
        /// Also scan this directory whenever it changes.
        #[arg(long)]
        watch: Option<PathBuf>,
    },
    #[command(subcommand)]
    Registry(RegistryCommand),
    #[command(subcommand)]
    Report(ReportCommand),
    /// Write a synthetic CSV dataset.
    GenDataset {
        #[arg(long)]
        kind: DatasetKind,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long, requires = "branch", conflicts_with = "dir")]
    repo: Option<String>,
    #[arg(long, requires = "repo")]
    branch: Option<String>,
    #[arg(long, required_unless_present = "repo")]
    dir: Option<PathBuf>,
    /// Exit 1 when any collection is classified personal.
    #[arg(long)]
    fail_on_findings: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Args, Default)]
struct OverrideArgs {
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    database: Option<String>,
    #[arg(long)]
    username: Option<String>,
    /// Name of the environment variable holding the password.
    #[arg(long, conflicts_with = "password_file")]
    password_env: Option<String>,
    /// File holding the password.
    #[arg(long)]
    password_file: Option<PathBuf>,
}

impl OverrideArgs {
    fn into_overrides(self) -> Overrides {
        let password = match (self.password_env, self.password_file) {
            (Some(var), _) => Some(Secret::Env(var)),
            (None, Some(path)) => Some(Secret::File(path)),
            (None, None) => None,
        };
        Overrides {
            host: self.host,
            port: self.port,
            database: self.database,
            username: self.username,
            password,
        }
    }
}

#[derive(Subcommand)]
enum RegistryCommand {
    /// Show repositories and storages.
    List,
    /// Supply missing connection fields for a storage.
    Complete {
        id: String,
        #[command(flatten)]
        fields: OverrideArgs,
    },
    /// Keep a storage out of future scans.
    Exclude { id: String },
    /// Forget a storage; it comes back if the code defines it again.
    Delete { id: String },
    /// Register a storage that no scanned code defines.
    AddExternal {
        #[arg(long)]
        name: String,
        #[arg(long = "type")]
        storage_type: String,
        #[command(flatten)]
        fields: OverrideArgs,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    List,
    Show {
        id: String,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Drop executions older than the cutoff.
    Prune {
        /// Defaults to `retention_days` from the settings.
        #[arg(long)]
        older_than_days: Option<u32>,
    },
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Write the shipped defaults into the config directory.
    Init {
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("TEIRESIAS_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let state_dir = cli.state_dir.unwrap_or_else(default_state_dir);
    let config_dir = cli.config_dir.unwrap_or_else(default_config_dir);
    let open = || DiscoveryService::open(&state_dir, Some(&config_dir)).context("cannot open the state directory");
    match cli.command {
        Command::Scan(args) => scan(&open()?, args),
        Command::Serve { watch } => serve_api(open()?, watch.as_deref()),
        Command::Registry(cmd) => registry(&open()?, cmd),
        Command::Report(cmd) => report(&open()?, cmd),
        Command::GenDataset { kind, rows, out, seed } => {
            write_dataset_file(kind, rows, seed, &out).with_context(|| format!("cannot write {}", out.display()))?;
            outln!("wrote {rows} {kind} rows to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Config(ConfigCommand::Init { force }) => {
            for path in write_defaults(&config_dir, force)? {
                outln!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn scan(service: &DiscoveryService, args: ScanArgs) -> anyhow::Result<ExitCode> {
    let source = match (args.repo, args.branch, args.dir) {
        (Some(uri), Some(branch), _) => SourceOrigin::GitRemote { uri, branch },
        (_, _, Some(dir)) => SourceOrigin::LocalDirectory {
            path: dir.canonicalize().with_context(|| format!("source {}", dir.display()))?,
        },
        _ => bail!("either --repo with --branch, or --dir is required"),
    };
    let outcome = service.scan(&[source], Trigger::Manual)?;
    match args.format {
        Format::Json => outln!("{}", outcome.report.to_json()),
        Format::Table => out!("{}", render::report_table(&outcome.report)),
    }
    if outcome.source_failed() {
        let detail = outcome.report.summary.failures.first().map(|f| f.error.as_str()).unwrap_or("unknown");
        eprintln!("error: source could not be analyzed: {detail}");
        return Ok(ExitCode::from(2));
    }
    let s = &outcome.report.summary;
    let found = s.storages.iter().flat_map(|st| &st.collections).any(|c| c.personal);
    Ok(if args.fail_on_findings && found { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn serve_api(service: DiscoveryService, watch: Option<&Path>) -> anyhow::Result<ExitCode> {
    let settings = ServerSettings::from_env()?;
    let capacity = service.load_config()?.settings.queue_capacity;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(settings.listen)
            .await
            .with_context(|| format!("cannot listen on {}", settings.listen))?;
        let state = AppState::new(Arc::new(service), &settings, capacity);
        // Held for the server's lifetime; dropping it stops the watcher.
        let _listener = match watch {
            Some(dir) => {
                let path = dir.canonicalize().with_context(|| format!("watch {}", dir.display()))?;
                let state = state.clone();
                let handle = tokio::runtime::Handle::current();
                let origin = SourceOrigin::LocalDirectory { path: path.clone() };
                let on_change = move |changed: Vec<PathBuf>| {
                    let _guard = handle.enter();
                    match state.enqueue_scan(vec![origin.clone()], Trigger::SourceChange) {
                        Ok(id) => tracing::info!(files = changed.len(), execution = %id, "source changed"),
                        Err(e) => tracing::warn!("change scan not queued: {e}"),
                    }
                };
                Some(DirectoryListener::watch(&path, DEFAULT_DEBOUNCE, on_change)?)
            }
            None => None,
        };
        eprintln!("listening on {}", listener.local_addr()?);
        serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(ExitCode::SUCCESS)
    })
}

fn registry(service: &DiscoveryService, cmd: RegistryCommand) -> anyhow::Result<ExitCode> {
    let entry = match cmd {
        RegistryCommand::List => {
            let registry = service.registry()?;
            let body = json!({
                "repositories": registry.repositories(),
                "storages": registry.entries().collect::<Vec<_>>(),
            });
            outln!("{}", serde_json::to_string_pretty(&body)?);
            return Ok(ExitCode::SUCCESS);
        }
        RegistryCommand::Complete { id, fields } => service.complete_storage(&id, fields.into_overrides())?,
        RegistryCommand::Exclude { id } => service.exclude_storage(&id)?,
        RegistryCommand::Delete { id } => {
            service.delete_storage(&id)?;
            outln!("deleted {id}");
            return Ok(ExitCode::SUCCESS);
        }
        RegistryCommand::AddExternal {
            name,
            storage_type,
            fields,
        } => service.add_storage(EntryOrigin::External, &name, &storage_type, fields.into_overrides())?,
    };
    outln!("{}", serde_json::to_string_pretty(&entry)?);
    Ok(ExitCode::SUCCESS)
}

fn report(service: &DiscoveryService, cmd: ReportCommand) -> anyhow::Result<ExitCode> {
    let store = service.store();
    match cmd {
        ReportCommand::List => {
            let mut rows = Vec::new();
            for record in store.executions()? {
                let headline = store
                    .get_report(&record.execution_id)
                    .map(|r| r.summary.headline)
                    .unwrap_or_default();
                rows.push((record, headline));
            }
            out!("{}", render::execution_table(&rows));
        }
        ReportCommand::Show { id, format } => {
            let report = store.get_report(&id)?;
            match format {
                Format::Json => out!("{}", report.to_json()),
                Format::Table => out!("{}", render::report_table(&report)),
            }
        }
        ReportCommand::Prune { older_than_days } => {
            let days = match older_than_days {
                Some(days) => days,
                None => service
                    .load_config()?
                    .settings
                    .retention_days
                    .context("no --older-than-days given and no retention_days configured")?,
            };
            let cutoff = chrono::Utc::now() - chrono::Duration::days(i64::from(days));
            for id in store.prune(cutoff)? {
                outln!("pruned {id}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
