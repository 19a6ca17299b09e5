use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use arena_core::briefing::qc::{agreement, pair_annotators, read_annotations, score_brief, Criterion};
use arena_core::clock::SystemClock;
use arena_core::config::RunConfig;
use arena_core::persistence::{log_path, verify, ArenaState, EventSink, FileLog, LogError, LOG_FILE};
use arena_core::protocol::{run_session, SessionEnv};
use clap::{Parser, Subcommand};

use crate::api::{self, AppState};
use crate::live::{connectors_from_config, LiveRunner};
use crate::registry::Registry;
use crate::{build_providers, replay_dir, GatewayError};

#[derive(Debug, Parser)]
#[command(name = "arena", version, about = "Run, replay and serve trading-agent arena sessions")]
pub struct Cli {
    /// Root for run directories (`<root>/runs/<run_id>`).
    #[arg(long, global = true, env = "ARENA_DATA_ROOT", default_value = "data")]
    pub data_root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a session from recorded fixtures and write its log and exports.
    Run {
        config: PathBuf,
        /// Export directory; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild metrics, leaderboard and returns CSVs from a run's event log.
    Replay {
        run_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the leaderboard of a run to stdout.
    Report { run_dir: PathBuf },
    /// Check the integrity of an event log (file or run directory).
    Verify { path: PathBuf },
    /// Start a live run and serve its state over HTTP.
    Live {
        config: PathBuf,
        #[arg(long, env = "ARENA_PORT", default_value_t = 8080)]
        port: u16,
        /// Seconds between clock checks.
        #[arg(long, default_value_t = 30)]
        poll_secs: u64,
    },
    /// Serve finished runs over HTTP.
    Serve {
        #[arg(long = "run-dir")]
        run_dirs: Vec<PathBuf>,
        #[arg(long, env = "ARENA_PORT", default_value_t = 8080)]
        port: u16,
    },
    /// Score brief annotations and report inter-annotator agreement.
    Qc { annotations: PathBuf },
}

pub fn main() -> ExitCode {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(LogError::Integrity { seq, line, reason }) = integrity(&e) {
                eprintln!("error: log integrity failure at seq {seq} (line {line}): {reason}");
                return ExitCode::from(3);
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn integrity(e: &anyhow::Error) -> Option<&LogError> {
    e.chain().find_map(|c| match c.downcast_ref::<GatewayError>() {
        Some(GatewayError::Log(l @ LogError::Integrity { .. })) => Some(l),
        _ => c.downcast_ref::<LogError>().filter(|l| matches!(l, LogError::Integrity { .. })),
    })
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let dir = run_fixture(&config, &cli.data_root)?;
            let state = replay_dir(&dir)?;
            let out = out.unwrap_or(dir);
            write_exports(&state, &out)?;
            println!("{}", out.display());
        }
        Command::Replay { run_dir, out } => {
            let state = replay_dir(&run_dir)?;
            let out = out.unwrap_or(run_dir);
            write_exports(&state, &out)?;
            println!("{}", out.display());
        }
        Command::Report { run_dir } => {
            let state = replay_dir(&run_dir)?;
            print!("{}", state.leaderboard_csv());
        }
        Command::Verify { path } => {
            let file = if path.is_dir() { path.join(LOG_FILE) } else { path };
            let report = verify(&file)?;
            println!(
                "ok: {} events, last seq {}, {} torn bytes",
                report.events, report.last_seq, report.torn_bytes
            );
        }
        Command::Live {
            config,
            port,
            poll_secs,
        } => live(&config, &cli.data_root, port, poll_secs)?,
        Command::Serve { run_dirs, port } => {
            let registry = Arc::new(Registry::new());
            for dir in &run_dirs {
                api::register_replay(&registry, dir)?;
            }
            serve(registry, cli.data_root, port, None)?;
        }
        Command::Qc { annotations } => qc(&annotations)?,
    }
    Ok(())
}

fn config_base(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Runs a config against its recorded fixtures and returns the run directory.
pub fn run_fixture(config: &Path, data_root: &Path) -> anyhow::Result<PathBuf> {
    let cfg = RunConfig::load(config)?;
    let base = config_base(config);
    let market = cfg.load_market(&base)?;
    let env = cfg.replay_env(&base)?;
    let path = log_path(data_root, &cfg.run_id);
    let mut sink = FileLog::open(&path)?;
    if sink.last_seq() > 0 {
        bail!("{} already holds events; pick a new run_id or remove it", path.display());
    }
    run_session(cfg.plan()?, market, env, &mut sink)?;
    let dir = path.parent().expect("log path has a parent").to_path_buf();
    fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(|e| GatewayError::io(&dir, e))?;
    Ok(dir)
}

pub fn write_exports(state: &ArenaState, out: &Path) -> Result<(), GatewayError> {
    fs::create_dir_all(out).map_err(|e| GatewayError::io(out, e))?;
    for (name, body) in [
        ("metrics.csv", state.metrics_csv()),
        ("leaderboard.csv", state.leaderboard_csv()),
        ("returns.csv", state.returns_csv()),
    ] {
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| GatewayError::io(&path, e))?;
    }
    Ok(())
}

/// Environment for a live run: configured providers on the wall clock.
pub fn live_env(cfg: &RunConfig, base: &Path) -> Result<SessionEnv, GatewayError> {
    let providers = build_providers(cfg, &cfg.replies_dir(base))?;
    let summarizer = match &cfg.summarizer {
        Some(s) => {
            let p = providers
                .by_model
                .get(&s.model)
                .or(providers.default.as_ref())
                .cloned()
                .ok_or_else(|| GatewayError::Registry(format!("no provider for summarizer model `{}`", s.model)))?;
            Some((p, s.settings()))
        }
        None => None,
    };
    Ok(SessionEnv {
        providers,
        summarizer,
        scripts: cfg.scripts(base)?,
        clock: Arc::new(SystemClock),
    })
}

fn live(config: &Path, data_root: &Path, port: u16, poll_secs: u64) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config)?;
    let base = config_base(config);
    let market = cfg.load_market(&base)?;
    let env = live_env(&cfg, &base)?;
    let connectors = connectors_from_config(&cfg, &base)?;
    let registry = Arc::new(Registry::new());
    let path = log_path(data_root, &cfg.run_id);
    let runner = LiveRunner::new(&cfg, market, env, connectors, &path, registry.clone())?;
    let dir = path.parent().expect("log path has a parent");
    fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(|e| GatewayError::io(dir, e))?;
    let stop = runner.stop_flag();
    let worker = std::thread::spawn(move || runner.run(Duration::from_secs(poll_secs.max(1))));
    let served = serve(registry, data_root.to_path_buf(), port, Some(stop.clone()));
    stop.store(true, Ordering::SeqCst);
    match worker.join() {
        Ok(Ok(tick)) => tracing::info!(?tick, "live runner ended"),
        Ok(Err(e)) => tracing::error!(error = %e, "live runner failed"),
        Err(_) => tracing::error!("live runner panicked"),
    }
    served
}

fn serve(
    registry: Arc<Registry>,
    data_root: PathBuf,
    port: u16,
    stop: Option<Arc<std::sync::atomic::AtomicBool>>,
) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new().context("starting async runtime")?;
    rt.block_on(async move {
        let addr = SocketAddr::from(([0, 0, 0, 0], port));
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "serving");
        let app = api::router(AppState { registry, data_root });
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = tokio::signal::ctrl_c().await;
                if let Some(flag) = stop {
                    flag.store(true, Ordering::SeqCst);
                }
            })
            .await
            .context("http server")
    })
}

fn qc(path: &Path) -> anyhow::Result<()> {
    let scores = read_annotations(path)?;
    let (a, b) = pair_annotators(&scores)?;
    let report = agreement(&a, &b)?;
    let means = score_brief(&scores)?;
    println!("criterion,agreement_pct,mean_level");
    for c in Criterion::ALL {
        println!("{c},{:.1},{:.3}", 100.0 * report.get(c), means[&c]);
    }
    println!("items,{}", report.n_items);
    Ok(())
}
