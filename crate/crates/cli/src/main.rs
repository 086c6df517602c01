//! `evochain`: ingest exports, build the evolution graph, query and serve it.
//!
//! Exit codes: 0 success, 1 fatal error, 2 not found.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use evochain_api::{router, AppState, LineageResponse, ServiceConfig};
use evochain_core::classify::ChangeConfig;
use evochain_core::corpus;
use evochain_core::explorer::{ClientConfig, ExplorerClient};
use evochain_core::graph::GraphStore;
use evochain_core::ingest::{write_rejections, Dataset, RecordKind};
use evochain_core::pipeline::{build_graph, BuildOptions};
use evochain_core::trace::SignatureTable;
use evochain_core::types::Address;
use serde_json::json;

const REJECTIONS_FILE: &str = "rejections.ndjson";

#[derive(Parser)]
#[command(name = "evochain", version, about = "Upgradeable proxy lineage toolkit")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize raw NDJSON exports into a dataset directory.
    Ingest(IngestArgs),
    /// Detect proxies, trace versions, classify changes and write a graph snapshot.
    Build(BuildArgs),
    /// Serve the HTTP API over a snapshot.
    Serve(ServeArgs),
    /// Print the version lineage of one proxy.
    Lineage(LineageArgs),
    /// Write a seeded synthetic corpus with ground-truth manifest.
    GenCorpus(GenCorpusArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    logs: Option<PathBuf>,
    #[arg(long)]
    creations: Option<PathBuf>,
    #[arg(long)]
    transactions: Option<PathBuf>,
    #[arg(long)]
    vulns: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    snapshot: PathBuf,
    /// Extra upgrade-event signatures, one JSON object per line.
    #[arg(long)]
    signatures: Option<PathBuf>,
    #[arg(long, default_value_t = evochain_core::classify::DEFAULT_GAS_THRESHOLD)]
    gas_threshold: f64,
    /// Offline source fixtures (`<address>.json`); no network access.
    #[arg(long, conflicts_with = "config")]
    sources: Option<PathBuf>,
    /// Service config whose `[explorer]` section configures live lookups.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for detection and tracing.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long)]
    listen: Option<std::net::SocketAddr>,
}

#[derive(Args)]
struct LineageArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    address: String,
    /// Aligned text table (default unless --json).
    #[arg(long, conflicts_with = "json")]
    table: bool,
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write the small two-proxy fixture instead of the full corpus.
    #[arg(long)]
    aba: bool,
}

enum Failure {
    NotFound(String),
    Fatal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Fatal(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();

    let json = cli.json;
    let outcome = match cli.command {
        Command::Ingest(a) => ingest(a, json).map_err(Failure::from),
        Command::Build(a) => build(a, json).map_err(Failure::from),
        Command::Serve(a) => serve(a).map_err(Failure::from),
        Command::Lineage(a) => lineage(a, json),
        Command::GenCorpus(a) => gen_corpus(a, json).map_err(Failure::from),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NotFound(msg)) => {
            eprintln!("evochain: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Fatal(e)) => {
            eprintln!("evochain: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values serialize"));
}

fn ingest(args: IngestArgs, json: bool) -> Result<()> {
    let files: Vec<(PathBuf, RecordKind)> = [
        (args.logs, RecordKind::Logs),
        (args.creations, RecordKind::Creations),
        (args.transactions, RecordKind::Transactions),
        (args.vulns, RecordKind::VulnFindings),
    ]
    .into_iter()
    .filter_map(|(p, k)| p.map(|p| (p, k)))
    .collect();
    if files.is_empty() {
        bail!("nothing to ingest: pass at least one of --logs, --creations, --transactions, --vulns");
    }
    for (path, _) in &files {
        if !path.is_file() {
            bail!("input file {} does not exist", path.display());
        }
    }

    let mut dataset = Dataset::new();
    let stats = dataset.ingest_files(&files)?;
    dataset.save_dir(&args.out).with_context(|| format!("writing dataset to {}", args.out.display()))?;
    let rejections: Vec<_> = stats.iter().flat_map(|s| s.rejections.iter().cloned()).collect();
    write_rejections(&args.out.join(REJECTIONS_FILE), &rejections)?;

    let digest = dataset.digest_hex();
    if json {
        let per_file: Vec<_> = files
            .iter()
            .zip(&stats)
            .map(|((path, kind), s)| json!({"file": path, "kind": kind.as_str(), "stats": s}))
            .collect();
        print_json(&json!({"dataset": args.out, "digest": digest, "files": per_file}));
    } else {
        for ((path, kind), s) in files.iter().zip(&stats) {
            println!(
                "{:<13} {}: read {}, accepted {}, rejected {}",
                kind.as_str(),
                path.display(),
                s.records_read,
                s.records_accepted,
                s.records_rejected
            );
            if let Some(first) = &s.first_error {
                println!("              first error: {first}");
            }
        }
        println!("dataset {} digest {digest}", args.out.display());
    }
    Ok(())
}

fn explorer_for_build(args: &BuildArgs) -> Result<Option<ExplorerClient>> {
    let config = if let Some(dir) = &args.sources {
        if !dir.is_dir() {
            bail!("source fixture directory {} does not exist", dir.display());
        }
        ClientConfig::offline(dir)
    } else if let Some(path) = &args.config {
        ServiceConfig::load(path)?.client_config()
    } else {
        tracing::warn!("no --sources or --config given; changes are classified without source diffs");
        return Ok(None);
    };
    Ok(Some(ExplorerClient::new(config)?))
}

fn build(args: BuildArgs, json: bool) -> Result<()> {
    if !(args.gas_threshold > 0.0 && args.gas_threshold < 1.0) {
        bail!("--gas-threshold must be in (0, 1), got {}", args.gas_threshold);
    }
    let dataset = Dataset::load_dir(&args.dataset).with_context(|| format!("loading dataset {}", args.dataset.display()))?;
    let mut signatures = SignatureTable::default();
    if let Some(path) = &args.signatures {
        signatures.extend_from_file(path)?;
    }
    let explorer = explorer_for_build(&args)?;
    let options = BuildOptions {
        signatures,
        change: ChangeConfig {
            gas_threshold: args.gas_threshold,
        },
        jobs: args.jobs,
    };
    let (store, report) = build_graph(&dataset, explorer.as_ref(), &options)?;
    let issues = store.audit();
    if !issues.is_empty() {
        bail!("built graph failed its integrity audit: {} issue(s), first: {}", issues.len(), issues[0].detail);
    }
    store.snapshot(&args.snapshot).with_context(|| format!("writing snapshot {}", args.snapshot.display()))?;

    let stats = store.stats();
    let digest = store.digest();
    if json {
        print_json(&json!({"snapshot": args.snapshot, "digest": digest, "stats": stats, "report": report}));
    } else {
        println!("scanned {} creations", report.creations_scanned);
        println!("proxies {}  versions {}  changes {}", stats.proxy_count, stats.version_count, report.changes);
        for (kind, n) in &stats.by_type {
            println!("  {kind:<20} {n}");
        }
        println!(
            "upgrade events {} (no-op {}, malformed {}), unattributed transactions {}",
            report.upgrade_events, report.noop_upgrades, report.malformed_events, report.unattributed_transactions
        );
        if report.transitions_without_source > 0 {
            println!("transitions classified without source: {}", report.transitions_without_source);
        }
        println!("snapshot {} digest {digest}", args.snapshot.display());
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    let snapshot = args
        .snapshot
        .clone()
        .or_else(|| config.snapshot.clone())
        .context("no snapshot given (--snapshot or `snapshot` in the config file)")?;
    let store = GraphStore::load(&snapshot).with_context(|| format!("loading snapshot {}", snapshot.display()))?;
    let explorer = Arc::new(ExplorerClient::new(config.client_config())?);
    let listen = args.listen.unwrap_or(config.listen);

    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .with_context(|| format!("cannot listen on {listen}"))?;
        let app = router(
            AppState {
                graph: store.into_shared(),
                explorer,
            },
            config.cors_origin.as_deref(),
        );
        eprintln!("evochain: serving {} on http://{}", snapshot.display(), listener.local_addr()?);
        evochain_api::serve(listener, app).await.context("server error")
    })
}

fn lineage(args: LineageArgs, json: bool) -> Result<(), Failure> {
    let address = Address::normalize(&args.address).map_err(|e| Failure::Fatal(e.into()))?;
    let store = GraphStore::load(&args.snapshot)
        .with_context(|| format!("loading snapshot {}", args.snapshot.display()))?;
    let lineage = store.get_lineage(&address);
    let Some(proxy) = lineage.proxy else {
        return Err(Failure::NotFound(format!("no proxy {address} in {}", args.snapshot.display())));
    };
    let response = LineageResponse {
        proxy,
        versions: lineage.items,
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&response).expect("lineage serializes"));
        return Ok(());
    }
    print!("{}", render_table(&response));
    Ok(())
}

fn render_table(lineage: &LineageResponse) -> String {
    let headers = ["version", "implementation", "created", "last_tx", "tx_count", "change"];
    let opt = |v: Option<u64>| v.map_or_else(|| "-".to_string(), |t| t.to_string());
    let rows: Vec<[String; 6]> = lineage
        .versions
        .iter()
        .map(|item| {
            let v = &item.version;
            let change = item.change.as_ref().map_or_else(
                || "-".to_string(),
                |c| c.categories.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(","),
            );
            [
                v.version_number.to_string(),
                v.contract_address.to_string(),
                opt(v.creation_timestamp),
                opt(v.last_tx_timestamp),
                v.total_transactions.to_string(),
                change,
            ]
        })
        .collect();
    let mut widths = headers.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[&str]| {
        let padded: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("{}\n", padded.join("  ").trim_end())
    };
    let mut out = format!("proxy {} ({})\n", lineage.proxy.address, lineage.proxy.proxy_type);
    out.push_str(&line(&headers));
    for row in &rows {
        out.push_str(&line(&row.each_ref().map(String::as_str)));
    }
    out
}

fn gen_corpus(args: GenCorpusArgs, json: bool) -> Result<()> {
    let corpus = if args.aba {
        corpus::aba_fixture()
    } else {
        corpus::generate(args.seed)
    };
    corpus.write(&args.out).with_context(|| format!("writing corpus to {}", args.out.display()))?;
    let m = &corpus.manifest;
    if json {
        print_json(&json!({
            "out": args.out,
            "seed": m.seed,
            "contracts": m.contracts,
            "proxies": m.proxies,
            "versions": m.versions,
            "dataset_digest": corpus.dataset.digest_hex(),
        }));
    } else {
        println!(
            "wrote {} contracts ({} proxies, {} versions) to {}",
            m.contracts,
            m.proxies,
            m.versions,
            args.out.display()
        );
    }
    Ok(())
}
