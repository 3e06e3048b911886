//! `dualspace`: batch driver for extraction, validation, curation,
//! statistics, metric evaluation and the review service.

mod commands;
mod context;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use context::Context;

#[derive(Debug, Parser)]
#[command(name = "dualspace", version, about = "Dual-space image annotation toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Corpus root laid out as <root>/<scene>/<stem>.{jpg,jpeg,png,json}.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,
    /// Worker threads; 0 uses every core. Overrides `run.workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and manifests.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Compute everything but leave the corpus untouched.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Recompute perceptual features and write them into the paired JSONs.
    Extract,
    /// Check every annotation file against the schema.
    Validate,
    /// Score sharpness and apply the quality thresholds.
    Filter,
    /// Cluster near-duplicate images.
    Dedup(DedupArgs),
    /// Density grids, per-emotion summaries, composition and correlations.
    Stats(StatsArgs),
    /// Evaluate prediction files against a target file.
    Metrics(MetricsArgs),
    /// Serve the review queue over HTTP.
    ReviewServe(ServeArgs),
    /// Rebuild queue state from an audit log and check it against a snapshot.
    AuditReplay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    /// Overrides `curation.hamming_threshold`.
    #[arg(long)]
    hamming_threshold: Option<u32>,
    /// Cluster these embeddings (`<id> <dim>` header lines) instead of hashing images.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Overrides `curation.cosine_threshold`.
    #[arg(long)]
    cosine_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Overrides `stats.density_bins`.
    #[arg(long)]
    bins: Option<usize>,
    /// Pixels per cell in the heatmap PNGs.
    #[arg(long, default_value_t = 4)]
    heatmap_scale: u32,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Prediction file; repeat for several methods.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    #[arg(long)]
    target: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8787")]
    bind: SocketAddr,
    /// Defaults to <out>/audit.jsonl.
    #[arg(long)]
    audit_log: Option<PathBuf>,
    /// Defaults to <out>/queue_snapshot.json.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Origin allowed by CORS; any origin when absent.
    #[arg(long)]
    cors_origin: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    log: PathBuf,
    /// Snapshot the replayed state must equal.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = Context::new(&cli.global).and_then(|ctx| match cli.command {
        Command::Extract => commands::extract(&ctx),
        Command::Validate => commands::validate(&ctx),
        Command::Filter => commands::filter(&ctx),
        Command::Dedup(args) => commands::dedup(ctx, &args),
        Command::Stats(args) => commands::stats(ctx, &args),
        Command::Metrics(args) => commands::metrics(&ctx, &args),
        Command::ReviewServe(args) => commands::review_serve(&ctx, &args),
        Command::AuditReplay(args) => commands::audit_replay(&ctx, &args),
    });
    match result {
        Ok(outcome) => {
            for e in &outcome.errors {
                eprintln!("error: {e}");
            }
            if outcome.errors.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
