use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "gdtbench", version, about = "GD&T extraction benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pair drawing images with ground-truth annotations into a manifest CSV.
    BuildManifest {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expand each record into 1, 2 or 4 records with distinct query templates.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        queries: usize,
        /// JSON array of query templates; the built-in pool when omitted.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic train/validation split at drawing granularity.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Balance the split across ground-truth entry counts.
        #[arg(long)]
        stratify: bool,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
    },
    /// Histogram of ground-truth entries per drawing, as CSV.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query an endpoint for every manifest record, writing `<id>.raw.txt`.
    Infer {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Turn raw outputs into canonical `<id>.json` plus `<id>.repair.json`.
    Repair {
        #[arg(long)]
        in_dir: PathBuf,
        #[arg(long, requires = "config")]
        llm_endpoint: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score predictions against ground truth, one JSON line per record.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Match whole frames one-to-one before counting pairs.
        #[arg(long)]
        strict_frames: bool,
    },
    /// Comparison table against the best baseline, plus per-run strata CSVs.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        /// Comma-separated run names (score file stems) to treat as baselines.
        #[arg(long, value_delimiter = ',', required = true)]
        baselines: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GDTB_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildManifest { images, annotations, out } => commands::build_manifest(&images, &annotations, &out),
        Command::Augment { manifest, queries, pool, seed, out } => {
            commands::augment(&manifest, queries, pool.as_deref(), seed, &out)
        }
        Command::Split { manifest, ratio, seed, stratify, train, val } => {
            commands::split(&manifest, ratio, seed, stratify, &train, &val)
        }
        Command::Stats { manifest, out } => commands::stats(&manifest, &out),
        Command::Infer { manifest, endpoint, config, out_dir } => {
            commands::infer(&manifest, &endpoint, &config, &out_dir)
        }
        Command::Repair { in_dir, llm_endpoint, config } => {
            commands::repair(&in_dir, llm_endpoint.as_deref(), config.as_deref())
        }
        Command::Score { manifest, pred_dir, out, strict_frames } => {
            commands::score(&manifest, &pred_dir, &out, strict_frames)
        }
        Command::Report { scores, baselines, out } => commands::report(&scores, &baselines, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
