//! `urph` — binary-hash retrieval pipeline.
//!
//! Subcommands cover the whole workflow: generate or load data, train the
//! encoder/decoder pair, encode a base set, build the Hamming graph, search
//! it, and score results. Every command is deterministic given its inputs
//! and `--seed`; outputs are written atomically so failures leave nothing
//! half-written behind.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::*;
use config::{out_path, RunConfig};
use urph::search::SearchMode;

#[derive(Parser)]
#[command(
    name = "urph",
    version,
    about = "Train, encode, index, search, and evaluate binary hash codes"
)]
struct Cli {
    /// Flat key-value config file (`key = value`, keys spelled like the long
    /// flags); explicit flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (0 = all cores). Defaults to 1 for `train`, all cores
    /// otherwise.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Symmetric,
    Asymmetric,
}

impl From<ModeArg> for SearchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Symmetric => SearchMode::Symmetric,
            ModeArg::Asymmetric => SearchMode::Asymmetric,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic train/base/query dataset as fvecs files.
    GenSynthetic {
        /// Feature dimensionality.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        train_count: Option<usize>,
        #[arg(long)]
        base_count: Option<usize>,
        #[arg(long)]
        query_count: Option<usize>,
        /// Number of Gaussian mixture components.
        #[arg(long)]
        clusters: Option<usize>,
        /// Per-component noise standard deviation around each center.
        #[arg(long)]
        spread: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for train.fvecs / base.fvecs / query.fvecs.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train the hash encoder and its feature-reconstruction decoder.
    Train {
        /// Training features (.fvecs or .bvecs).
        #[arg(long)]
        train: PathBuf,
        /// l2-normalize features first (recorded in the model files; encode
        /// and search then apply the same preprocessing automatically).
        #[arg(long)]
        l2_normalize: bool,
        /// Code length M in bits (multiple of 64).
        #[arg(long)]
        bits: Option<u32>,
        #[arg(long)]
        hidden_layers: Option<u8>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Phase-1 (encoder) SGD iterations.
        #[arg(long)]
        iterations: Option<u64>,
        /// Phase-2 (decoder) SGD iterations.
        #[arg(long)]
        decoder_iterations: Option<u64>,
        #[arg(long)]
        initial_lr: Option<f64>,
        #[arg(long)]
        decay_rate: Option<f64>,
        #[arg(long)]
        decay_every: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_encoder: Option<PathBuf>,
        #[arg(long)]
        out_decoder: Option<PathBuf>,
        /// Write per-iteration loss CSVs here.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Encode a feature file into packed binary codes with a trained encoder.
    Encode {
        #[arg(long)]
        model: PathBuf,
        /// Features to encode (.fvecs or .bvecs).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build the layered Hamming-space graph over a code file.
    BuildIndex {
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        max_m: Option<usize>,
        #[arg(long)]
        max_m0: Option<usize>,
        #[arg(long)]
        ef_construction: Option<usize>,
        /// Search-time candidate buffer width stored with the index.
        #[arg(long)]
        ef_search: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Search an index: symmetric (code vs code) or asymmetric (query
    /// feature vs decoder reconstruction, re-ranking a candidate pool).
    Search {
        #[arg(long)]
        model: PathBuf,
        /// Required for --mode asymmetric.
        #[arg(long)]
        decoder: Option<PathBuf>,
        #[arg(long)]
        index: PathBuf,
        /// Query features (.fvecs or .bvecs).
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Results per query.
        #[arg(long)]
        k: Option<usize>,
        /// Candidate-pool size re-ranked in asymmetric mode.
        #[arg(long)]
        pool: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a results file: m-recall@k against ground truth (ivecs) or
    /// against an exact scan of the base set.
    Eval {
        /// Results JSONL produced by `search`.
        #[arg(long)]
        results: PathBuf,
        /// Published ground truth (ivecs).
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Base features; ground truth is computed exactly from these.
        #[arg(long)]
        base: Option<PathBuf>,
        /// Query features (required with --base).
        #[arg(long)]
        queries: Option<PathBuf>,
        /// How many true neighbors count (m of m-recall@k).
        #[arg(long)]
        m: Option<usize>,
        /// Cutoffs k, comma separated.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Also write the table as CSV here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare trained artifact families against the random-hyperplane
    /// baseline on one dataset; emits a recall/latency report.
    Bench {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// `encoder.urph,index.urpg[,decoder.urph]`; repeatable.
        #[arg(long)]
        entry: Vec<String>,
        #[arg(long)]
        pool: Option<usize>,
        /// Seed for the baseline hyperplanes.
        #[arg(long)]
        lsh_seed: Option<u64>,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;

    // Training defaults to one thread (the reference schedule is single-core
    // and reproducibility reports assume it); everything else uses all cores.
    // 0 means "let the pool pick", i.e. all cores.
    let default_threads = match cli.command {
        Command::Train { .. } => 1,
        _ => 0,
    };
    let threads = cfg.resolve(cli.threads, "threads", default_threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .expect("rayon pool initialized once");

    match cli.command {
        Command::GenSynthetic {
            dim,
            train_count,
            base_count,
            query_count,
            clusters,
            spread,
            seed,
            out_dir,
        } => cmd_gen_synthetic(&GenSyntheticArgs {
            dim: cfg.resolve(dim, "dim", 64)?,
            train_count: cfg.resolve(train_count, "train-count", 10_000)?,
            base_count: cfg.resolve(base_count, "base-count", 10_000)?,
            query_count: cfg.resolve(query_count, "query-count", 1_000)?,
            clusters: cfg.resolve(clusters, "clusters", 10)?,
            spread: cfg.resolve(spread, "spread", 0.1)?,
            seed: cfg.resolve(seed, "seed", 0)?,
            out_dir: cfg
                .resolve_opt(out_dir, "out-dir")?
                .unwrap_or_else(config::default_out_dir),
        }),
        Command::Train {
            train,
            l2_normalize,
            bits,
            hidden_layers,
            batch_size,
            iterations,
            decoder_iterations,
            initial_lr,
            decay_rate,
            decay_every,
            seed,
            out_encoder,
            out_decoder,
            log_dir,
        } => cmd_train(&TrainArgs {
            train,
            l2_normalize: cfg.resolve(l2_normalize.then_some(true), "l2-normalize", false)?,
            bits: cfg.resolve(bits, "bits", 128)?,
            hidden_layers: cfg.resolve(hidden_layers, "hidden-layers", 1)?,
            batch_size: cfg.resolve(batch_size, "batch-size", 512)?,
            iterations: cfg.resolve(iterations, "iterations", 50_000)?,
            decoder_iterations: cfg.resolve(decoder_iterations, "decoder-iterations", 50_000)?,
            initial_lr: cfg.resolve(initial_lr, "initial-lr", 0.001)?,
            decay_rate: cfg.resolve(decay_rate, "decay-rate", 0.97)?,
            decay_every: cfg.resolve(decay_every, "decay-every", 5_000)?,
            seed: cfg.resolve(seed, "seed", 0)?,
            out_encoder: out_path(cfg.resolve_opt(out_encoder, "out-encoder")?, "encoder.urph"),
            out_decoder: out_path(cfg.resolve_opt(out_decoder, "out-decoder")?, "decoder.urph"),
            log_dir: cfg.resolve_opt(log_dir, "log-dir")?,
        }),
        Command::Encode { model, input, output } => cmd_encode(&EncodeArgs {
            model,
            input,
            output: out_path(cfg.resolve_opt(output, "output")?, "codes.urpc"),
        }),
        Command::BuildIndex {
            codes,
            output,
            max_m,
            max_m0,
            ef_construction,
            ef_search,
            seed,
        } => cmd_build_index(&BuildIndexArgs {
            codes,
            output: out_path(cfg.resolve_opt(output, "output")?, "index.urpg"),
            max_m: cfg.resolve(max_m, "max-m", 32)?,
            max_m0: cfg.resolve(max_m0, "max-m0", 64)?,
            ef_construction: cfg.resolve(ef_construction, "ef-construction", 200)?,
            ef_search: cfg.resolve(ef_search, "ef-search", 1024)?,
            seed: cfg.resolve(seed, "seed", 0)?,
        }),
        Command::Search {
            model,
            decoder,
            index,
            queries,
            mode,
            k,
            pool,
            output,
        } => cmd_search(&SearchArgs {
            model,
            decoder,
            index,
            queries,
            mode: mode.into(),
            k: cfg.resolve(k, "k", 100)?,
            pool: cfg.resolve(pool, "pool", 100)?,
            output: out_path(cfg.resolve_opt(output, "output")?, "results.jsonl"),
        }),
        Command::Eval {
            results,
            ground_truth,
            base,
            queries,
            m,
            k,
            output,
        } => cmd_eval(&EvalArgs {
            results,
            ground_truth,
            base,
            queries,
            m: cfg.resolve(m, "m", 1)?,
            ks: cfg.resolve_opt(k.map(Ks), "k")?.unwrap_or(Ks(vec![1, 10, 100])).0,
            output,
        }),
        Command::Bench {
            base,
            queries,
            ground_truth,
            entry,
            pool,
            lsh_seed,
            out_csv,
            out_json,
        } => cmd_bench(&BenchArgs {
            base,
            queries,
            ground_truth,
            entries: entry,
            pool: cfg.resolve(pool, "pool", 100)?,
            lsh_seed: cfg.resolve(lsh_seed, "lsh-seed", 0)?,
            out_csv,
            out_json,
        }),
    }
}

/// Comma-separated cutoff list, parseable from a config-file value.
#[derive(Clone)]
struct Ks(Vec<usize>);

impl std::str::FromStr for Ks {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Ks)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
