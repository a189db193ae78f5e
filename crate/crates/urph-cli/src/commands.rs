//! One function per subcommand. Each is a pure function of its inputs plus
//! the seed: it reads files, runs the library, and writes files atomically,
//! so a failed run leaves no partial outputs behind.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use urph::data::{
    generate_synthetic, l2_normalize, read_bvecs, read_fvecs, write_fvecs, FeatureSet,
    Preprocessing, SyntheticConfig,
};
use urph::decoder::{train_joint_then_decoder, write_decoder_log, DecoderConfig};
use urph::eval::{brute_force_knn, m_recall_at_k, run_benchmark, BenchmarkConfig, BenchmarkEntry, GroundTruth};
use urph::hashing::{write_training_log, TrainConfig};
use urph::hnsw::{HnswIndex, HnswParams};
use urph::model_io::{load_decoder, load_encoder, save_decoder, save_encoder};
use urph::nn::SgdSchedule;
use urph::search::{
    read_results_jsonl, search_asymmetric_batch, search_symmetric_batch, verify_artifacts,
    write_results_jsonl, SearchMode,
};
use urph::codes::CodeSet;

/// Reads a feature file by extension: `.fvecs` as float32 records, `.bvecs`
/// as uint8 records widened to floats.
fn read_features(path: &Path) -> Result<FeatureSet<f32>> {
    let loaded = match path.extension().and_then(|e| e.to_str()) {
        Some("fvecs") => read_fvecs(path),
        Some("bvecs") => read_bvecs(path),
        other => bail!(
            "{}: unsupported feature file extension {:?} (expected .fvecs or .bvecs)",
            path.display(),
            other.unwrap_or("none")
        ),
    };
    loaded.with_context(|| format!("cannot load features from {}", path.display()))
}

fn apply_preprocessing(features: FeatureSet<f32>, p: Preprocessing) -> Result<FeatureSet<f32>> {
    match p {
        Preprocessing::None => Ok(features),
        Preprocessing::L2Normalized => Ok(l2_normalize(&features)?),
    }
}

/// Write-then-rename, so an interrupted command never leaves a torn file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| format!("{n}.tmp"))
        .unwrap_or_else(|| "out.tmp".into());
    let tmp = path.with_file_name(name);
    std::fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move {} into place", tmp.display()))
}

pub struct GenSyntheticArgs {
    pub dim: usize,
    pub train_count: usize,
    pub base_count: usize,
    pub query_count: usize,
    pub clusters: usize,
    pub spread: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub fn cmd_gen_synthetic(args: &GenSyntheticArgs) -> Result<()> {
    let data = generate_synthetic::<f32>(&SyntheticConfig {
        dim: args.dim,
        train_count: args.train_count,
        base_count: args.base_count,
        query_count: args.query_count,
        cluster_count: args.clusters,
        spread: args.spread,
        seed: args.seed,
    })?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    for (name, split) in [
        ("train.fvecs", &data.train),
        ("base.fvecs", &data.base),
        ("query.fvecs", &data.query),
    ] {
        write_fvecs(&args.out_dir.join(name), split.features())?;
    }
    println!(
        "wrote train/base/query fvecs ({}/{}/{} x {}) to {}",
        args.train_count,
        args.base_count,
        args.query_count,
        args.dim,
        args.out_dir.display()
    );
    Ok(())
}

pub struct TrainArgs {
    pub train: PathBuf,
    pub l2_normalize: bool,
    pub bits: u32,
    pub hidden_layers: u8,
    pub batch_size: usize,
    pub iterations: u64,
    pub decoder_iterations: u64,
    pub initial_lr: f64,
    pub decay_rate: f64,
    pub decay_every: u64,
    pub seed: u64,
    pub out_encoder: PathBuf,
    pub out_decoder: PathBuf,
    pub log_dir: Option<PathBuf>,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let preprocessing = if args.l2_normalize {
        Preprocessing::L2Normalized
    } else {
        Preprocessing::None
    };
    let trainset = apply_preprocessing(read_features(&args.train)?, preprocessing)?;

    let hash_config = TrainConfig {
        code_bits: args.bits,
        hidden_layers: args.hidden_layers,
        batch_size: args.batch_size,
        iterations: args.iterations,
        schedule: SgdSchedule {
            initial_lr: args.initial_lr,
            decay_rate: args.decay_rate,
            decay_every: args.decay_every,
        },
        seed: args.seed,
    };
    let decoder_config = DecoderConfig {
        iterations: args.decoder_iterations,
    };
    let (model, decoder, logs) = train_joint_then_decoder(&trainset, &hash_config, &decoder_config)?;

    save_encoder(&args.out_encoder, &model, preprocessing)?;
    save_decoder(&args.out_decoder, &decoder, preprocessing)?;
    if let Some(dir) = &args.log_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write_training_log(&dir.join("train-hash.csv"), &logs.hash)?;
        write_decoder_log(&dir.join("train-decoder.csv"), &logs.decoder)?;
    }
    println!(
        "trained {}-bit encoder ({} hidden) on {} vectors; wrote {} and {}",
        args.bits,
        args.hidden_layers,
        trainset.count(),
        args.out_encoder.display(),
        args.out_decoder.display()
    );
    Ok(())
}

pub struct EncodeArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    pub output: PathBuf,
}

pub fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let (model, preprocessing) = load_encoder::<f32>(&args.model)?;
    let features = apply_preprocessing(read_features(&args.input)?, preprocessing)?;
    let mut codes = model.encode_hard(features.features())?;
    codes.set_encoder_hash(model.identity_hash());
    codes.save(&args.output)?;
    println!(
        "encoded {} vectors into {}-bit codes at {}",
        codes.len(),
        codes.bits(),
        args.output.display()
    );
    Ok(())
}

pub struct BuildIndexArgs {
    pub codes: PathBuf,
    pub output: PathBuf,
    pub max_m: usize,
    pub max_m0: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

pub fn cmd_build_index(args: &BuildIndexArgs) -> Result<()> {
    let codes = CodeSet::load(&args.codes)?;
    let params = HnswParams {
        max_m: args.max_m,
        max_m0: args.max_m0,
        ef_construction: args.ef_construction,
        ef_search: args.ef_search,
        ..HnswParams::default()
    };
    let index = HnswIndex::build(codes, params, args.seed)?;
    index.save(&args.output)?;
    println!(
        "built graph over {} codes (maxM {}, maxM0 {}, efConstruction {}) at {}",
        index.codes().len(),
        args.max_m,
        args.max_m0,
        args.ef_construction,
        args.output.display()
    );
    Ok(())
}

pub struct SearchArgs {
    pub model: PathBuf,
    pub decoder: Option<PathBuf>,
    pub index: PathBuf,
    pub queries: PathBuf,
    pub mode: SearchMode,
    pub k: usize,
    pub pool: usize,
    pub output: PathBuf,
}

pub fn cmd_search(args: &SearchArgs) -> Result<()> {
    let (model, preprocessing) = load_encoder::<f32>(&args.model)?;
    let index = HnswIndex::load(&args.index)?;
    let queries = apply_preprocessing(read_features(&args.queries)?, preprocessing)?;

    let results = match args.mode {
        SearchMode::Symmetric => {
            verify_artifacts(&model, None, &index)?;
            search_symmetric_batch(&model, &index, &queries, args.k)?
        }
        SearchMode::Asymmetric => {
            let Some(decoder_path) = &args.decoder else {
                bail!("asymmetric search needs --decoder (the trained reconstruction model)");
            };
            let (decoder, decoder_preprocessing) = load_decoder::<f32>(decoder_path)?;
            if decoder_preprocessing != preprocessing {
                bail!(
                    "decoder {} records preprocessing {:?} but encoder {} records {:?}",
                    decoder_path.display(),
                    decoder_preprocessing,
                    args.model.display(),
                    preprocessing
                );
            }
            verify_artifacts(&model, Some(&decoder), &index)?;
            search_asymmetric_batch(&model, &decoder, &index, &queries, args.k, args.pool)?
        }
    };
    write_results_jsonl(&args.output, &results)?;
    println!(
        "searched {} queries ({:?} mode, k {}) into {}",
        queries.count(),
        args.mode,
        args.k,
        args.output.display()
    );
    Ok(())
}

pub struct EvalArgs {
    pub results: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub base: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub m: usize,
    pub ks: Vec<usize>,
    pub output: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let results = read_results_jsonl(&args.results)?;
    let truth = match (&args.ground_truth, &args.base) {
        (Some(gt), _) => GroundTruth::read_ivecs(gt)?,
        (None, Some(base)) => {
            let Some(queries) = &args.queries else {
                bail!("computing ground truth from --base also needs --queries");
            };
            let base = read_features(base)?;
            let queries = read_features(queries)?;
            brute_force_knn(&base, &queries, args.m)?
        }
        (None, None) => bail!("need either --ground-truth (ivecs) or --base + --queries (fvecs)"),
    };

    let mut lines = Vec::new();
    for &k in &args.ks {
        let recall = m_recall_at_k(&results, &truth, args.m, k)?;
        println!("{}-recall@{k} = {recall:.6}", args.m);
        lines.push(format!("{},{k},{recall:.6}", args.m));
    }
    if let Some(out) = &args.output {
        let mut csv = String::from("m,k,recall\n");
        for line in &lines {
            csv.push_str(line);
            csv.push('\n');
        }
        write_atomic(out, csv.as_bytes())?;
    }
    Ok(())
}

pub struct BenchArgs {
    pub base: PathBuf,
    pub queries: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub entries: Vec<String>,
    pub pool: usize,
    pub lsh_seed: u64,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
}

/// Parses `encoder.urph,index.urpg[,decoder.urph]` into a benchmark entry.
fn parse_entry(raw: &str) -> Result<BenchmarkEntry> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [encoder, index] => Ok(BenchmarkEntry {
            encoder: PathBuf::from(encoder),
            decoder: None,
            index: PathBuf::from(index),
        }),
        [encoder, index, decoder] => Ok(BenchmarkEntry {
            encoder: PathBuf::from(encoder),
            decoder: Some(PathBuf::from(decoder)),
            index: PathBuf::from(index),
        }),
        _ => bail!(
            "--entry must be `encoder.urph,index.urpg` or `encoder.urph,index.urpg,decoder.urph`, got `{raw}`"
        ),
    }
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.entries.is_empty() {
        bail!("need at least one --entry (encoder.urph,index.urpg[,decoder.urph])");
    }
    let entries = args
        .entries
        .iter()
        .map(|raw| parse_entry(raw))
        .collect::<Result<Vec<_>>>()?;
    let config = BenchmarkConfig {
        base: args.base.clone(),
        queries: args.queries.clone(),
        ground_truth: args.ground_truth.clone(),
        entries,
        pool: args.pool,
        lsh_seed: args.lsh_seed,
    };
    let report = run_benchmark::<f32>(&config)?;
    print!("{}", report.to_csv_string());
    if let Some(path) = &args.out_csv {
        report.write_csv(path)?;
    }
    if let Some(path) = &args.out_json {
        report.write_json(path)?;
    }
    Ok(())
}
