//! End-to-end tests of the compiled `urph` binary: every subcommand, the
//! documented error behaviors, config-file precedence, and byte-level
//! determinism of repeated seeded runs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn urph() -> Command {
    Command::new(env!("CARGO_BIN_EXE_urph"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(
        !out.status.success(),
        "command unexpectedly succeeded\nstdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Generates a small dataset and trains a matching encoder/decoder pair.
fn prepare(dir: &Path, seed: u64) -> (PathBuf, PathBuf, PathBuf) {
    let data = dir.join("data");
    run_ok(urph().args([
        "gen-synthetic",
        "--dim",
        "8",
        "--train-count",
        "300",
        "--base-count",
        "200",
        "--query-count",
        "12",
        "--clusters",
        "4",
        "--spread",
        "0.1",
        "--seed",
        "3",
        "--out-dir",
        data.to_str().unwrap(),
    ]));
    let encoder = dir.join("encoder.urph");
    let decoder = dir.join("decoder.urph");
    run_ok(urph().args([
        "train",
        "--train",
        data.join("train.fvecs").to_str().unwrap(),
        "--bits",
        "64",
        "--hidden-layers",
        "0",
        "--batch-size",
        "32",
        "--iterations",
        "60",
        "--decoder-iterations",
        "60",
        "--initial-lr",
        "0.01",
        "--seed",
        &seed.to_string(),
        "--out-encoder",
        encoder.to_str().unwrap(),
        "--out-decoder",
        decoder.to_str().unwrap(),
    ]));
    (data, encoder, decoder)
}

/// Encode → index → search with a given seed; returns the artifact paths.
fn encode_index_search(
    dir: &Path,
    data: &Path,
    encoder: &Path,
    decoder: &Path,
    tag: &str,
) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let codes = dir.join(format!("base-{tag}.urpc"));
    let index = dir.join(format!("base-{tag}.urpg"));
    let sym = dir.join(format!("sym-{tag}.jsonl"));
    let asym = dir.join(format!("asym-{tag}.jsonl"));
    run_ok(urph().args([
        "encode",
        "--model",
        encoder.to_str().unwrap(),
        "--input",
        data.join("base.fvecs").to_str().unwrap(),
        "--output",
        codes.to_str().unwrap(),
    ]));
    run_ok(urph().args([
        "build-index",
        "--codes",
        codes.to_str().unwrap(),
        "--output",
        index.to_str().unwrap(),
        "--seed",
        "11",
    ]));
    run_ok(urph().args([
        "search",
        "--model",
        encoder.to_str().unwrap(),
        "--index",
        index.to_str().unwrap(),
        "--queries",
        data.join("query.fvecs").to_str().unwrap(),
        "--mode",
        "symmetric",
        "--k",
        "10",
        "--output",
        sym.to_str().unwrap(),
    ]));
    run_ok(urph().args([
        "search",
        "--model",
        encoder.to_str().unwrap(),
        "--decoder",
        decoder.to_str().unwrap(),
        "--index",
        index.to_str().unwrap(),
        "--queries",
        data.join("query.fvecs").to_str().unwrap(),
        "--mode",
        "asymmetric",
        "--k",
        "10",
        "--pool",
        "25",
        "--output",
        asym.to_str().unwrap(),
    ]));
    (codes, index, sym, asym)
}

#[test]
fn pipeline_produces_valid_jsonl_and_eval_scores_it() {
    let dir = tempfile::tempdir().unwrap();
    let (data, encoder, decoder) = prepare(dir.path(), 5);
    let (_, _, sym, asym) = encode_index_search(dir.path(), &data, &encoder, &decoder, "a");

    for (path, mode) in [(&sym, "symmetric"), (&asym, "asymmetric")] {
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 12, "one line per query");
        for (q, line) in lines.iter().enumerate() {
            let v: serde_json::Value = serde_json::from_str(line).expect("valid JSON");
            assert_eq!(v["query_id"], q as u64);
            assert_eq!(v["mode"], mode);
            let ids = v["ids"].as_array().unwrap();
            assert_eq!(ids.len(), 10);
            for id in ids {
                assert!(id.as_u64().unwrap() < 200, "id within the base set");
            }
            let d = v["distances"].as_array().unwrap();
            assert_eq!(d.len(), 10);
            let vals: Vec<f64> = d.iter().map(|x| x.as_f64().unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[0] <= w[1]), "distances ascend");
        }
    }

    // Exact-scan evaluation prints one recall line per cutoff.
    let out = run_ok(urph().args([
        "eval",
        "--results",
        sym.to_str().unwrap(),
        "--base",
        data.join("base.fvecs").to_str().unwrap(),
        "--queries",
        data.join("query.fvecs").to_str().unwrap(),
        "--m",
        "1",
        "--k",
        "1,10",
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1-recall@1 = "), "{stdout}");
    assert!(stdout.contains("1-recall@10 = "), "{stdout}");
}

#[test]
fn asymmetric_mode_without_decoder_is_a_clear_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, encoder, decoder) = prepare(dir.path(), 5);
    let (_, index, _, _) = encode_index_search(dir.path(), &data, &encoder, &decoder, "a");

    let missing = dir.path().join("missing.jsonl");
    let stderr = run_err(urph().args([
        "search",
        "--model",
        encoder.to_str().unwrap(),
        "--index",
        index.to_str().unwrap(),
        "--queries",
        data.join("query.fvecs").to_str().unwrap(),
        "--mode",
        "asymmetric",
        "--output",
        missing.to_str().unwrap(),
    ]));
    assert!(stderr.contains("--decoder"), "names the missing flag: {stderr}");
    assert!(!missing.exists(), "no partial output left behind");
}

#[test]
fn mismatched_artifacts_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (data, encoder, decoder) = prepare(dir.path(), 5);
    let (_, index, _, _) = encode_index_search(dir.path(), &data, &encoder, &decoder, "a");

    // A differently seeded encoder must be refused by the index.
    let (_, foreign_encoder, _) = prepare(dir.path(), 99);
    let stderr = run_err(urph().args([
        "search",
        "--model",
        foreign_encoder.to_str().unwrap(),
        "--index",
        index.to_str().unwrap(),
        "--queries",
        data.join("query.fvecs").to_str().unwrap(),
        "--mode",
        "symmetric",
        "--output",
        dir.path().join("never.jsonl").to_str().unwrap(),
    ]));
    assert!(stderr.contains("artifact mismatch"), "{stderr}");
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (data, encoder, decoder) = prepare(dir.path(), 5);
    let (codes_a, index_a, sym_a, asym_a) =
        encode_index_search(dir.path(), &data, &encoder, &decoder, "a");
    let (codes_b, index_b, sym_b, asym_b) =
        encode_index_search(dir.path(), &data, &encoder, &decoder, "b");

    for (a, b) in [
        (&codes_a, &codes_b),
        (&index_a, &index_b),
        (&sym_a, &sym_b),
        (&asym_a, &asym_b),
    ] {
        let bytes_a = std::fs::read(a).unwrap();
        let bytes_b = std::fs::read(b).unwrap();
        assert!(bytes_a == bytes_b, "{} differs from {}", a.display(), b.display());
    }

    // Retraining with the same seed reproduces the model files too.
    let (_, encoder2, decoder2) = prepare(dir.path(), 5);
    assert_eq!(std::fs::read(&encoder).unwrap(), std::fs::read(&encoder2).unwrap());
    assert_eq!(std::fs::read(&decoder).unwrap(), std::fs::read(&decoder2).unwrap());
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "dim = 6\ntrain-count = 40\nbase-count = 30\nquery-count = 5\nclusters = 2\nseed = 1\n").unwrap();

    // dim comes from the file.
    let from_file = dir.path().join("from-file");
    run_ok(urph().args([
        "--config",
        cfg.to_str().unwrap(),
        "gen-synthetic",
        "--out-dir",
        from_file.to_str().unwrap(),
    ]));
    // dim overridden by the flag.
    let from_flag = dir.path().join("from-flag");
    run_ok(urph().args([
        "--config",
        cfg.to_str().unwrap(),
        "gen-synthetic",
        "--dim",
        "9",
        "--out-dir",
        from_flag.to_str().unwrap(),
    ]));

    // An fvecs record starts with its little-endian int32 dimension.
    let dim_of = |p: PathBuf| {
        let bytes = std::fs::read(p).unwrap();
        i32::from_le_bytes(bytes[..4].try_into().unwrap())
    };
    assert_eq!(dim_of(from_file.join("train.fvecs")), 6);
    assert_eq!(dim_of(from_flag.join("train.fvecs")), 9);

    // A malformed config is a one-line error.
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "dim 6\n").unwrap();
    let stderr = run_err(urph().args([
        "--config",
        bad.to_str().unwrap(),
        "gen-synthetic",
        "--out-dir",
        dir.path().join("never").to_str().unwrap(),
    ]));
    assert!(stderr.contains("key = value"), "{stderr}");
}

#[test]
fn out_dir_env_var_is_the_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (data, encoder, _) = prepare(dir.path(), 5);
    let out_dir = dir.path().join("artifacts");
    std::fs::create_dir_all(&out_dir).unwrap();
    run_ok(
        urph()
            .env("URPH_OUT_DIR", &out_dir)
            .args([
                "encode",
                "--model",
                encoder.to_str().unwrap(),
                "--input",
                data.join("base.fvecs").to_str().unwrap(),
            ]),
    );
    assert!(out_dir.join("codes.urpc").exists());
}

#[test]
fn bench_writes_a_report_comparing_against_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let (data, encoder, decoder) = prepare(dir.path(), 5);
    let (codes, index, _, _) = encode_index_search(dir.path(), &data, &encoder, &decoder, "a");
    drop(codes);

    let csv = dir.path().join("report.csv");
    let entry = format!(
        "{},{},{}",
        encoder.display(),
        index.display(),
        decoder.display()
    );
    let out = run_ok(urph().args([
        "bench",
        "--base",
        data.join("base.fvecs").to_str().unwrap(),
        "--queries",
        data.join("query.fvecs").to_str().unwrap(),
        "--entry",
        &entry,
        "--pool",
        "25",
        "--lsh-seed",
        "7",
        "--out-csv",
        csv.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("bits,hidden_layers,mode,m,k,recall"), "{stdout}");

    let text = std::fs::read_to_string(&csv).unwrap();
    // Header plus symmetric, asymmetric, and baseline rows at k = 1, 10, 100.
    assert_eq!(text.lines().count(), 10, "{text}");
    assert!(text.contains(",symmetric,"));
    assert!(text.contains(",asymmetric,"));
    assert!(text.contains(",lsh,"));
}
