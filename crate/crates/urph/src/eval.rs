//! Evaluation harness: exact ground truth, the m-Recall@K metric, a
//! random-hyperplane baseline, and a benchmark runner that tabulates recall
//! and timing for trained artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::codes::CodeSet;
use crate::data::{l2_normalize, read_fvecs, read_ivecs, FeatureSet, Preprocessing};
use crate::decoder::DecoderModel;
use crate::error::{Error, Result};
use crate::hashing::HashModel;
use crate::hnsw::HnswIndex;
use crate::matrix::DenseMatrix;
use crate::model_io::{fnv1a64, load_decoder, load_encoder};
use crate::scalar::Scalar;
use crate::search::{rerank_pool, verify_artifacts, SearchResult};

/// Exact nearest neighbours of each query in the original feature space,
/// ascending by `(Euclidean distance, id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    neighbor_ids: Vec<Vec<u32>>,
    /// Parallel distances when the truth was computed here; empty when it
    /// was loaded from an external id file.
    distances: Vec<Vec<f64>>,
}

impl GroundTruth {
    /// Wraps externally supplied id lists (for example a dataset's published
    /// ground-truth file). All lists must share one depth.
    pub fn from_id_lists(neighbor_ids: Vec<Vec<u32>>) -> Result<Self> {
        if let Some(first) = neighbor_ids.first() {
            let depth = first.len();
            if depth == 0 {
                return Err(Error::Config("ground truth lists are empty".into()));
            }
            if neighbor_ids.iter().any(|l| l.len() != depth) {
                return Err(Error::Config(
                    "ground truth lists have inconsistent depths".into(),
                ));
            }
        }
        Ok(Self {
            neighbor_ids,
            distances: Vec::new(),
        })
    }

    /// Reads an ivecs file of per-query neighbour ids.
    pub fn read_ivecs(path: &Path) -> Result<Self> {
        let rows = read_ivecs(path)?;
        let ids = rows
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| {
                        u32::try_from(v).map_err(|_| {
                            Error::Config(format!("negative id {v} in ground truth file"))
                        })
                    })
                    .collect::<Result<Vec<u32>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_id_lists(ids)
    }

    pub fn query_count(&self) -> usize {
        self.neighbor_ids.len()
    }

    /// Depth of the shortest per-query list (0 when there are no queries).
    pub fn depth(&self) -> usize {
        self.neighbor_ids.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn neighbors(&self, query: usize) -> &[u32] {
        &self.neighbor_ids[query]
    }

    /// Distances parallel to [`Self::neighbors`]; empty for external truth.
    pub fn neighbor_distances(&self, query: usize) -> &[f64] {
        self.distances.get(query).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Exhaustive Euclidean k-nearest-neighbour scan, the oracle every
/// approximate result is scored against. Ties break by ascending id;
/// distances accumulate in f64 regardless of the feature scalar.
pub fn brute_force_knn<T: Scalar>(
    base: &FeatureSet<T>,
    queries: &FeatureSet<T>,
    depth: usize,
) -> Result<GroundTruth> {
    if queries.count() > 0 && base.count() > 0 && base.dim() != queries.dim() {
        return Err(Error::Config(format!(
            "base features have {} components but queries have {}",
            base.dim(),
            queries.dim()
        )));
    }
    if depth == 0 {
        return Err(Error::Config("ground truth depth must be positive".into()));
    }
    let depth = depth.min(base.count());
    let per_query: Vec<(Vec<u32>, Vec<f64>)> = (0..queries.count())
        .into_par_iter()
        .map(|q| {
            let qrow = queries.row(q);
            let mut scored: Vec<(f64, u32)> = (0..base.count())
                .map(|i| {
                    let d = base
                        .row(i)
                        .iter()
                        .zip(qrow)
                        .map(|(&b, &a)| {
                            let diff = a.to_f64_lossy() - b.to_f64_lossy();
                            diff * diff
                        })
                        .sum::<f64>();
                    (d, i as u32)
                })
                .collect();
            scored.sort_by(|a, b| a.partial_cmp(b).expect("feature distances are finite"));
            scored.truncate(depth);
            (
                scored.iter().map(|&(_, id)| id).collect(),
                scored.iter().map(|&(d, _)| d.sqrt()).collect(),
            )
        })
        .collect();
    let (neighbor_ids, distances) = per_query.into_iter().unzip();
    Ok(GroundTruth {
        neighbor_ids,
        distances,
    })
}

/// Mean over queries of `|top-k retrieved ∩ true top-m| / m`.
pub fn m_recall_at_k(
    results: &[SearchResult],
    truth: &GroundTruth,
    m: usize,
    k: usize,
) -> Result<f64> {
    if m == 0 || k == 0 {
        return Err(Error::Config("m and k must be positive".into()));
    }
    if results.len() != truth.query_count() {
        return Err(Error::Config(format!(
            "{} result lists for {} ground-truth queries",
            results.len(),
            truth.query_count()
        )));
    }
    if results.is_empty() {
        return Ok(0.0);
    }
    if truth.depth() < m {
        return Err(Error::Config(format!(
            "ground truth depth {} is shallower than m = {m}",
            truth.depth()
        )));
    }
    let mut total = 0.0;
    for (q, result) in results.iter().enumerate() {
        let wanted = &truth.neighbors(q)[..m];
        let retrieved = &result.ids[..k.min(result.ids.len())];
        let hits = wanted
            .iter()
            .filter(|&&id| retrieved.contains(&(id as usize)))
            .count();
        total += hits as f64 / m as f64;
    }
    Ok(total / results.len() as f64)
}

/// Random-hyperplane signed-projection hashing, the untrained comparison
/// floor: each bit is the sign of the dot product with one random
/// unit-normal direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LshModel<T> {
    /// `(input_dim, bits)` projection matrix, one hyperplane per column.
    projections: DenseMatrix<T>,
    bits: u32,
    seed: u64,
}

impl<T: Scalar> LshModel<T> {
    pub fn new(input_dim: usize, bits: u32, seed: u64) -> Result<Self> {
        if input_dim == 0 || bits == 0 {
            return Err(Error::Config(
                "LSH needs a positive input dimension and bit count".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Hyperplanes sampled column-wise: each column is one unit-normal
        // direction. Sampling is done in f64 so every scalar type sees the
        // same directions.
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(bits as usize);
        for _ in 0..bits {
            let mut v: Vec<f64> = (0..input_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in &mut v {
                    *x /= norm;
                }
            }
            columns.push(v);
        }
        let mut data = Vec::with_capacity(input_dim * bits as usize);
        for row in 0..input_dim {
            for col in &columns {
                data.push(T::from_f64_lossy(col[row]));
            }
        }
        Ok(Self {
            projections: DenseMatrix::from_vec(input_dim, bits as usize, data),
            bits,
            seed,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn input_dim(&self) -> usize {
        self.projections.rows()
    }

    /// Stable identity for the hyperplane set, stored in emitted code sets.
    pub fn identity_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(24);
        bytes.extend_from_slice(b"lsh:");
        bytes.extend_from_slice(&(self.input_dim() as u32).to_le_bytes());
        bytes.extend_from_slice(&self.bits.to_le_bytes());
        bytes.extend_from_slice(&self.seed.to_le_bytes());
        fnv1a64(&bytes)
    }

    /// Signed projections: bit j of a row is 1 when the dot product with
    /// hyperplane j is non-negative.
    pub fn encode(&self, features: &FeatureSet<T>) -> Result<CodeSet> {
        if features.count() > 0 && features.dim() != self.input_dim() {
            return Err(Error::Config(format!(
                "features have {} components but the LSH hyperplanes expect {}",
                features.dim(),
                self.input_dim()
            )));
        }
        let projected = features.features().matmul(&self.projections);
        let mut codes = CodeSet::with_capacity(self.bits, features.count());
        let mut row_bits = vec![0u8; self.bits as usize];
        for i in 0..projected.rows() {
            for (j, b) in row_bits.iter_mut().enumerate() {
                *b = u8::from(projected.get(i, j) >= T::zero());
            }
            codes.push_bits(&row_bits)?;
        }
        codes.set_encoder_hash(self.identity_hash());
        Ok(codes)
    }
}

/// One trained artifact family to score.
#[derive(Debug, Clone)]
pub struct BenchmarkEntry {
    pub encoder: PathBuf,
    /// Enables the asymmetric (re-ranked) rows.
    pub decoder: Option<PathBuf>,
    pub index: PathBuf,
}

/// Inputs for [`run_benchmark`].
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    /// Base split (fvecs).
    pub base: PathBuf,
    /// Query split (fvecs).
    pub queries: PathBuf,
    /// Optional published ground truth (ivecs); computed exactly when absent.
    pub ground_truth: Option<PathBuf>,
    pub entries: Vec<BenchmarkEntry>,
    /// Candidate-pool size for the re-ranked rows.
    pub pool: usize,
    /// Seed for the baseline hyperplanes.
    pub lsh_seed: u64,
}

/// The recall ks every mode is scored at (m = 1 throughout).
pub const REPORT_KS: [usize; 3] = [1, 10, 100];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub bits: u32,
    pub hidden_layers: u8,
    pub mode: String,
    pub m: usize,
    pub k: usize,
    pub recall: f64,
    pub median_encode_us: u64,
    pub median_search_us: u64,
    pub median_rerank_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
}

impl BenchmarkReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "bits,hidden_layers,mode,m,k,recall,median_encode_us,median_search_us,median_rerank_us\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{},{},{}\n",
                r.bits,
                r.hidden_layers,
                r.mode,
                r.m,
                r.k,
                r.recall,
                r.median_encode_us,
                r.median_search_us,
                r.median_rerank_us
            ));
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::bytesio::write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::bytesio::write_atomic(path, self.to_json_string().as_bytes())
    }
}

fn median_us(mut samples: Vec<u64>) -> u64 {
    if samples.is_empty() {
        return 0;
    }
    samples.sort_unstable();
    samples[samples.len() / 2]
}

struct ModeOutcome {
    results: Vec<SearchResult>,
    median_encode_us: u64,
    median_search_us: u64,
    median_rerank_us: u64,
}

/// Sequential per-query timing + retrieval loop for one (model, index,
/// optional decoder) triple.
fn run_mode<T: Scalar>(
    model: &HashModel<T>,
    decoder: Option<&DecoderModel<T>>,
    index: &HnswIndex,
    queries: &FeatureSet<T>,
    k: usize,
    pool: usize,
) -> Result<ModeOutcome> {
    let mut results = Vec::with_capacity(queries.count());
    let mut encode_us = Vec::with_capacity(queries.count());
    let mut search_us = Vec::with_capacity(queries.count());
    let mut rerank_us = Vec::with_capacity(queries.count());
    let ef = index.params().ef_search;
    for q in 0..queries.count() {
        let row = queries.row(q).to_vec();

        let t = Instant::now();
        let code = model.encode_hard(&DenseMatrix::from_vec(1, row.len(), row.clone()))?;
        encode_us.push(t.elapsed().as_micros() as u64);

        let fetch = if decoder.is_some() { pool } else { k };
        let t = Instant::now();
        let hits = index.search(code.code(0), fetch, ef)?;
        search_us.push(t.elapsed().as_micros() as u64);

        let result = if let Some(dec) = decoder {
            let pool_ids: Vec<usize> = hits.iter().map(|h| h.id).collect();
            let t = Instant::now();
            let reranked = rerank_pool(dec, index.codes(), &row, &pool_ids, k.min(pool))?;
            rerank_us.push(t.elapsed().as_micros() as u64);
            reranked
        } else {
            SearchResult {
                mode: crate::search::SearchMode::Symmetric,
                ids: hits.iter().map(|h| h.id).collect(),
                distances: crate::search::SearchDistances::Hamming(
                    hits.iter().map(|h| h.distance).collect(),
                ),
            }
        };
        results.push(result);
    }
    Ok(ModeOutcome {
        results,
        median_encode_us: median_us(encode_us),
        median_search_us: median_us(search_us),
        median_rerank_us: median_us(rerank_us),
    })
}

fn recall_rows(
    bits: u32,
    hidden_layers: u8,
    mode: &str,
    outcome: &ModeOutcome,
    truth: &GroundTruth,
) -> Result<Vec<ReportRow>> {
    REPORT_KS
        .iter()
        .map(|&k| {
            Ok(ReportRow {
                bits,
                hidden_layers,
                mode: mode.to_string(),
                m: 1,
                k,
                recall: m_recall_at_k(&outcome.results, truth, 1, k)?,
                median_encode_us: outcome.median_encode_us,
                median_search_us: outcome.median_search_us,
                median_rerank_us: outcome.median_rerank_us,
            })
        })
        .collect()
}

/// Scores every configured artifact family — symmetric, re-ranked (when a
/// decoder is present), and an equal-bit random-hyperplane baseline — at
/// k ∈ {1, 10, 100} with m = 1, alongside median per-query timings.
pub fn run_benchmark<T: Scalar>(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if config.pool == 0 {
        return Err(Error::Config("candidate pool must be positive".into()));
    }
    let base_raw: FeatureSet<T> = read_fvecs(&config.base)?;
    let queries_raw: FeatureSet<T> = read_fvecs(&config.queries)?;
    if queries_raw.count() == 0 {
        return Ok(BenchmarkReport { rows: Vec::new() });
    }
    let mut rows = Vec::new();
    let k_max = *REPORT_KS.iter().max().expect("REPORT_KS is non-empty");
    let mut cached_truth: Option<(Preprocessing, GroundTruth)> = None;

    for entry in &config.entries {
        let (model, preprocessing) = load_encoder::<T>(&entry.encoder)?;
        let decoder = match &entry.decoder {
            Some(path) => {
                let (d, dec_pre) = load_decoder::<T>(path)?;
                if dec_pre != preprocessing {
                    return Err(Error::ArtifactMismatch(
                        "encoder and decoder disagree about preprocessing".into(),
                    ));
                }
                Some(d)
            }
            None => None,
        };
        let index = HnswIndex::load(&entry.index)?;
        verify_artifacts(&model, decoder.as_ref(), &index)?;

        let (base, queries) = match preprocessing {
            Preprocessing::None => (base_raw.clone(), queries_raw.clone()),
            Preprocessing::L2Normalized => {
                (l2_normalize(&base_raw)?, l2_normalize(&queries_raw)?)
            }
        };
        let truth = match &cached_truth {
            Some((p, t)) if *p == preprocessing => t.clone(),
            _ => {
                let t = match &config.ground_truth {
                    Some(path) => GroundTruth::read_ivecs(path)?,
                    None => brute_force_knn(&base, &queries, k_max)?,
                };
                cached_truth = Some((preprocessing, t.clone()));
                t
            }
        };

        let bits = model.code_bits();
        let hl = model.hidden_layers();

        let symmetric = run_mode(&model, None, &index, &queries, k_max, config.pool)?;
        rows.extend(recall_rows(bits, hl, "symmetric", &symmetric, &truth)?);

        if let Some(dec) = &decoder {
            let asymmetric = run_mode(&model, Some(dec), &index, &queries, k_max, config.pool)?;
            rows.extend(recall_rows(bits, hl, "asymmetric", &asymmetric, &truth)?);
        }

        let lsh = LshModel::<T>::new(base.dim(), bits, config.lsh_seed)?;
        let lsh_index = HnswIndex::build(lsh.encode(&base)?, *index.params(), config.lsh_seed)?;
        let lsh_outcome = run_lsh_mode(&lsh, &lsh_index, &queries, k_max)?;
        rows.extend(recall_rows(bits, 0, "lsh", &lsh_outcome, &truth)?);
    }
    Ok(BenchmarkReport { rows })
}

/// Timing + retrieval loop for the baseline (no trained encoder involved).
fn run_lsh_mode<T: Scalar>(
    lsh: &LshModel<T>,
    index: &HnswIndex,
    queries: &FeatureSet<T>,
    k: usize,
) -> Result<ModeOutcome> {
    let mut results = Vec::with_capacity(queries.count());
    let mut encode_us = Vec::with_capacity(queries.count());
    let mut search_us = Vec::with_capacity(queries.count());
    let ef = index.params().ef_search;
    for q in 0..queries.count() {
        let row = queries.row(q).to_vec();
        let single = FeatureSet::from_matrix(DenseMatrix::from_vec(1, row.len(), row));

        let t = Instant::now();
        let code = lsh.encode(&single)?;
        encode_us.push(t.elapsed().as_micros() as u64);

        let t = Instant::now();
        let hits = index.search(code.code(0), k, ef)?;
        search_us.push(t.elapsed().as_micros() as u64);

        results.push(SearchResult {
            mode: crate::search::SearchMode::Symmetric,
            ids: hits.iter().map(|h| h.id).collect(),
            distances: crate::search::SearchDistances::Hamming(
                hits.iter().map(|h| h.distance).collect(),
            ),
        });
    }
    Ok(ModeOutcome {
        results,
        median_encode_us: median_us(encode_us),
        median_search_us: median_us(search_us),
        median_rerank_us: 0,
    })
}
