//! End-to-end query answering.
//!
//! Symmetric search encodes the query and walks the graph under Hamming
//! distance. Asymmetric search takes the symmetric candidate pool,
//! reconstructs each candidate's feature vector from its code alone, and
//! re-ranks the pool by the real-valued Euclidean distance between the query
//! and those reconstructions — the database never keeps original features.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::CodeSet;
use crate::data::FeatureSet;
use crate::decoder::DecoderModel;
use crate::error::{Error, Result};
use crate::hashing::HashModel;
use crate::hnsw::HnswIndex;
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;

/// Default candidate-pool size feeding the re-ranking stage.
pub const DEFAULT_POOL: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Symmetric,
    Asymmetric,
}

/// Ranked answer for one query: candidate ids ascending by distance, with
/// the distances themselves — integer Hamming for symmetric search, real
/// Euclidean for asymmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub mode: SearchMode,
    pub ids: Vec<usize>,
    pub distances: SearchDistances,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchDistances {
    Hamming(Vec<u32>),
    Euclidean(Vec<f64>),
}

impl SearchDistances {
    pub fn len(&self) -> usize {
        match self {
            SearchDistances::Hamming(d) => d.len(),
            SearchDistances::Euclidean(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SearchResult {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Refuses an index whose codes did not come from `model`.
fn check_model_index<T: Scalar>(model: &HashModel<T>, index: &HnswIndex) -> Result<()> {
    if index.codes().bits() != model.code_bits() {
        return Err(Error::ArtifactMismatch(format!(
            "index stores {}-bit codes but the encoder emits {} bits",
            index.codes().bits(),
            model.code_bits()
        )));
    }
    let bound = index.codes().encoder_hash();
    if bound != 0 && bound != model.identity_hash() {
        return Err(Error::ArtifactMismatch(format!(
            "index codes were produced by encoder {bound:016x}, not by this encoder ({:016x})",
            model.identity_hash()
        )));
    }
    Ok(())
}

fn check_query_dim<T: Scalar>(model: &HashModel<T>, query: &[T]) -> Result<()> {
    if query.len() != model.input_dim() {
        return Err(Error::Config(format!(
            "query has {} components but the encoder expects {}",
            query.len(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Encodes one query with the trained encoder and returns its packed words.
fn encode_query<T: Scalar>(model: &HashModel<T>, query: &[T]) -> Result<Vec<u64>> {
    let row = DenseMatrix::from_vec(1, query.len(), query.to_vec());
    let codes = model.encode_hard(&row)?;
    Ok(codes.code(0).to_vec())
}

/// Two-sided binary search: encode the query, walk the graph, return the
/// `k` nearest stored codes by Hamming distance. The graph's configured
/// search buffer is used (raised to `k` when `k` is larger).
pub fn search_symmetric<T: Scalar>(
    model: &HashModel<T>,
    index: &HnswIndex,
    query: &[T],
    k: usize,
) -> Result<SearchResult> {
    check_model_index(model, index)?;
    check_query_dim(model, query)?;
    let words = encode_query(model, query)?;
    let hits = index.search(&words, k, index.params().ef_search)?;
    Ok(SearchResult {
        mode: SearchMode::Symmetric,
        ids: hits.iter().map(|h| h.id).collect(),
        distances: SearchDistances::Hamming(hits.iter().map(|h| h.distance).collect()),
    })
}

/// Euclidean distance between a query row and one reconstructed row,
/// accumulated in f64.
fn asymmetric_distance<T: Scalar>(query: &[T], reconstructed: &[T]) -> f64 {
    query
        .iter()
        .zip(reconstructed)
        .map(|(&q, &r)| {
            let d = q.to_f64_lossy() - r.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Reconstruct-and-re-rank search: pull a `pool`-sized candidate set with
/// symmetric search, decode each candidate's stored code back into feature
/// space, and re-rank the pool by real Euclidean distance to the query.
/// Ties keep their Hamming-pool order, and the returned ids are always a
/// subset of the pool.
pub fn search_asymmetric<T: Scalar>(
    model: &HashModel<T>,
    decoder: &DecoderModel<T>,
    index: &HnswIndex,
    query: &[T],
    k_final: usize,
    pool: usize,
) -> Result<SearchResult> {
    if k_final > pool {
        return Err(Error::Config(format!(
            "k_final ({k_final}) cannot exceed the candidate pool size ({pool})"
        )));
    }
    check_decoder_pair(model, decoder)?;
    let symmetric = search_symmetric(model, index, query, pool)?;
    rerank_pool(decoder, index.codes(), query, &symmetric.ids, k_final)
}

/// Refuses a decoder that was not trained against `model`.
fn check_decoder_pair<T: Scalar>(model: &HashModel<T>, decoder: &DecoderModel<T>) -> Result<()> {
    if decoder.code_bits() != model.code_bits() || decoder.output_dim() != model.input_dim() {
        return Err(Error::ArtifactMismatch(format!(
            "decoder maps {} bits to {} components but the encoder is {} -> {} bits",
            decoder.code_bits(),
            decoder.output_dim(),
            model.input_dim(),
            model.code_bits()
        )));
    }
    let partner = decoder.partner_hash();
    if partner != 0 && partner != model.identity_hash() {
        return Err(Error::ArtifactMismatch(format!(
            "decoder was trained against encoder {partner:016x}, not this encoder ({:016x})",
            model.identity_hash()
        )));
    }
    Ok(())
}

/// Checks that the encoder, optional decoder, and index form one coherent
/// artifact family before any of them are used together.
pub fn verify_artifacts<T: Scalar>(
    model: &HashModel<T>,
    decoder: Option<&DecoderModel<T>>,
    index: &HnswIndex,
) -> Result<()> {
    check_model_index(model, index)?;
    if let Some(d) = decoder {
        check_decoder_pair(model, d)?;
    }
    Ok(())
}

/// Re-ranks an already-retrieved candidate pool (`pool_ids` into `codes`) by
/// decoder distance to `query`, keeping the `k_final` closest.
pub fn rerank_pool<T: Scalar>(
    decoder: &DecoderModel<T>,
    codes: &CodeSet,
    query: &[T],
    pool_ids: &[usize],
    k_final: usize,
) -> Result<SearchResult> {
    let reconstructed = decoder.reconstruct_rows(codes, pool_ids)?;
    let mut ranked: Vec<(f64, usize)> = pool_ids
        .iter()
        .enumerate()
        .map(|(pos, &id)| (asymmetric_distance(query, reconstructed.row(pos)), id))
        .collect();
    // Stable sort on the distance alone keeps Hamming-pool order for ties.
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("asymmetric distances are finite"));
    ranked.truncate(k_final);
    Ok(SearchResult {
        mode: SearchMode::Asymmetric,
        ids: ranked.iter().map(|&(_, id)| id).collect(),
        distances: SearchDistances::Euclidean(ranked.iter().map(|&(d, _)| d).collect()),
    })
}

/// Symmetric search for every row of `queries`, in row order. Queries run
/// concurrently; output order and content are independent of thread count.
pub fn search_symmetric_batch<T: Scalar>(
    model: &HashModel<T>,
    index: &HnswIndex,
    queries: &FeatureSet<T>,
    k: usize,
) -> Result<Vec<SearchResult>> {
    check_model_index(model, index)?;
    if queries.dim() != model.input_dim() && queries.count() > 0 {
        return Err(Error::Config(format!(
            "queries have {} components but the encoder expects {}",
            queries.dim(),
            model.input_dim()
        )));
    }
    let query_codes = model.encode_hard(queries.features())?;
    (0..queries.count())
        .into_par_iter()
        .map(|q| {
            let hits = index.search(query_codes.code(q), k, index.params().ef_search)?;
            Ok(SearchResult {
                mode: SearchMode::Symmetric,
                ids: hits.iter().map(|h| h.id).collect(),
                distances: SearchDistances::Hamming(hits.iter().map(|h| h.distance).collect()),
            })
        })
        .collect()
}

/// Asymmetric search for every row of `queries`, in row order.
pub fn search_asymmetric_batch<T: Scalar>(
    model: &HashModel<T>,
    decoder: &DecoderModel<T>,
    index: &HnswIndex,
    queries: &FeatureSet<T>,
    k_final: usize,
    pool: usize,
) -> Result<Vec<SearchResult>> {
    if k_final > pool {
        return Err(Error::Config(format!(
            "k_final ({k_final}) cannot exceed the candidate pool size ({pool})"
        )));
    }
    check_decoder_pair(model, decoder)?;
    let pools = search_symmetric_batch(model, index, queries, pool)?;
    pools
        .into_par_iter()
        .enumerate()
        .map(|(q, sym)| rerank_pool(decoder, index.codes(), queries.row(q), &sym.ids, k_final))
        .collect()
}

#[derive(Serialize)]
struct ResultRecord<'a> {
    query_id: u64,
    mode: SearchMode,
    ids: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    hamming: Option<&'a [u32]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    euclidean: Option<&'a [f64]>,
}

/// One JSON line per query result: `{query_id, mode, ids, distances}`.
pub fn result_json_line(query_id: u64, result: &SearchResult) -> String {
    let record = match &result.distances {
        SearchDistances::Hamming(d) => ResultRecord {
            query_id,
            mode: result.mode,
            ids: &result.ids,
            hamming: Some(d),
            euclidean: None,
        },
        SearchDistances::Euclidean(d) => ResultRecord {
            query_id,
            mode: result.mode,
            ids: &result.ids,
            hamming: None,
            euclidean: Some(d),
        },
    };
    let value = serde_json::to_value(&record).expect("search results serialize");
    let mut obj = value.as_object().expect("record is an object").clone();
    if let Some(d) = obj.remove("hamming").or_else(|| obj.remove("euclidean")) {
        obj.insert("distances".into(), d);
    }
    serde_json::to_string(&serde_json::Value::Object(obj)).expect("search results serialize")
}

/// Writes one JSON line per result, `query_id` = row position.
pub fn write_results_jsonl(path: &Path, results: &[SearchResult]) -> Result<()> {
    let mut out = Vec::new();
    for (q, result) in results.iter().enumerate() {
        writeln!(&mut out, "{}", result_json_line(q as u64, result))?;
    }
    crate::bytesio::write_atomic(path, &out)
}

/// Reads a results file written by [`write_results_jsonl`]: one JSON object
/// per line, returned in `query_id` order (which must match line order).
pub fn read_results_jsonl(path: &Path) -> Result<Vec<SearchResult>> {
    #[derive(serde::Deserialize)]
    struct Record {
        query_id: u64,
        mode: SearchMode,
        ids: Vec<usize>,
        distances: serde_json::Value,
    }

    let text = std::fs::read_to_string(path)?;
    let mut results = Vec::new();
    let mut offset = 0u64;
    for (lineno, line) in text.lines().enumerate() {
        let line_offset = offset;
        offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            offset: line_offset,
            message: format!("{}, line {}: {message}", path.display(), lineno + 1),
        };
        let record: Record =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if record.query_id != results.len() as u64 {
            return Err(parse_err(format!(
                "query_id {} out of order (expected {})",
                record.query_id,
                results.len()
            )));
        }
        let distances = match record.mode {
            SearchMode::Symmetric => SearchDistances::Hamming(
                serde_json::from_value(record.distances)
                    .map_err(|e| parse_err(format!("Hamming distances: {e}")))?,
            ),
            SearchMode::Asymmetric => SearchDistances::Euclidean(
                serde_json::from_value(record.distances)
                    .map_err(|e| parse_err(format!("Euclidean distances: {e}")))?,
            ),
        };
        if record.ids.len() != distances.len() {
            return Err(parse_err(format!(
                "{} ids but {} distances",
                record.ids.len(),
                distances.len()
            )));
        }
        results.push(SearchResult {
            mode: record.mode,
            ids: record.ids,
            distances,
        });
    }
    Ok(results)
}
