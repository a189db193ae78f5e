//! Hierarchical navigable small world graph over packed binary codes.
//!
//! The index stores the codes themselves plus per-layer adjacency lists and
//! answers approximate k-nearest-neighbour queries under Hamming distance
//! with a greedy top-down descent followed by a best-first expansion of a
//! bounded candidate buffer on the bottom layer. Construction is
//! single-threaded and fully determined by the build seed; the finished
//! index is immutable and safe to search from many threads at once.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bytesio::{put_f64_le, put_u32_le, put_u64_le, write_atomic, Reader};
use crate::codes::CodeSet;
use crate::error::{Error, Result};
use crate::model_io::fnv1a64;

/// Magic bytes opening every serialized index file.
pub const MAGIC: &[u8; 4] = b"URPG";
/// Version written into new index files; loading rejects anything else.
pub const FORMAT_VERSION: u32 = 1;

/// Graph construction and search parameters.
///
/// Defaults: degree caps 32 (upper layers) and 64 (bottom layer), a
/// construction buffer of 200, a search buffer of 1024, and a level
/// multiplier of `1/ln(32)` so the expected layer occupancy mirrors the
/// degree cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnswParams {
    /// Maximum degree on layers 1 and above.
    pub max_m: usize,
    /// Maximum degree on the bottom layer.
    pub max_m0: usize,
    /// Candidate-buffer size while inserting.
    pub ef_construction: usize,
    /// Default candidate-buffer size while searching.
    pub ef_search: usize,
    /// Scale of the exponential level distribution.
    pub level_multiplier: f64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            max_m: 32,
            max_m0: 64,
            ef_construction: 200,
            ef_search: 1024,
            level_multiplier: 1.0 / (32.0f64).ln(),
        }
    }
}

impl HnswParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_m < 2 {
            return Err(Error::Config(format!(
                "max_m must be at least 2, got {}",
                self.max_m
            )));
        }
        if self.max_m0 < self.max_m {
            return Err(Error::Config(format!(
                "max_m0 ({}) must be at least max_m ({})",
                self.max_m0, self.max_m
            )));
        }
        if self.ef_construction == 0 || self.ef_search == 0 {
            return Err(Error::Config(
                "ef_construction and ef_search must be positive".into(),
            ));
        }
        if !(self.level_multiplier.is_finite() && self.level_multiplier > 0.0) {
            return Err(Error::Config(format!(
                "level_multiplier must be positive and finite, got {}",
                self.level_multiplier
            )));
        }
        Ok(())
    }
}

/// One search answer: a stored code id and its exact Hamming distance to the
/// query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchHit {
    pub id: usize,
    pub distance: u32,
}

/// Immutable navigable-small-world index over a [`CodeSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct HnswIndex {
    params: HnswParams,
    codes: CodeSet,
    /// Highest layer each node appears on.
    levels: Vec<u32>,
    /// `neighbors[node][layer]` for `layer <= levels[node]`.
    neighbors: Vec<Vec<Vec<u32>>>,
    entry_point: u32,
    max_layer: u32,
}

impl HnswIndex {
    /// Inserts every code into a fresh graph. Deterministic per seed: node
    /// levels are drawn up front from one seeded stream and insertions run
    /// in id order on a single thread.
    pub fn build(codes: CodeSet, params: HnswParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if codes.is_empty() {
            return Err(Error::Config(
                "cannot build an index over an empty code set".into(),
            ));
        }
        let n = codes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels: Vec<u32> = (0..n)
            .map(|_| {
                // `random::<f64>()` is in [0, 1); flip it so the log argument
                // stays positive.
                let u: f64 = 1.0 - rng.random::<f64>();
                (-u.ln() * params.level_multiplier).floor() as u32
            })
            .collect();
        let mut index = Self {
            params,
            neighbors: levels
                .iter()
                .map(|&l| vec![Vec::new(); l as usize + 1])
                .collect(),
            entry_point: 0,
            max_layer: levels[0],
            levels,
            codes,
        };
        for node in 1..n {
            index.insert(node as u32);
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    /// The codes the graph was built over (ids are row indices).
    pub fn codes(&self) -> &CodeSet {
        &self.codes
    }

    pub fn entry_point(&self) -> usize {
        self.entry_point as usize
    }

    pub fn max_layer(&self) -> usize {
        self.max_layer as usize
    }

    /// Highest layer `node` appears on.
    pub fn level(&self, node: usize) -> usize {
        self.levels[node] as usize
    }

    /// Neighbour ids of `node` on `layer`.
    pub fn neighbors(&self, node: usize, layer: usize) -> &[u32] {
        &self.neighbors[node][layer]
    }

    fn degree_cap(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.max_m0
        } else {
            self.params.max_m
        }
    }

    fn distance(&self, node: u32, query: &[u64]) -> u32 {
        self.codes.distance_to(node as usize, query)
    }

    fn insert(&mut self, node: u32) {
        let level = self.levels[node as usize];
        let query = self.codes.code(node as usize).to_vec();
        let mut current = {
            let ep = self.entry_point;
            (self.distance(ep, &query), ep)
        };
        // Greedy descent through the layers above the node's level.
        for layer in (level + 1..=self.max_layer).rev() {
            current = self.greedy_closest(&query, current, layer as usize);
        }
        // Connect on every layer from min(level, max_layer) down to 0.
        let mut entries = vec![current];
        for layer in (0..=level.min(self.max_layer)).rev() {
            let layer = layer as usize;
            let found = self.search_layer(&query, &entries, self.params.ef_construction, layer);
            let cap = self.degree_cap(layer);
            let selected = self.select_diverse(&found, cap, true);
            self.neighbors[node as usize][layer] = selected.clone();
            for &nb in &selected {
                self.neighbors[nb as usize][layer].push(node);
                if self.neighbors[nb as usize][layer].len() > cap {
                    self.shrink(nb, layer, cap);
                }
            }
            entries = found;
        }
        if level > self.max_layer {
            self.entry_point = node;
            self.max_layer = level;
        }
    }

    /// Repeatedly hop to the neighbour closest to `query` on `layer` until no
    /// neighbour improves on the current `(distance, id)` pair.
    fn greedy_closest(&self, query: &[u64], start: (u32, u32), layer: usize) -> (u32, u32) {
        let mut current = start;
        loop {
            let mut best = current;
            for &nb in &self.neighbors[current.1 as usize][layer] {
                let cand = (self.distance(nb, query), nb);
                if cand < best {
                    best = cand;
                }
            }
            if best == current {
                return current;
            }
            current = best;
        }
    }

    /// Best-first expansion on one layer: returns up to `ef` nearest
    /// `(distance, id)` pairs, ascending. Classic bounded search — a min-heap
    /// feeds exploration while a max-heap keeps the `ef` best seen; expansion
    /// stops once the nearest unexplored candidate is farther than the worst
    /// kept result.
    fn search_layer(
        &self,
        query: &[u64],
        entries: &[(u32, u32)],
        ef: usize,
        layer: usize,
    ) -> Vec<(u32, u32)> {
        let mut visited = vec![false; self.len()];
        let mut frontier: BinaryHeap<Reverse<(u32, u32)>> = BinaryHeap::new();
        let mut best: BinaryHeap<(u32, u32)> = BinaryHeap::new();
        for &entry in entries {
            if !visited[entry.1 as usize] {
                visited[entry.1 as usize] = true;
                frontier.push(Reverse(entry));
                best.push(entry);
                if best.len() > ef {
                    best.pop();
                }
            }
        }
        while let Some(Reverse((dist, id))) = frontier.pop() {
            if best.len() == ef {
                let &(worst, _) = best.peek().expect("best heap is non-empty");
                if dist > worst {
                    break;
                }
            }
            for &nb in &self.neighbors[id as usize][layer] {
                if visited[nb as usize] {
                    continue;
                }
                visited[nb as usize] = true;
                let cand = (self.distance(nb, query), nb);
                if best.len() < ef || cand < *best.peek().expect("best heap is non-empty") {
                    frontier.push(Reverse(cand));
                    best.push(cand);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out = best.into_vec();
        out.sort_unstable();
        out
    }

    /// Diversity-preferring neighbour selection: walking candidates in
    /// ascending `(distance, id)` order, keep one only if it is not strictly
    /// closer to an already-kept neighbour than to the target. With
    /// `fill_from_pruned`, rejected candidates top the list back up to `cap`.
    fn select_diverse(
        &self,
        candidates: &[(u32, u32)],
        cap: usize,
        fill_from_pruned: bool,
    ) -> Vec<u32> {
        let mut kept: Vec<(u32, u32)> = Vec::with_capacity(cap);
        let mut pruned: Vec<u32> = Vec::new();
        for &(dist, id) in candidates {
            if kept.len() >= cap {
                break;
            }
            let code = self.codes.code(id as usize);
            let diverse = kept
                .iter()
                .all(|&(_, k)| self.distance(k, code) >= dist);
            if diverse {
                kept.push((dist, id));
            } else {
                pruned.push(id);
            }
        }
        let mut out: Vec<u32> = kept.into_iter().map(|(_, id)| id).collect();
        if fill_from_pruned {
            for id in pruned {
                if out.len() >= cap {
                    break;
                }
                out.push(id);
            }
        }
        out
    }

    /// Re-selects `node`'s neighbours on `layer` down to `cap`, removing the
    /// back-edges of anything dropped so adjacency stays symmetric.
    fn shrink(&mut self, node: u32, layer: usize, cap: usize) {
        let code = self.codes.code(node as usize).to_vec();
        let mut ranked: Vec<(u32, u32)> = self.neighbors[node as usize][layer]
            .iter()
            .map(|&nb| (self.distance(nb, &code), nb))
            .collect();
        ranked.sort_unstable();
        let kept = self.select_diverse(&ranked, cap, false);
        let dropped: Vec<u32> = self.neighbors[node as usize][layer]
            .iter()
            .copied()
            .filter(|id| !kept.contains(id))
            .collect();
        for d in dropped {
            self.neighbors[d as usize][layer].retain(|&id| id != node);
        }
        self.neighbors[node as usize][layer] = kept;
    }

    /// Approximate k-nearest neighbours of `query` (packed words, same bit
    /// width as the indexed codes), ascending by `(distance, id)`.
    ///
    /// The effective buffer is `max(ef, k)`. Asking for at least as many
    /// results as the index holds — or passing a buffer that large — answers
    /// by exhaustive scan, which the graph walk is guaranteed to match.
    pub fn search(&self, query: &[u64], k: usize, ef: usize) -> Result<Vec<SearchHit>> {
        if query.len() != self.codes.words_per_code() {
            return Err(Error::Config(format!(
                "query has {} words but the index stores {}-word codes",
                query.len(),
                self.codes.words_per_code()
            )));
        }
        let ef = ef.max(k);
        let n = self.len();
        if k >= n || ef >= n {
            let mut all: Vec<(u32, u32)> = (0..n)
                .map(|i| (self.codes.distance_to(i, query), i as u32))
                .collect();
            all.sort_unstable();
            all.truncate(k);
            return Ok(all
                .into_iter()
                .map(|(distance, id)| SearchHit {
                    id: id as usize,
                    distance,
                })
                .collect());
        }
        let mut current = {
            let ep = self.entry_point;
            (self.distance(ep, query), ep)
        };
        for layer in (1..=self.max_layer).rev() {
            current = self.greedy_closest(query, current, layer as usize);
        }
        let found = self.search_layer(query, &[current], ef, 0);
        Ok(found
            .into_iter()
            .take(k)
            .map(|(distance, id)| SearchHit {
                id: id as usize,
                distance,
            })
            .collect())
    }

    /// Serializes the whole index: parameters, level table, adjacency,
    /// embedded codes, and a trailing FNV-1a checksum of everything before
    /// it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32_le(&mut buf, FORMAT_VERSION);
        put_u32_le(&mut buf, self.params.max_m as u32);
        put_u32_le(&mut buf, self.params.max_m0 as u32);
        put_u32_le(&mut buf, self.params.ef_construction as u32);
        put_u32_le(&mut buf, self.params.ef_search as u32);
        put_f64_le(&mut buf, self.params.level_multiplier);
        put_u64_le(&mut buf, self.len() as u64);
        put_u32_le(&mut buf, self.entry_point);
        put_u32_le(&mut buf, self.max_layer);
        for &l in &self.levels {
            put_u32_le(&mut buf, l);
        }
        for lists in &self.neighbors {
            for list in lists {
                put_u32_le(&mut buf, list.len() as u32);
                for &id in list {
                    put_u32_le(&mut buf, id);
                }
            }
        }
        let code_bytes = self.codes.to_bytes();
        put_u64_le(&mut buf, code_bytes.len() as u64);
        buf.extend_from_slice(&code_bytes);
        let checksum = fnv1a64(&buf);
        put_u64_le(&mut buf, checksum);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Parse {
                offset: 0,
                message: "index file shorter than its checksum".into(),
            });
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        if fnv1a64(payload) != stored {
            return Err(Error::InvalidArtifact(
                "index checksum mismatch: file is corrupt".into(),
            ));
        }
        let mut r = Reader::new(payload);
        r.expect_magic(MAGIC, "index")?;
        let version = r.u32_le("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::InvalidArtifact(format!(
                "unsupported index format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let params = HnswParams {
            max_m: r.u32_le("max_m")? as usize,
            max_m0: r.u32_le("max_m0")? as usize,
            ef_construction: r.u32_le("ef_construction")? as usize,
            ef_search: r.u32_le("ef_search")? as usize,
            level_multiplier: r.f64_le("level_multiplier")?,
        };
        params.validate()?;
        let n = r.u64_le("node count")? as usize;
        if n == 0 {
            return Err(Error::InvalidArtifact("index holds no nodes".into()));
        }
        let entry_point = r.u32_le("entry point")?;
        let max_layer = r.u32_le("max layer")?;
        let mut levels = Vec::with_capacity(n);
        for _ in 0..n {
            levels.push(r.u32_le("node level")?);
        }
        if (entry_point as usize) >= n {
            return Err(Error::InvalidArtifact(format!(
                "entry point {entry_point} out of range for {n} nodes"
            )));
        }
        let mut neighbors = Vec::with_capacity(n);
        for &level in &levels {
            let mut lists = Vec::with_capacity(level as usize + 1);
            for layer in 0..=level as usize {
                let len = r.u32_le("neighbour count")? as usize;
                let cap = if layer == 0 { params.max_m0 } else { params.max_m };
                if len > cap {
                    return Err(Error::InvalidArtifact(format!(
                        "degree {len} exceeds the cap {cap} on layer {layer}"
                    )));
                }
                let mut list = Vec::with_capacity(len);
                for _ in 0..len {
                    let id = r.u32_le("neighbour id")?;
                    if id as usize >= n {
                        return Err(Error::InvalidArtifact(format!(
                            "neighbour id {id} out of range for {n} nodes"
                        )));
                    }
                    list.push(id);
                }
                lists.push(list);
            }
            neighbors.push(lists);
        }
        let code_len = r.u64_le("code block length")? as usize;
        let code_bytes = r.take(code_len, "embedded code set")?;
        let codes = CodeSet::from_bytes(code_bytes)?;
        r.finish("index")?;
        if codes.len() != n {
            return Err(Error::InvalidArtifact(format!(
                "index lists {n} nodes but embeds {} codes",
                codes.len()
            )));
        }
        Ok(Self {
            params,
            codes,
            levels,
            neighbors,
            entry_point,
            max_layer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
