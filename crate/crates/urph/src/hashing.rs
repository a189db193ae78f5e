//! The rank-preserving hash encoder: ranked batch construction, the three
//! training losses (ranking, uncorrelation, binarization), loss-weight
//! calibration, the SGD training loop, and relaxed/hard encoding.
//!
//! The encoder is a small dense network `F` producing `M` pre-activations
//! per input. Training relaxes the sign function to `tanh`, so the relaxed
//! code is `tanh(F(x))` with entries in (−1, 1); the hard code thresholds
//! the pre-activations at zero (`z ≥ 0` → bit 1) and bit-packs the result.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::codes::CodeSet;
use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::nn::{
    backward, forward_train, sgd_step, validate_specs, ForwardCache, LayerSpec,
    NetworkParams, SgdSchedule,
};
use crate::scalar::Scalar;

/// Row chunk size for parallel batch encoding. Rows are independent in
/// inference mode, so any chunking gives bit-identical results.
const ENCODE_CHUNK_ROWS: usize = 512;

/// Builds the encoder layer chain for a given depth.
///
/// * 0 hidden layers: `fc(n → M)`
/// * 1 hidden layer: `fc(n → 8n), elu, batch_norm, fc(8n → M)`
/// * 2 hidden layers: additionally `fc(8n → 8M), elu, batch_norm` before the
///   output layer.
pub fn hash_layer_specs(input_dim: usize, code_bits: u32, hidden_layers: u8) -> Result<Vec<LayerSpec>> {
    if input_dim == 0 {
        return Err(Error::Config("input_dim must be positive".into()));
    }
    if code_bits == 0 {
        return Err(Error::Config("code_bits must be positive".into()));
    }
    let n = input_dim;
    let m = code_bits as usize;
    let specs = match hidden_layers {
        0 => vec![LayerSpec::fully_connected(n, m)],
        1 => vec![
            LayerSpec::fully_connected(n, 8 * n),
            LayerSpec::elu(8 * n),
            LayerSpec::batch_norm(8 * n),
            LayerSpec::fully_connected(8 * n, m),
        ],
        2 => vec![
            LayerSpec::fully_connected(n, 8 * n),
            LayerSpec::elu(8 * n),
            LayerSpec::batch_norm(8 * n),
            LayerSpec::fully_connected(8 * n, 8 * m),
            LayerSpec::elu(8 * m),
            LayerSpec::batch_norm(8 * m),
            LayerSpec::fully_connected(8 * m, m),
        ],
        d => {
            return Err(Error::Config(format!(
                "hidden_layers must be 0, 1, or 2 (got {d})"
            )))
        }
    };
    validate_specs(&specs)?;
    Ok(specs)
}

/// The hash encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct HashModel<T> {
    specs: Vec<LayerSpec>,
    params: NetworkParams<T>,
    input_dim: usize,
    code_bits: u32,
    hidden_layers: u8,
}

impl<T: Scalar> HashModel<T> {
    pub fn init(
        input_dim: usize,
        code_bits: u32,
        hidden_layers: u8,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let specs = hash_layer_specs(input_dim, code_bits, hidden_layers)?;
        let params = NetworkParams::init(&specs, rng);
        Ok(Self {
            specs,
            params,
            input_dim,
            code_bits,
            hidden_layers,
        })
    }

    pub fn from_parts(
        input_dim: usize,
        code_bits: u32,
        hidden_layers: u8,
        params: NetworkParams<T>,
    ) -> Result<Self> {
        let specs = hash_layer_specs(input_dim, code_bits, hidden_layers)?;
        if params.layers.len() != specs.len() {
            return Err(Error::InvalidArtifact(
                "parameter chain does not match encoder architecture".into(),
            ));
        }
        Ok(Self {
            specs,
            params,
            input_dim,
            code_bits,
            hidden_layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn code_bits(&self) -> u32 {
        self.code_bits
    }

    pub fn hidden_layers(&self) -> u8 {
        self.hidden_layers
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &NetworkParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NetworkParams<T> {
        &mut self.params
    }

    fn check_input(&self, features: &DenseMatrix<T>) -> Result<()> {
        if features.cols() != self.input_dim {
            return Err(Error::Config(format!(
                "feature width {} does not match encoder input dim {}",
                features.cols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Train-mode forward: returns `(relaxed codes, pre-activations, cache)`.
    /// Batch-norm running statistics are updated in place.
    pub fn relaxed_train(
        &mut self,
        features: &DenseMatrix<T>,
    ) -> Result<(DenseMatrix<T>, DenseMatrix<T>, ForwardCache<T>)> {
        self.check_input(features)?;
        let (z, cache) = forward_train(&mut self.params, &self.specs, features)?;
        let relaxed = z.map(|v| v.tanh());
        Ok((relaxed, z, cache))
    }

    /// Inference-mode relaxed codes `tanh(F(x))`, chunk-parallel over rows.
    pub fn encode_relaxed(&self, features: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.check_input(features)?;
        let z = self.infer_chunked(features)?;
        Ok(z.map(|v| v.tanh()))
    }

    /// Inference-mode hard codes: bit = 1 iff the pre-activation is ≥ 0.
    pub fn encode_hard(&self, features: &DenseMatrix<T>) -> Result<CodeSet> {
        self.check_input(features)?;
        let z = self.infer_chunked(features)?;
        let mut codes = CodeSet::with_capacity(self.code_bits, z.rows());
        let mut bits = vec![0u8; self.code_bits as usize];
        for i in 0..z.rows() {
            for (b, &v) in bits.iter_mut().zip(z.row(i)) {
                *b = u8::from(v >= T::zero());
            }
            codes.push_bits(&bits)?;
        }
        codes.set_encoder_hash(self.identity_hash());
        Ok(codes)
    }

    /// Inference-mode pre-activations, computed over row chunks in parallel.
    fn infer_chunked(&self, features: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        crate::nn::forward_infer_chunked(&self.params, &self.specs, features, ENCODE_CHUNK_ROWS)
    }
}

/// A training batch: one query plus candidates sorted by ascending true
/// Euclidean distance to it.
#[derive(Debug, Clone)]
pub struct RankedBatch<T> {
    /// Row 0 is the query; rows 1..N are the candidates in rank order.
    pub features: DenseMatrix<T>,
    /// `distances[i]` = Euclidean distance from the query to candidate `i`;
    /// non-decreasing.
    pub distances: Vec<T>,
    /// Source row ids: query first, then candidates in rank order.
    pub source_ids: Vec<usize>,
}

impl<T: Scalar> RankedBatch<T> {
    /// Ranks explicit candidate rows against an explicit query row. Ties in
    /// distance break by ascending original id.
    pub fn from_ids(
        trainset: &FeatureSet<T>,
        query_id: usize,
        candidate_ids: &[usize],
    ) -> Result<Self> {
        if candidate_ids.len() < 2 {
            return Err(Error::Config(
                "a ranked batch needs at least two candidates".into(),
            ));
        }
        let qrow = trainset.row(query_id);
        let mut ranked: Vec<(T, usize)> = candidate_ids
            .iter()
            .map(|&id| (DenseMatrix::row_distance(qrow, trainset.row(id)), id))
            .collect();
        ranked.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
        });
        let mut source_ids = Vec::with_capacity(candidate_ids.len() + 1);
        source_ids.push(query_id);
        source_ids.extend(ranked.iter().map(|&(_, id)| id));
        let features = trainset.features().gather_rows(&source_ids);
        Ok(Self {
            features,
            distances: ranked.into_iter().map(|(d, _)| d).collect(),
            source_ids,
        })
    }

    /// Batch size N (query included).
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Draws `batch_size` distinct samples, picks one as the query, and ranks
/// the rest by ascending Euclidean distance (ties by ascending sample id).
pub fn build_batch<T: Scalar>(
    trainset: &FeatureSet<T>,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RankedBatch<T>> {
    if batch_size < 3 {
        return Err(Error::Config("batch_size must be at least 3".into()));
    }
    if trainset.count() < batch_size {
        return Err(Error::Config(format!(
            "trainset has {} samples, need at least batch_size = {}",
            trainset.count(),
            batch_size
        )));
    }
    let mut drawn = rand::seq::index::sample(rng, trainset.count(), batch_size).into_vec();
    let query_pos = rng.random_range(0..batch_size);
    let query_id = drawn.swap_remove(query_pos);
    RankedBatch::from_ids(trainset, query_id, &drawn)
}

/// Rank weights `w_i = exp(−(i−1)/(N−1))` for `i = 1..N−2`: strictly
/// decreasing, so disorder at small ranks costs more.
pub fn rank_weights(batch_size: usize) -> Vec<f64> {
    assert!(batch_size >= 3, "rank weights need N >= 3");
    let n1 = (batch_size - 1) as f64;
    (0..batch_size - 2).map(|i| (-(i as f64) / n1).exp()).collect()
}

/// Euclidean distance between two relaxed codes.
pub fn surrogate_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    DenseMatrix::row_distance(a, b)
}

fn candidate_distances<T: Scalar>(relaxed: &DenseMatrix<T>) -> Result<Vec<T>> {
    if relaxed.rows() < 3 {
        return Err(Error::Config(
            "ranking loss needs at least a query and two candidates".into(),
        ));
    }
    let q = relaxed.row(0);
    Ok((1..relaxed.rows())
        .map(|i| surrogate_distance(relaxed.row(i), q))
        .collect())
}

/// Ranking loss over a relaxed-code matrix whose row 0 is the query and
/// whose remaining rows are candidates in ascending true-distance order:
///
/// `L_R = Σ_{i<j} w_i · max(0, d_h(x_i, q) − d_h(x_j, q))`
pub fn ranking_loss<T: Scalar>(relaxed: &DenseMatrix<T>) -> Result<f64> {
    let d = candidate_distances(relaxed)?;
    let w = rank_weights(relaxed.rows());
    let mut loss = 0.0;
    for i in 0..d.len() - 1 {
        let di = d[i].to_f64_lossy();
        for &dj in &d[i + 1..] {
            let margin = di - dj.to_f64_lossy();
            if margin > 0.0 {
                loss += w[i] * margin;
            }
        }
    }
    Ok(loss)
}

/// Ranking loss plus its gradient with respect to every relaxed-code entry.
///
/// The hinge is active only for strictly positive margins (subgradient 0 at
/// a zero margin). Each active pair `(i, j)` adds `w_i` to `∂L/∂d_i` and
/// `−w_i` to `∂L/∂d_j`; collecting those per-candidate coefficients first
/// keeps the whole gradient at `O(N² + N·M)`.
pub fn ranking_loss_with_grad<T: Scalar>(
    relaxed: &DenseMatrix<T>,
) -> Result<(f64, DenseMatrix<T>)> {
    let d = candidate_distances(relaxed)?;
    let w = rank_weights(relaxed.rows());
    let k = d.len();
    let mut loss = 0.0;
    let mut beta = vec![0.0f64; k];
    for i in 0..k - 1 {
        let di = d[i].to_f64_lossy();
        for j in i + 1..k {
            let margin = di - d[j].to_f64_lossy();
            if margin > 0.0 {
                loss += w[i] * margin;
                beta[i] += w[i];
                beta[j] -= w[i];
            }
        }
    }
    let mut grad = DenseMatrix::zeros(relaxed.rows(), relaxed.cols());
    let mut q_grad = vec![T::zero(); relaxed.cols()];
    let q = relaxed.row(0);
    for i in 0..k {
        if beta[i] == 0.0 || d[i] == T::zero() {
            // d(x_i, q) has no gradient at exactly zero distance; skip.
            continue;
        }
        let scale = T::from_f64_lossy(beta[i]) / d[i];
        let c = relaxed.row(i + 1);
        let out = grad.row_mut(i + 1);
        for j in 0..c.len() {
            let g = scale * (c[j] - q[j]);
            out[j] = g;
            q_grad[j] = q_grad[j] - g;
        }
    }
    grad.row_mut(0).copy_from_slice(&q_grad);
    Ok((loss, grad))
}

/// Row-normalizes `relaxed`, erroring on an exactly zero row.
fn normalize_rows_strict<T: Scalar>(relaxed: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let mut b = relaxed.clone();
    for i in 0..b.rows() {
        let norm = b.row(i).iter().map(|v| *v * *v).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(Error::ZeroRow { row: i });
        }
        for v in b.row_mut(i) {
            *v = *v / norm;
        }
    }
    Ok(b)
}

fn gram_minus_identity_frobenius<T: Scalar>(b: &DenseMatrix<T>) -> (f64, DenseMatrix<T>) {
    let mut a = b.transpose_matmul(b);
    for i in 0..a.cols() {
        let v = a.get(i, i) - T::one();
        a.set(i, i, v);
    }
    let norm = a
        .as_slice()
        .iter()
        .map(|v| {
            let f = v.to_f64_lossy();
            f * f
        })
        .sum::<f64>()
        .sqrt();
    (norm, a)
}

/// Uncorrelation loss `L_U = ‖B̄ᵀB̄ − I_M‖_F` over the row-l2-normalized
/// relaxed codes B̄ of the whole batch (query row included). Errors on an
/// exactly zero row; the training path uses the epsilon variant below.
pub fn uncorrelation_loss<T: Scalar>(relaxed: &DenseMatrix<T>) -> Result<f64> {
    let b = normalize_rows_strict(relaxed)?;
    Ok(gram_minus_identity_frobenius(&b).0)
}

/// Stabilizer used by the training-path row normalization so that a (never
/// observed in practice) zero relaxed row cannot halt training.
const NORM_EPSILON: f64 = 1e-12;

/// Uncorrelation loss plus its gradient with respect to the *unnormalized*
/// relaxed codes. Row norms get an epsilon in the denominator, so this
/// never errors; forward and backward use the identical normalization.
pub fn uncorrelation_loss_with_grad<T: Scalar>(
    relaxed: &DenseMatrix<T>,
) -> (f64, DenseMatrix<T>) {
    let eps = T::from_f64_lossy(NORM_EPSILON);
    let rows = relaxed.rows();
    let mut b = relaxed.clone();
    let mut norms = Vec::with_capacity(rows);
    for i in 0..rows {
        let norm = b.row(i).iter().map(|v| *v * *v).sum::<T>().sqrt();
        let t = norm + eps;
        for v in b.row_mut(i) {
            *v = *v / t;
        }
        norms.push((norm, t));
    }
    let (loss, a) = gram_minus_identity_frobenius(&b);
    if loss == 0.0 {
        return (0.0, DenseMatrix::zeros(rows, relaxed.cols()));
    }
    // L = ‖A‖_F with A = B̄ᵀB̄ − I, so ∂L/∂B̄ = 2·B̄·A / L (A is symmetric).
    let mut db = b.matmul(&a);
    db.scale_inplace(T::from_f64_lossy(2.0 / loss));
    // Through u = v / (‖v‖ + ε): dv = g/t − v·(v·g)/(s·t²).
    let mut grad = DenseMatrix::zeros(rows, relaxed.cols());
    for i in 0..rows {
        let (s, t) = norms[i];
        let v = relaxed.row(i);
        let g = db.row(i);
        let dot = v.iter().zip(g).map(|(&x, &y)| x * y).sum::<T>();
        let out = grad.row_mut(i);
        if s == T::zero() {
            for (o, &gj) in out.iter_mut().zip(g) {
                *o = gj / t;
            }
        } else {
            let coef = dot / (s * t * t);
            for j in 0..v.len() {
                out[j] = g[j] / t - v[j] * coef;
            }
        }
    }
    (loss, grad)
}

/// Binarization loss `L_B = 1 − (1/(N·M)) Σ B̃_ij²`: zero when every relaxed
/// entry sits at ±1, one when all entries are zero.
pub fn binarization_loss<T: Scalar>(relaxed: &DenseMatrix<T>) -> f64 {
    let nm = (relaxed.rows() * relaxed.cols()) as f64;
    let sum_sq = relaxed
        .as_slice()
        .iter()
        .map(|v| {
            let f = v.to_f64_lossy();
            f * f
        })
        .sum::<f64>();
    1.0 - sum_sq / nm
}

/// Binarization loss plus gradient `∂L_B/∂B̃_ij = −2·B̃_ij / (N·M)`.
pub fn binarization_loss_with_grad<T: Scalar>(relaxed: &DenseMatrix<T>) -> (f64, DenseMatrix<T>) {
    let loss = binarization_loss(relaxed);
    let scale = T::from_f64_lossy(-2.0 / (relaxed.rows() * relaxed.cols()) as f64);
    let mut grad = relaxed.clone();
    grad.scale_inplace(scale);
    (loss, grad)
}

/// Combined-loss weights λ1, λ2, λ3; all strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

/// λ2 and λ3 are fixed; λ1 is calibrated per training run.
pub const LAMBDA2: f64 = 0.5;
pub const LAMBDA3: f64 = 0.3;

/// λ1 = 1 / (ranking loss of the very first batch), falling back to 1 when
/// that loss is ≈ 0 (the batch happened to come out ordered).
pub fn calibrate_lambda1(first_batch_ranking_loss: f64) -> f64 {
    if first_batch_ranking_loss <= 1e-12 {
        1.0
    } else {
        1.0 / first_batch_ranking_loss
    }
}

impl LossWeights {
    pub fn calibrated(first_batch_ranking_loss: f64) -> Self {
        Self {
            lambda1: calibrate_lambda1(first_batch_ranking_loss),
            lambda2: LAMBDA2,
            lambda3: LAMBDA3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda1 > 0.0 && self.lambda2 > 0.0 && self.lambda3 > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("loss weights must be strictly positive".into()))
        }
    }
}

/// `L = λ1·L_R + λ2·L_U + λ3·L_B`.
pub fn total_loss(ranking: f64, uncorrelation: f64, binarization: f64, w: &LossWeights) -> f64 {
    w.lambda1 * ranking + w.lambda2 * uncorrelation + w.lambda3 * binarization
}

/// One row of the training log (every iteration is recorded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub iteration: u64,
    pub ranking: f64,
    pub uncorrelation: f64,
    pub binarization: f64,
    pub total: f64,
    pub learning_rate: f64,
}

/// Writes a training log as CSV.
pub fn write_training_log(path: &std::path::Path, rows: &[TrainLogRow]) -> Result<()> {
    let mut out = String::from("iteration,ranking_loss,uncorrelation_loss,binarization_loss,total_loss,learning_rate\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration, r.ranking, r.uncorrelation, r.binarization, r.total, r.learning_rate
        ));
    }
    crate::bytesio::write_atomic(path, out.as_bytes())
}

/// Encoder training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub code_bits: u32,
    pub hidden_layers: u8,
    pub batch_size: usize,
    pub iterations: u64,
    pub schedule: SgdSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            code_bits: 128,
            hidden_layers: 1,
            batch_size: 512,
            iterations: 50_000,
            schedule: SgdSchedule::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 3 {
            return Err(Error::Config("batch_size must be at least 3".into()));
        }
        self.schedule.validate()
    }
}

/// Loss values and the train-mode pre-activations of one encoder step.
pub(crate) struct HashStep<T> {
    pub log: TrainLogRow,
    /// Pre-activations `F(x)` of the batch (query row first), taken from the
    /// same train-mode forward pass the update used.
    pub pre_activation: DenseMatrix<T>,
}

/// Runs one training step on `batch` at global step `iteration`: forward,
/// losses (calibrating λ1 when `weights` is still unset), backward, SGD.
pub(crate) fn hash_step<T: Scalar>(
    model: &mut HashModel<T>,
    batch: &RankedBatch<T>,
    weights: &mut Option<LossWeights>,
    schedule: &SgdSchedule,
    iteration: u64,
) -> Result<HashStep<T>> {
    let (relaxed, z, cache) = model.relaxed_train(&batch.features)?;
    let (l_r, g_r) = ranking_loss_with_grad(&relaxed)?;
    let w = *weights.get_or_insert_with(|| LossWeights::calibrated(l_r));
    let (l_u, g_u) = uncorrelation_loss_with_grad(&relaxed);
    let (l_b, g_b) = binarization_loss_with_grad(&relaxed);
    let l = total_loss(l_r, l_u, l_b, &w);
    if !(l_r.is_finite() && l_u.is_finite() && l_b.is_finite()) {
        return Err(Error::Training {
            phase: 1,
            iteration,
            message: format!(
                "loss diverged (ranking {l_r}, uncorrelation {l_u}, binarization {l_b})"
            ),
        });
    }

    // dL/dB̃, then through the tanh relaxation into the network.
    let mut d_relaxed = g_r;
    d_relaxed.scale_inplace(T::from_f64_lossy(w.lambda1));
    d_relaxed.add_scaled(&g_u, T::from_f64_lossy(w.lambda2));
    d_relaxed.add_scaled(&g_b, T::from_f64_lossy(w.lambda3));
    let dz = d_relaxed.zip_map(&relaxed, |g, r| g * (T::one() - r * r));
    let (grads, _) = backward(model.params(), &model.specs.clone(), &cache, &dz, false)?;
    sgd_step(model.params_mut(), &grads, schedule, iteration);

    Ok(HashStep {
        log: TrainLogRow {
            iteration,
            ranking: l_r,
            uncorrelation: l_u,
            binarization: l_b,
            total: l,
            learning_rate: schedule.learning_rate(iteration),
        },
        pre_activation: z,
    })
}

/// Continues training an existing model for `iterations` further steps,
/// starting the global step counter at `start_iteration`.
pub(crate) fn continue_training<T: Scalar>(
    model: &mut HashModel<T>,
    trainset: &FeatureSet<T>,
    config: &TrainConfig,
    weights: &mut Option<LossWeights>,
    rng: &mut ChaCha8Rng,
    start_iteration: u64,
) -> Result<Vec<TrainLogRow>> {
    config.validate()?;
    let mut log = Vec::with_capacity(config.iterations as usize);
    for it in start_iteration..start_iteration + config.iterations {
        let batch = build_batch(trainset, config.batch_size, rng)?;
        let step = hash_step(model, &batch, weights, &config.schedule, it)?;
        log.push(step.log);
    }
    Ok(log)
}

/// Trains a fresh encoder: per iteration, draw a ranked batch, compute the
/// three losses on the relaxed codes, backpropagate their weighted sum, and
/// take an SGD step. λ1 is calibrated from the first batch's ranking loss.
/// Deterministic per seed.
pub fn train_hash_model<T: Scalar>(
    trainset: &FeatureSet<T>,
    config: &TrainConfig,
) -> Result<(HashModel<T>, Vec<TrainLogRow>)> {
    use rand::SeedableRng;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = HashModel::init(trainset.dim(), config.code_bits, config.hidden_layers, &mut rng)?;
    let mut weights = None;
    let log = continue_training(&mut model, trainset, config, &mut weights, &mut rng, 0)?;
    Ok((model, log))
}
