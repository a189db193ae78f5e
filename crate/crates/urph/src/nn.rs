//! Minimal dense network kernel: fully-connected, ELU, batch-norm, and tanh
//! layers with hand-written backpropagation and plain SGD.
//!
//! There is no autograd; each layer caches what its backward pass needs
//! during a train-mode forward. Inference-mode forwards are pure functions
//! of the parameters (batch norm reads running statistics).

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;

/// Batch-norm stabilizer added to the variance before the square root.
pub const BN_EPSILON: f64 = 1e-5;
/// Momentum of the running-statistic exponential moving average.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    FullyConnected,
    Elu,
    BatchNorm,
    Tanh,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::FullyConnected => 0,
            LayerKind::Elu => 1,
            LayerKind::BatchNorm => 2,
            LayerKind::Tanh => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LayerKind::FullyConnected),
            1 => Some(LayerKind::Elu),
            2 => Some(LayerKind::BatchNorm),
            3 => Some(LayerKind::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerSpec {
    pub fn fully_connected(in_dim: usize, out_dim: usize) -> Self {
        Self {
            kind: LayerKind::FullyConnected,
            in_dim,
            out_dim,
        }
    }

    pub fn elu(dim: usize) -> Self {
        Self {
            kind: LayerKind::Elu,
            in_dim: dim,
            out_dim: dim,
        }
    }

    pub fn batch_norm(dim: usize) -> Self {
        Self {
            kind: LayerKind::BatchNorm,
            in_dim: dim,
            out_dim: dim,
        }
    }

    pub fn tanh(dim: usize) -> Self {
        Self {
            kind: LayerKind::Tanh,
            in_dim: dim,
            out_dim: dim,
        }
    }
}

/// Checks that the spec chain is well-formed: element-wise layers keep their
/// width and consecutive layers agree on dimensions.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    for (i, s) in specs.iter().enumerate() {
        if s.kind != LayerKind::FullyConnected && s.in_dim != s.out_dim {
            return Err(Error::Config(format!(
                "layer {i}: {:?} must have in_dim == out_dim",
                s.kind
            )));
        }
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::Config(format!("layer {i}: zero dimension")));
        }
        if i > 0 && specs[i - 1].out_dim != s.in_dim {
            return Err(Error::Config(format!(
                "layer {i}: in_dim {} does not match previous out_dim {}",
                s.in_dim,
                specs[i - 1].out_dim
            )));
        }
    }
    Ok(())
}

/// Per-layer parameters, aligned index-for-index with a spec chain.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<T> {
    Fc {
        /// Row-major `(in_dim, out_dim)` weight matrix.
        weights: DenseMatrix<T>,
        bias: Vec<T>,
    },
    BatchNorm {
        gamma: Vec<T>,
        beta: Vec<T>,
        running_mean: Vec<T>,
        running_var: Vec<T>,
    },
    /// ELU and tanh carry no parameters.
    Stateless,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> NetworkParams<T> {
    /// Glorot-uniform weights, zero biases, identity batch norm.
    pub fn init<R: Rng>(specs: &[LayerSpec], rng: &mut R) -> Self {
        let layers = specs
            .iter()
            .map(|s| match s.kind {
                LayerKind::FullyConnected => {
                    let limit = (6.0 / (s.in_dim + s.out_dim) as f64).sqrt();
                    let dist = Uniform::new(-limit, limit).expect("valid range");
                    let data = (0..s.in_dim * s.out_dim)
                        .map(|_| T::from_f64_lossy(dist.sample(rng)))
                        .collect();
                    LayerParams::Fc {
                        weights: DenseMatrix::from_vec(s.in_dim, s.out_dim, data),
                        bias: vec![T::zero(); s.out_dim],
                    }
                }
                LayerKind::BatchNorm => LayerParams::BatchNorm {
                    gamma: vec![T::one(); s.out_dim],
                    beta: vec![T::zero(); s.out_dim],
                    running_mean: vec![T::zero(); s.out_dim],
                    running_var: vec![T::one(); s.out_dim],
                },
                LayerKind::Elu | LayerKind::Tanh => LayerParams::Stateless,
            })
            .collect();
        Self { layers }
    }

    /// Number of trainable scalars (weights, biases, gamma, beta).
    pub fn trainable_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerParams::Fc { weights, bias } => weights.as_slice().len() + bias.len(),
                LayerParams::BatchNorm { gamma, beta, .. } => gamma.len() + beta.len(),
                LayerParams::Stateless => 0,
            })
            .sum()
    }

    /// Flat read access to trainable scalars, in serialization order.
    pub fn trainable(&self, idx: usize) -> T {
        *self.trainable_slot(idx).0
    }

    /// Flat write access to trainable scalars, in serialization order.
    pub fn set_trainable(&mut self, idx: usize, v: T) {
        let mut remaining = idx;
        for l in &mut self.layers {
            match l {
                LayerParams::Fc { weights, bias } => {
                    let w = weights.as_mut_slice();
                    if remaining < w.len() {
                        w[remaining] = v;
                        return;
                    }
                    remaining -= w.len();
                    if remaining < bias.len() {
                        bias[remaining] = v;
                        return;
                    }
                    remaining -= bias.len();
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    if remaining < gamma.len() {
                        gamma[remaining] = v;
                        return;
                    }
                    remaining -= gamma.len();
                    if remaining < beta.len() {
                        beta[remaining] = v;
                        return;
                    }
                    remaining -= beta.len();
                }
                LayerParams::Stateless => {}
            }
        }
        panic!("trainable index {idx} out of range");
    }

    fn trainable_slot(&self, idx: usize) -> (&T, ()) {
        let mut remaining = idx;
        for l in &self.layers {
            match l {
                LayerParams::Fc { weights, bias } => {
                    let w = weights.as_slice();
                    if remaining < w.len() {
                        return (&w[remaining], ());
                    }
                    remaining -= w.len();
                    if remaining < bias.len() {
                        return (&bias[remaining], ());
                    }
                    remaining -= bias.len();
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    if remaining < gamma.len() {
                        return (&gamma[remaining], ());
                    }
                    remaining -= gamma.len();
                    if remaining < beta.len() {
                        return (&beta[remaining], ());
                    }
                    remaining -= beta.len();
                }
                LayerParams::Stateless => {}
            }
        }
        panic!("trainable index {idx} out of range");
    }
}

/// Gradients for every trainable parameter, same layout as [`NetworkParams`].
#[derive(Debug, Clone)]
pub enum LayerGrads<T> {
    Fc {
        weights: DenseMatrix<T>,
        bias: Vec<T>,
    },
    BatchNorm {
        gamma: Vec<T>,
        beta: Vec<T>,
    },
    Stateless,
}

#[derive(Debug, Clone)]
pub struct ParamGrads<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Scalar> ParamGrads<T> {
    /// Flat read access, mirroring `NetworkParams::trainable` ordering.
    pub fn trainable(&self, idx: usize) -> T {
        let mut remaining = idx;
        for l in &self.layers {
            match l {
                LayerGrads::Fc { weights, bias } => {
                    let w = weights.as_slice();
                    if remaining < w.len() {
                        return w[remaining];
                    }
                    remaining -= w.len();
                    if remaining < bias.len() {
                        return bias[remaining];
                    }
                    remaining -= bias.len();
                }
                LayerGrads::BatchNorm { gamma, beta } => {
                    if remaining < gamma.len() {
                        return gamma[remaining];
                    }
                    remaining -= gamma.len();
                    if remaining < beta.len() {
                        return beta[remaining];
                    }
                    remaining -= beta.len();
                }
                LayerGrads::Stateless => {}
            }
        }
        panic!("gradient index {idx} out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| match l {
            LayerGrads::Fc { weights, bias } => {
                weights.as_slice().iter().all(|v| v.is_finite())
                    && bias.iter().all(|v| v.is_finite())
            }
            LayerGrads::BatchNorm { gamma, beta } => {
                gamma.iter().all(|v| v.is_finite()) && beta.iter().all(|v| v.is_finite())
            }
            LayerGrads::Stateless => true,
        })
    }
}

/// Everything `backward` needs from a train-mode forward pass.
#[derive(Debug, Clone)]
enum LayerCache<T> {
    Fc { input: DenseMatrix<T> },
    Elu { output: DenseMatrix<T> },
    Tanh { output: DenseMatrix<T> },
    BatchNorm { x_hat: DenseMatrix<T>, inv_std: Vec<T> },
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
    batch_rows: usize,
}

pub fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp() - T::one()
    }
}

pub fn elu_derivative<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

fn check_io<T: Scalar>(
    params: &NetworkParams<T>,
    specs: &[LayerSpec],
    input: &DenseMatrix<T>,
) -> Result<()> {
    validate_specs(specs)?;
    if params.layers.len() != specs.len() {
        return Err(Error::Internal(format!(
            "param chain has {} layers, spec chain has {}",
            params.layers.len(),
            specs.len()
        )));
    }
    if let Some(first) = specs.first() {
        if input.cols() != first.in_dim {
            return Err(Error::Config(format!(
                "input width {} does not match network input dim {}",
                input.cols(),
                first.in_dim
            )));
        }
    }
    Ok(())
}

fn fc_forward<T: Scalar>(
    input: &DenseMatrix<T>,
    weights: &DenseMatrix<T>,
    bias: &[T],
) -> DenseMatrix<T> {
    let mut out = input.matmul(weights);
    for i in 0..out.rows() {
        for (o, &b) in out.row_mut(i).iter_mut().zip(bias) {
            *o = *o + b;
        }
    }
    out
}

fn column_moments<T: Scalar>(x: &DenseMatrix<T>) -> (Vec<T>, Vec<T>) {
    let n = T::from_f64_lossy(x.rows() as f64);
    let mut mean = vec![T::zero(); x.cols()];
    for i in 0..x.rows() {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m = *m + v;
        }
    }
    for m in &mut mean {
        *m = *m / n;
    }
    let mut var = vec![T::zero(); x.cols()];
    for i in 0..x.rows() {
        for ((vv, &v), &m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            let d = v - m;
            *vv = *vv + d * d;
        }
    }
    for v in &mut var {
        *v = *v / n;
    }
    (mean, var)
}

/// Train-mode forward pass. Batch-norm layers normalize with batch
/// statistics and fold them into the running averages in place; the cache
/// holds every intermediate the backward pass needs.
pub fn forward_train<T: Scalar>(
    params: &mut NetworkParams<T>,
    specs: &[LayerSpec],
    input: &DenseMatrix<T>,
) -> Result<(DenseMatrix<T>, ForwardCache<T>)> {
    check_io(params, specs, input)?;
    let eps = T::from_f64_lossy(BN_EPSILON);
    let momentum = T::from_f64_lossy(BN_MOMENTUM);
    let mut cache = Vec::with_capacity(specs.len());
    let mut x = input.clone();
    for (spec, layer) in specs.iter().zip(&mut params.layers) {
        x = match (spec.kind, layer) {
            (LayerKind::FullyConnected, LayerParams::Fc { weights, bias }) => {
                let out = fc_forward(&x, weights, bias);
                cache.push(LayerCache::Fc { input: x });
                out
            }
            (LayerKind::Elu, LayerParams::Stateless) => {
                let out = x.map(elu);
                cache.push(LayerCache::Elu {
                    output: out.clone(),
                });
                out
            }
            (LayerKind::Tanh, LayerParams::Stateless) => {
                let out = x.map(|v| v.tanh());
                cache.push(LayerCache::Tanh {
                    output: out.clone(),
                });
                out
            }
            (
                LayerKind::BatchNorm,
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                },
            ) => {
                let (mean, var) = column_moments(&x);
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let mut x_hat = x;
                for i in 0..x_hat.rows() {
                    let row = x_hat.row_mut(i);
                    for ((v, &m), &s) in row.iter_mut().zip(&mean).zip(&inv_std) {
                        *v = (*v - m) * s;
                    }
                }
                let mut out = x_hat.clone();
                for i in 0..out.rows() {
                    let row = out.row_mut(i);
                    for ((v, &g), &b) in row.iter_mut().zip(gamma.iter()).zip(beta.iter()) {
                        *v = *v * g + b;
                    }
                }
                let one_minus = T::one() - momentum;
                for (r, &m) in running_mean.iter_mut().zip(&mean) {
                    *r = momentum * *r + one_minus * m;
                }
                for (r, &v) in running_var.iter_mut().zip(&var) {
                    *r = momentum * *r + one_minus * v;
                }
                cache.push(LayerCache::BatchNorm { x_hat, inv_std });
                out
            }
            _ => {
                return Err(Error::Internal(
                    "layer params do not match layer spec".into(),
                ))
            }
        };
    }
    Ok((
        x,
        ForwardCache {
            layers: cache,
            batch_rows: input.rows(),
        },
    ))
}

/// Inference-mode forward pass: pure, batch norm reads running statistics,
/// identical inputs give bit-identical outputs.
pub fn forward_infer<T: Scalar>(
    params: &NetworkParams<T>,
    specs: &[LayerSpec],
    input: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    check_io(params, specs, input)?;
    let eps = T::from_f64_lossy(BN_EPSILON);
    let mut x = input.clone();
    for (spec, layer) in specs.iter().zip(&params.layers) {
        x = match (spec.kind, layer) {
            (LayerKind::FullyConnected, LayerParams::Fc { weights, bias }) => {
                fc_forward(&x, weights, bias)
            }
            (LayerKind::Elu, LayerParams::Stateless) => x.map(elu),
            (LayerKind::Tanh, LayerParams::Stateless) => x.map(|v| v.tanh()),
            (
                LayerKind::BatchNorm,
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                },
            ) => {
                let mut out = x;
                for i in 0..out.rows() {
                    let row = out.row_mut(i);
                    for j in 0..row.len() {
                        let s = T::one() / (running_var[j] + eps).sqrt();
                        row[j] = (row[j] - running_mean[j]) * s * gamma[j] + beta[j];
                    }
                }
                out
            }
            _ => {
                return Err(Error::Internal(
                    "layer params do not match layer spec".into(),
                ))
            }
        };
    }
    Ok(x)
}

/// Backpropagates `output_grad` through a cached train-mode forward pass.
///
/// Returns gradients for every trainable parameter and, when
/// `need_input_grad` is set, the gradient with respect to the network input.
pub fn backward<T: Scalar>(
    params: &NetworkParams<T>,
    specs: &[LayerSpec],
    cache: &ForwardCache<T>,
    output_grad: &DenseMatrix<T>,
    need_input_grad: bool,
) -> Result<(ParamGrads<T>, Option<DenseMatrix<T>>)> {
    if cache.layers.len() != specs.len() || params.layers.len() != specs.len() {
        return Err(Error::Internal(
            "cache does not match the network it was produced by".into(),
        ));
    }
    if output_grad.rows() != cache.batch_rows
        || specs
            .last()
            .is_some_and(|s| s.out_dim != output_grad.cols())
    {
        return Err(Error::Internal("output gradient shape mismatch".into()));
    }

    let n = T::from_f64_lossy(cache.batch_rows as f64);
    let mut grads: Vec<LayerGrads<T>> = Vec::with_capacity(specs.len());
    let mut dy = output_grad.clone();

    for (idx, (spec, layer)) in specs.iter().zip(&params.layers).enumerate().rev() {
        let is_first = idx == 0;
        match (spec.kind, layer, &cache.layers[idx]) {
            (LayerKind::FullyConnected, LayerParams::Fc { weights, .. }, LayerCache::Fc { input }) => {
                let dw = input.transpose_matmul(&dy);
                let mut db = vec![T::zero(); spec.out_dim];
                for i in 0..dy.rows() {
                    for (b, &g) in db.iter_mut().zip(dy.row(i)) {
                        *b = *b + g;
                    }
                }
                grads.push(LayerGrads::Fc {
                    weights: dw,
                    bias: db,
                });
                if !is_first || need_input_grad {
                    dy = dy.matmul_transpose(weights);
                }
            }
            (LayerKind::Elu, LayerParams::Stateless, LayerCache::Elu { output }) => {
                // d/dx elu(x) is 1 on the positive branch and elu(x)+1 otherwise.
                dy = dy.zip_map(output, |g, y| {
                    if y > T::zero() {
                        g
                    } else {
                        g * (y + T::one())
                    }
                });
                grads.push(LayerGrads::Stateless);
            }
            (LayerKind::Tanh, LayerParams::Stateless, LayerCache::Tanh { output }) => {
                dy = dy.zip_map(output, |g, y| g * (T::one() - y * y));
                grads.push(LayerGrads::Stateless);
            }
            (
                LayerKind::BatchNorm,
                LayerParams::BatchNorm { gamma, .. },
                LayerCache::BatchNorm { x_hat, inv_std },
            ) => {
                let d = spec.out_dim;
                let mut dgamma = vec![T::zero(); d];
                let mut dbeta = vec![T::zero(); d];
                for i in 0..dy.rows() {
                    let g_row = dy.row(i);
                    let x_row = x_hat.row(i);
                    for j in 0..d {
                        dgamma[j] = dgamma[j] + g_row[j] * x_row[j];
                        dbeta[j] = dbeta[j] + g_row[j];
                    }
                }
                // dx = inv_std/N * (N*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
                // with dxhat = dy * gamma; sums run over the batch.
                let mut sum_dxhat = vec![T::zero(); d];
                let mut sum_dxhat_xhat = vec![T::zero(); d];
                for i in 0..dy.rows() {
                    let g_row = dy.row(i);
                    let x_row = x_hat.row(i);
                    for j in 0..d {
                        let dxh = g_row[j] * gamma[j];
                        sum_dxhat[j] = sum_dxhat[j] + dxh;
                        sum_dxhat_xhat[j] = sum_dxhat_xhat[j] + dxh * x_row[j];
                    }
                }
                let mut dx = DenseMatrix::zeros(dy.rows(), d);
                for i in 0..dy.rows() {
                    let g_row = dy.row(i);
                    let x_row = x_hat.row(i);
                    let out = dx.row_mut(i);
                    for j in 0..d {
                        let dxh = g_row[j] * gamma[j];
                        out[j] = inv_std[j] / n
                            * (n * dxh - sum_dxhat[j] - x_row[j] * sum_dxhat_xhat[j]);
                    }
                }
                dy = dx;
                grads.push(LayerGrads::BatchNorm {
                    gamma: dgamma,
                    beta: dbeta,
                });
            }
            _ => {
                return Err(Error::Internal(
                    "cache entry does not match layer spec".into(),
                ))
            }
        }
    }
    grads.reverse();
    let input_grad = if need_input_grad { Some(dy) } else { None };
    Ok((ParamGrads { layers: grads }, input_grad))
}

/// Inference-mode forward over row chunks in parallel. Rows are independent
/// in inference mode (batch norm reads running statistics), so any chunking
/// yields the same bits as one sequential pass.
pub(crate) fn forward_infer_chunked<T: Scalar>(
    params: &NetworkParams<T>,
    specs: &[LayerSpec],
    input: &DenseMatrix<T>,
    chunk_rows: usize,
) -> Result<DenseMatrix<T>> {
    use rayon::prelude::*;
    let rows = input.rows();
    if rows <= chunk_rows {
        return forward_infer(params, specs, input);
    }
    let out_cols = specs.last().map_or(input.cols(), |s| s.out_dim);
    let starts: Vec<usize> = (0..rows).step_by(chunk_rows).collect();
    let chunks: Vec<Result<DenseMatrix<T>>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + chunk_rows).min(rows);
            let ids: Vec<usize> = (start..end).collect();
            forward_infer(params, specs, &input.gather_rows(&ids))
        })
        .collect();
    let mut out = DenseMatrix::zeros(rows, out_cols);
    let mut row = 0;
    for chunk in chunks {
        let chunk = chunk?;
        for i in 0..chunk.rows() {
            out.row_mut(row).copy_from_slice(chunk.row(i));
            row += 1;
        }
    }
    Ok(out)
}

/// Staircase-decay SGD schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSchedule {
    pub initial_lr: f64,
    pub decay_rate: f64,
    pub decay_every: u64,
}

impl Default for SgdSchedule {
    fn default() -> Self {
        Self {
            initial_lr: 0.001,
            decay_rate: 0.97,
            decay_every: 5_000,
        }
    }
}

impl SgdSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.initial_lr <= 0.0 {
            return Err(Error::Config("initial_lr must be > 0".into()));
        }
        if self.decay_rate <= 0.0 || self.decay_rate > 1.0 {
            return Err(Error::Config("decay_rate must be in (0, 1]".into()));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be >= 1".into()));
        }
        Ok(())
    }

    /// `initial_lr * decay_rate^floor(iteration / decay_every)`.
    pub fn learning_rate(&self, iteration: u64) -> f64 {
        self.initial_lr * self.decay_rate.powi((iteration / self.decay_every) as i32)
    }
}

/// One SGD update: `p <- p - lr(iteration) * g`. Running statistics are not
/// touched; they belong to the forward pass.
pub fn sgd_step<T: Scalar>(
    params: &mut NetworkParams<T>,
    grads: &ParamGrads<T>,
    schedule: &SgdSchedule,
    iteration: u64,
) {
    let lr = T::from_f64_lossy(schedule.learning_rate(iteration));
    for (layer, grad) in params.layers.iter_mut().zip(&grads.layers) {
        match (layer, grad) {
            (
                LayerParams::Fc { weights, bias },
                LayerGrads::Fc {
                    weights: dw,
                    bias: db,
                },
            ) => {
                for (w, &g) in weights.as_mut_slice().iter_mut().zip(dw.as_slice()) {
                    *w = *w - lr * g;
                }
                for (b, &g) in bias.iter_mut().zip(db) {
                    *b = *b - lr * g;
                }
            }
            (
                LayerParams::BatchNorm { gamma, beta, .. },
                LayerGrads::BatchNorm {
                    gamma: dg,
                    beta: db,
                },
            ) => {
                for (g, &d) in gamma.iter_mut().zip(dg) {
                    *g = *g - lr * d;
                }
                for (b, &d) in beta.iter_mut().zip(db) {
                    *b = *b - lr * d;
                }
            }
            (LayerParams::Stateless, LayerGrads::Stateless) => {}
            _ => panic!("gradient layout does not match parameters"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn zero_layer_network_is_identity() {
        let mut params = NetworkParams::<f64> { layers: vec![] };
        let x = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (y, _) = forward_train(&mut params, &[], &x).unwrap();
        assert_eq!(y, x);
        assert_eq!(forward_infer(&params, &[], &x).unwrap(), x);
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let specs = [LayerSpec::fully_connected(3, 3)];
        let mut eye = DenseMatrix::zeros(3, 3);
        for i in 0..3 {
            eye.set(i, i, 1.0f64);
        }
        let params = NetworkParams {
            layers: vec![LayerParams::Fc {
                weights: eye,
                bias: vec![0.0; 3],
            }],
        };
        let x = DenseMatrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 4.0, 5.0, -6.0]);
        let y = forward_infer(&params, &specs, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn one_hidden_layer_forward_matches_straight_line_rewrite() {
        // fc -> elu -> batch_norm -> fc with seed 42 on a fixed 4x8 input,
        // recomputed below with plain loops as an independent oracle.
        let specs = [
            LayerSpec::fully_connected(8, 5),
            LayerSpec::elu(5),
            LayerSpec::batch_norm(5),
            LayerSpec::fully_connected(5, 3),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let params = NetworkParams::<f64>::init(&specs, &mut rng);
        let x = DenseMatrix::from_vec(
            4,
            8,
            (0..32).map(|i| ((i * 7 % 13) as f64 - 6.0) / 3.0).collect(),
        );
        let (y, _) = forward_train(&mut params.clone(), &specs, &x).unwrap();

        let (w1, b1) = match &params.layers[0] {
            LayerParams::Fc { weights, bias } => (weights, bias),
            _ => unreachable!(),
        };
        let (w2, b2) = match &params.layers[3] {
            LayerParams::Fc { weights, bias } => (weights, bias),
            _ => unreachable!(),
        };
        let mut h = [[0.0f64; 5]; 4];
        for i in 0..4 {
            for j in 0..5 {
                let mut acc = b1[j];
                for k in 0..8 {
                    acc += x.get(i, k) * w1.get(k, j);
                }
                h[i][j] = if acc > 0.0 { acc } else { acc.exp() - 1.0 };
            }
        }
        for j in 0..5 {
            let mean = (0..4).map(|i| h[i][j]).sum::<f64>() / 4.0;
            let var = (0..4).map(|i| (h[i][j] - mean).powi(2)).sum::<f64>() / 4.0;
            let inv = 1.0 / (var + BN_EPSILON).sqrt();
            for i in 0..4 {
                h[i][j] = (h[i][j] - mean) * inv; // gamma=1, beta=0 at init
            }
        }
        for i in 0..4 {
            for j in 0..3 {
                let mut acc = b2[j];
                for k in 0..5 {
                    acc += h[i][k] * w2.get(k, j);
                }
                assert!(
                    close(y.get(i, j), acc, 1e-12),
                    "({i},{j}): {} vs {acc}",
                    y.get(i, j)
                );
            }
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_param_grads() {
        let specs = [
            LayerSpec::fully_connected(4, 6),
            LayerSpec::elu(6),
            LayerSpec::batch_norm(6),
            LayerSpec::fully_connected(6, 2),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = NetworkParams::<f64>::init(&specs, &mut rng);
        let x = DenseMatrix::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.1 - 0.5).collect());
        let (y, cache) = forward_train(&mut params, &specs, &x).unwrap();
        let zero = DenseMatrix::zeros(y.rows(), y.cols());
        let (grads, _) = backward(&params, &specs, &cache, &zero, false).unwrap();
        for i in 0..params.trainable_len() {
            assert_eq!(grads.trainable(i), 0.0);
        }
    }

    #[test]
    fn linear_network_weight_gradient_is_input() {
        // y = w * x, loss = y (output grad 1), single sample: dL/dw = x.
        let specs = [LayerSpec::fully_connected(1, 1)];
        let mut params = NetworkParams {
            layers: vec![LayerParams::Fc {
                weights: DenseMatrix::from_vec(1, 1, vec![2.5f64]),
                bias: vec![0.0],
            }],
        };
        let x = DenseMatrix::from_vec(1, 1, vec![3.7]);
        let (_, cache) = forward_train(&mut params, &specs, &x).unwrap();
        let one = DenseMatrix::from_vec(1, 1, vec![1.0]);
        let (grads, _) = backward(&params, &specs, &cache, &one, false).unwrap();
        assert_eq!(grads.trainable(0), 3.7);
    }

    #[test]
    fn backward_gradients_match_finite_differences_on_1hl_net() {
        let specs = [
            LayerSpec::fully_connected(3, 8),
            LayerSpec::elu(8),
            LayerSpec::batch_norm(8),
            LayerSpec::fully_connected(8, 4),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = NetworkParams::<f64>::init(&specs, &mut rng);
        let x = DenseMatrix::from_vec(5, 3, (0..15).map(|i| ((i % 7) as f64 - 3.0) / 2.5).collect());

        // Loss: sum of squared outputs / 2, so output grad equals the output.
        let loss = |p: &NetworkParams<f64>| -> f64 {
            let (y, _) = forward_train(&mut p.clone(), &specs, &x).unwrap();
            0.5 * y.as_slice().iter().map(|v| v * v).sum::<f64>()
        };
        let (y, cache) = forward_train(&mut params.clone(), &specs, &x).unwrap();
        let (grads, _) = backward(&params, &specs, &cache, &y, false).unwrap();

        let h = 1e-6;
        for i in 0..params.trainable_len() {
            let orig = params.trainable(i);
            let mut plus = params.clone();
            plus.set_trainable(i, orig + h);
            let mut minus = params.clone();
            minus.set_trainable(i, orig - h);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!(
                close(grads.trainable(i), fd, 1e-6),
                "param {i}: analytic {} vs fd {fd}",
                grads.trainable(i)
            );
        }
    }

    #[test]
    fn batch_norm_train_output_is_standardized() {
        let specs = [LayerSpec::batch_norm(3)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = NetworkParams::<f64>::init(&specs, &mut rng);
        let x = DenseMatrix::from_vec(
            64,
            3,
            (0..192).map(|i| (i as f64 * 0.37).sin() * 5.0 + 2.0).collect(),
        );
        let (y, _) = forward_train(&mut params, &specs, &x).unwrap();
        for j in 0..3 {
            let mean = (0..64).map(|i| y.get(i, j)).sum::<f64>() / 64.0;
            let var = (0..64).map(|i| (y.get(i, j) - mean).powi(2)).sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-4, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }

    #[test]
    fn infer_mode_is_deterministic() {
        let specs = [
            LayerSpec::fully_connected(4, 8),
            LayerSpec::elu(8),
            LayerSpec::batch_norm(8),
            LayerSpec::fully_connected(8, 2),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = NetworkParams::<f32>::init(&specs, &mut rng);
        let x = DenseMatrix::from_vec(6, 4, (0..24).map(|i| i as f32 * 0.3 - 2.0).collect());
        // Fold some batch statistics into the running averages first.
        let _ = forward_train(&mut params, &specs, &x).unwrap();
        let a = forward_infer(&params, &specs, &x).unwrap();
        let b = forward_infer(&params, &specs, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sgd_zero_gradient_is_identity() {
        let specs = [
            LayerSpec::fully_connected(3, 4),
            LayerSpec::batch_norm(4),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = NetworkParams::<f32>::init(&specs, &mut rng);
        let before = params.clone();
        let grads = ParamGrads {
            layers: vec![
                LayerGrads::Fc {
                    weights: DenseMatrix::zeros(3, 4),
                    bias: vec![0.0; 4],
                },
                LayerGrads::BatchNorm {
                    gamma: vec![0.0; 4],
                    beta: vec![0.0; 4],
                },
            ],
        };
        sgd_step(&mut params, &grads, &SgdSchedule::default(), 123);
        assert_eq!(params, before);
    }

    #[test]
    fn schedule_matches_staircase_decay() {
        let s = SgdSchedule::default();
        assert_eq!(s.learning_rate(0), 0.001);
        assert_eq!(s.learning_rate(4_999), 0.001);
        assert!((s.learning_rate(5_000) - 0.00097).abs() < 1e-12);
        assert!((s.learning_rate(10_000) - 0.001 * 0.97 * 0.97).abs() < 1e-12);
    }

    #[test]
    fn elu_closed_form_values() {
        assert_eq!(elu(0.0f64), 0.0);
        assert_eq!(elu(2.0f64), 2.0);
        let expected = (-1.0f64).exp() - 1.0;
        assert!((elu(-1.0f64) - expected).abs() < 1e-15);
        assert!((expected - -0.6321).abs() < 1e-4);
        assert_eq!(elu_derivative(3.0f64), 1.0);
        assert!((elu_derivative(-1.0f64) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_a_config_error() {
        let specs = [LayerSpec::fully_connected(4, 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = NetworkParams::<f64>::init(&specs, &mut rng);
        let x = DenseMatrix::zeros(2, 3);
        match forward_infer(&params, &specs, &x) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
