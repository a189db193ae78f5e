//! The feature decoder: a dense network mirroring the hash encoder that
//! reconstructs approximate input features from hard binary codes, plus the
//! two-phase training schedule (joint, then decoder-only).
//!
//! The decoder consumes codes as ±1 reals (bit 1 → +1) and ends in a tanh,
//! so reconstructions live in (−1, 1) componentwise — which covers every
//! attainable target once inputs are l2-normalized. Crucially, no gradient
//! ever flows from the decoder back into the encoder: the encoder's output
//! enters the decoder only through the non-differentiable sign.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codes::CodeSet;
use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::hashing::{build_batch, hash_step, HashModel, TrainConfig, TrainLogRow};
use crate::matrix::DenseMatrix;
use crate::nn::{
    backward, forward_infer, forward_infer_chunked, forward_train, sgd_step, validate_specs,
    LayerSpec, NetworkParams, SgdSchedule,
};
use crate::scalar::Scalar;

const RECONSTRUCT_CHUNK_ROWS: usize = 512;

/// Builds the decoder layer chain mirroring an encoder of the same depth.
///
/// * 0 hidden layers: `fc(M → n), tanh`
/// * 1 hidden layer: `fc(M → 8M), elu, batch_norm, fc(8M → n), tanh`
/// * 2 hidden layers: additionally `fc(8M → 8n), elu, batch_norm` before the
///   output layer.
pub fn decoder_layer_specs(
    code_bits: u32,
    output_dim: usize,
    hidden_layers: u8,
) -> Result<Vec<LayerSpec>> {
    if output_dim == 0 {
        return Err(Error::Config("output_dim must be positive".into()));
    }
    if code_bits == 0 {
        return Err(Error::Config("code_bits must be positive".into()));
    }
    let m = code_bits as usize;
    let n = output_dim;
    let specs = match hidden_layers {
        0 => vec![LayerSpec::fully_connected(m, n), LayerSpec::tanh(n)],
        1 => vec![
            LayerSpec::fully_connected(m, 8 * m),
            LayerSpec::elu(8 * m),
            LayerSpec::batch_norm(8 * m),
            LayerSpec::fully_connected(8 * m, n),
            LayerSpec::tanh(n),
        ],
        2 => vec![
            LayerSpec::fully_connected(m, 8 * m),
            LayerSpec::elu(8 * m),
            LayerSpec::batch_norm(8 * m),
            LayerSpec::fully_connected(8 * m, 8 * n),
            LayerSpec::elu(8 * n),
            LayerSpec::batch_norm(8 * n),
            LayerSpec::fully_connected(8 * n, n),
            LayerSpec::tanh(n),
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

/// The feature decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel<T> {
    specs: Vec<LayerSpec>,
    params: NetworkParams<T>,
    code_bits: u32,
    output_dim: usize,
    hidden_layers: u8,
    /// Identity hash of the encoder this decoder was trained against; zero
    /// until joint training binds it.
    partner_hash: u64,
}

impl<T: Scalar> DecoderModel<T> {
    pub fn init(
        code_bits: u32,
        output_dim: usize,
        hidden_layers: u8,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let specs = decoder_layer_specs(code_bits, output_dim, hidden_layers)?;
        let params = NetworkParams::init(&specs, rng);
        Ok(Self {
            specs,
            params,
            code_bits,
            output_dim,
            hidden_layers,
            partner_hash: 0,
        })
    }

    pub fn from_parts(
        code_bits: u32,
        output_dim: usize,
        hidden_layers: u8,
        params: NetworkParams<T>,
        partner_hash: u64,
    ) -> Result<Self> {
        let specs = decoder_layer_specs(code_bits, output_dim, hidden_layers)?;
        if params.layers.len() != specs.len() {
            return Err(Error::InvalidArtifact(
                "parameter chain does not match decoder architecture".into(),
            ));
        }
        Ok(Self {
            specs,
            params,
            code_bits,
            output_dim,
            hidden_layers,
            partner_hash,
        })
    }

    pub fn code_bits(&self) -> u32 {
        self.code_bits
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
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

    pub fn partner_hash(&self) -> u64 {
        self.partner_hash
    }

    pub fn set_partner_hash(&mut self, hash: u64) {
        self.partner_hash = hash;
    }

    fn check_bits(&self, bits: u32) -> Result<()> {
        if bits != self.code_bits {
            return Err(Error::Config(format!(
                "codes have {bits} bits, decoder expects {}",
                self.code_bits
            )));
        }
        Ok(())
    }

    /// Reconstructs x̂ for every code in the set (inference mode,
    /// chunk-parallel over rows with order preserved).
    pub fn reconstruct(&self, codes: &CodeSet) -> Result<DenseMatrix<T>> {
        self.check_bits(codes.bits())?;
        let unpacked = codes.unpack::<T>();
        forward_infer_chunked(&self.params, &self.specs, &unpacked, RECONSTRUCT_CHUNK_ROWS)
    }

    /// Reconstructs x̂ for the selected code ids only, in the given order.
    pub fn reconstruct_rows(&self, codes: &CodeSet, ids: &[usize]) -> Result<DenseMatrix<T>> {
        self.check_bits(codes.bits())?;
        let m = self.code_bits as usize;
        let mut data = Vec::with_capacity(ids.len() * m);
        for &id in ids {
            data.extend(codes.unpack_row::<T>(id));
        }
        let unpacked = DenseMatrix::from_vec(ids.len(), m, data);
        forward_infer(&self.params, &self.specs, &unpacked)
    }

    /// Reconstructs from an unpacked ±1 code matrix (inference mode).
    pub fn reconstruct_unpacked(&self, codes_pm1: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if codes_pm1.cols() != self.code_bits as usize {
            return Err(Error::Config(format!(
                "code width {} does not match decoder input {}",
                codes_pm1.cols(),
                self.code_bits
            )));
        }
        forward_infer_chunked(&self.params, &self.specs, codes_pm1, RECONSTRUCT_CHUNK_ROWS)
    }
}

/// Reconstruction loss `L_D = (1/N) Σ_i ‖x_i − x̂_i‖₂` — the mean of
/// per-sample Euclidean norms (not squared norms).
pub fn reconstruction_loss<T: Scalar>(
    original: &DenseMatrix<T>,
    reconstructed: &DenseMatrix<T>,
) -> Result<f64> {
    check_same_shape(original, reconstructed)?;
    let mut sum = 0.0;
    for i in 0..original.rows() {
        sum += DenseMatrix::row_distance(original.row(i), reconstructed.row(i)).to_f64_lossy();
    }
    Ok(sum / original.rows() as f64)
}

/// Reconstruction loss plus its gradient with respect to the reconstruction:
/// `∂L_D/∂x̂_i = (x̂_i − x_i) / (N · ‖x_i − x̂_i‖)`, zero for an exactly-zero
/// residual row (the norm is non-differentiable there).
pub fn reconstruction_loss_with_grad<T: Scalar>(
    original: &DenseMatrix<T>,
    reconstructed: &DenseMatrix<T>,
) -> Result<(f64, DenseMatrix<T>)> {
    check_same_shape(original, reconstructed)?;
    let n = original.rows();
    let mut grad = DenseMatrix::zeros(n, original.cols());
    let mut sum = 0.0;
    for i in 0..n {
        let x = original.row(i);
        let xh = reconstructed.row(i);
        let dist = DenseMatrix::row_distance(x, xh);
        sum += dist.to_f64_lossy();
        if dist == T::zero() {
            continue;
        }
        let scale = T::one() / (T::from_f64_lossy(n as f64) * dist);
        let out = grad.row_mut(i);
        for j in 0..x.len() {
            out[j] = (xh[j] - x[j]) * scale;
        }
    }
    Ok((sum / n as f64, grad))
}

fn check_same_shape<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Config(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if a.rows() == 0 {
        return Err(Error::Config("reconstruction loss of an empty batch".into()));
    }
    Ok(())
}

/// One row of the decoder training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderLogRow {
    pub iteration: u64,
    pub phase: u8,
    pub reconstruction: f64,
    pub learning_rate: f64,
}

/// Writes a decoder training log as CSV.
pub fn write_decoder_log(path: &std::path::Path, rows: &[DecoderLogRow]) -> Result<()> {
    let mut out = String::from("iteration,phase,reconstruction_loss,learning_rate\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.iteration, r.phase, r.reconstruction, r.learning_rate
        ));
    }
    crate::bytesio::write_atomic(path, out.as_bytes())
}

/// Phase-2 (decoder-only) length; the schedule itself is shared with the
/// encoder and its iteration counter continues across phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderConfig {
    pub iterations: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { iterations: 50_000 }
    }
}

/// Both training logs of a two-phase run.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLogs {
    pub hash: Vec<TrainLogRow>,
    pub decoder: Vec<DecoderLogRow>,
}

/// One decoder SGD step on a ±1 code batch against original features.
pub(crate) fn decoder_step<T: Scalar>(
    decoder: &mut DecoderModel<T>,
    codes_pm1: &DenseMatrix<T>,
    targets: &DenseMatrix<T>,
    schedule: &SgdSchedule,
    iteration: u64,
    phase: usize,
) -> Result<DecoderLogRow> {
    let (xhat, cache) = forward_train(&mut decoder.params, &decoder.specs, codes_pm1)?;
    let (l_d, dxhat) = reconstruction_loss_with_grad(targets, &xhat)?;
    if !l_d.is_finite() {
        return Err(Error::Training {
            phase,
            iteration,
            message: format!("reconstruction loss diverged ({l_d})"),
        });
    }
    let (grads, _) = backward(&decoder.params, &decoder.specs, &cache, &dxhat, false)?;
    sgd_step(&mut decoder.params, &grads, schedule, iteration);
    Ok(DecoderLogRow {
        iteration,
        phase: phase as u8,
        reconstruction: l_d,
        learning_rate: schedule.learning_rate(iteration),
    })
}

fn sign_pm1<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Two-phase training.
///
/// Phase 1 (`hash_config.iterations` steps): per ranked batch, the encoder
/// takes its combined-loss SGD step, and the decoder takes a reconstruction
/// step on the *hard* codes of the same batch — `sign` of the train-mode
/// pre-activations — so no gradient reaches the encoder.
///
/// Phase 2 (`decoder_config.iterations` steps): the encoder is frozen;
/// fresh batches are encoded in inference mode and only the decoder updates.
/// One learning-rate schedule spans both phases (the step counter carries
/// over), and the whole run is deterministic per seed.
pub fn train_joint_then_decoder<T: Scalar>(
    trainset: &FeatureSet<T>,
    hash_config: &TrainConfig,
    decoder_config: &DecoderConfig,
) -> Result<(HashModel<T>, DecoderModel<T>, JointLogs)> {
    hash_config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hash_config.seed);
    let mut hash = HashModel::init(
        trainset.dim(),
        hash_config.code_bits,
        hash_config.hidden_layers,
        &mut rng,
    )?;
    let mut decoder = DecoderModel::init(
        hash_config.code_bits,
        trainset.dim(),
        hash_config.hidden_layers,
        &mut rng,
    )?;
    let schedule = hash_config.schedule;
    let mut weights = None;
    let mut logs = JointLogs {
        hash: Vec::with_capacity(hash_config.iterations as usize),
        decoder: Vec::with_capacity((hash_config.iterations + decoder_config.iterations) as usize),
    };

    for it in 0..hash_config.iterations {
        let batch = build_batch(trainset, hash_config.batch_size, &mut rng)?;
        let step = hash_step(&mut hash, &batch, &mut weights, &schedule, it)?;
        let hard = step.pre_activation.map(sign_pm1);
        logs.hash.push(step.log);
        logs.decoder
            .push(decoder_step(&mut decoder, &hard, &batch.features, &schedule, it, 1)?);
    }

    for k in 0..decoder_config.iterations {
        let it = hash_config.iterations + k;
        let batch = build_batch(trainset, hash_config.batch_size, &mut rng)?;
        let z = forward_infer(hash.params(), hash.specs(), &batch.features)?;
        let hard = z.map(sign_pm1);
        logs.decoder
            .push(decoder_step(&mut decoder, &hard, &batch.features, &schedule, it, 2)?);
    }

    decoder.set_partner_hash(hash.identity_hash());
    Ok((hash, decoder, logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};
    use crate::nn::LayerParams;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_codes(count: usize, bits: u32, seed: u64) -> CodeSet {
        let mut r = rng(seed);
        let rows: Vec<Vec<u8>> = (0..count)
            .map(|_| (0..bits).map(|_| r.random_range(0..2u8)).collect())
            .collect();
        CodeSet::pack(bits, &rows).unwrap()
    }

    fn zero_decoder(bits: u32, dim: usize) -> DecoderModel<f64> {
        let params = NetworkParams {
            layers: vec![
                LayerParams::Fc {
                    weights: DenseMatrix::zeros(bits as usize, dim),
                    bias: vec![0.0; dim],
                },
                LayerParams::Stateless,
            ],
        };
        DecoderModel::from_parts(bits, dim, 0, params, 0).unwrap()
    }

    #[test]
    fn zero_weight_decoder_reconstructs_zeros() {
        let dec = zero_decoder(16, 5);
        let codes = random_codes(7, 16, 1);
        let xhat = dec.reconstruct(&codes).unwrap();
        assert!(xhat.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_codes_give_identical_reconstructions() {
        let mut r = rng(5);
        let dec = DecoderModel::<f64>::init(12, 6, 1, &mut r).unwrap();
        let row: Vec<u8> = (0..12).map(|j| (j % 2) as u8).collect();
        let codes = CodeSet::pack(12, &[row.clone(), row]).unwrap();
        let xhat = dec.reconstruct(&codes).unwrap();
        assert_eq!(xhat.row(0), xhat.row(1));
    }

    #[test]
    fn reconstruction_matches_straight_line_forward() {
        // 0HL decoder: x̂ = tanh(b·W + bias), recomputed with plain loops.
        let mut r = rng(9);
        let dec = DecoderModel::<f64>::init(8, 3, 0, &mut r).unwrap();
        let codes = random_codes(4, 8, 2);
        let xhat = dec.reconstruct(&codes).unwrap();
        let (w, bias) = match &dec.params().layers[0] {
            LayerParams::Fc { weights, bias } => (weights, bias),
            _ => unreachable!(),
        };
        for i in 0..4 {
            let b = codes.unpack_row::<f64>(i);
            for j in 0..3 {
                let mut acc = bias[j];
                for (k, &bk) in b.iter().enumerate() {
                    acc += bk * w.get(k, j);
                }
                assert!((xhat.get(i, j) - acc.tanh()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstruct_rows_matches_full_reconstruct() {
        let mut r = rng(13);
        let dec = DecoderModel::<f32>::init(16, 4, 1, &mut r).unwrap();
        let codes = random_codes(10, 16, 3);
        let full = dec.reconstruct(&codes).unwrap();
        let some = dec.reconstruct_rows(&codes, &[7, 0, 3]).unwrap();
        assert_eq!(some.row(0), full.row(7));
        assert_eq!(some.row(1), full.row(0));
        assert_eq!(some.row(2), full.row(3));
    }

    #[test]
    fn reconstruction_output_is_in_open_unit_interval() {
        let mut r = rng(17);
        let dec = DecoderModel::<f64>::init(32, 8, 2, &mut r).unwrap();
        let codes = random_codes(20, 32, 4);
        let xhat = dec.reconstruct(&codes).unwrap();
        assert!(xhat.as_slice().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn bit_width_mismatch_is_rejected() {
        let dec = zero_decoder(16, 5);
        let codes = random_codes(3, 8, 5);
        assert!(matches!(dec.reconstruct(&codes), Err(Error::Config(_))));
    }

    #[test]
    fn loss_zero_on_exact_reconstruction() {
        let x = DenseMatrix::from_vec(2, 3, vec![0.1f64, 0.2, 0.3, -0.1, -0.2, -0.3]);
        assert_eq!(reconstruction_loss(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn loss_three_four_five() {
        let x = DenseMatrix::from_vec(1, 2, vec![3.0f64, 4.0]);
        let xh = DenseMatrix::zeros(1, 2);
        assert!((reconstruction_loss(&x, &xh).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_naive_per_row_oracle() {
        let mut r = rng(23);
        let x = DenseMatrix::from_vec(64, 32, (0..2048).map(|_| r.random::<f64>()).collect());
        let xh = DenseMatrix::from_vec(64, 32, (0..2048).map(|_| r.random::<f64>()).collect());
        let mut expected = 0.0;
        for i in 0..64 {
            let mut s = 0.0;
            for j in 0..32 {
                s += (x.get(i, j) - xh.get(i, j)).powi(2);
            }
            expected += s.sqrt();
        }
        expected /= 64.0;
        assert!((reconstruction_loss(&x, &xh).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn loss_shape_mismatch_is_rejected() {
        let a = DenseMatrix::<f64>::zeros(2, 3);
        let b = DenseMatrix::<f64>::zeros(3, 2);
        assert!(matches!(
            reconstruction_loss(&a, &b),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut r = rng(31);
        let x = DenseMatrix::from_vec(4, 5, (0..20).map(|_| r.random::<f64>() - 0.5).collect());
        let xh = DenseMatrix::from_vec(4, 5, (0..20).map(|_| r.random::<f64>() - 0.5).collect());
        let (_, grad) = reconstruction_loss_with_grad(&x, &xh).unwrap();
        let h = 1e-7;
        for idx in 0..20 {
            let mut plus = xh.clone();
            plus.as_mut_slice()[idx] += h;
            let mut minus = xh.clone();
            minus.as_mut_slice()[idx] -= h;
            let fd = (reconstruction_loss(&x, &plus).unwrap()
                - reconstruction_loss(&x, &minus).unwrap())
                / (2.0 * h);
            assert!((grad.as_slice()[idx] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_residual_row_has_zero_gradient() {
        let x = DenseMatrix::from_vec(2, 2, vec![0.5f64, 0.5, 0.1, 0.9]);
        let mut xh = x.clone();
        xh.set(1, 0, 0.3);
        let (_, grad) = reconstruction_loss_with_grad(&x, &xh).unwrap();
        assert_eq!(grad.row(0), &[0.0, 0.0]);
        assert!(grad.row(1)[0] != 0.0);
    }

    #[test]
    fn decoder_param_gradients_match_finite_differences() {
        let mut r = rng(41);
        let dec = DecoderModel::<f64>::init(6, 4, 1, &mut r).unwrap();
        let codes_pm1 = DenseMatrix::from_vec(
            5,
            6,
            (0..30).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect(),
        );
        let targets = DenseMatrix::from_vec(5, 4, (0..20).map(|_| r.random::<f64>() - 0.5).collect());
        let loss_of = |p: &NetworkParams<f64>| {
            let (xhat, _) = forward_train(&mut p.clone(), dec.specs(), &codes_pm1).unwrap();
            reconstruction_loss(&targets, &xhat).unwrap()
        };
        let (xhat, cache) = forward_train(&mut dec.params.clone(), &dec.specs, &codes_pm1).unwrap();
        let (_, dxhat) = reconstruction_loss_with_grad(&targets, &xhat).unwrap();
        let (grads, _) = backward(&dec.params, &dec.specs, &cache, &dxhat, false).unwrap();
        let h = 1e-6;
        for i in 0..dec.params.trainable_len() {
            let orig = dec.params.trainable(i);
            let mut plus = dec.params.clone();
            plus.set_trainable(i, orig + h);
            let mut minus = dec.params.clone();
            minus.set_trainable(i, orig - h);
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let g = grads.trainable(i);
            assert!(
                (g - fd).abs() <= 1e-6 * g.abs().max(fd.abs()).max(1.0),
                "param {i}: analytic {g} vs fd {fd}"
            );
        }
    }

    fn smoke_trainset() -> FeatureSet<f64> {
        generate_synthetic::<f64>(&SyntheticConfig {
            dim: 4,
            train_count: 300,
            base_count: 1,
            query_count: 1,
            cluster_count: 3,
            spread: 0.1,
            seed: 55,
        })
        .unwrap()
        .train
    }

    fn smoke_config(p1: u64, seed: u64) -> TrainConfig {
        TrainConfig {
            code_bits: 32,
            hidden_layers: 1,
            batch_size: 16,
            iterations: p1,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_length_phases_leave_both_models_at_initialization() {
        let ts = smoke_trainset();
        let (hash, dec, logs) = train_joint_then_decoder(
            &ts,
            &smoke_config(0, 77),
            &DecoderConfig { iterations: 0 },
        )
        .unwrap();
        assert!(logs.hash.is_empty() && logs.decoder.is_empty());
        let mut r = rng(77);
        let fresh_hash = HashModel::<f64>::init(4, 32, 1, &mut r).unwrap();
        let mut fresh_dec = DecoderModel::<f64>::init(32, 4, 1, &mut r).unwrap();
        fresh_dec.set_partner_hash(fresh_hash.identity_hash());
        assert_eq!(hash, fresh_hash);
        assert_eq!(dec, fresh_dec);
    }

    #[test]
    fn phase_two_improves_reconstruction() {
        let ts = smoke_trainset();
        let (_, _, logs) = train_joint_then_decoder(
            &ts,
            &smoke_config(500, 3),
            &DecoderConfig { iterations: 500 },
        )
        .unwrap();
        let phase2: Vec<&DecoderLogRow> = logs.decoder.iter().filter(|r| r.phase == 2).collect();
        assert_eq!(phase2.len(), 500);
        let first: f64 = phase2[..10].iter().map(|r| r.reconstruction).sum::<f64>() / 10.0;
        let last: f64 = phase2[490..].iter().map(|r| r.reconstruction).sum::<f64>() / 10.0;
        assert!(last < first, "phase-2 L_D did not fall: {first} -> {last}");
    }

    #[test]
    fn hash_model_is_frozen_through_phase_two() {
        // Same seed, same phase-1 length: the encoder must come out
        // bit-identical whether or not phase 2 runs at all.
        let ts = smoke_trainset();
        let (hash_a, _, _) = train_joint_then_decoder(
            &ts,
            &smoke_config(40, 5),
            &DecoderConfig { iterations: 0 },
        )
        .unwrap();
        let (hash_b, _, _) = train_joint_then_decoder(
            &ts,
            &smoke_config(40, 5),
            &DecoderConfig { iterations: 60 },
        )
        .unwrap();
        assert_eq!(hash_a, hash_b);
    }

    #[test]
    fn same_seed_gives_bit_identical_runs() {
        let ts = smoke_trainset();
        let cfg = smoke_config(30, 13);
        let dcfg = DecoderConfig { iterations: 30 };
        let (h1, d1, l1) = train_joint_then_decoder(&ts, &cfg, &dcfg).unwrap();
        let (h2, d2, l2) = train_joint_then_decoder(&ts, &cfg, &dcfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(d1, d2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn learning_rate_schedule_spans_both_phases() {
        let ts = smoke_trainset();
        let mut cfg = smoke_config(4, 19);
        cfg.schedule = SgdSchedule {
            initial_lr: 0.01,
            decay_rate: 0.5,
            decay_every: 4,
        };
        let (_, _, logs) = train_joint_then_decoder(&ts, &cfg, &DecoderConfig { iterations: 4 }).unwrap();
        // Iterations 0..4 at lr 0.01; the counter keeps running, so the
        // phase-2 steps (iterations 4..8) land in the next decay bucket.
        assert!(logs.decoder[..4].iter().all(|r| r.learning_rate == 0.01));
        assert!(logs.decoder[4..].iter().all(|r| r.learning_rate == 0.005));
        assert_eq!(logs.decoder[4].iteration, 4);
        assert_eq!(logs.decoder[4].phase, 2);
    }

    #[test]
    fn perturbing_the_decoder_never_changes_hash_outputs() {
        let ts = smoke_trainset();
        let (hash, mut dec, _) = train_joint_then_decoder(
            &ts,
            &smoke_config(20, 29),
            &DecoderConfig { iterations: 20 },
        )
        .unwrap();
        let before = hash.encode_hard(ts.features()).unwrap();
        dec.params_mut().set_trainable(0, 123.456);
        let after = hash.encode_hard(ts.features()).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn nan_decoder_loss_aborts_with_phase_and_iteration() {
        let mut r = rng(3);
        let mut dec = DecoderModel::<f64>::init(8, 4, 0, &mut r).unwrap();
        dec.params_mut().set_trainable(0, f64::NAN);
        let codes = DenseMatrix::from_vec(4, 8, vec![1.0; 32]);
        let targets = DenseMatrix::from_vec(4, 4, vec![0.5; 16]);
        match decoder_step(&mut dec, &codes, &targets, &SgdSchedule::default(), 123, 2) {
            Err(Error::Training {
                phase: 2,
                iteration: 123,
                ..
            }) => {}
            other => panic!("expected phase-2 training abort, got {other:?}"),
        }
    }

    #[test]
    fn decoder_log_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dec.csv");
        write_decoder_log(
            &path,
            &[DecoderLogRow {
                iteration: 7,
                phase: 1,
                reconstruction: 0.5,
                learning_rate: 0.001,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "iteration,phase,reconstruction_loss,learning_rate\n7,1,0.5,0.001\n"
        );
    }
}
