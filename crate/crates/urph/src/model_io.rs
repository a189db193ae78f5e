//! Model persistence: a little-endian binary container for encoder and
//! decoder networks, and the FNV-1a identity hash that ties artifacts in a
//! pipeline together.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "URPH"  magic
//! u32     format version (1)
//! u8      role (0 = encoder, 1 = decoder)
//! u8      hidden layers (0 | 1 | 2)
//! u8      preprocessing (0 = none, 1 = l2-normalized)
//! u8      reserved (0)
//! u32     feature dim n
//! u32     code bits M
//! u64     identity hash of this model
//! u64     partner hash (decoder: its encoder's identity hash; encoder: 0)
//! u32     layer count, then per layer: u8 kind, u32 in_dim, u32 out_dim
//! f32...  parameter blob, per layer in spec order:
//!         fully_connected → weights (row-major), bias
//!         batch_norm      → gamma, beta, running mean, running variance
//! ```
//!
//! The identity hash is FNV-1a64 over role, hidden-layer count, dims, the
//! layer table, and the parameter blob. Parameters are stored as `f32`
//! regardless of the in-memory scalar type, so the hash is well-defined
//! across precisions; loaders recompute it and reject files whose stored
//! hash disagrees (a built-in integrity check).

use std::path::Path;

use crate::bytesio::{self, Reader};
use crate::data::Preprocessing;
use crate::decoder::DecoderModel;
use crate::error::{Error, Result};
use crate::hashing::HashModel;
use crate::matrix::DenseMatrix;
use crate::nn::{LayerKind, LayerParams, LayerSpec, NetworkParams};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"URPH";
const FORMAT_VERSION: u32 = 1;

pub const ROLE_ENCODER: u8 = 0;
pub const ROLE_DECODER: u8 = 1;

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

fn spec_table(specs: &[LayerSpec]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + specs.len() * 9);
    bytesio::put_u32_le(&mut out, specs.len() as u32);
    for s in specs {
        out.push(s.kind.code());
        bytesio::put_u32_le(&mut out, s.in_dim as u32);
        bytesio::put_u32_le(&mut out, s.out_dim as u32);
    }
    out
}

fn param_blob<T: Scalar>(params: &NetworkParams<T>) -> Vec<u8> {
    let mut out = Vec::new();
    let mut put = |v: T| bytesio::put_f32_le(&mut out, v.to_f64_lossy() as f32);
    for layer in &params.layers {
        match layer {
            LayerParams::Fc { weights, bias } => {
                weights.as_slice().iter().for_each(|&v| put(v));
                bias.iter().for_each(|&v| put(v));
            }
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => {
                gamma.iter().for_each(|&v| put(v));
                beta.iter().for_each(|&v| put(v));
                running_mean.iter().for_each(|&v| put(v));
                running_var.iter().for_each(|&v| put(v));
            }
            LayerParams::Stateless => {}
        }
    }
    out
}

fn identity_of(
    role: u8,
    hidden_layers: u8,
    feature_dim: usize,
    code_bits: u32,
    table: &[u8],
    blob: &[u8],
) -> u64 {
    let mut bytes = Vec::with_capacity(10 + table.len() + blob.len());
    bytes.push(role);
    bytes.push(hidden_layers);
    bytesio::put_u32_le(&mut bytes, feature_dim as u32);
    bytesio::put_u32_le(&mut bytes, code_bits);
    bytes.extend_from_slice(table);
    bytes.extend_from_slice(blob);
    fnv1a64(&bytes)
}

impl<T: Scalar> HashModel<T> {
    /// Content identity of this encoder: architecture plus parameters.
    pub fn identity_hash(&self) -> u64 {
        identity_of(
            ROLE_ENCODER,
            self.hidden_layers(),
            self.input_dim(),
            self.code_bits(),
            &spec_table(self.specs()),
            &param_blob(self.params()),
        )
    }
}

impl<T: Scalar> DecoderModel<T> {
    /// Content identity of this decoder: architecture plus parameters.
    pub fn identity_hash(&self) -> u64 {
        identity_of(
            ROLE_DECODER,
            self.hidden_layers(),
            self.output_dim(),
            self.code_bits(),
            &spec_table(self.specs()),
            &param_blob(self.params()),
        )
    }
}

fn encode_container(
    role: u8,
    hidden_layers: u8,
    preprocessing: Preprocessing,
    feature_dim: usize,
    code_bits: u32,
    partner_hash: u64,
    table: &[u8],
    blob: &[u8],
) -> (Vec<u8>, u64) {
    let identity = identity_of(role, hidden_layers, feature_dim, code_bits, table, blob);
    let mut out = Vec::with_capacity(40 + table.len() + blob.len());
    out.extend_from_slice(MAGIC);
    bytesio::put_u32_le(&mut out, FORMAT_VERSION);
    out.push(role);
    out.push(hidden_layers);
    out.push(match preprocessing {
        Preprocessing::None => 0,
        Preprocessing::L2Normalized => 1,
    });
    out.push(0);
    bytesio::put_u32_le(&mut out, feature_dim as u32);
    bytesio::put_u32_le(&mut out, code_bits);
    bytesio::put_u64_le(&mut out, identity);
    bytesio::put_u64_le(&mut out, partner_hash);
    out.extend_from_slice(table);
    out.extend_from_slice(blob);
    (out, identity)
}

/// Serializes an encoder; returns its identity hash.
pub fn save_encoder<T: Scalar>(
    path: &Path,
    model: &HashModel<T>,
    preprocessing: Preprocessing,
) -> Result<u64> {
    let (bytes, identity) = encode_container(
        ROLE_ENCODER,
        model.hidden_layers(),
        preprocessing,
        model.input_dim(),
        model.code_bits(),
        0,
        &spec_table(model.specs()),
        &param_blob(model.params()),
    );
    bytesio::write_atomic(path, &bytes)?;
    Ok(identity)
}

/// Serializes a decoder (its partner hash travels with it); returns the
/// decoder's own identity hash.
pub fn save_decoder<T: Scalar>(
    path: &Path,
    model: &DecoderModel<T>,
    preprocessing: Preprocessing,
) -> Result<u64> {
    let (bytes, identity) = encode_container(
        ROLE_DECODER,
        model.hidden_layers(),
        preprocessing,
        model.output_dim(),
        model.code_bits(),
        model.partner_hash(),
        &spec_table(model.specs()),
        &param_blob(model.params()),
    );
    bytesio::write_atomic(path, &bytes)?;
    Ok(identity)
}

#[derive(Debug, Clone)]
pub enum LoadedModel<T> {
    Encoder(HashModel<T>),
    Decoder(DecoderModel<T>),
}

#[derive(Debug, Clone)]
pub struct ModelFile<T> {
    pub model: LoadedModel<T>,
    pub preprocessing: Preprocessing,
    pub identity_hash: u64,
    pub partner_hash: u64,
}

fn read_specs(r: &mut Reader) -> Result<Vec<LayerSpec>> {
    let count = r.u32_le("layer count")?;
    let mut specs = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let kind = LayerKind::from_code(r.u8("layer kind")?)
            .ok_or_else(|| Error::InvalidArtifact("unknown layer kind in model file".into()))?;
        let in_dim = r.u32_le("layer in_dim")? as usize;
        let out_dim = r.u32_le("layer out_dim")? as usize;
        specs.push(LayerSpec {
            kind,
            in_dim,
            out_dim,
        });
    }
    Ok(specs)
}

fn read_params<T: Scalar>(r: &mut Reader, specs: &[LayerSpec]) -> Result<NetworkParams<T>> {
    let mut layers = Vec::with_capacity(specs.len());
    let vec_of = |r: &mut Reader, len: usize, what: &str| -> Result<Vec<T>> {
        (0..len)
            .map(|_| Ok(T::from_f64_lossy(r.f32_le(what)? as f64)))
            .collect()
    };
    for s in specs {
        layers.push(match s.kind {
            LayerKind::FullyConnected => {
                let w = vec_of(r, s.in_dim * s.out_dim, "fc weights")?;
                let bias = vec_of(r, s.out_dim, "fc bias")?;
                LayerParams::Fc {
                    weights: DenseMatrix::from_vec(s.in_dim, s.out_dim, w),
                    bias,
                }
            }
            LayerKind::BatchNorm => LayerParams::BatchNorm {
                gamma: vec_of(r, s.out_dim, "bn gamma")?,
                beta: vec_of(r, s.out_dim, "bn beta")?,
                running_mean: vec_of(r, s.out_dim, "bn running mean")?,
                running_var: vec_of(r, s.out_dim, "bn running variance")?,
            },
            LayerKind::Elu | LayerKind::Tanh => LayerParams::Stateless,
        });
    }
    Ok(NetworkParams { layers })
}

/// Loads either model role, verifying version, architecture, and the stored
/// identity hash against the recomputed one.
pub fn load_model<T: Scalar>(path: &Path) -> Result<ModelFile<T>> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader::new(&bytes);
    r.expect_magic(MAGIC, "model")?;
    let version = r.u32_le("format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::InvalidArtifact(format!(
            "unsupported model format version {version}"
        )));
    }
    let role = r.u8("role")?;
    let hidden_layers = r.u8("hidden layers")?;
    let preprocessing = match r.u8("preprocessing flag")? {
        0 => Preprocessing::None,
        1 => Preprocessing::L2Normalized,
        f => {
            return Err(Error::InvalidArtifact(format!(
                "unknown preprocessing flag {f}"
            )))
        }
    };
    r.u8("reserved byte")?;
    let feature_dim = r.u32_le("feature dim")? as usize;
    let code_bits = r.u32_le("code bits")?;
    let stored_identity = r.u64_le("identity hash")?;
    let partner_hash = r.u64_le("partner hash")?;
    let table_start = r.offset() as usize;
    let specs = read_specs(&mut r)?;
    let table_end = r.offset() as usize;
    let blob_start = table_end;
    let params = read_params::<T>(&mut r, &specs)?;
    let blob_end = r.offset() as usize;
    r.finish("model")?;

    let recomputed = identity_of(
        role,
        hidden_layers,
        feature_dim,
        code_bits,
        &bytes[table_start..table_end],
        &bytes[blob_start..blob_end],
    );
    if recomputed != stored_identity {
        return Err(Error::InvalidArtifact(
            "model file is corrupt: stored identity hash does not match content".into(),
        ));
    }

    let model = match role {
        ROLE_ENCODER => {
            let model = HashModel::from_parts(feature_dim, code_bits, hidden_layers, params)?;
            if model.specs() != specs.as_slice() {
                return Err(Error::InvalidArtifact(
                    "encoder layer table does not match its declared architecture".into(),
                ));
            }
            LoadedModel::Encoder(model)
        }
        ROLE_DECODER => {
            let model =
                DecoderModel::from_parts(code_bits, feature_dim, hidden_layers, params, partner_hash)?;
            if model.specs() != specs.as_slice() {
                return Err(Error::InvalidArtifact(
                    "decoder layer table does not match its declared architecture".into(),
                ));
            }
            LoadedModel::Decoder(model)
        }
        other => {
            return Err(Error::InvalidArtifact(format!(
                "unknown model role {other}"
            )))
        }
    };
    Ok(ModelFile {
        model,
        preprocessing,
        identity_hash: stored_identity,
        partner_hash,
    })
}

/// Loads a file that must contain an encoder.
pub fn load_encoder<T: Scalar>(path: &Path) -> Result<(HashModel<T>, Preprocessing)> {
    let file = load_model(path)?;
    match file.model {
        LoadedModel::Encoder(m) => Ok((m, file.preprocessing)),
        LoadedModel::Decoder(_) => Err(Error::ArtifactMismatch(format!(
            "{} holds a decoder, expected an encoder",
            path.display()
        ))),
    }
}

/// Loads a file that must contain a decoder.
pub fn load_decoder<T: Scalar>(path: &Path) -> Result<(DecoderModel<T>, Preprocessing)> {
    let file = load_model(path)?;
    match file.model {
        LoadedModel::Decoder(m) => Ok((m, file.preprocessing)),
        LoadedModel::Encoder(_) => Err(Error::ArtifactMismatch(format!(
            "{} holds an encoder, expected a decoder",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn fnv1a64_reference_vectors() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn encoder_round_trip_is_exact_for_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = HashModel::<f32>::init(6, 16, 1, &mut rng).unwrap();
        let dir = tmp();
        let path = dir.path().join("enc.urph");
        let saved_id = save_encoder(&path, &model, Preprocessing::L2Normalized).unwrap();
        assert_eq!(saved_id, model.identity_hash());
        let (loaded, prep) = load_encoder::<f32>(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(prep, Preprocessing::L2Normalized);
        assert_eq!(loaded.identity_hash(), saved_id);
    }

    #[test]
    fn decoder_round_trip_keeps_partner_hash() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = DecoderModel::<f32>::init(16, 6, 2, &mut rng).unwrap();
        model.set_partner_hash(0x1234_5678_9abc_def0);
        let dir = tmp();
        let path = dir.path().join("dec.urph");
        save_decoder(&path, &model, Preprocessing::None).unwrap();
        let (loaded, prep) = load_decoder::<f32>(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(prep, Preprocessing::None);
        assert_eq!(loaded.partner_hash(), 0x1234_5678_9abc_def0);
    }

    #[test]
    fn f64_models_round_trip_through_f32_storage() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = HashModel::<f64>::init(4, 8, 1, &mut rng).unwrap();
        let dir = tmp();
        let path = dir.path().join("enc64.urph");
        save_encoder(&path, &model, Preprocessing::None).unwrap();
        let (loaded, _) = load_encoder::<f64>(&path).unwrap();
        // Stored as f32: values match to f32 precision, identity exactly.
        assert_eq!(loaded.identity_hash(), model.identity_hash());
        for i in 0..model.params().trainable_len() {
            let a = model.params().trainable(i);
            let b = loaded.params().trainable(i);
            assert!((a - b).abs() <= a.abs() * 1e-6 + 1e-7, "param {i}: {a} vs {b}");
        }
    }

    #[test]
    fn identity_hash_tracks_parameter_changes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = HashModel::<f32>::init(5, 8, 0, &mut rng).unwrap();
        let before = model.identity_hash();
        let mut changed = model.clone();
        changed.params_mut().set_trainable(3, 0.125);
        assert_ne!(before, changed.identity_hash());
    }

    #[test]
    fn corrupted_parameters_fail_the_integrity_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = HashModel::<f32>::init(4, 8, 0, &mut rng).unwrap();
        let dir = tmp();
        let path = dir.path().join("enc.urph");
        save_encoder(&path, &model, Preprocessing::None).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 2;
        bytes[last] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        match load_encoder::<f32>(&path) {
            Err(Error::InvalidArtifact(msg)) => assert!(msg.contains("identity"), "{msg}"),
            other => panic!("expected integrity failure, got {other:?}"),
        }
    }

    #[test]
    fn truncated_model_file_is_a_parse_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = HashModel::<f32>::init(4, 8, 1, &mut rng).unwrap();
        let dir = tmp();
        let path = dir.path().join("enc.urph");
        save_encoder(&path, &model, Preprocessing::None).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_encoder::<f32>(&path),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("junk.urph");
        std::fs::write(&path, b"JUNKJUNKJUNK").unwrap();
        assert!(matches!(
            load_model::<f32>(&path),
            Err(Error::InvalidArtifact(_))
        ));
    }

    #[test]
    fn role_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = HashModel::<f32>::init(4, 8, 0, &mut rng).unwrap();
        let dec = DecoderModel::<f32>::init(8, 4, 0, &mut rng).unwrap();
        let dir = tmp();
        let enc_path = dir.path().join("enc.urph");
        let dec_path = dir.path().join("dec.urph");
        save_encoder(&enc_path, &enc, Preprocessing::None).unwrap();
        save_decoder(&dec_path, &dec, Preprocessing::None).unwrap();
        assert!(matches!(
            load_encoder::<f32>(&dec_path),
            Err(Error::ArtifactMismatch(_))
        ));
        assert!(matches!(
            load_decoder::<f32>(&enc_path),
            Err(Error::ArtifactMismatch(_))
        ));
    }

    #[test]
    fn encoder_and_decoder_identities_differ_by_role() {
        // Same dims both ways; the role byte keeps identities apart even if
        // architectures were to coincide.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let enc = HashModel::<f32>::init(8, 8, 0, &mut rng).unwrap();
        let dec = DecoderModel::<f32>::init(8, 8, 0, &mut rng).unwrap();
        assert_ne!(enc.identity_hash(), dec.identity_hash());
    }
}
