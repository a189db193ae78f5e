//! Binary-hashing approximate nearest neighbour engine.
//!
//! The library learns an unsupervised rank-preserving hash encoder that
//! compresses real-valued features into medium-length binary codes (64 to
//! 512 bits), plus a decoder that reconstructs approximate features from
//! those codes. Database vectors are stored *only* as packed codes inside
//! an HNSW graph over Hamming distance; queries are answered by Hamming
//! candidate retrieval followed by an optional asymmetric re-ranking pass
//! against decoder reconstructions, so the original features are never
//! needed at search time.
//!
//! Pipeline overview:
//!
//! ```text
//! train features ──► [hashing]  rank-preserving encoder ──► packed codes
//!                    [decoder]  code → feature reconstructor
//! base features  ──► encode ──► [codes] ──► [hnsw] graph index
//! query feature  ──► encode ──► Hamming search ──► pool ──► re-rank (d_a)
//! ```
//!
//! All numeric kernels are generic over [`Scalar`] (`f32` or `f64`).
//! Training and artifact files run in `f32`; `f64` is used by the
//! gradient-verification tests.

pub(crate) mod bytesio;
pub mod codes;
pub mod data;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod hashing;
pub mod hnsw;
pub mod matrix;
pub mod model_io;
pub mod nn;
pub mod scalar;
pub mod search;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use scalar::Scalar;

/// Single-precision matrix, the default for training and artifacts.
pub type MatF32 = DenseMatrix<f32>;
/// Double-precision matrix, used by high-accuracy checks.
pub type MatF64 = DenseMatrix<f64>;
/// Default single-precision hash encoder.
pub type HashModelF32 = hashing::HashModel<f32>;
/// Double-precision hash encoder for gradient verification.
pub type HashModelF64 = hashing::HashModel<f64>;
/// Default single-precision decoder.
pub type DecoderModelF32 = decoder::DecoderModel<f32>;
/// Default single-precision feature set.
pub type FeatureSetF32 = data::FeatureSet<f32>;
