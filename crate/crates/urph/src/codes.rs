//! Bit-packed binary codes and Hamming distance.
//!
//! Each code is `bits` binary digits stored little-endian in 64-bit words:
//! bit `j` lives in word `j / 64` at bit position `j % 64`, and the unused
//! padding bits of the last word are always zero, so distances can be taken
//! directly over whole words with XOR + popcount.

use std::path::Path;

use crate::bytesio::{self, Reader};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"URPC";
const FORMAT_VERSION: u32 = 1;

/// A fixed-width set of packed binary codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSet {
    bits: u32,
    words_per_code: usize,
    count: usize,
    words: Vec<u64>,
    /// Identity hash of the encoder that produced these codes; zero when the
    /// codes were built outside the model pipeline (e.g. random baselines).
    encoder_hash: u64,
}

impl CodeSet {
    pub fn new(bits: u32) -> Self {
        assert!(bits > 0, "codes must have at least one bit");
        Self {
            bits,
            words_per_code: bits.div_ceil(64) as usize,
            count: 0,
            words: Vec::new(),
            encoder_hash: 0,
        }
    }

    pub fn with_capacity(bits: u32, capacity: usize) -> Self {
        let mut s = Self::new(bits);
        s.words.reserve(capacity * s.words_per_code);
        s
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn encoder_hash(&self) -> u64 {
        self.encoder_hash
    }

    pub fn set_encoder_hash(&mut self, hash: u64) {
        self.encoder_hash = hash;
    }

    /// Appends one code given as 0/1 digits (length must equal `bits`).
    pub fn push_bits(&mut self, bits: &[u8]) -> Result<()> {
        if bits.len() != self.bits as usize {
            return Err(Error::Config(format!(
                "code has {} bits, expected {}",
                bits.len(),
                self.bits
            )));
        }
        let start = self.words.len();
        self.words.resize(start + self.words_per_code, 0);
        for (j, &b) in bits.iter().enumerate() {
            if b != 0 {
                self.words[start + j / 64] |= 1u64 << (j % 64);
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Packs a batch of 0/1 rows into a fresh set.
    pub fn pack(bits_per_code: u32, rows: &[Vec<u8>]) -> Result<Self> {
        let mut set = Self::with_capacity(bits_per_code, rows.len());
        for row in rows {
            set.push_bits(row)?;
        }
        Ok(set)
    }

    /// The packed words of code `i`.
    pub fn code(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_code..(i + 1) * self.words_per_code]
    }

    /// Hamming distance between stored codes `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> u32 {
        hamming(self.code(i), self.code(j))
    }

    /// Hamming distance between stored code `i` and an external code.
    pub fn distance_to(&self, i: usize, query: &[u64]) -> u32 {
        hamming(self.code(i), query)
    }

    /// Unpacks code `i` to a ±1 vector (bit 1 → +1, bit 0 → −1).
    pub fn unpack_row<T: Scalar>(&self, i: usize) -> Vec<T> {
        let words = self.code(i);
        (0..self.bits as usize)
            .map(|j| {
                if words[j / 64] >> (j % 64) & 1 == 1 {
                    T::one()
                } else {
                    -T::one()
                }
            })
            .collect()
    }

    /// Unpacks every code into a `(len, bits)` ±1 matrix.
    pub fn unpack<T: Scalar>(&self) -> DenseMatrix<T> {
        let m = self.bits as usize;
        let mut data = Vec::with_capacity(self.count * m);
        for i in 0..self.count {
            data.extend(self.unpack_row::<T>(i));
        }
        DenseMatrix::from_vec(self.count, m, data)
    }

    /// Unpacks back to 0/1 digits; inverse of [`CodeSet::push_bits`].
    pub fn bits_of(&self, i: usize) -> Vec<u8> {
        let words = self.code(i);
        (0..self.bits as usize)
            .map(|j| (words[j / 64] >> (j % 64) & 1) as u8)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(28 + self.words.len() * 8);
        buf.extend_from_slice(MAGIC);
        bytesio::put_u32_le(&mut buf, FORMAT_VERSION);
        bytesio::put_u64_le(&mut buf, self.count as u64);
        bytesio::put_u32_le(&mut buf, self.bits);
        bytesio::put_u64_le(&mut buf, self.encoder_hash);
        for &w in &self.words {
            bytesio::put_u64_le(&mut buf, w);
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC, "code set")?;
        let version = r.u32_le("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::InvalidArtifact(format!(
                "unsupported code set format version {version}"
            )));
        }
        let count = r.u64_le("code count")? as usize;
        let bits = r.u32_le("bits per code")?;
        if bits == 0 {
            return Err(Error::InvalidArtifact("code set with zero bits".into()));
        }
        let encoder_hash = r.u64_le("encoder hash")?;
        let words_per_code = bits.div_ceil(64) as usize;
        let mut words = Vec::with_capacity(count * words_per_code);
        for _ in 0..count * words_per_code {
            words.push(r.u64_le("packed code words")?);
        }
        r.finish("code set")?;
        let pad = (words_per_code * 64) as u32 - bits;
        if pad > 0 {
            let mask = u64::MAX << (64 - pad);
            for (i, chunk) in words.chunks(words_per_code).enumerate() {
                if chunk[words_per_code - 1] & mask != 0 {
                    return Err(Error::InvalidArtifact(format!(
                        "code {i} has nonzero padding bits"
                    )));
                }
            }
        }
        Ok(Self {
            bits,
            words_per_code,
            count,
            words,
            encoder_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        bytesio::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Hamming distance between two packed codes of equal width.
pub fn hamming(a: &[u64], b: &[u64]) -> u32 {
    debug_assert_eq!(a.len(), b.len(), "codes must have the same width");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x ^ y).count_ones())
        .sum()
}

/// How many times smaller an `M`-bit code is than the raw input vector.
pub fn compression_ratio(input_dim: usize, input_bytes_per_component: usize, m_bits: u32) -> f64 {
    (input_dim * input_bytes_per_component * 8) as f64 / m_bits as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_codes_have_distance_zero() {
        let row = vec![1, 0, 1, 1, 0, 0, 1, 0];
        let set = CodeSet::pack(8, &[row.clone(), row]).unwrap();
        assert_eq!(set.distance(0, 1), 0);
    }

    #[test]
    fn complementary_nibbles_differ_in_every_bit() {
        // 0b1010 vs 0b0101 over 4 bits.
        let set = CodeSet::pack(4, &[vec![0, 1, 0, 1], vec![1, 0, 1, 0]]).unwrap();
        assert_eq!(set.distance(0, 1), 4);
    }

    #[test]
    fn bit_64_lands_in_word_1_bit_0() {
        let mut bits = vec![0u8; 65];
        bits[64] = 1;
        let set = CodeSet::pack(65, &[bits]).unwrap();
        assert_eq!(set.words_per_code(), 2);
        assert_eq!(set.code(0), &[0u64, 1u64]);
    }

    #[test]
    fn all_zero_bits_pack_to_zero_words() {
        let set = CodeSet::pack(130, &[vec![0; 130]]).unwrap();
        assert!(set.code(0).iter().all(|&w| w == 0));
    }

    #[test]
    fn unpack_maps_bits_to_signs() {
        let set = CodeSet::pack(3, &[vec![1, 0, 1]]).unwrap();
        assert_eq!(set.unpack_row::<f64>(0), vec![1.0, -1.0, 1.0]);
        let m = set.unpack::<f32>();
        assert_eq!(m.rows(), 1);
        assert_eq!(m.cols(), 3);
    }

    #[test]
    fn hamming_matches_per_bit_loop_on_random_256_bit_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a: Vec<u8> = (0..256).map(|_| rng.random_range(0..2u8)).collect();
            let b: Vec<u8> = (0..256).map(|_| rng.random_range(0..2u8)).collect();
            let expected = a.iter().zip(&b).filter(|(x, y)| x != y).count() as u32;
            let set = CodeSet::pack(256, &[a, b]).unwrap();
            assert_eq!(set.distance(0, 1), expected);
        }
    }

    #[test]
    fn compression_ratio_examples() {
        assert_eq!(compression_ratio(128, 4, 256), 16.0);
        assert_eq!(compression_ratio(96, 4, 64), 48.0);
        // M = n * 32 bits stores exactly as many bits as the f32 input.
        assert_eq!(compression_ratio(10, 4, 320), 1.0);
    }

    #[test]
    fn wrong_bit_count_is_rejected() {
        let mut set = CodeSet::new(8);
        assert!(matches!(
            set.push_bits(&[1, 0, 1]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn file_round_trip_preserves_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<u8>> = (0..17)
            .map(|_| (0..100).map(|_| rng.random_range(0..2u8)).collect())
            .collect();
        let mut set = CodeSet::pack(100, &rows).unwrap();
        set.set_encoder_hash(0xDEAD_BEEF_1234_5678);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.urpc");
        set.save(&path).unwrap();
        let loaded = CodeSet::load(&path).unwrap();
        assert_eq!(loaded, set);
    }

    #[test]
    fn truncated_file_is_a_clean_error() {
        let set = CodeSet::pack(64, &[vec![1; 64], vec![0; 64]]).unwrap();
        let bytes = set.to_bytes();
        for cut in [0, 3, 10, bytes.len() - 1] {
            match CodeSet::from_bytes(&bytes[..cut]) {
                Err(Error::Parse { .. }) | Err(Error::InvalidArtifact(_)) => {}
                other => panic!("cut at {cut}: expected load error, got {other:?}"),
            }
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = CodeSet::pack(8, &[vec![0; 8]]).unwrap().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            CodeSet::from_bytes(&bytes),
            Err(Error::InvalidArtifact(_))
        ));
    }

    #[test]
    fn corrupted_padding_is_rejected_on_load() {
        let set = CodeSet::pack(65, &[vec![1; 65]]).unwrap();
        let mut bytes = set.to_bytes();
        // Flip the topmost bit of the final word: padding for a 65-bit code.
        let last = bytes.len() - 1;
        bytes[last] |= 0x80;
        assert!(matches!(
            CodeSet::from_bytes(&bytes),
            Err(Error::InvalidArtifact(_))
        ));
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trips(
            m in 1u32..=130,
            seed in 0u64..1_000,
            count in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<u8>> = (0..count)
                .map(|_| (0..m).map(|_| rng.random_range(0..2u8)).collect())
                .collect();
            let set = CodeSet::pack(m, &rows).unwrap();
            for (i, row) in rows.iter().enumerate() {
                prop_assert_eq!(&set.bits_of(i), row);
            }
        }

        #[test]
        fn hamming_is_a_metric(
            m in 1u32..=200,
            seed in 0u64..1_000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<u8>> = (0..3)
                .map(|_| (0..m).map(|_| rng.random_range(0..2u8)).collect())
                .collect();
            let s = CodeSet::pack(m, &rows).unwrap();
            let (ab, bc, ac) = (s.distance(0, 1), s.distance(1, 2), s.distance(0, 2));
            prop_assert_eq!(s.distance(1, 0), ab);
            prop_assert_eq!(s.distance(0, 0), 0);
            prop_assert!(ab + bc >= ac, "triangle violated: {} + {} < {}", ab, bc, ac);
            prop_assert!(ab <= m && bc <= m && ac <= m);
        }
    }
}
