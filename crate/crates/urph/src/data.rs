//! Dataset loading (fvecs / bvecs / ivecs), l2 preprocessing, and synthetic
//! Gaussian-mixture data for desk-scale experiments.
//!
//! All three file formats share one record shape: a little-endian `i32`
//! component count followed by that many components (`f32` for fvecs, `u8`
//! for bvecs, `i32` for ivecs). Every record in a file must declare the same
//! count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocessing {
    None,
    L2Normalized,
}

/// A row-major feature matrix plus a record of how it was preprocessed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    features: DenseMatrix<T>,
    preprocessing: Preprocessing,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn from_matrix(features: DenseMatrix<T>) -> Self {
        Self {
            features,
            preprocessing: Preprocessing::None,
        }
    }

    pub fn count(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &DenseMatrix<T> {
        &self.features
    }

    pub fn into_features(self) -> DenseMatrix<T> {
        self.features
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.features.row(i)
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.preprocessing
    }

    pub fn is_l2_normalized(&self) -> bool {
        self.preprocessing == Preprocessing::L2Normalized
    }
}

/// Tracks how many bytes a reader has consumed so parse errors can point at
/// the failing offset.
struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    /// Fills `buf` exactly; `Ok(false)` on clean EOF at the first byte.
    fn read_record_part(&mut self, buf: &mut [u8], what: &str) -> Result<bool> {
        let mut filled = 0;
        while filled < buf.len() {
            let n = self.inner.read(&mut buf[filled..])?;
            if n == 0 {
                if filled == 0 {
                    return Ok(false);
                }
                return Err(Error::Parse {
                    offset: self.offset + filled as u64,
                    message: format!("unexpected end of file reading {what}"),
                });
            }
            filled += n;
        }
        self.offset += buf.len() as u64;
        Ok(true)
    }
}

fn record_dim<R: Read>(
    r: &mut CountingReader<R>,
    expected: Option<usize>,
) -> Result<Option<usize>> {
    let header_offset = r.offset;
    let mut head = [0u8; 4];
    if !r.read_record_part(&mut head, "record header")? {
        return Ok(None);
    }
    let dim = i32::from_le_bytes(head);
    if dim <= 0 {
        return Err(Error::Parse {
            offset: header_offset,
            message: format!("record declares non-positive dimension {dim}"),
        });
    }
    let dim = dim as usize;
    if let Some(e) = expected {
        if dim != e {
            return Err(Error::Parse {
                offset: header_offset,
                message: format!("record dimension {dim} differs from first record's {e}"),
            });
        }
    }
    Ok(Some(dim))
}

fn read_vecs<T, R, const W: usize>(
    mut reader: CountingReader<R>,
    convert: impl Fn([u8; W]) -> T,
) -> Result<(usize, Vec<T>)>
where
    R: Read,
    T: Copy,
{
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    let mut buf = [0u8; W];
    while let Some(d) = record_dim(&mut reader, dim)? {
        dim = Some(d);
        for _ in 0..d {
            if !reader.read_record_part(&mut buf, "record components")? {
                return Err(Error::Parse {
                    offset: reader.offset,
                    message: "unexpected end of file reading record components".into(),
                });
            }
            data.push(convert(buf));
        }
    }
    Ok((dim.unwrap_or(0), data))
}

/// Reads an fvecs file: `i32` dim then `dim` little-endian `f32` per record.
pub fn read_fvecs<T: Scalar>(path: &Path) -> Result<FeatureSet<T>> {
    let reader = CountingReader::new(BufReader::new(File::open(path)?));
    let (dim, data) = read_vecs(reader, |b: [u8; 4]| {
        T::from_f64_lossy(f32::from_le_bytes(b) as f64)
    })?;
    let rows = if dim == 0 { 0 } else { data.len() / dim };
    Ok(FeatureSet::from_matrix(DenseMatrix::from_vec(
        rows, dim, data,
    )))
}

/// Reads a bvecs file: `i32` dim then `dim` `u8` per record, converted to
/// reals without scaling.
pub fn read_bvecs<T: Scalar>(path: &Path) -> Result<FeatureSet<T>> {
    let reader = CountingReader::new(BufReader::new(File::open(path)?));
    let (dim, data) = read_vecs(reader, |b: [u8; 1]| T::from_f64_lossy(b[0] as f64))?;
    let rows = if dim == 0 { 0 } else { data.len() / dim };
    Ok(FeatureSet::from_matrix(DenseMatrix::from_vec(
        rows, dim, data,
    )))
}

/// Reads an ivecs file: `i32` dim then `dim` little-endian `i32` per record.
pub fn read_ivecs(path: &Path) -> Result<Vec<Vec<i32>>> {
    let mut reader = CountingReader::new(BufReader::new(File::open(path)?));
    let mut dim: Option<usize> = None;
    let mut rows = Vec::new();
    let mut buf = [0u8; 4];
    while let Some(d) = record_dim(&mut reader, dim)? {
        dim = Some(d);
        let mut row = Vec::with_capacity(d);
        for _ in 0..d {
            if !reader.read_record_part(&mut buf, "record components")? {
                return Err(Error::Parse {
                    offset: reader.offset,
                    message: "unexpected end of file reading record components".into(),
                });
            }
            row.push(i32::from_le_bytes(buf));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes a matrix as fvecs (components stored as `f32`).
pub fn write_fvecs<T: Scalar>(path: &Path, features: &DenseMatrix<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..features.rows() {
        w.write_all(&(features.cols() as i32).to_le_bytes())?;
        for &v in features.row(i) {
            w.write_all(&(v.to_f64_lossy() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes integer id lists as ivecs.
pub fn write_ivecs(path: &Path, rows: &[Vec<i32>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        w.write_all(&(row.len() as i32).to_le_bytes())?;
        for &v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Divides every row by its Euclidean norm (computed in f64) and marks the
/// set as normalized. Idempotent; a zero row is an error naming the row.
pub fn l2_normalize<T: Scalar>(fs: &FeatureSet<T>) -> Result<FeatureSet<T>> {
    let mut features = fs.features.clone();
    for i in 0..features.rows() {
        let norm = features
            .row(i)
            .iter()
            .map(|v| {
                let f = v.to_f64_lossy();
                f * f
            })
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroRow { row: i });
        }
        let inv = T::from_f64_lossy(1.0 / norm);
        for v in features.row_mut(i) {
            *v = *v * inv;
        }
    }
    Ok(FeatureSet {
        features,
        preprocessing: Preprocessing::L2Normalized,
    })
}

/// Shape of a synthetic Gaussian-mixture benchmark dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub train_count: usize,
    pub base_count: usize,
    pub query_count: usize,
    pub cluster_count: usize,
    /// Per-component standard deviation of the noise around each center.
    pub spread: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("synthetic dim must be positive".into()));
        }
        if self.train_count == 0 || self.base_count == 0 || self.query_count == 0 {
            return Err(Error::Config("synthetic split counts must be positive".into()));
        }
        if self.cluster_count == 0 {
            return Err(Error::Config("cluster_count must be positive".into()));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::Config("spread must be positive and finite".into()));
        }
        Ok(())
    }
}

/// The three disjoint splits plus the mixture centers they were drawn from.
#[derive(Debug, Clone)]
pub struct SyntheticDataset<T> {
    pub train: FeatureSet<T>,
    pub base: FeatureSet<T>,
    pub query: FeatureSet<T>,
    /// Unit-norm mixture centers, one row per cluster.
    pub centers: DenseMatrix<T>,
}

fn sample_unit_row(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let row: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return row.iter().map(|v| v / norm).collect();
        }
    }
}

fn sample_split<T: Scalar>(
    rng: &mut ChaCha8Rng,
    centers: &[Vec<f64>],
    count: usize,
    dim: usize,
    spread: f64,
) -> FeatureSet<T> {
    let mut data = Vec::with_capacity(count * dim);
    for _ in 0..count {
        loop {
            let k = rng.random_range(0..centers.len());
            let row: Vec<f64> = centers[k]
                .iter()
                .map(|&c| c + spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                data.extend(row.iter().map(|&v| T::from_f64_lossy(v / norm)));
                break;
            }
        }
    }
    FeatureSet {
        features: DenseMatrix::from_vec(count, dim, data),
        preprocessing: Preprocessing::L2Normalized,
    }
}

/// Draws train/base/query splits from one seeded Gaussian mixture with
/// isotropic components around unit-sphere centers. Rows come out
/// l2-normalized, and the whole dataset is a deterministic function of the
/// config.
pub fn generate_synthetic<T: Scalar>(cfg: &SyntheticConfig) -> Result<SyntheticDataset<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers: Vec<Vec<f64>> = (0..cfg.cluster_count)
        .map(|_| sample_unit_row(&mut rng, cfg.dim))
        .collect();
    let train = sample_split(&mut rng, &centers, cfg.train_count, cfg.dim, cfg.spread);
    let base = sample_split(&mut rng, &centers, cfg.base_count, cfg.dim, cfg.spread);
    let query = sample_split(&mut rng, &centers, cfg.query_count, cfg.dim, cfg.spread);
    let center_data: Vec<T> = centers
        .iter()
        .flatten()
        .map(|&v| T::from_f64_lossy(v))
        .collect();
    Ok(SyntheticDataset {
        train,
        base,
        query,
        centers: DenseMatrix::from_vec(cfg.cluster_count, cfg.dim, center_data),
    })
}
