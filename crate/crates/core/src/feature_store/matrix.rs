use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"DOVF";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

/// An n×d matrix of local features, one row per sampled frame or clip in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::arg(format!(
                "feature matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::arg(format!(
                "feature matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite value at row {}, col {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Values are stored as f32.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::arg("rows have different lengths"));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().map(|&v| v as f32))
            .collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    /// Gathers the given rows (repetition allowed) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::arg(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.cols, data)
    }

    /// Contiguous block of `len` rows starting at `start`.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.rows {
            return Err(Error::arg(format!(
                "row span ({start}, {len}) invalid for {} rows",
                self.rows
            )));
        }
        Ok(Self {
            rows: len,
            cols: self.cols,
            data: self.data[start * self.cols..(start + len) * self.cols].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        buf.extend_from_slice(MAGIC);
        buf.push(VERSION);
        buf.extend_from_slice(&(self.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(format!(
                "feature file too short for header ({} bytes)",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::format("bad magic, expected DOVF"));
        }
        if bytes[4] != VERSION {
            return Err(Error::format(format!(
                "unsupported feature file version {}",
                bytes[4]
            )));
        }
        let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        if rows == 0 || cols == 0 {
            return Err(Error::format(format!("empty matrix header {rows}x{cols}")));
        }
        let payload = &bytes[HEADER_LEN..];
        let expected = rows
            .checked_mul(cols)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::format("header dimensions overflow"))?;
        if payload.len() < expected {
            return Err(Error::format(format!(
                "truncated payload: header {rows}x{cols} needs {expected} bytes, found {}",
                payload.len()
            )));
        }
        if payload.len() > expected {
            return Err(Error::format(format!(
                "{} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(format!(
                "non-finite value at row {}, col {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }
}

pub fn load_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::from_bytes(&bytes)
}

pub fn write_feature_matrix(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&m.to_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(rows: u32, cols: u32) -> Vec<u8> {
        let mut b = b"DOVF".to_vec();
        b.push(1);
        b.extend_from_slice(&rows.to_le_bytes());
        b.extend_from_slice(&cols.to_le_bytes());
        b
    }

    #[test]
    fn reads_3x2() {
        let mut b = header(3, 2);
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        let m = FeatureMatrix::from_bytes(&b).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn truncated_payload() {
        let mut b = header(3, 2);
        for v in [1.0f32; 5] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        let err = FeatureMatrix::from_bytes(&b).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn nan_payload() {
        let mut b = header(1, 2);
        b.extend_from_slice(&1.0f32.to_le_bytes());
        b.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            FeatureMatrix::from_bytes(&b),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(FeatureMatrix::from_bytes(&header(0, 2)).is_err());
        assert!(FeatureMatrix::from_bytes(&header(2, 0)).is_err());
        assert!(FeatureMatrix::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn bad_magic() {
        let mut b = header(1, 1);
        b[0] = b'X';
        b.extend_from_slice(&0f32.to_le_bytes());
        assert!(FeatureMatrix::from_bytes(&b).is_err());
    }

    #[test]
    fn file_round_trip_and_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.dovf");
        let m = FeatureMatrix::new(1, 1, vec![0.0]).unwrap();
        write_feature_matrix(&m, &p).unwrap();
        assert_eq!(load_feature_matrix(&p).unwrap(), m);

        let bad = dir.path().join("missing").join("x.dovf");
        assert!(matches!(
            write_feature_matrix(&m, &bad),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn bytes_round_trip_bit_exact(
            rows in 1usize..=200,
            cols in 1usize..=512,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..rows * cols)
                .map(|_| f32::from_bits(rng.random::<u32>() & 0xbf7f_ffff))
                .collect();
            let m = FeatureMatrix::new(rows, cols, data).unwrap();
            let back = FeatureMatrix::from_bytes(&m.to_bytes()).unwrap();
            prop_assert_eq!(
                back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(back.rows(), rows);
        }
    }
}
