//! Versioned binary codebook files.
//!
//! Layout: `"DOVM"`, version `u8 = 1`, type tag `u8` (1 PCA, 2 k-means, 3 GMM),
//! then `u32` dimensions and a little-endian `f32` payload:
//!
//! * PCA: `d, p, whiten(u32 0|1)`; mean `d`, basis `p·d`, variances `p`.
//! * k-means: `k, p`; centroids `k·p`, inertia.
//! * GMM: `k, p`; weights `k`, means `k·p`, variances `k·p`, log-likelihood.
//!
//! Values are narrowed to f32 on write; loading a GMM renormalises the weights
//! and re-applies the variance floor.

use std::fs;
use std::path::Path;

use super::{GmmModel, KmeansModel, PcaModel};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"DOVM";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Pca(PcaModel),
    Kmeans(KmeansModel),
    Gmm(GmmModel),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn floats(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::format("truncated model file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format("size overflow"))?)?;
        let out: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("non-finite value in model file"));
        }
        Ok(out)
    }
}

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(MAGIC.to_vec());
        w.0.push(VERSION);
        match self {
            Model::Pca(m) => {
                w.0.push(1);
                w.u32(m.input_dim());
                w.u32(m.output_dim());
                w.u32(m.whiten() as usize);
                w.floats(m.mean());
                w.floats(m.basis());
                w.floats(m.variances());
            }
            Model::Kmeans(m) => {
                w.0.push(2);
                w.u32(m.k());
                w.u32(m.dim());
                w.floats(m.centroids());
                w.floats(&[m.inertia]);
            }
            Model::Gmm(m) => {
                w.0.push(3);
                w.u32(m.k());
                w.u32(m.dim());
                w.floats(m.weights());
                w.floats(m.means());
                w.floats(m.variances());
                w.floats(&[m.log_likelihood]);
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("bad magic, expected DOVM"));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(Error::format(format!("unsupported model version {version}")));
        }
        let tag = r.take(1)?[0];
        let model = match tag {
            1 => {
                let d = r.u32()?;
                let p = r.u32()?;
                let whiten = r.u32()? != 0;
                let mean = r.floats(d)?;
                let basis = r.floats(p * d)?;
                let var = r.floats(p)?;
                Model::Pca(PcaModel::from_parts(mean, basis, var, whiten).map_err(to_format)?)
            }
            2 => {
                let k = r.u32()?;
                let p = r.u32()?;
                let centroids = r.floats(k * p)?;
                let inertia = r.floats(1)?[0];
                let mut m = KmeansModel::from_centroids(p, centroids).map_err(to_format)?;
                m.inertia = inertia;
                Model::Kmeans(m)
            }
            3 => {
                let k = r.u32()?;
                let p = r.u32()?;
                let weights = r.floats(k)?;
                let means = r.floats(k * p)?;
                let var = r.floats(k * p)?;
                let ll = r.floats(1)?[0];
                let mut m = GmmModel::from_parts(p, weights, means, var).map_err(to_format)?;
                m.log_likelihood = ll;
                Model::Gmm(m)
            }
            other => return Err(Error::format(format!("unknown model type tag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::format("trailing bytes after model"));
        }
        Ok(model)
    }

    /// The model as it will be after a write/load cycle.
    pub fn narrowed(&self) -> Model {
        Model::from_bytes(&self.to_bytes()).expect("serialised model re-parses")
    }
}

fn to_format(e: Error) -> Error {
    Error::format(e.to_string())
}

pub fn write_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Model::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{fit_gmm, fit_kmeans, fit_pca, Points};

    fn pts() -> Points {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64 * 0.5, (i % 7) as f64]).collect();
        Points::from_rows(&rows).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-6 * (1.0 + y.abs()))
    }

    #[test]
    fn round_trip_within_f32_precision() {
        let p = pts();
        let pca = fit_pca(&p, 2, false).unwrap();
        match Model::Pca(pca.clone()).narrowed() {
            Model::Pca(back) => {
                assert!(close(back.basis(), pca.basis()) && close(back.mean(), pca.mean()));
            }
            other => panic!("{other:?}"),
        }
        let km = fit_kmeans(&p, 3, 1).unwrap();
        match Model::Kmeans(km.clone()).narrowed() {
            Model::Kmeans(back) => assert!(close(back.centroids(), km.centroids())),
            other => panic!("{other:?}"),
        }
        let g = fit_gmm(&p, 3, 1).unwrap();
        match Model::Gmm(g.clone()).narrowed() {
            Model::Gmm(back) => {
                assert!(close(back.weights(), g.weights()));
                assert!(close(back.means(), g.means()) && close(back.variances(), g.variances()));
                assert!((back.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("km.dovm");
        let m = Model::Kmeans(fit_kmeans(&pts(), 2, 0).unwrap()).narrowed();
        write_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Model::from_bytes(b"DOVM").is_err());
        assert!(Model::from_bytes(b"XXXX\x01\x01").is_err());
        let mut bytes = Model::Kmeans(fit_kmeans(&pts(), 2, 0).unwrap()).to_bytes();
        bytes.pop();
        assert!(Model::from_bytes(&bytes).is_err());
        bytes.extend_from_slice(&[0, 0, 0, 0, 0]);
        assert!(Model::from_bytes(&bytes).is_err());
    }
}
