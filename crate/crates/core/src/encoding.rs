//! Codebook encoders: bag-of-words, VLAD and Fisher Vector.
//!
//! Every local feature is first projected with the encoder's PCA model. BoW
//! L1-normalises its histogram; VLAD and FV apply signed square root followed by
//! global L2 normalisation (both steps can be switched off).

use rand::seq::index;

use crate::aggregation::Method;
use crate::codebook::{fit_gmm, fit_kmeans, fit_pca, GmmModel, KmeansModel, PcaModel, Points};
use crate::{Error, FeatureMatrix, Result};

/// Upper bound on local features used to train a codebook.
pub const MAX_TRAINING_FEATURES: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Bow,
    Vlad,
    Fv,
}

impl EncoderKind {
    pub fn from_method(m: Method) -> Option<Self> {
        match m {
            Method::Bow => Some(EncoderKind::Bow),
            Method::Vlad => Some(EncoderKind::Vlad),
            Method::Fv => Some(EncoderKind::Fv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Codebook {
    Kmeans(KmeansModel),
    Gmm(GmmModel),
}

impl Codebook {
    pub fn dim(&self) -> usize {
        match self {
            Codebook::Kmeans(m) => m.dim(),
            Codebook::Gmm(m) => m.dim(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Normalization {
    pub signed_sqrt: bool,
    pub l2: bool,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            signed_sqrt: true,
            l2: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    kind: EncoderKind,
    pca: PcaModel,
    codebook: Codebook,
    pub normalization: Normalization,
}

impl EncoderSpec {
    pub fn new(kind: EncoderKind, pca: PcaModel, codebook: Codebook) -> Result<Self> {
        if pca.output_dim() != codebook.dim() {
            return Err(Error::arg(format!(
                "PCA output dimension {} does not match codebook dimension {}",
                pca.output_dim(),
                codebook.dim()
            )));
        }
        let matches = matches!(
            (kind, &codebook),
            (EncoderKind::Bow | EncoderKind::Vlad, Codebook::Kmeans(_)) | (EncoderKind::Fv, Codebook::Gmm(_))
        );
        if !matches {
            return Err(Error::arg(format!("{kind:?} encoder cannot use this codebook type")));
        }
        Ok(Self {
            kind,
            pca,
            codebook,
            normalization: Normalization::default(),
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn output_dim(&self) -> usize {
        let p = self.codebook.dim();
        match &self.codebook {
            Codebook::Kmeans(m) if self.kind == EncoderKind::Bow => m.k(),
            Codebook::Kmeans(m) => m.k() * p,
            Codebook::Gmm(m) => 2 * m.k() * p,
        }
    }

    pub fn encode(&self, seq: &FeatureMatrix) -> Result<Vec<f64>> {
        match self.kind {
            EncoderKind::Bow => encode_bow(self, seq),
            EncoderKind::Vlad => encode_vlad(self, seq),
            EncoderKind::Fv => encode_fv(self, seq),
        }
    }

    fn project_all(&self, seq: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        if seq.rows() == 0 {
            return Err(Error::arg("cannot encode an empty sequence"));
        }
        (0..seq.rows()).map(|i| self.pca.project(&seq.row_f64(i))).collect()
    }

    fn kmeans(&self) -> &KmeansModel {
        match &self.codebook {
            Codebook::Kmeans(m) => m,
            Codebook::Gmm(_) => unreachable!("checked in EncoderSpec::new"),
        }
    }

    fn finish(&self, mut v: Vec<f64>) -> Vec<f64> {
        if self.normalization.signed_sqrt {
            signed_sqrt(&mut v);
        }
        if self.normalization.l2 {
            l2_normalize(&mut v);
        }
        v
    }
}

pub fn signed_sqrt(v: &mut [f64]) {
    for x in v {
        *x = x.signum() * x.abs().sqrt();
    }
}

/// Scales to unit L2 norm; the zero vector is left unchanged.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Hard-assignment histogram over the k-means centroids, L1-normalised.
pub fn encode_bow(spec: &EncoderSpec, seq: &FeatureMatrix) -> Result<Vec<f64>> {
    let km = spec.kmeans();
    let proj = spec.project_all(seq)?;
    let mut hist = vec![0.0; km.k()];
    for x in &proj {
        hist[km.nearest(x).0] += 1.0;
    }
    let n = proj.len() as f64;
    Ok(hist.into_iter().map(|h| h / n).collect())
}

/// Per-centroid sums of residuals to the nearest centroid, concatenated.
pub fn encode_vlad(spec: &EncoderSpec, seq: &FeatureMatrix) -> Result<Vec<f64>> {
    let km = spec.kmeans();
    let p = km.dim();
    let proj = spec.project_all(seq)?;
    let mut v = vec![0.0; km.k() * p];
    for x in &proj {
        let c = km.nearest(x).0;
        for ((acc, xi), ci) in v[c * p..(c + 1) * p].iter_mut().zip(x).zip(km.centroid(c)) {
            *acc += xi - ci;
        }
    }
    Ok(spec.finish(v))
}

/// Fisher Vector: normalised first- and second-order statistics of the soft-assigned
/// residuals, all mean blocks followed by all deviation blocks.
pub fn encode_fv(spec: &EncoderSpec, seq: &FeatureMatrix) -> Result<Vec<f64>> {
    let gmm = match &spec.codebook {
        Codebook::Gmm(g) => g,
        Codebook::Kmeans(_) => return Err(Error::arg("Fisher Vector needs a GMM codebook")),
    };
    let k = gmm.k();
    let p = gmm.dim();
    let proj = spec.project_all(seq)?;
    let n = proj.len() as f64;
    let mut first = vec![0.0; k * p];
    let mut second = vec![0.0; k * p];
    let sigmas: Vec<f64> = gmm.variances().iter().map(|v| v.sqrt()).collect();
    for x in &proj {
        let gamma = gmm.posteriors(x)?;
        for (c, &g) in gamma.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for j in 0..p {
                let z = (x[j] - gmm.mean(c)[j]) / sigmas[c * p + j];
                first[c * p + j] += g * z;
                second[c * p + j] += g * (z * z - 1.0);
            }
        }
    }
    for c in 0..k {
        let w = gmm.weights()[c];
        let a = 1.0 / (n * w.sqrt());
        let b = 1.0 / (n * (2.0 * w).sqrt());
        first[c * p..(c + 1) * p].iter_mut().for_each(|v| *v *= a);
        second[c * p..(c + 1) * p].iter_mut().for_each(|v| *v *= b);
    }
    first.extend(second);
    Ok(spec.finish(first))
}

/// Uniform seeded subsample of at most `cap` rows, original order kept.
pub fn subsample(points: &Points, cap: usize, seed: u64) -> Points {
    if points.len() <= cap {
        return points.clone();
    }
    let mut rng = crate::seed::rng(seed);
    let mut idx = index::sample(&mut rng, points.len(), cap).into_vec();
    idx.sort_unstable();
    let mut out = Points::new(points.dim(), Vec::with_capacity(cap * points.dim())).unwrap();
    for i in idx {
        out.push(points.row(i));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub pca_dim: usize,
    pub clusters: usize,
    pub whiten: bool,
    pub seed: u64,
}

/// Fits PCA on the local features, then k-means (BoW, VLAD) or a GMM (FV) on the
/// projected features.
pub fn train_encoder(local_features: &Points, cfg: &EncoderConfig) -> Result<EncoderSpec> {
    let data = subsample(
        local_features,
        MAX_TRAINING_FEATURES,
        crate::seed::sub_seed(cfg.seed, "codebook-subsample"),
    );
    if cfg.clusters > data.len() {
        return Err(Error::arg(format!(
            "{} clusters requested but only {} training local features available",
            cfg.clusters,
            data.len()
        )));
    }
    let pca = fit_pca(&data, cfg.pca_dim, cfg.whiten)?;
    let mut projected = Points::new(cfg.pca_dim, Vec::with_capacity(data.len() * cfg.pca_dim))?;
    for x in data.iter() {
        projected.push(&pca.project(x)?);
    }
    let seed = crate::seed::sub_seed(cfg.seed, "codebook");
    let codebook = match cfg.kind {
        EncoderKind::Bow | EncoderKind::Vlad => Codebook::Kmeans(fit_kmeans(&projected, cfg.clusters, seed)?),
        EncoderKind::Fv => Codebook::Gmm(fit_gmm(&projected, cfg.clusters, seed)?),
    };
    EncoderSpec::new(cfg.kind, pca, codebook)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_kmeans_spec(kind: EncoderKind) -> EncoderSpec {
        let km = KmeansModel::from_centroids(2, vec![0.0, 0.0, 10.0, 10.0]).unwrap();
        EncoderSpec::new(kind, PcaModel::identity(2), Codebook::Kmeans(km)).unwrap()
    }

    fn toy_seq() -> FeatureMatrix {
        FeatureMatrix::from_rows(&[[1.0, 0.0], [9.0, 9.0], [10.0, 11.0]]).unwrap()
    }

    #[test]
    fn bow_example() {
        let spec = toy_kmeans_spec(EncoderKind::Bow);
        let h = encode_bow(&spec, &toy_seq()).unwrap();
        assert!((h[0] - 1.0 / 3.0).abs() < 1e-15 && (h[1] - 2.0 / 3.0).abs() < 1e-15);

        let at_centroid = FeatureMatrix::from_rows(&[[10.0, 10.0], [10.0, 10.0]]).unwrap();
        assert_eq!(encode_bow(&spec, &at_centroid).unwrap(), vec![0.0, 1.0]);

        let doubled = toy_seq().select_rows(&[0, 0, 1, 1, 2, 2]).unwrap();
        assert_eq!(encode_bow(&spec, &doubled).unwrap(), h);
    }

    #[test]
    fn vlad_example() {
        let spec = toy_kmeans_spec(EncoderKind::Vlad);
        let v = encode_vlad(&spec, &toy_seq()).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let want = [h, 0.0, -h, 0.0];
        assert!(v.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12), "{v:?}");

        let on = FeatureMatrix::from_rows(&[[0.0, 0.0], [10.0, 10.0]]).unwrap();
        assert_eq!(encode_vlad(&spec, &on).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn vlad_single_feature_single_centroid() {
        let km = KmeansModel::from_centroids(3, vec![1.0, 2.0, 3.0]).unwrap();
        let spec = EncoderSpec::new(EncoderKind::Vlad, PcaModel::identity(3), Codebook::Kmeans(km)).unwrap();
        let x = [2.0, 2.0, 7.0];
        let v = spec.encode(&FeatureMatrix::from_rows(&[x]).unwrap()).unwrap();
        // residual (1, 0, 4) -> ssr (1, 0, 2) -> / sqrt(5)
        let s = 5f64.sqrt();
        let want = [1.0 / s, 0.0, 2.0 / s];
        assert!(v.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn fv_single_gaussian_at_mean() {
        let p = 3;
        let g = GmmModel::from_parts(p, vec![1.0], vec![0.0; p], vec![1.0; p]).unwrap();
        let mut spec = EncoderSpec::new(EncoderKind::Fv, PcaModel::identity(p), Codebook::Gmm(g)).unwrap();
        let seq = FeatureMatrix::from_rows(&[[0.0; 3]]).unwrap();

        spec.normalization = Normalization { signed_sqrt: false, l2: false };
        let raw = encode_fv(&spec, &seq).unwrap();
        let r2 = -1.0 / 2f64.sqrt();
        assert_eq!(&raw[..p], &[0.0; 3]);
        assert!(raw[p..].iter().all(|v| (v - r2).abs() < 1e-15));

        spec.normalization = Normalization::default();
        let fv = encode_fv(&spec, &seq).unwrap();
        let want = -1.0 / (p as f64).sqrt();
        assert!(fv[p..].iter().all(|v| (v - want).abs() < 1e-12));
    }

    #[test]
    fn mismatched_codebook_rejected() {
        let km = KmeansModel::from_centroids(2, vec![0.0, 0.0]).unwrap();
        assert!(EncoderSpec::new(EncoderKind::Fv, PcaModel::identity(2), Codebook::Kmeans(km.clone())).is_err());
        assert!(EncoderSpec::new(EncoderKind::Bow, PcaModel::identity(3), Codebook::Kmeans(km)).is_err());
    }

    #[test]
    fn trained_encoder_dims() {
        let rows: Vec<[f64; 4]> = (0..60)
            .map(|i| {
                let t = i as f64;
                [t.sin(), t.cos(), (t * 0.3).sin(), t * 0.01]
            })
            .collect();
        let pts = Points::from_rows(&rows).unwrap();
        for (kind, dim) in [(EncoderKind::Bow, 5), (EncoderKind::Vlad, 15), (EncoderKind::Fv, 30)] {
            let spec = train_encoder(
                &pts,
                &EncoderConfig { kind, pca_dim: 3, clusters: 5, whiten: false, seed: 1 },
            )
            .unwrap();
            assert_eq!(spec.output_dim(), dim);
            let seq = FeatureMatrix::from_rows(&rows[..7]).unwrap();
            assert_eq!(spec.encode(&seq).unwrap().len(), dim);
        }
        let too_many = EncoderConfig { kind: EncoderKind::Fv, pca_dim: 3, clusters: 61, whiten: false, seed: 1 };
        assert!(matches!(train_encoder(&pts, &too_many), Err(Error::Argument(_))));
    }

    #[test]
    fn subsample_caps_and_is_seeded() {
        let pts = Points::new(1, (0..100).map(|v| v as f64).collect()).unwrap();
        let a = subsample(&pts, 10, 3);
        assert_eq!(a.len(), 10);
        assert_eq!(a, subsample(&pts, 10, 3));
        assert_eq!(subsample(&pts, 500, 3), pts);
    }
}
