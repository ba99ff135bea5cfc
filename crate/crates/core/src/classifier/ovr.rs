use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::kernel::{eval_unchecked, resolve_gamma, Gamma, KernelKind, KernelSpec};
use super::smo::{solve, KernelMatrix, SvmParams};
use super::transform::FeatureTransform;
use crate::{Error, Result, ScoreMatrix};

/// One binary "class vs rest" machine; `sv` indexes into the classifier's support set.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub sv: Vec<usize>,
    /// `α_i y_i` for each entry of `sv`.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub class_count: usize,
    pub kernel: KernelKind,
    /// Resolved kernel width (1 for kernels without one).
    pub gamma: f64,
    pub c: f64,
    pub transform: FeatureTransform,
    /// Transformed training features that are support vectors of at least one class.
    pub support: Vec<Vec<f64>>,
    /// Training-set index of each support vector.
    pub support_index: Vec<usize>,
    pub models: Vec<BinarySvm>,
}

pub(crate) fn gram(kind: KernelKind, gamma: f64, xs: &[Vec<f64>]) -> KernelMatrix {
    let n = xs.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| eval_unchecked(kind, gamma, &xs[i], &xs[j])).collect())
        .collect();
    KernelMatrix::new(n, rows.concat())
}

/// Trains one binary C-SVM per class on the transformed features.
pub fn train_ovr<R: AsRef<[f64]>>(
    features: &[R],
    labels: &[usize],
    class_count: usize,
    kernel: KernelSpec,
    params: &SvmParams,
    seed: u64,
) -> Result<TrainedClassifier> {
    if features.len() != labels.len() {
        return Err(Error::arg("feature and label counts differ"));
    }
    if features.is_empty() {
        return Err(Error::arg("no training features"));
    }
    let dim = features[0].as_ref().len();
    if features.iter().any(|f| f.as_ref().len() != dim) {
        return Err(Error::arg("training features differ in dimension"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::arg(format!("label {bad} out of range for {class_count} classes")));
    }
    let present: Vec<usize> = (0..class_count)
        .filter(|c| labels.contains(c))
        .collect();
    if present.len() < 2 {
        return Err(Error::arg("training data must contain at least two classes"));
    }
    if present.len() < class_count {
        let missing: Vec<usize> = (0..class_count).filter(|c| !present.contains(c)).collect();
        return Err(Error::arg(format!("classes without training examples: {missing:?}")));
    }

    let transform = FeatureTransform::fit(kernel.kind, features)?;
    let xs: Vec<Vec<f64>> = features.iter().map(|f| transform.apply(f.as_ref())).collect();
    let gamma = match (kernel.kind, kernel.gamma) {
        (KernelKind::Chi2, Gamma::Auto) => resolve_gamma(&xs, seed)?,
        (_, Gamma::Fixed(g)) if g > 0.0 => g,
        (_, Gamma::Fixed(g)) => return Err(Error::arg(format!("gamma must be positive, got {g}"))),
        (_, Gamma::Auto) => 1.0,
    };
    let k = gram(kernel.kind, gamma, &xs);

    let solutions: Vec<_> = (0..class_count)
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            solve(&k, &y, params).map(|s| (y, s))
        })
        .collect::<Result<_>>()?;

    let mut in_support = vec![false; xs.len()];
    for (_, s) in &solutions {
        for (i, a) in s.alpha.iter().enumerate() {
            if *a > 0.0 {
                in_support[i] = true;
            }
        }
    }
    let support_index: Vec<usize> = (0..xs.len()).filter(|&i| in_support[i]).collect();
    let mut position = vec![usize::MAX; xs.len()];
    for (p, &i) in support_index.iter().enumerate() {
        position[i] = p;
    }
    let models = solutions
        .into_iter()
        .map(|(y, s)| {
            let (sv, coef) = s
                .alpha
                .iter()
                .enumerate()
                .filter(|(_, a)| **a > 0.0)
                .map(|(i, a)| (position[i], a * y[i]))
                .unzip();
            BinarySvm {
                sv,
                coef,
                bias: s.bias,
                iterations: s.iterations,
                gap: s.gap,
            }
        })
        .collect();
    Ok(TrainedClassifier {
        class_count,
        kernel: kernel.kind,
        gamma,
        c: params.c,
        transform,
        support: support_index.iter().map(|&i| xs[i].clone()).collect(),
        support_index,
        models,
    })
}

impl TrainedClassifier {
    pub fn input_dim(&self) -> Option<usize> {
        self.support.first().map(Vec::len)
    }

    /// Raw decision value of every class for one (untransformed) feature.
    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(d) = self.input_dim() {
            if x.len() != d {
                return Err(Error::arg(format!(
                    "classifier expects dimension {d}, got {}",
                    x.len()
                )));
            }
        }
        let t = self.transform.apply(x);
        let kv: Vec<f64> = self
            .support
            .iter()
            .map(|s| eval_unchecked(self.kernel, self.gamma, s, &t))
            .collect();
        Ok(self
            .models
            .iter()
            .map(|m| m.sv.iter().zip(&m.coef).map(|(&i, c)| c * kv[i]).sum::<f64>() + m.bias)
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = b"DOVC".to_vec();
        b.push(1);
        b.push(match self.kernel {
            KernelKind::Chi2 => 1,
            KernelKind::AdditiveChi2 => 2,
            KernelKind::Linear => 3,
        });
        b.extend_from_slice(&self.gamma.to_le_bytes());
        b.extend_from_slice(&self.c.to_le_bytes());
        match self.transform {
            FeatureTransform::L2 => {
                b.push(1);
                b.extend_from_slice(&0f64.to_le_bytes());
            }
            FeatureTransform::ShiftL1 { shift } => {
                b.push(2);
                b.extend_from_slice(&shift.to_le_bytes());
            }
        }
        let dim = self.input_dim().unwrap_or(0);
        for v in [self.class_count, dim, self.support.len()] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for (s, &i) in self.support.iter().zip(&self.support_index) {
            b.extend_from_slice(&(i as u32).to_le_bytes());
            for v in s {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        for m in &self.models {
            b.extend_from_slice(&m.bias.to_le_bytes());
            b.extend_from_slice(&(m.iterations as u32).to_le_bytes());
            b.extend_from_slice(&m.gap.to_le_bytes());
            b.extend_from_slice(&(m.sv.len() as u32).to_le_bytes());
            for (&i, c) in m.sv.iter().zip(&m.coef) {
                b.extend_from_slice(&(i as u32).to_le_bytes());
                b.extend_from_slice(&c.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos + n;
            if end > bytes.len() {
                return Err(Error::format("truncated classifier file"));
            }
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != b"DOVC" {
            return Err(Error::format("bad magic, expected DOVC"));
        }
        if take(1)?[0] != 1 {
            return Err(Error::format("unsupported classifier version"));
        }
        let kernel = match take(1)?[0] {
            1 => KernelKind::Chi2,
            2 => KernelKind::AdditiveChi2,
            3 => KernelKind::Linear,
            t => return Err(Error::format(format!("unknown kernel tag {t}"))),
        };
        let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
        let gamma = f64_at(take(8)?);
        let c = f64_at(take(8)?);
        let tag = take(1)?[0];
        let shift = f64_at(take(8)?);
        let transform = match tag {
            1 => FeatureTransform::L2,
            2 => FeatureTransform::ShiftL1 { shift },
            t => return Err(Error::format(format!("unknown transform tag {t}"))),
        };
        let class_count = u32_at(take(4)?);
        let dim = u32_at(take(4)?);
        let n_support = u32_at(take(4)?);
        let mut support = Vec::with_capacity(n_support);
        let mut support_index = Vec::with_capacity(n_support);
        for _ in 0..n_support {
            support_index.push(u32_at(take(4)?));
            let mut s = Vec::with_capacity(dim);
            for _ in 0..dim {
                s.push(f64_at(take(8)?));
            }
            support.push(s);
        }
        let mut models = Vec::with_capacity(class_count);
        for _ in 0..class_count {
            let bias = f64_at(take(8)?);
            let iterations = u32_at(take(4)?);
            let gap = f64_at(take(8)?);
            let n = u32_at(take(4)?);
            let mut sv = Vec::with_capacity(n);
            let mut coef = Vec::with_capacity(n);
            for _ in 0..n {
                let i = u32_at(take(4)?);
                if i >= n_support {
                    return Err(Error::format("support vector index out of range"));
                }
                sv.push(i);
                coef.push(f64_at(take(8)?));
            }
            models.push(BinarySvm {
                sv,
                coef,
                bias,
                iterations,
                gap,
            });
        }
        if pos != bytes.len() {
            return Err(Error::format("trailing bytes after classifier"));
        }
        Ok(Self {
            class_count,
            kernel,
            gamma,
            c,
            transform,
            support,
            support_index,
            models,
        })
    }
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Softmax over the per-class decision values of each video.
pub fn predict_scores<R: AsRef<[f64]> + Sync>(
    model: &TrainedClassifier,
    video_ids: &[String],
    features: &[R],
) -> Result<ScoreMatrix> {
    if video_ids.len() != features.len() {
        return Err(Error::arg("video id and feature counts differ"));
    }
    let rows: Vec<Vec<f64>> = features
        .par_iter()
        .map(|f| model.decision_values(f.as_ref()).map(|d| softmax(&d)))
        .collect::<Result<_>>()?;
    ScoreMatrix::new(video_ids.to_vec(), model.class_count, rows.concat())
}

pub fn write_classifier(model: &TrainedClassifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<TrainedClassifier> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TrainedClassifier::from_bytes(&bytes)
}
