use crate::{Error, Result};

use super::KernelKind;

/// Per-feature normalisation fitted on training data and replayed at test time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureTransform {
    /// Scale each feature to unit L2 norm.
    L2,
    /// Add `shift`, clamp at zero, then scale to unit L1 norm.
    ShiftL1 { shift: f64 },
}

impl FeatureTransform {
    /// Chooses and fits the transform for `kernel` from the training features.
    pub fn fit<R: AsRef<[f64]>>(kernel: KernelKind, train: &[R]) -> Result<Self> {
        if train.iter().flat_map(|r| r.as_ref()).any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite training feature"));
        }
        Ok(match kernel {
            KernelKind::Linear => FeatureTransform::L2,
            KernelKind::Chi2 | KernelKind::AdditiveChi2 => {
                let min = train
                    .iter()
                    .flat_map(|r| r.as_ref().iter().copied())
                    .fold(f64::INFINITY, f64::min);
                FeatureTransform::ShiftL1 {
                    shift: if min < 0.0 { -min } else { 0.0 },
                }
            }
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            FeatureTransform::L2 => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    x.iter().map(|v| v / norm).collect()
                } else {
                    x.to_vec()
                }
            }
            FeatureTransform::ShiftL1 { shift } => {
                let shifted: Vec<f64> = x.iter().map(|v| (v + shift).max(0.0)).collect();
                let total: f64 = shifted.iter().sum();
                if total > 0.0 {
                    shifted.into_iter().map(|v| v / total).collect()
                } else {
                    shifted
                }
            }
        }
    }
}

/// Fits the transform for `kernel` on `train` and returns it with the transformed features.
pub fn feature_transform_for_kernel<R: AsRef<[f64]>>(
    train: &[R],
    kernel: KernelKind,
) -> Result<(FeatureTransform, Vec<Vec<f64>>)> {
    let t = FeatureTransform::fit(kernel, train)?;
    let out = train.iter().map(|x| t.apply(x.as_ref())).collect();
    Ok((t, out))
}
