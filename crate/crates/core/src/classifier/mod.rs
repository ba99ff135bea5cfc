//! One-vs-rest kernel SVMs.

mod kernel;
mod ovr;
mod smo;
mod transform;

pub use kernel::{
    chi2_distance, kernel_eval, resolve_gamma, Gamma, KernelKind, KernelSpec, CHI2_EPS, GAMMA_SAMPLE_CAP,
};
pub use ovr::{
    load_classifier, predict_scores, softmax, train_ovr, write_classifier, BinarySvm, TrainedClassifier,
};
pub use smo::{solve, DualSolution, KernelMatrix, SvmParams};
pub use transform::{feature_transform_for_kernel, FeatureTransform};

use crate::aggregation::Method;

/// Kernel used for a method unless overridden: linear for VLAD and FV, chi-square otherwise.
pub fn default_kernel(method: Method) -> KernelKind {
    match method {
        Method::Vlad | Method::Fv => KernelKind::Linear,
        _ => KernelKind::Chi2,
    }
}
