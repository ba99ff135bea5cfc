//! Global video features from sequences of local (per-frame or per-clip) feature vectors.
//!
//! The crate covers everything downstream of feature extraction:
//!
//! * [`feature_store`]: binary feature matrices, the dataset manifest and score CSV files.
//! * [`sampling`]: evenly spaced selection of local features.
//! * [`aggregation`]: mean / max / mean+std pooling with temporal segmentation.
//! * [`codebook`]: PCA, k-means and diagonal GMM training.
//! * [`encoding`]: bag-of-words, VLAD and Fisher Vector encoders.
//! * [`classifier`]: one-vs-rest kernel SVMs (exponential chi-square, linear) trained with SMO.
//! * [`fusion`]: weighted late fusion of score matrices and accuracy.
//! * [`synth`]: synthetic two-stream datasets with controllable label noise.
//! * [`pipeline`]: the train / eval / sweep orchestration used by the `vidagg` binary.

pub mod aggregation;
pub mod classifier;
pub mod codebook;
pub mod encoding;
mod error;
pub mod feature_store;
pub mod fusion;
pub mod pipeline;
pub mod sampling;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use feature_store::{FeatureMatrix, Manifest, ScoreMatrix, Stream, SplitRole, VideoRecord};

/// Soft-margin penalty used for every SVM unless overridden.
pub const DEFAULT_C: f64 = 100.0;
/// Target dimension of the PCA projection applied before codebook encoders.
pub const DEFAULT_PCA_DIM: usize = 256;
/// Number of k-means centroids / GMM components.
pub const DEFAULT_CLUSTERS: usize = 256;
/// Late-fusion weights for the spatial and temporal streams.
pub const DEFAULT_FUSION_WEIGHTS: [f64; 2] = [1.0, 1.5];
/// Number of temporal segments used by the pooling aggregators.
pub const DEFAULT_SEGMENTS: usize = 3;
/// Number of evenly sampled local features per video.
pub const DEFAULT_SAMPLES: usize = 25;
