//! On-disk dataset model: feature matrices, manifests and score files.

mod manifest;
mod matrix;
mod scores;

pub use manifest::{load_manifest, write_manifest, Manifest, SplitRole, Stream, VideoRecord};
pub use matrix::{load_feature_matrix, write_feature_matrix, FeatureMatrix};
pub use scores::{load_scores, write_scores, ScoreMatrix};
