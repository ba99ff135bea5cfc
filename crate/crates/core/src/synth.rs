//! Synthetic two-stream datasets with false label assignment.
//!
//! Each class owns one prototype per stream; a single background prototype per
//! stream is shared by all classes. In every video only a contiguous block of
//! `round(ρ·N)` frames shows the action (class prototype plus noise); every other
//! frame shows the background plus noise, yet carries the video's label.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::feature_store::write_feature_matrix;
use crate::seed::named_rng;
use crate::{Error, FeatureMatrix, Manifest, Result, SplitRole, Stream, VideoRecord};

pub const SPLIT_NAME: &str = "split1";
pub const FEATURE_SET: &str = "synth";

/// Default noise scale: about the standard deviation of a prototype coordinate
/// (`sqrt(1/2 - 1/(2π)) ≈ 0.58` for a rectified standard normal).
pub const DEFAULT_NOISE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub videos_per_class: usize,
    pub frames: usize,
    pub dim: usize,
    /// Fraction of frames that show the action, in (0, 1].
    pub action_fraction: f64,
    /// Standard deviation of the per-frame Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            videos_per_class: 40,
            frames: 60,
            dim: 32,
            action_fraction: 0.25,
            noise: DEFAULT_NOISE,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::arg("need at least 2 classes"));
        }
        if self.videos_per_class == 0 || self.frames == 0 || self.dim == 0 {
            return Err(Error::arg("video, frame and dimension counts must be at least 1"));
        }
        if !(self.action_fraction > 0.0 && self.action_fraction <= 1.0) {
            return Err(Error::arg(format!(
                "action fraction must lie in (0, 1], got {}",
                self.action_fraction
            )));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::arg(format!("noise scale must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }

    /// Number of action frames in every video.
    pub fn action_frames(&self) -> usize {
        ((self.action_fraction * self.frames as f64).round() as usize).clamp(1, self.frames)
    }
}

/// Class prototypes (`classes × dim`) and the background prototype for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamPrototypes {
    pub classes: Vec<Vec<f64>>,
    pub background: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub video_id: String,
    pub label: usize,
    pub role: SplitRole,
    /// First frame of the action block.
    pub action_start: usize,
    /// Spatial then temporal.
    pub features: [FeatureMatrix; 2],
}

/// Rectified standard normal coordinates, like post-ReLU CNN activations.
fn prototype(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    (0..dim).map(|_| f64::max(n.sample(rng), 0.0)).collect()
}

pub fn prototypes(config: &SynthConfig) -> [StreamPrototypes; 2] {
    let mut rng = named_rng(config.seed, "synth-prototypes");
    let mut one = || StreamPrototypes {
        classes: (0..config.classes).map(|_| prototype(&mut rng, config.dim)).collect(),
        background: prototype(&mut rng, config.dim),
    };
    let spatial = one();
    let temporal = one();
    [spatial, temporal]
}

pub fn class_name(c: usize) -> String {
    format!("class{c:02}")
}

/// Builds every video in memory. Videos are ordered by class, then index.
pub fn generate_videos(config: &SynthConfig) -> Result<Vec<SynthVideo>> {
    config.validate()?;
    let protos = prototypes(config);
    let noise = Normal::new(0.0, config.noise).map_err(|e| Error::arg(e.to_string()))?;
    let action_len = config.action_frames();
    let mut video_rng = named_rng(config.seed, "synth-videos");
    let mut split_rng = named_rng(config.seed, "synth-split");
    let n_train = config.videos_per_class.div_ceil(2);

    let mut videos = Vec::with_capacity(config.classes * config.videos_per_class);
    for label in 0..config.classes {
        let mut order: Vec<usize> = (0..config.videos_per_class).collect();
        order.shuffle(&mut split_rng);
        let mut roles = vec![SplitRole::Test; config.videos_per_class];
        for &i in &order[..n_train] {
            roles[i] = SplitRole::Train;
        }
        for (v, role) in roles.into_iter().enumerate() {
            let action_start = video_rng.random_range(0..=config.frames - action_len);
            let mut make = |p: &StreamPrototypes| -> Result<FeatureMatrix> {
                let mut data = Vec::with_capacity(config.frames * config.dim);
                for f in 0..config.frames {
                    let base = if (action_start..action_start + action_len).contains(&f) {
                        &p.classes[label]
                    } else {
                        &p.background
                    };
                    data.extend(base.iter().map(|b| {
                        let e = if config.noise > 0.0 { noise.sample(&mut video_rng) } else { 0.0 };
                        (b + e) as f32
                    }));
                }
                FeatureMatrix::new(config.frames, config.dim, data)
            };
            let spatial = make(&protos[0])?;
            let temporal = make(&protos[1])?;
            videos.push(SynthVideo {
                video_id: format!("{}_v{v:03}", class_name(label)),
                label,
                role,
                action_start,
                features: [spatial, temporal],
            });
        }
    }
    Ok(videos)
}

fn relative_path(stream: Stream, video_id: &str) -> PathBuf {
    PathBuf::from(stream.as_str()).join(format!("{video_id}.dovf"))
}

/// Writes feature files under `out_dir/<stream>/` and `out_dir/manifest.txt`.
pub fn generate(config: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    let videos = generate_videos(config)?;
    for s in Stream::ALL {
        let dir = out_dir.join(s.as_str());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut records = Vec::with_capacity(videos.len() * 2);
    for v in &videos {
        for (s, m) in Stream::ALL.into_iter().zip(&v.features) {
            let rel = relative_path(s, &v.video_id);
            write_feature_matrix(m, out_dir.join(&rel))?;
            records.push(VideoRecord {
                video_id: v.video_id.clone(),
                label: v.label,
                split: SPLIT_NAME.to_string(),
                role: v.role,
                stream: s,
                feature_set: FEATURE_SET.to_string(),
                path: rel,
            });
        }
    }
    let manifest = Manifest {
        classes: (0..config.classes).map(class_name).collect(),
        splits: vec![SPLIT_NAME.to_string()],
        records,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.validate()?;
    crate::feature_store::write_manifest(&manifest, out_dir.join("manifest.txt"))?;
    Ok(manifest)
}
