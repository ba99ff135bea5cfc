//! End-to-end runs over a manifest: sampling, codebook training, aggregation,
//! one-vs-rest SVMs per stream, late fusion and accuracy tables.
//!
//! A trained model bundle is a directory:
//!
//! * `bundle.txt`: `key=value` run parameters plus the SHA-256 of the training manifest
//! * `train_log.txt`: constants, segmentation, codebook and solver traces
//! * `<stream>.dovc`: classifier, and for encoder methods `<stream>.pca.dovm` and
//!   `<stream>.codebook.dovm`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::aggregation::{aggregate_segmented, segment_bounds, Method};
use crate::classifier::{
    default_kernel, load_classifier, predict_scores, train_ovr, write_classifier, KernelKind, KernelSpec,
    SvmParams, TrainedClassifier,
};
use crate::codebook::{load_model, write_model, Model, PcaModel, Points};
use crate::encoding::{train_encoder, Codebook, EncoderConfig, EncoderKind, EncoderSpec};
use crate::feature_store::{load_feature_matrix, load_scores, write_scores};
use crate::fusion::{accuracy, align_external, fuse, minmax_rows};
use crate::sampling::SamplePlan;
use crate::seed::sub_seed;
use crate::{
    Error, FeatureMatrix, Manifest, Result, ScoreMatrix, SplitRole, Stream, DEFAULT_C, DEFAULT_CLUSTERS,
    DEFAULT_FUSION_WEIGHTS, DEFAULT_PCA_DIM, DEFAULT_SAMPLES, DEFAULT_SEGMENTS,
};

const BUNDLE_FILE: &str = "bundle.txt";
const LOG_FILE: &str = "train_log.txt";
const BUNDLE_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub samples: SamplePlan,
    /// `None` picks 3 for pooling methods and 1 for codebook encoders.
    pub segments: Option<usize>,
    /// `None` picks linear for VLAD/FV and exponential chi-square otherwise.
    pub kernel: Option<KernelKind>,
    pub c: f64,
    pub pca_dim: usize,
    pub clusters: usize,
    pub whiten: bool,
    pub seed: u64,
    /// `None` uses the manifest's first declared split.
    pub split: Option<String>,
    /// `None` requires the manifest to hold exactly one feature set.
    pub feature_set: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Max,
            samples: SamplePlan::Even(DEFAULT_SAMPLES),
            segments: None,
            kernel: None,
            c: DEFAULT_C,
            pca_dim: DEFAULT_PCA_DIM,
            clusters: DEFAULT_CLUSTERS,
            whiten: false,
            seed: 0,
            split: None,
            feature_set: None,
        }
    }
}

impl TrainConfig {
    pub fn effective_segments(&self) -> usize {
        self.segments
            .unwrap_or(if self.method.is_encoder() { 1 } else { DEFAULT_SEGMENTS })
    }

    pub fn effective_kernel(&self) -> KernelKind {
        self.kernel.unwrap_or_else(|| default_kernel(self.method))
    }
}

/// Turns one video's local features into its global feature.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub plan: SamplePlan,
    pub segments: usize,
    pub method: Method,
    pub encoder: Option<EncoderSpec>,
}

impl Featurizer {
    pub fn global(&self, seq: &FeatureMatrix) -> Result<Vec<f64>> {
        self.aggregate(&self.plan.apply(seq)?)
    }

    /// Aggregates an already sampled sequence.
    pub fn aggregate(&self, sampled: &FeatureMatrix) -> Result<Vec<f64>> {
        match (&self.encoder, self.method.pooler()) {
            (Some(enc), _) => aggregate_segmented(sampled, self.segments, |s| enc.encode(s)),
            (None, Some(p)) => aggregate_segmented(sampled, self.segments, |s| p.pool(s)),
            (None, None) => Err(Error::arg(format!("method {} needs a trained codebook", self.method))),
        }
    }
}

/// Parameters stored in `bundle.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleInfo {
    pub manifest_sha256: String,
    pub split: String,
    pub feature_set: String,
    pub method: Method,
    pub samples: SamplePlan,
    pub segments: usize,
    pub kernel: KernelKind,
    pub c: f64,
    pub pca_dim: usize,
    pub clusters: usize,
    pub whiten: bool,
    pub seed: u64,
    pub streams: Vec<Stream>,
}

impl BundleInfo {
    pub fn to_text(&self) -> String {
        let streams: Vec<&str> = self.streams.iter().map(|s| s.as_str()).collect();
        let mut out = String::new();
        for (k, v) in [
            ("version", BUNDLE_VERSION.to_string()),
            ("manifest_sha256", self.manifest_sha256.clone()),
            ("split", self.split.clone()),
            ("feature_set", self.feature_set.clone()),
            ("method", self.method.to_string()),
            ("samples", self.samples.to_string()),
            ("segments", self.segments.to_string()),
            ("kernel", self.kernel.to_string()),
            ("c", self.c.to_string()),
            ("pca_dim", self.pca_dim.to_string()),
            ("clusters", self.clusters.to_string()),
            ("whiten", self.whiten.to_string()),
            ("seed", self.seed.to_string()),
            ("streams", streams.join(",")),
        ] {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format_at(i + 1, format!("expected key=value, got '{line}'")))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::format(format!("bundle is missing '{k}'")))
        };
        fn parsed<T: FromStr>(k: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse()
                .map_err(|e: T::Err| Error::format(format!("bad bundle value for '{k}': {e}")))
        }
        if get("version")? != BUNDLE_VERSION {
            return Err(Error::format(format!("unsupported bundle version {}", get("version")?)));
        }
        let streams = get("streams")?
            .split(',')
            .map(|s| parsed::<Stream>("streams", s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            manifest_sha256: get("manifest_sha256")?.to_string(),
            split: get("split")?.to_string(),
            feature_set: get("feature_set")?.to_string(),
            method: parsed("method", get("method")?)?,
            samples: parsed("samples", get("samples")?)?,
            segments: parsed("segments", get("segments")?)?,
            kernel: parsed("kernel", get("kernel")?)?,
            c: parsed("c", get("c")?)?,
            pca_dim: parsed("pca_dim", get("pca_dim")?)?,
            clusters: parsed("clusters", get("clusters")?)?,
            whiten: parsed("whiten", get("whiten")?)?,
            seed: parsed("seed", get("seed")?)?,
            streams,
        })
    }
}

/// SHA-256 of the manifest's canonical text, hex encoded.
pub fn manifest_hash(manifest: &Manifest) -> String {
    hex::encode(Sha256::digest(manifest.to_text().as_bytes()))
}

fn resolve_split(manifest: &Manifest, split: Option<&str>) -> Result<String> {
    match split {
        Some(s) if manifest.has_split(s) => Ok(s.to_string()),
        Some(s) => Err(Error::arg(format!("manifest has no split '{s}'"))),
        None => manifest
            .default_split()
            .map(str::to_string)
            .ok_or_else(|| Error::arg("manifest declares no splits")),
    }
}

fn resolve_feature_set(manifest: &Manifest, fs: Option<&str>) -> Result<String> {
    let sets = manifest.feature_sets();
    match fs {
        Some(f) if sets.contains(&f) => Ok(f.to_string()),
        Some(f) => Err(Error::arg(format!("manifest has no feature set '{f}'"))),
        None if sets.len() == 1 => Ok(sets[0].to_string()),
        None => Err(Error::arg(format!(
            "manifest holds several feature sets ({}); choose one",
            sets.join(", ")
        ))),
    }
}

/// Local features of one stream for every video of a split role, in manifest order.
struct StreamData {
    ids: Vec<String>,
    labels: Vec<usize>,
    seqs: Vec<FeatureMatrix>,
}

fn load_stream(
    manifest: &Manifest,
    split: &str,
    role: SplitRole,
    stream: Stream,
    feature_set: &str,
) -> Result<StreamData> {
    let in_set: BTreeSet<&str> = manifest
        .records
        .iter()
        .filter(|r| r.split == split && r.role == role && r.feature_set == feature_set)
        .map(|r| r.video_id.as_str())
        .collect();
    let videos: Vec<(&str, usize)> = manifest
        .videos(split, role)
        .into_iter()
        .filter(|(id, _)| in_set.contains(id))
        .collect();
    let by_id: HashMap<&str, _> = manifest
        .select(split, role, stream, feature_set)
        .into_iter()
        .map(|r| (r.video_id.as_str(), r))
        .collect();
    let missing: Vec<&str> = videos
        .iter()
        .map(|(id, _)| *id)
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::integrity(format!(
            "{stream} features missing for videos: {}",
            missing.join(", ")
        )));
    }
    let seqs = videos
        .par_iter()
        .map(|(id, _)| load_feature_matrix(manifest.resolve(by_id[id])))
        .collect::<Result<Vec<_>>>()?;
    Ok(StreamData {
        ids: videos.iter().map(|(id, _)| id.to_string()).collect(),
        labels: videos.iter().map(|(_, l)| *l).collect(),
        seqs,
    })
}

fn kernel_spec(kind: KernelKind) -> KernelSpec {
    match kind {
        KernelKind::Chi2 => KernelSpec::chi2_auto(),
        KernelKind::AdditiveChi2 => KernelSpec::additive_chi2(),
        KernelKind::Linear => KernelSpec::linear(),
    }
}

fn fmt_weights(w: &[f64]) -> String {
    w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":")
}

fn model_path(dir: &Path, stream: Stream, part: &str) -> PathBuf {
    dir.join(format!("{stream}.{part}"))
}

/// Replaces the encoder's models with their f32 round-tripped versions, so training
/// and evaluation encode with exactly what is stored on disk.
fn narrow_encoder(spec: &EncoderSpec) -> Result<EncoderSpec> {
    let Model::Pca(pca) = Model::Pca(spec.pca().clone()).narrowed() else {
        unreachable!()
    };
    let codebook = match spec.codebook() {
        Codebook::Kmeans(m) => match Model::Kmeans(m.clone()).narrowed() {
            Model::Kmeans(m) => Codebook::Kmeans(m),
            _ => unreachable!(),
        },
        Codebook::Gmm(m) => match Model::Gmm(m.clone()).narrowed() {
            Model::Gmm(m) => Codebook::Gmm(m),
            _ => unreachable!(),
        },
    };
    EncoderSpec::new(spec.kind(), pca, codebook)
}

fn log_segmentation(log: &mut String, stream: Stream, sampled: &[FeatureMatrix], s: usize) -> Result<()> {
    let lengths: BTreeSet<usize> = sampled.iter().map(|m| m.rows()).collect();
    for n in lengths {
        let sizes: Vec<String> = segment_bounds(n, s)?
            .into_iter()
            .map(|(_, len)| len.to_string())
            .collect();
        let _ = writeln!(log, "{stream} segmentation n={n} s={s}: {}", sizes.join("/"));
    }
    Ok(())
}

fn train_stream(
    manifest: &Manifest,
    cfg: &TrainConfig,
    info: &BundleInfo,
    stream: Stream,
    dir: &Path,
    log: &mut String,
) -> Result<()> {
    let data = load_stream(manifest, &info.split, SplitRole::Train, stream, &info.feature_set)?;
    if data.seqs.is_empty() {
        return Err(Error::arg(format!("no {stream} training videos in split {}", info.split)));
    }
    let sampled = data
        .seqs
        .iter()
        .map(|s| cfg.samples.apply(s))
        .collect::<Result<Vec<_>>>()?;
    let _ = writeln!(log, "{stream} training videos: {}", data.ids.len());
    log_segmentation(log, stream, &sampled, info.segments)?;

    let encoder = match EncoderKind::from_method(cfg.method) {
        None => None,
        Some(kind) => {
            let dim = sampled[0].cols();
            let mut points = Points::new(dim, Vec::new())?;
            for m in &sampled {
                for i in 0..m.rows() {
                    points.push(&m.row_f64(i));
                }
            }
            let pca_dim = cfg.pca_dim.min(dim).min(points.len().saturating_sub(1));
            if pca_dim == 0 {
                return Err(Error::arg(format!(
                    "too few {stream} local features ({}) to fit PCA",
                    points.len()
                )));
            }
            if pca_dim != cfg.pca_dim {
                let _ = writeln!(log, "{stream} pca dim {} clamped to {pca_dim}", cfg.pca_dim);
            }
            let spec = train_encoder(
                &points,
                &EncoderConfig {
                    kind,
                    pca_dim,
                    clusters: cfg.clusters,
                    whiten: cfg.whiten,
                    seed: sub_seed(cfg.seed, &format!("encoder-{stream}")),
                },
            )?;
            let _ = writeln!(
                log,
                "{stream} codebook: {} local features, pca {dim} -> {pca_dim}, {} clusters",
                points.len().min(crate::encoding::MAX_TRAINING_FEATURES),
                cfg.clusters
            );
            match spec.codebook() {
                Codebook::Kmeans(m) => {
                    for (i, v) in m.history.iter().enumerate() {
                        let _ = writeln!(log, "{stream} kmeans iter {} inertia {v}", i + 1);
                    }
                }
                Codebook::Gmm(m) => {
                    for (i, v) in m.history.iter().enumerate() {
                        let _ = writeln!(log, "{stream} gmm iter {} log_likelihood {v}", i + 1);
                    }
                }
            }
            let spec = narrow_encoder(&spec)?;
            write_model(&Model::Pca(spec.pca().clone()), model_path(dir, stream, "pca.dovm"))?;
            let codebook = match spec.codebook() {
                Codebook::Kmeans(m) => Model::Kmeans(m.clone()),
                Codebook::Gmm(m) => Model::Gmm(m.clone()),
            };
            write_model(&codebook, model_path(dir, stream, "codebook.dovm"))?;
            Some(spec)
        }
    };

    let featurizer = Featurizer {
        plan: cfg.samples,
        segments: info.segments,
        method: cfg.method,
        encoder,
    };
    let globals = sampled
        .par_iter()
        .map(|m| featurizer.aggregate(m))
        .collect::<Result<Vec<_>>>()?;
    let params = SvmParams {
        c: cfg.c,
        ..SvmParams::default()
    };
    let model = train_ovr(
        &globals,
        &data.labels,
        manifest.classes.len(),
        kernel_spec(info.kernel),
        &params,
        sub_seed(cfg.seed, &format!("classifier-{stream}")),
    )?;
    let _ = writeln!(
        log,
        "{stream} classifier: dim {} kernel {} gamma {} C {} support vectors {}",
        globals[0].len(),
        model.kernel,
        model.gamma,
        model.c,
        model.support.len()
    );
    for (c, m) in model.models.iter().enumerate() {
        let _ = writeln!(
            log,
            "{stream} svm class {c}: iterations {} gap {:e} support {}",
            m.iterations,
            m.gap,
            m.sv.len()
        );
    }
    write_classifier(&model, model_path(dir, stream, "dovc"))
}

/// Trains one classifier per stream present in the manifest and writes the bundle to `out`.
pub fn train(manifest: &Manifest, cfg: &TrainConfig, out: impl AsRef<Path>) -> Result<BundleInfo> {
    let out = out.as_ref();
    if !(cfg.c > 0.0) || !cfg.c.is_finite() {
        return Err(Error::arg(format!("C must be positive, got {}", cfg.c)));
    }
    if cfg.pca_dim == 0 || cfg.clusters == 0 {
        return Err(Error::arg("PCA dimension and cluster count must be at least 1"));
    }
    let split = resolve_split(manifest, cfg.split.as_deref())?;
    let feature_set = resolve_feature_set(manifest, cfg.feature_set.as_deref())?;
    let streams = manifest.streams(&feature_set);
    let info = BundleInfo {
        manifest_sha256: manifest_hash(manifest),
        split,
        feature_set,
        method: cfg.method,
        samples: cfg.samples,
        segments: cfg.effective_segments(),
        kernel: cfg.effective_kernel(),
        c: cfg.c,
        pca_dim: cfg.pca_dim,
        clusters: cfg.clusters,
        whiten: cfg.whiten,
        seed: cfg.seed,
        streams: streams.clone(),
    };
    if info.segments == 0 {
        return Err(Error::arg("segment count must be at least 1"));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut log = String::new();
    let _ = writeln!(
        log,
        "defaults C={DEFAULT_C} pca_dim={DEFAULT_PCA_DIM} clusters={DEFAULT_CLUSTERS} fusion_weights={} segments={DEFAULT_SEGMENTS} samples={DEFAULT_SAMPLES}",
        fmt_weights(&DEFAULT_FUSION_WEIGHTS)
    );
    let _ = writeln!(
        log,
        "run method={} samples={} segments={} kernel={} C={} pca_dim={} clusters={} seed={} split={} feature_set={}",
        info.method,
        info.samples,
        info.segments,
        info.kernel,
        info.c,
        info.pca_dim,
        info.clusters,
        info.seed,
        info.split,
        info.feature_set
    );
    for &stream in &streams {
        train_stream(manifest, cfg, &info, stream, out, &mut log)?;
    }
    let log_path = out.join(LOG_FILE);
    fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
    let bundle_path = out.join(BUNDLE_FILE);
    fs::write(&bundle_path, info.to_text()).map_err(|e| Error::io(&bundle_path, e))?;
    Ok(info)
}

pub fn load_bundle_info(dir: impl AsRef<Path>) -> Result<BundleInfo> {
    let path = dir.as_ref().join(BUNDLE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    BundleInfo::parse(&text)
}

fn load_featurizer(dir: &Path, info: &BundleInfo, stream: Stream) -> Result<Featurizer> {
    let encoder = match EncoderKind::from_method(info.method) {
        None => None,
        Some(kind) => {
            let pca: PcaModel = match load_model(model_path(dir, stream, "pca.dovm"))? {
                Model::Pca(p) => p,
                _ => return Err(Error::format(format!("{stream}.pca.dovm does not hold a PCA model"))),
            };
            let codebook = match load_model(model_path(dir, stream, "codebook.dovm"))? {
                Model::Kmeans(m) => Codebook::Kmeans(m),
                Model::Gmm(m) => Codebook::Gmm(m),
                Model::Pca(_) => {
                    return Err(Error::format(format!("{stream}.codebook.dovm holds a PCA model")))
                }
            };
            Some(EncoderSpec::new(kind, pca, codebook)?)
        }
    };
    Ok(Featurizer {
        plan: info.samples,
        segments: info.segments,
        method: info.method,
        encoder,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Spatial and temporal weights.
    pub fusion_weights: [f64; 2],
    pub external: Vec<PathBuf>,
    /// Weight of each (row min-max normalised) external score file.
    pub external_weight: f64,
    /// Evaluate even when the manifest hash differs from the one used for training.
    pub force: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fusion_weights: DEFAULT_FUSION_WEIGHTS,
            external: Vec::new(),
            external_weight: 1.0,
            force: false,
        }
    }
}

/// Accuracy per column (`spatial`, `temporal`, `fused`, `+external`) on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub split: String,
    pub columns: Vec<(String, f64)>,
    pub scores: Vec<(String, ScoreMatrix)>,
}

/// Accuracy in percent with two decimals, the form used in tables and CSV files.
pub fn percent(acc: f64) -> String {
    format!("{:.2}", acc * 100.0)
}

impl EvalReport {
    pub fn accuracy(&self, column: &str) -> Option<f64> {
        self.columns.iter().find(|(c, _)| c == column).map(|(_, a)| *a)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("split");
        for (c, _) in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        out.push_str(&self.split);
        for (_, a) in &self.columns {
            out.push(',');
            out.push_str(&percent(*a));
        }
        out.push('\n');
        out
    }

    pub fn table(&self) -> String {
        let mut header = vec!["split".to_string()];
        let mut row = vec![self.split.clone()];
        for (c, a) in &self.columns {
            header.push(c.clone());
            row.push(percent(*a));
        }
        render_table(&[header], &[row])
    }
}

fn render_table(header: &[Vec<String>], rows: &[Vec<String>]) -> String {
    let all: Vec<&Vec<String>> = header.iter().chain(rows).collect();
    let cols = all.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| all.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in all {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{s:<w$}", w = widths[i]))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Scores the split's test videos with every stream of the bundle, fuses them and
/// measures accuracy.
pub fn evaluate(manifest: &Manifest, bundle: impl AsRef<Path>, cfg: &EvalConfig) -> Result<EvalReport> {
    let dir = bundle.as_ref();
    let info = load_bundle_info(dir)?;
    let hash = manifest_hash(manifest);
    if hash != info.manifest_sha256 && !cfg.force {
        return Err(Error::integrity(format!(
            "bundle was trained on a different manifest (hash {} vs {}); pass --force to evaluate anyway",
            info.manifest_sha256, hash
        )));
    }
    if !manifest.has_split(&info.split) {
        return Err(Error::integrity(format!("manifest has no split '{}'", info.split)));
    }
    let mut scores: Vec<(String, ScoreMatrix)> = Vec::new();
    let mut columns = Vec::new();
    for &stream in &info.streams {
        let data = load_stream(manifest, &info.split, SplitRole::Test, stream, &info.feature_set)?;
        if data.ids.is_empty() {
            return Err(Error::integrity(format!("split {} has no test videos", info.split)));
        }
        let featurizer = load_featurizer(dir, &info, stream)?;
        let model: TrainedClassifier = load_classifier(model_path(dir, stream, "dovc"))?;
        let globals = data
            .seqs
            .par_iter()
            .map(|m| featurizer.global(m))
            .collect::<Result<Vec<_>>>()?;
        let s = predict_scores(&model, &data.ids, &globals)?;
        columns.push((stream.to_string(), accuracy(&s, manifest, &info.split)?));
        scores.push((stream.to_string(), s));
    }
    if scores.is_empty() {
        return Err(Error::integrity("bundle holds no streams"));
    }
    let base = if scores.len() > 1 {
        let inputs: Vec<(&ScoreMatrix, f64)> = info
            .streams
            .iter()
            .zip(&scores)
            .map(|(st, (_, s))| {
                let w = match st {
                    Stream::Spatial => cfg.fusion_weights[0],
                    Stream::Temporal => cfg.fusion_weights[1],
                };
                (s, w)
            })
            .collect();
        let fused = fuse(&inputs)?;
        columns.push(("fused".to_string(), accuracy(&fused, manifest, &info.split)?));
        scores.push(("fused".to_string(), fused.clone()));
        fused
    } else {
        scores[0].1.clone()
    };
    if !cfg.external.is_empty() {
        let mut ext = Vec::new();
        for path in &cfg.external {
            let raw = load_scores(path)?;
            let aligned = align_external(&raw, manifest, &info.split)?;
            ext.push(minmax_rows(&aligned)?);
        }
        let mut inputs = vec![(&base, 1.0)];
        inputs.extend(ext.iter().map(|s| (s, cfg.external_weight)));
        let combined = fuse(&inputs)?;
        columns.push(("+external".to_string(), accuracy(&combined, manifest, &info.split)?));
        scores.push(("external_fused".to_string(), combined));
    }
    Ok(EvalReport {
        split: info.split,
        columns,
        scores,
    })
}

/// Writes `accuracy.csv` and one `scores_<column>.csv` per scored column.
pub fn write_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("accuracy.csv");
    fs::write(&path, report.csv()).map_err(|e| Error::io(&path, e))?;
    for (name, s) in &report.scores {
        write_scores(s, dir.join(format!("scores_{name}.csv")))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Method,
    Samples,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "method" => Ok(SweepAxis::Method),
            "samples" => Ok(SweepAxis::Samples),
            _ => Err(format!("unknown sweep axis '{s}' (expected method or samples)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    /// Accuracy per column; `Err` holds the failure message of the cell.
    pub result: std::result::Result<BTreeMap<String, f64>, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn get(&self, value: &str, column: &str) -> Option<f64> {
        let row = self.rows.iter().find(|r| r.value == value)?;
        row.result.as_ref().ok()?.get(column).copied()
    }

    fn cells(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let axis = match self.axis {
            SweepAxis::Method => "method",
            SweepAxis::Samples => "samples",
        };
        let mut header = vec![axis.to_string()];
        header.extend(self.columns.iter().cloned());
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.value.clone()];
                for c in &self.columns {
                    cells.push(match &r.result {
                        Ok(m) => m.get(c).map(|a| percent(*a)).unwrap_or_else(|| "ERR".into()),
                        Err(_) => "ERR".into(),
                    });
                }
                cells
            })
            .collect();
        (header, rows)
    }

    pub fn csv(&self) -> String {
        let (header, rows) = self.cells();
        let mut out = header.join(",");
        out.push('\n');
        for r in rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn table(&self) -> String {
        let (header, rows) = self.cells();
        render_table(&[header], &rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<String>,
    pub base: TrainConfig,
    pub eval: EvalConfig,
}

/// Trains and evaluates one bundle per value under `work_dir`; a failing cell is
/// recorded and the sweep continues.
pub fn sweep(manifest: &Manifest, cfg: &SweepConfig, work_dir: impl AsRef<Path>) -> Result<SweepTable> {
    let work_dir = work_dir.as_ref();
    if cfg.values.is_empty() {
        return Err(Error::arg("sweep needs at least one value"));
    }
    let mut configs = Vec::with_capacity(cfg.values.len());
    for v in &cfg.values {
        let mut c = cfg.base.clone();
        match cfg.axis {
            SweepAxis::Method => c.method = v.parse().map_err(Error::arg)?,
            SweepAxis::Samples => c.samples = v.parse().map_err(Error::arg)?,
        }
        configs.push(c);
    }
    let fs = resolve_feature_set(manifest, cfg.base.feature_set.as_deref())?;
    let mut columns: Vec<String> = manifest.streams(&fs).iter().map(|s| s.to_string()).collect();
    if columns.len() > 1 {
        columns.push("fused".into());
    }
    if !cfg.eval.external.is_empty() {
        columns.push("+external".into());
    }
    let mut rows = Vec::with_capacity(configs.len());
    for (i, (value, c)) in cfg.values.iter().zip(&configs).enumerate() {
        let dir = work_dir.join(format!("cell{i:02}-{value}"));
        let result = train(manifest, c, &dir)
            .and_then(|_| evaluate(manifest, &dir, &cfg.eval))
            .map(|r| r.columns.into_iter().collect::<BTreeMap<_, _>>())
            .map_err(|e| e.to_string());
        rows.push(SweepRow {
            value: value.clone(),
            result,
        });
    }
    Ok(SweepTable {
        axis: cfg.axis,
        columns,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn small_synth(dir: &Path) -> Manifest {
        generate(
            &SynthConfig {
                classes: 3,
                videos_per_class: 6,
                frames: 30,
                dim: 6,
                action_fraction: 1.0,
                noise: 0.05,
                seed: 3,
            },
            dir,
        )
        .unwrap()
    }

    #[test]
    fn bundle_info_round_trip() {
        let info = BundleInfo {
            manifest_sha256: "ab".into(),
            split: "s".into(),
            feature_set: "f".into(),
            method: Method::Fv,
            samples: SamplePlan::Dense,
            segments: 1,
            kernel: KernelKind::Linear,
            c: 100.0,
            pca_dim: 256,
            clusters: 8,
            whiten: false,
            seed: 9,
            streams: vec![Stream::Spatial, Stream::Temporal],
        };
        assert_eq!(BundleInfo::parse(&info.to_text()).unwrap(), info);
        assert!(BundleInfo::parse("version=1\n").is_err());
    }

    #[test]
    fn noise_free_actions_classify_perfectly() {
        let data = tempfile::tempdir().unwrap();
        let manifest = small_synth(data.path());
        for method in [Method::Mean, Method::Max, Method::MeanStd, Method::Bow, Method::Vlad, Method::Fv] {
            let out = tempfile::tempdir().unwrap();
            // VLAD and FV carry no zeroth-order statistics: with one tight mode per
            // centroid their normalised residuals are pure noise, so they need a
            // codebook coarser than the class structure.
            let clusters = if matches!(method, Method::Vlad | Method::Fv) { 2 } else { 4 };
            let cfg = TrainConfig {
                method,
                samples: SamplePlan::Even(9),
                pca_dim: 4,
                clusters,
                ..TrainConfig::default()
            };
            train(&manifest, &cfg, out.path()).unwrap();
            let report = evaluate(&manifest, out.path(), &EvalConfig::default()).unwrap();
            assert_eq!(report.accuracy("fused"), Some(1.0), "{method}: {report:?}");
        }
    }

    #[test]
    fn log_reports_segmentation_and_constants() {
        let data = tempfile::tempdir().unwrap();
        let manifest = small_synth(data.path());
        let out = tempfile::tempdir().unwrap();
        train(&manifest, &TrainConfig::default(), out.path()).unwrap();
        let log = fs::read_to_string(out.path().join(LOG_FILE)).unwrap();
        assert!(log.contains("segmentation n=25 s=3: 8/9/8"), "{log}");
        assert!(log.contains("C=100 pca_dim=256 clusters=256 fusion_weights=1:1.5"));
    }

    #[test]
    fn hash_mismatch_needs_force() {
        let data = tempfile::tempdir().unwrap();
        let manifest = small_synth(data.path());
        let out = tempfile::tempdir().unwrap();
        train(&manifest, &TrainConfig::default(), out.path()).unwrap();
        let mut other = manifest.clone();
        other.classes[0] = "renamed".into();
        assert!(matches!(
            evaluate(&other, out.path(), &EvalConfig::default()),
            Err(Error::Integrity(_))
        ));
        let forced = EvalConfig {
            force: true,
            ..EvalConfig::default()
        };
        assert!(evaluate(&other, out.path(), &forced).is_ok());
    }

    #[test]
    fn too_many_clusters_is_an_argument_error() {
        let data = tempfile::tempdir().unwrap();
        let manifest = small_synth(data.path());
        let out = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            method: Method::Fv,
            clusters: 10_000,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&manifest, &cfg, out.path()), Err(Error::Argument(_))));
    }

    #[test]
    fn report_csv_matches_table() {
        let r = EvalReport {
            split: "split1".into(),
            columns: vec![("spatial".into(), 0.5), ("fused".into(), 2.0 / 3.0)],
            scores: vec![],
        };
        assert_eq!(r.csv(), "split,spatial,fused\nsplit1,50.00,66.67\n");
        assert!(r.table().contains("66.67"));
    }

    #[test]
    fn sweep_records_failures() {
        let data = tempfile::tempdir().unwrap();
        let manifest = small_synth(data.path());
        let work = tempfile::tempdir().unwrap();
        let cfg = SweepConfig {
            axis: SweepAxis::Method,
            values: vec!["max".into(), "bow".into()],
            base: TrainConfig {
                clusters: 100_000,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
        };
        let t = sweep(&manifest, &cfg, work.path()).unwrap();
        assert_eq!(t.get("max", "fused"), Some(1.0));
        assert!(t.rows[1].result.is_err());
        assert!(t.csv().lines().nth(2).unwrap().starts_with("bow,ERR,ERR,ERR"));

        let empty = SweepConfig { values: vec![], ..cfg };
        assert!(matches!(sweep(&manifest, &empty, work.path()), Err(Error::Argument(_))));
    }
}
