use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vidagg::aggregation::Method;
use vidagg::classifier::KernelKind;
use vidagg::feature_store::load_manifest;
use vidagg::pipeline::{self, EvalConfig, SweepAxis, SweepConfig, TrainConfig};
use vidagg::sampling::SamplePlan;
use vidagg::synth::{self, SynthConfig};
use vidagg::{Error, Result, DEFAULT_C, DEFAULT_CLUSTERS, DEFAULT_PCA_DIM};

#[derive(Parser)]
#[command(name = "vidagg", version, about = "Local feature aggregation for two-stream video classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-stream dataset with noisy frame labels
    Synth(SynthArgs),
    /// Train codebooks and per-stream classifiers into a model bundle
    Train(TrainArgs),
    /// Score test videos with a bundle, fuse streams and report accuracy
    Eval(EvalArgs),
    /// Train and evaluate once per value of one parameter
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 40)]
    videos_per_class: usize,
    #[arg(long, default_value_t = 60)]
    frames: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Fraction of frames showing the action, in (0, 1]
    #[arg(long, default_value_t = 0.25)]
    rho: f64,
    /// Standard deviation of the per-frame noise
    #[arg(long, default_value_t = synth::DEFAULT_NOISE)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// mean, max, mean_std, bow, vlad or fv
    #[arg(long, default_value = "max")]
    method: Method,
    /// Samples per video, or "dense"
    #[arg(long, default_value = "25")]
    samples: SamplePlan,
    /// Temporal segments (default 3 for pooling, 1 for encoders)
    #[arg(long)]
    segments: Option<usize>,
    /// chi2, additive-chi2 or linear (default linear for vlad/fv, chi2 otherwise)
    #[arg(long)]
    kernel: Option<KernelKind>,
    #[arg(long = "C", default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_PCA_DIM)]
    pca_dim: usize,
    #[arg(long, default_value_t = DEFAULT_CLUSTERS)]
    clusters: usize,
    /// Whiten PCA outputs before codebook training
    #[arg(long)]
    whiten: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    feature_set: Option<String>,
}

impl ModelArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            method: self.method,
            samples: self.samples,
            segments: self.segments,
            kernel: self.kernel,
            c: self.c,
            pca_dim: self.pca_dim,
            clusters: self.clusters,
            whiten: self.whiten,
            seed: self.seed,
            split: self.split.clone(),
            feature_set: self.feature_set.clone(),
        }
    }
}

#[derive(Args, Clone)]
struct FusionArgs {
    /// Spatial and temporal fusion weights
    #[arg(long, value_delimiter = ',', default_value = "1,1.5")]
    fusion_weights: Vec<f64>,
    /// Externally produced score CSVs to fuse with the two-stream scores
    #[arg(long, value_delimiter = ',')]
    external_scores: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    external_weight: f64,
    /// Evaluate even if the bundle was trained on a different manifest
    #[arg(long)]
    force: bool,
}

impl FusionArgs {
    fn config(&self) -> Result<EvalConfig> {
        let [s, t] = self.fusion_weights[..] else {
            return Err(Error::Argument(format!(
                "--fusion-weights needs exactly two values (spatial,temporal), got {}",
                self.fusion_weights.len()
            )));
        };
        Ok(EvalConfig {
            fusion_weights: [s, t],
            external: self.external_scores.clone(),
            external_weight: self.external_weight,
            force: self.force,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Bundle directory to write
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    /// Directory for accuracy.csv and score files (default: <bundle>/eval)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    fusion: FusionArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// method or samples
    #[arg(long)]
    axis: SweepAxis,
    /// Comma separated values of the swept parameter
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<String>,
    /// Directory for sweep.csv and the per-value bundles
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    fusion: FusionArgs,
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        classes: a.classes,
        videos_per_class: a.videos_per_class,
        frames: a.frames,
        dim: a.dim,
        action_fraction: a.rho,
        noise: a.noise,
        seed: a.seed,
    };
    cfg.validate()?;
    ensure_dir(&a.out)?;
    let m = synth::generate(&cfg, &a.out)?;
    println!(
        "wrote {} videos ({} classes) to {}",
        m.records.len() / 2,
        m.classes.len(),
        a.out.display()
    );
    Ok(())
}

/// Creates `dir` but not its parents.
fn ensure_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        return Ok(());
    }
    fs::create_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let info = pipeline::train(&manifest, &a.model.config(), &a.out)?;
    println!(
        "trained {} on {} ({}), bundle written to {}",
        info.method,
        info.split,
        info.streams
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join("+"),
        a.out.display()
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = a.fusion.config()?;
    let manifest = load_manifest(&a.manifest)?;
    let report = pipeline::evaluate(&manifest, &a.bundle, &cfg)?;
    let out = a.out.clone().unwrap_or_else(|| a.bundle.join("eval"));
    pipeline::write_report(&report, &out)?;
    print!("{}", report.table());
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let values: Vec<String> = a.values.iter().filter(|v| !v.is_empty()).cloned().collect();
    if values.is_empty() {
        return Err(Error::Argument("--values needs at least one value".into()));
    }
    let cfg = SweepConfig {
        axis: a.axis,
        values,
        base: a.model.config(),
        eval: a.fusion.config()?,
    };
    let manifest = load_manifest(&a.manifest)?;
    fs::create_dir_all(&a.out).map_err(|source| Error::Io {
        path: a.out.clone(),
        source,
    })?;
    let table = pipeline::sweep(&manifest, &cfg, a.out.join("cells"))?;
    for row in &table.rows {
        if let Err(e) = &row.result {
            eprintln!("warning: {} failed: {e}", row.value);
        }
    }
    let path = a.out.join("sweep.csv");
    fs::write(&path, table.csv()).map_err(|source| Error::Io { path, source })?;
    print!("{}", table.table());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Argument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
