//! `night2day`: dataset preparation, two-stage training, inference,
//! evaluation, model comparison and the dilation ablation.

mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use night2day::ablation::{dilation_sweep, DEFAULT_MAX_ITERATIONS};
use night2day::dataset::{
    load_mask, DatasetManifest, DaySide, ImageSource, Layout, PrepareOptions, Split,
};
use night2day::metrics::embed::{Embedder, ProjectionEmbedder, ResNetEmbedder};
use night2day::metrics::report::{read_per_sample_csv, write_comparison};
use night2day::metrics::{compare_models, Phase, PhaseReport, Winner};
use night2day::nn::device_from_env;
use night2day::pipeline::{
    evaluate_run, infer_split, train, Order, PipelineConfig, RunDir, TrainedPipeline,
};
use night2day::synthetic::write_dataset;
use night2day::Device;

use crate::config::load_config;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "night2day",
    version,
    about = "Two-stage night-to-day image inpainting"
)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset manifest (splits and mask assignment) from image and mask directories.
    Prepare(PrepareArgs),
    /// Write a procedural night/day dataset with a stroke-mask corpus.
    Synth(SynthArgs),
    /// Train both stages in the configured order.
    Train(TrainArgs),
    /// Run both stages over a split and persist input, intermediate and final images.
    Infer(InferArgs),
    /// Score persisted test outputs in three phases.
    Evaluate(EvaluateArgs),
    /// Compare the final-phase reports of two evaluated runs.
    Compare(CompareArgs),
    /// Sweep mask dilation on one test sample.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON pipeline config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set inpainter.steps.edge=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Image side length for every stage.
    #[arg(long)]
    image_size: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<PipelineConfig> {
        let mut cfg = load_config(self.config.as_deref(), &self.overrides)?;
        if let Some(s) = self.image_size {
            cfg.set_image_size(s);
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Composite,
    Split,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Composite => Layout::Composite,
            LayoutArg::Split => Layout::Split,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DaySideArg {
    Left,
    Right,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// Paired imagery root.
    #[arg(long)]
    images: PathBuf,
    #[arg(long, value_enum, default_value = "composite")]
    layout: LayoutArg,
    /// Mask corpus directory.
    #[arg(long)]
    masks: PathBuf,
    /// Which half of a composite is the day image.
    #[arg(long, value_enum, default_value = "left")]
    day_side: DaySideArg,
    /// Treat light mask pixels as missing.
    #[arg(long)]
    missing_is_light: bool,
    /// Split seed (defaults to `seeds.data`).
    #[arg(long)]
    seed: Option<u64>,
    /// Manifest path (defaults to `<run-dir>/manifest.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Output root; pairs go to `<out>/pairs`, masks to `<out>/masks`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pairs: usize,
    #[arg(long, default_value_t = 40)]
    masks: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long)]
    order: Option<Order>,
    /// Manifest path (defaults to `<run-dir>/manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed_stage1: Option<u64>,
    #[arg(long)]
    seed_stage2: Option<u64>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderArg {
    /// Seeded random projection of a 16×16 grayscale thumbnail.
    Projection,
    /// ResNet-50 pooled features from torchvision-layout safetensors weights.
    Resnet,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long, value_enum, default_value = "projection")]
    embedder: EmbedderArg,
    /// Weights for `--embedder resnet`.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 224)]
    embed_size: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory receiving `comparison.json` and the overlay plots.
    #[arg(long)]
    run_dir: PathBuf,
    run_a: PathBuf,
    run_b: PathBuf,
    #[arg(long)]
    label_a: Option<String>,
    #[arg(long)]
    label_b: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// Test pair to sweep (defaults to the first test id).
    #[arg(long)]
    pair_id: Option<String>,
    /// Base mask PNG (defaults to the pair's assigned mask).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    max_iterations: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            return fail(CliError::Usage(
                first.trim().trim_start_matches("error: ").to_owned(),
            ));
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json_line());
    ExitCode::from(e.exit_code() as u8)
}

fn device() -> CliResult<Device> {
    Ok(device_from_env()?)
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Prepare(a) => prepare(a),
        Command::Synth(a) => {
            write_dataset(&a.out, a.pairs, a.masks, a.size, a.seed, Layout::Composite)?;
            println!("{}", a.out.display());
            Ok(())
        }
        Command::Train(a) => train_cmd(a),
        Command::Infer(a) => {
            let run = RunDir::new(&a.run_dir);
            let pipeline = TrainedPipeline::load(&run, &device()?)?;
            let manifest = DatasetManifest::load(&run.manifest())?;
            let outputs = infer_split(&pipeline, &manifest, a.split.into(), &run)?;
            println!(
                "{} samples -> {}",
                outputs.len(),
                run.root.join("outputs").display()
            );
            Ok(())
        }
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn prepare(a: PrepareArgs) -> CliResult<()> {
    let cfg = a.config.load()?;
    let opts = PrepareOptions {
        source: ImageSource {
            layout: a.layout.into(),
            root: a.images,
        },
        mask_dir: a.masks,
        seed: a.seed.unwrap_or(cfg.seeds.data),
        image_size: cfg.image_size,
        day_side: match a.day_side {
            DaySideArg::Left => DaySide::Left,
            DaySideArg::Right => DaySide::Right,
        },
        fill: cfg.fill,
        missing_is_dark: !a.missing_is_light,
    };
    let manifest = DatasetManifest::prepare(&opts)?;
    let out = a.out.unwrap_or_else(|| a.run_dir.join("manifest.json"));
    manifest.save(&out)?;
    let s = &manifest.splits;
    println!(
        "{}: train {} / val {} / test {}",
        out.display(),
        s.ids(Split::Train).len(),
        s.ids(Split::Val).len(),
        s.ids(Split::Test).len()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let mut cfg = a.config.load()?;
    if let Some(o) = a.order {
        cfg.order = o;
    }
    if let Some(s) = a.seed_stage1 {
        cfg.seeds.stage1 = s;
    }
    if let Some(s) = a.seed_stage2 {
        cfg.seeds.stage2 = s;
    }
    let run = RunDir::new(&a.run_dir);
    let manifest_path = a.manifest.unwrap_or_else(|| run.manifest());
    let manifest = DatasetManifest::load(&manifest_path)?;
    train(&manifest, &cfg, &run, &device()?)?;
    println!("trained {} -> {}", cfg.order.name(), run.root.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let run = RunDir::new(&a.run_dir);
    let embedder: Box<dyn Embedder> = match a.embedder {
        EmbedderArg::Projection => Box::new(ProjectionEmbedder::default()),
        EmbedderArg::Resnet => {
            let w = a
                .weights
                .ok_or_else(|| CliError::Usage("--embedder resnet requires --weights".into()))?;
            Box::new(ResNetEmbedder::load(&w, a.embed_size, &device()?)?)
        }
    };
    let reports = evaluate_run(&run, embedder.as_ref())?;
    for r in &reports {
        let fid = r
            .fid
            .map(|f| format!("{f:.4}"))
            .unwrap_or_else(|| "n/a".into());
        let mean = |m| r.summary[&m].mean;
        use night2day::metrics::MetricName as M;
        println!(
            "{:<12} rmse {:.4}  mae {:.4}  ssim {:.4}  ncc {:.4}  fid {fid}",
            r.phase.key(),
            mean(M::Rmse),
            mean(M::Mae),
            mean(M::Ssim),
            mean(M::Ncc)
        );
    }
    Ok(())
}

/// Final-phase report of an evaluated run, rebuilt from its report files.
fn load_post_report(run_dir: &Path) -> CliResult<PhaseReport> {
    let run = RunDir::new(run_dir);
    let per_sample = read_per_sample_csv(&run.reports().join("phase3_per_sample.csv"))?;
    let summary_path = run.reports().join("summary.json");
    if !summary_path.exists() {
        return Err(night2day::Error::MissingArtifact(summary_path).into());
    }
    let text = std::fs::read_to_string(&summary_path)
        .map_err(|e| night2day::Error::io(&summary_path, e))?;
    let summary: serde_json::Value = serde_json::from_str(&text).map_err(night2day::Error::from)?;
    let fid = summary["phases"]["post"]["fid"].as_f64();
    Ok(PhaseReport::from_samples(Phase::Post, per_sample, fid)?)
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn compare(a: CompareArgs) -> CliResult<()> {
    let ra = load_post_report(&a.run_a)?;
    let rb = load_post_report(&a.run_b)?;
    let la = a.label_a.unwrap_or_else(|| run_label(&a.run_a));
    let lb = a.label_b.unwrap_or_else(|| run_label(&a.run_b));
    let cmp = compare_models(&ra, &rb, &la, &lb)?;
    write_comparison(&a.run_dir, &cmp, &ra, &rb)?;
    for v in &cmp.verdicts {
        let show = |x: Option<f64>| x.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
        let winner = match v.winner {
            Winner::A => la.as_str(),
            Winner::B => lb.as_str(),
            Winner::Tie => "tie",
            Winner::Undetermined => "undetermined",
        };
        println!(
            "{:<5} {la} {}  {lb} {}  -> {winner}",
            v.metric.key(),
            show(v.a),
            show(v.b)
        );
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> CliResult<()> {
    let run = RunDir::new(&a.run_dir);
    let pipeline = TrainedPipeline::load(&run, &device()?)?;
    let manifest = DatasetManifest::load(&run.manifest())?;
    let id = match a.pair_id {
        Some(id) => id,
        None => manifest
            .splits
            .ids(Split::Test)
            .first()
            .cloned()
            .ok_or_else(|| night2day::Error::InvalidArgument("test split is empty".into()))?,
    };
    let pair = manifest.load_pair(&id)?;
    let mask = match &a.mask {
        Some(p) => {
            if !p.exists() {
                return Err(night2day::Error::MissingArtifact(p.clone()).into());
            }
            load_mask(p, manifest.image_size, manifest.missing_is_dark)?
        }
        None => manifest.load_mask(&id)?,
    };
    let report = dilation_sweep(&pipeline, &pair, &mask, a.max_iterations)?;
    let dir = run.root.join("ablation");
    report.write(&dir)?;
    for r in &report.rows {
        println!(
            "k={:<2} coverage {:.4}  rmse {:.4}",
            r.k, r.coverage, r.metrics.rmse
        );
    }
    if let Some(k) = report.saturated_at {
        println!("mask saturated at k={k}");
    }
    Ok(())
}
