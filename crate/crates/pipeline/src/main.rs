use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use endofuse::stages::{self, RunDir, Stage, ALL_STAGES};
use endofuse::synth::SynthJob;
use endofuse::{load_manifest, PipelineConfig, PipelineError, PoseSource};

#[derive(Parser, Debug)]
#[command(
    name = "endofuse",
    version,
    about = "Monocular endoscopy depth, tracking and fusion pipeline"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset.
    Synth {
        /// Scene, path and render options as JSON (default: a 30-frame arc).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a manifest and every file it references.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Metric depth from disparities or supplied depth.
    DepthInit(StageArgs),
    /// Flow-guided temporal depth refinement.
    Refine(StageArgs),
    /// Direct photometric tracking and pose smoothing.
    Track(StageArgs),
    /// TSDF fusion and mesh extraction.
    Fuse(StageArgs),
    /// Pose and depth-consistency metrics against ground truth.
    Eval(StageArgs),
    /// Every stage in order.
    RunAll(StageArgs),
}

#[derive(Args, Debug)]
struct StageArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Pipeline configuration JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// Accepted for symmetry with `synth`; the stages are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    disable_flow: bool,
    /// Depth as 1/(K·disparity) instead of the fitted baseline.
    #[arg(long, value_name = "K")]
    fixed_scale: Option<f64>,
    #[arg(long)]
    disable_ema: bool,
    #[arg(long)]
    disable_dyema: bool,
    #[arg(long, value_enum)]
    pose_source: Option<PoseSourceArg>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum PoseSourceArg {
    Track,
    GroundTruth,
}

impl StageArgs {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let a = &mut cfg.ablation;
        a.disable_flow |= self.disable_flow;
        a.disable_ema |= self.disable_ema;
        a.disable_dyema |= self.disable_dyema;
        if self.fixed_scale.is_some() {
            a.fixed_scale = self.fixed_scale;
        }
        if let Some(s) = self.pose_source {
            cfg.pose_source = match s {
                PoseSourceArg::Track => PoseSource::Track,
                PoseSourceArg::GroundTruth => PoseSource::GroundTruth,
            };
        }
        cfg.validate().map_err(PipelineError::BadInput)?;
        Ok(cfg)
    }

    fn run(&self, stages: &[Stage]) -> Result<(), PipelineError> {
        let cfg = self.config()?;
        let m = load_manifest(&self.manifest)?;
        stages::run_stages(&m, &cfg, &RunDir::new(&self.out), stages)
    }
}

fn synth(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), PipelineError> {
    let mut job = match config {
        Some(p) => SynthJob::load(p)?,
        None => SynthJob::default(),
    };
    if let Some(s) = seed {
        job.options.seed = s;
    }
    let m = job.run(out)?;
    println!("{} frames written to {}", m.frames.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Failed(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth { config, out, seed } => synth(config.as_deref(), &out, seed),
        Command::Validate { manifest } => {
            let m = load_manifest(&manifest)?;
            println!("{}: ok ({} frames)", manifest.display(), m.frames.len());
            Ok(())
        }
        Command::DepthInit(a) => a.run(&[Stage::DepthInit]),
        Command::Refine(a) => a.run(&[Stage::Refine]),
        Command::Track(a) => a.run(&[Stage::Track]),
        Command::Fuse(a) => a.run(&[Stage::Fuse]),
        Command::Eval(a) => {
            a.run(&[Stage::Eval])?;
            let text = std::fs::read_to_string(RunDir::new(&a.out).metrics_text())
                .map_err(|e| PipelineError::Failed(e.to_string()))?;
            print!("{text}");
            Ok(())
        }
        Command::RunAll(a) => a.run(&ALL_STAGES),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
