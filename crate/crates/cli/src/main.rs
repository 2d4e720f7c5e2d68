use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sketchguide::codec::CodecSpec;
use sketchguide::pipeline::{self, AlphaSetting, BackgroundStrategy, DenoiserSpec, PipelineManifest, RunConfig, FINAL_DIR};
use sketchguide::planner::ObjectSpec;
use sketchguide::schedule::AlphaRange;
use sketchguide::solver::{GridKind, SolverKind};

/// Sketch-guided text-to-video generation.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all three stages.
    Run(RunArgs),
    /// Build the sketch once, then generate once per alpha.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated inversion ratios, e.g. 0.5,0.7,0.9.
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
    },
    /// Generate from pure noise, skipping the background and sketch stages.
    Baseline(RunArgs),
    /// Verify a manifest against its files and summarize it.
    Inspect { manifest: PathBuf },
}

/// Every flag overrides the matching field of `--config`.
#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long)]
    frames: Option<usize>,
    /// Frame size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    size: Option<(usize, usize)>,
    /// `auto` to let the chat model choose, or a value in [0, 1].
    #[arg(long)]
    alpha: Option<AlphaSetting>,
    /// Backend range as lo,hi.
    #[arg(long)]
    alpha_range: Option<AlphaRange>,
    /// t2i_i2v or t2v.
    #[arg(long)]
    strategy: Option<BackgroundStrategy>,
    /// dpmpp2 or ddpm.
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    steps: Option<usize>,
    /// uniform or log_snr.
    #[arg(long)]
    grid: Option<GridKind>,
    /// identity, patchify:<p> or remote.
    #[arg(long)]
    codec: Option<CodecSpec>,
    /// gaussian:<mu>,<sigma> or remote.
    #[arg(long)]
    denoiser: Option<DenoiserSpec>,
    #[arg(long)]
    seed: Option<u64>,
    /// Serve every model from the built-in mock.
    #[arg(long)]
    mock: bool,
    /// Plan with the deterministic band layout instead of the chat model.
    #[arg(long)]
    fallback_planner: bool,
    /// Foreground object as name[:count[:direction]]; repeatable.
    #[arg(long = "object")]
    objects: Vec<ObjectSpec>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("size `{s}` is not WIDTHxHEIGHT"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("size `{s}`: {e}"));
    Ok((parse(w)?, parse(h)?))
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(prompt => video_prompt, frames => frame_count, alpha => alpha, alpha_range => alpha_range,
             strategy => background_strategy, solver => solver, steps => steps, grid => grid, codec => codec,
             denoiser => denoiser, seed => seed, out => out_dir);
        if let Some((w, h)) = self.size {
            (cfg.width, cfg.height) = (w, h);
        }
        cfg.mock |= self.mock;
        cfg.use_fallback_planner |= self.fallback_planner;
        if !self.objects.is_empty() {
            cfg.objects = self.objects;
        }
        if cfg.video_prompt.trim().is_empty() {
            bail!("no video prompt: pass --prompt or set video_prompt in the config file");
        }
        Ok(cfg)
    }
}

fn print_manifest(m: &PipelineManifest) {
    for s in &m.stages {
        let note = if s.cached { " (cached)" } else { "" };
        println!("  {:<16} {:>9.1} ms  {:>2} calls  {:>3} artifacts{note}", s.stage, s.duration_ms, s.calls.len(), s.outputs.len());
    }
    if let (Some(a), Some(t)) = (&m.alpha, m.t_inv) {
        println!("  alpha = {:.4} ({:?}), t_inv = {t}", a.value, a.source);
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let (video, manifest) = pipeline::run(&cfg)?;
            println!("wrote {} frames to {}", video.len(), cfg.out_dir.join(FINAL_DIR).display());
            print_manifest(&manifest);
        }
        Command::Sweep { run, alphas } => {
            let cfg = run.into_config()?;
            let (points, manifest) = pipeline::sweep(&cfg, &alphas)?;
            print_manifest(&manifest);
            println!("  {:>6}  {:>5}  {:>14}  frames", "alpha", "t_inv", "sketch dist.");
            for p in points {
                println!("  {:>6.3}  {:>5}  {:>14.4}  {}", p.alpha, p.t_inv, p.sketch_distance, cfg.out_dir.join(&p.final_dir).display());
            }
        }
        Command::Baseline(args) => {
            let cfg = args.into_config()?;
            let (video, manifest) = pipeline::baseline(&cfg)?;
            println!("wrote {} baseline frames to {}", video.len(), cfg.out_dir.join(FINAL_DIR).display());
            print_manifest(&manifest);
        }
        Command::Inspect { manifest } => {
            let m = pipeline::inspect(&manifest).with_context(|| format!("checking {}", manifest.display()))?;
            println!("{} ({} mode): all artifacts present and matching", manifest.display(), m.mode);
            println!("  prompt: {:?}", m.config.video_prompt);
            for t in &m.templates {
                println!("  template {}/{} {}", t.name, t.version, t.digest);
            }
            print_manifest(&m);
        }
    }
    Ok(())
}
