use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use msreg_core::disparity::{Aggregation, MatchScore};
use msreg_core::pipeline::{PipelineConfig, Stage};
use msreg_core::{Error, GeometryConfig};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "msreg", version, about = "Register the peripheral views of a multispectral camera array onto its center view")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline: disparity, warp, occlusion, reconstruction.
    Register(RegisterArgs),
    /// Estimate and fuse the disparity map only.
    Disparity(DisparityArgs),
    /// Occlusion masks for every peripheral view from a disparity map.
    Occlusion(OcclusionArgs),
    /// Render a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Compare registered views against ground truth.
    Eval(EvalArgs),
    /// Turn RGB images into pseudo-spectral grayscale images.
    Augment(AugmentArgs),
}

#[derive(Args, Debug, Default)]
struct GeometryArgs {
    /// Grid rows (odd).
    #[arg(long)]
    rows: Option<usize>,
    /// Grid columns (odd).
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    baseline: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct MatcherArgs {
    #[arg(long)]
    window_radius: Option<usize>,
    #[arg(long)]
    d_min: Option<usize>,
    #[arg(long)]
    d_max: Option<usize>,
    /// Disable parabolic subpixel refinement.
    #[arg(long)]
    no_subpixel: bool,
    /// `abs-zncc` or `zncc`.
    #[arg(long, value_parser = parse_score)]
    score: Option<MatchScore>,
    /// `shiftable` or `centered`.
    #[arg(long, value_parser = parse_aggregation)]
    aggregation: Option<Aggregation>,
}

#[derive(Args, Debug, Default)]
struct OcclusionFlags {
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    kappa: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct GridFlags {
    #[arg(long)]
    spatial_bin: Option<usize>,
    #[arg(long)]
    luma_bins: Option<usize>,
    #[arg(long)]
    lambda_reg: Option<f64>,
    #[arg(long)]
    min_weight: Option<f64>,
}

#[derive(Args, Debug)]
struct RegisterArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory with one `r{row}c{col}.png` per view.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory with `disparity.pfm` or per-view `r{row}c{col}.pfm`; skips matching.
    #[arg(long)]
    external_disparity: Option<PathBuf>,
    /// Stop after this stage (disparity, warp, occlusion, reconstruct).
    #[arg(long)]
    stop_after: Option<Stage>,
    /// Start at this stage, reading earlier results from the output directory.
    #[arg(long)]
    resume_from: Option<Stage>,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[command(flatten)]
    matcher: MatcherArgs,
    #[command(flatten)]
    occlusion: OcclusionFlags,
    #[command(flatten)]
    grid: GridFlags,
}

#[derive(Args, Debug)]
struct DisparityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Fused disparity PFM to write.
    #[arg(long)]
    output: PathBuf,
    /// Also write the per-view estimates into this directory.
    #[arg(long)]
    per_view: Option<PathBuf>,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[command(flatten)]
    matcher: MatcherArgs,
}

#[derive(Args, Debug)]
struct OcclusionArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Disparity map (PFM) in center-view coordinates.
    #[arg(long)]
    disparity: PathBuf,
    /// Directory for the `r{row}c{col}.png` masks.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[command(flatten)]
    occlusion: OcclusionFlags,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene specification (TOML).
    #[arg(long, conflicts_with = "two_plane")]
    spec: Option<PathBuf>,
    /// Use the built-in two-plane scene with this seed.
    #[arg(long)]
    two_plane: Option<u64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory of registered views.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth views with the same file names.
    #[arg(long)]
    gt: PathBuf,
    /// Optional directory of masks for masked PSNR and MAE.
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Directory of RGB PNG images.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Base seed; the i-th image (sorted by name) uses `seed + i`.
    #[arg(long)]
    seed: u32,
}

fn parse_score(s: &str) -> Result<MatchScore, String> {
    match s {
        "abs-zncc" | "abs_zncc" => Ok(MatchScore::AbsZncc),
        "zncc" => Ok(MatchScore::Zncc),
        _ => Err(format!("unknown score {s:?}; expected abs-zncc or zncc")),
    }
}

fn parse_aggregation(s: &str) -> Result<Aggregation, String> {
    match s {
        "shiftable" => Ok(Aggregation::Shiftable),
        "centered" => Ok(Aggregation::Centered),
        _ => Err(format!("unknown aggregation {s:?}; expected shiftable or centered")),
    }
}

impl GeometryArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.rows.is_none() && self.cols.is_none() && self.baseline.is_none() {
            return;
        }
        let (rows, cols, baseline) = match &cfg.geometry {
            GeometryConfig::Grid { rows, cols, baseline } => (*rows, *cols, *baseline),
            GeometryConfig::Explicit(g) => (3, 3, g.baseline),
        };
        cfg.geometry = GeometryConfig::Grid {
            rows: self.rows.unwrap_or(rows),
            cols: self.cols.unwrap_or(cols),
            baseline: self.baseline.unwrap_or(baseline),
        };
    }
}

impl MatcherArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let m = &mut cfg.params.matcher;
        if let Some(v) = self.window_radius {
            m.window_radius = v;
        }
        if let Some(v) = self.d_min {
            m.d_min = v;
        }
        if let Some(v) = self.d_max {
            m.d_max = v;
        }
        if self.no_subpixel {
            m.subpixel = false;
        }
        if let Some(v) = self.score {
            m.score = v;
        }
        if let Some(v) = self.aggregation {
            m.aggregation = v;
        }
    }
}

impl OcclusionFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let o = &mut cfg.params.occlusion;
        if let Some(v) = self.tau {
            o.tau = v;
        }
        if let Some(v) = self.phi {
            o.phi = v;
        }
        if let Some(v) = self.kappa {
            o.kappa = v;
        }
    }
}

impl GridFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let g = &mut cfg.params.grid;
        if let Some(v) = self.spatial_bin {
            g.spatial_bin = v;
        }
        if let Some(v) = self.luma_bins {
            g.luma_bins = v;
        }
        if let Some(v) = self.lambda_reg {
            g.lambda_reg = v;
        }
        if let Some(v) = self.min_weight {
            g.min_weight = v;
        }
    }
}

fn base_config(path: Option<&PathBuf>) -> Result<PipelineConfig, Error> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn missing(flag: &str) -> Error {
    Error::Config(format!("{flag} is required (on the command line or in the config file)"))
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Register(a) => {
            let mut cfg = base_config(a.config.as_ref())?;
            if let Some(p) = a.input {
                cfg.input_dir = p;
            }
            if let Some(p) = a.output {
                cfg.output_dir = p;
            }
            if a.external_disparity.is_some() {
                cfg.external_disparity = a.external_disparity;
            }
            if cfg.input_dir.as_os_str().is_empty() {
                return Err(missing("--input"));
            }
            if cfg.output_dir.as_os_str().is_empty() {
                return Err(missing("--output"));
            }
            a.geometry.apply(&mut cfg);
            a.matcher.apply(&mut cfg);
            a.occlusion.apply(&mut cfg);
            a.grid.apply(&mut cfg);
            commands::register(&cfg, a.stop_after, a.resume_from)
        }
        Command::Disparity(a) => {
            let mut cfg = base_config(a.config.as_ref())?;
            if let Some(p) = a.input {
                cfg.input_dir = p;
            }
            if cfg.input_dir.as_os_str().is_empty() {
                return Err(missing("--input"));
            }
            a.geometry.apply(&mut cfg);
            a.matcher.apply(&mut cfg);
            commands::disparity(&cfg, &a.output, a.per_view.as_deref())
        }
        Command::Occlusion(a) => {
            let mut cfg = base_config(a.config.as_ref())?;
            a.geometry.apply(&mut cfg);
            a.occlusion.apply(&mut cfg);
            commands::occlusion(&cfg, &a.disparity, &a.output)
        }
        Command::Synth(a) => {
            let spec = match (a.spec, a.two_plane) {
                (Some(p), None) => commands::load_scene_spec(&p)?,
                (None, Some(seed)) => msreg_core::synth::SceneSpec::two_plane(seed),
                _ => return Err(Error::Config("give exactly one of --spec or --two-plane".into())),
            };
            commands::synth(&spec, &a.output)
        }
        Command::Eval(a) => commands::eval(&a.pred, &a.gt, a.masks.as_deref(), a.output.as_deref()),
        Command::Augment(a) => commands::augment(&a.input, &a.output, a.seed),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        1
    } else if e.is_io() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            error!("--threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot configure thread pool: {e}");
            return ExitCode::from(3);
        }
    }

    match std::panic::catch_unwind(|| dispatch(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
