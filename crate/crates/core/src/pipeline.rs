//! The registration pipeline: disparity, warp, occlusion, reconstruction.
//!
//! Intermediates handed from one stage to the next are rounded exactly as
//! they are stored on disk (f32 disparities, 16-bit images), so a run that
//! stops after a stage and resumes from its files matches a single-shot run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disparity::{estimate_views, fuse_median, MatcherParams};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, GeometryConfig};
use crate::image::{DisparityMap, OcclusionMask, SpectralImage};
use crate::io;
use crate::occlusion::{detect_view, OcclusionParams};
use crate::reconstruct::{reconstruct_guided, GridParams};
use crate::warp::{warp_view, WarpedView};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Disparity,
    Warp,
    Occlusion,
    Reconstruct,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Disparity, Stage::Warp, Stage::Occlusion, Stage::Reconstruct];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Disparity => "disparity",
            Stage::Warp => "warp",
            Stage::Occlusion => "occlusion",
            Stage::Reconstruct => "reconstruct",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown stage {s:?}")))
    }
}

/// Numerical parameters of all stages.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageParams {
    pub matcher: MatcherParams,
    pub occlusion: OcclusionParams,
    pub grid: GridParams,
}

impl StageParams {
    pub fn validate(&self) -> Result<()> {
        self.matcher.validate()?;
        self.occlusion.validate()?;
        self.grid.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Directory with `disparity.pfm` (fused) or one `r{row}c{col}.pfm` per peripheral view.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_disparity: Option<PathBuf>,
    pub geometry: GeometryConfig,
    /// Band label of each view, recorded with the outputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view_bands: Option<Vec<usize>>,
    #[serde(flatten)]
    pub params: StageParams,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Disparity supplied from outside the matcher.
#[derive(Clone, Debug)]
pub enum ExternalDisparity {
    Fused(DisparityMap),
    /// One map per peripheral view, in view-index order; fused with the median.
    PerView(Vec<DisparityMap>),
}

/// Output of the disparity stage.
#[derive(Clone, Debug)]
pub struct DisparityStage {
    pub fused: DisparityMap,
    /// Per-view estimates, when the matcher ran.
    pub per_view: Option<Vec<DisparityMap>>,
}

/// Registration result for one peripheral view.
#[derive(Clone, Debug)]
pub struct RegisteredView {
    pub index: usize,
    pub warped: WarpedView,
    pub mask: OcclusionMask,
    pub registered: SpectralImage,
}

#[derive(Clone, Debug)]
pub struct Registration {
    pub disparity: DisparityStage,
    pub views: Vec<RegisteredView>,
    pub timings: Vec<(Stage, Duration)>,
}

fn check_frames(frames: &[SpectralImage], geom: &ArrayGeometry) -> Result<()> {
    geom.validate()?;
    if frames.len() < 2 || geom.num_views() < 2 {
        return Err(Error::NothingToRegister);
    }
    if frames.len() != geom.num_views() {
        return Err(Error::InvalidInput(format!(
            "geometry has {} views but {} frames were given",
            geom.num_views(),
            frames.len()
        )));
    }
    let dims = frames[geom.center].dims();
    for f in frames {
        f.ensure_dims(dims)?;
    }
    Ok(())
}

pub fn run_disparity(
    frames: &[SpectralImage],
    geom: &ArrayGeometry,
    matcher: &MatcherParams,
    external: Option<ExternalDisparity>,
) -> Result<DisparityStage> {
    check_frames(frames, geom)?;
    let dims = frames[geom.center].dims();
    let (fused, per_view) = match external {
        Some(ExternalDisparity::Fused(d)) => (d, None),
        Some(ExternalDisparity::PerView(maps)) => {
            if maps.len() != geom.num_views() - 1 {
                return Err(Error::InvalidInput(format!(
                    "{} external maps for {} peripheral views",
                    maps.len(),
                    geom.num_views() - 1
                )));
            }
            (fuse_median(&maps)?, None)
        }
        None => {
            let maps = estimate_views(frames, geom, matcher)?;
            let maps: Vec<_> = maps.iter().map(DisparityMap::to_f32_precision).collect();
            (fuse_median(&maps)?, Some(maps))
        }
    };
    if fused.dims() != dims {
        return Err(Error::dims(dims, fused.dims()));
    }
    Ok(DisparityStage {
        fused: fused.to_f32_precision(),
        per_view,
    })
}

/// Warped peripheral views in view-index order, quantized to 16 bits.
pub fn run_warp(frames: &[SpectralImage], geom: &ArrayGeometry, disparity: &DisparityMap) -> Result<Vec<WarpedView>> {
    check_frames(frames, geom)?;
    let views: Vec<_> = geom.peripheral().collect();
    views
        .par_iter()
        .map(|(i, v)| {
            let w = warp_view(&frames[*i], disparity, v.alpha_x, v.alpha_y)?;
            Ok(WarpedView {
                image: io::quantize_image(&w.image),
                out_of_frame: w.out_of_frame,
            })
        })
        .collect()
}

pub fn run_occlusion(
    disparity: &DisparityMap,
    geom: &ArrayGeometry,
    params: &OcclusionParams,
    warped: &[WarpedView],
) -> Result<Vec<OcclusionMask>> {
    let views: Vec<_> = geom.peripheral().map(|(_, v)| v).collect();
    if views.len() != warped.len() {
        return Err(Error::InvalidInput(format!(
            "{} warped views for {} peripheral views",
            warped.len(),
            views.len()
        )));
    }
    views
        .par_iter()
        .zip(warped)
        .map(|(v, w)| detect_view(disparity, v, params, Some(&w.out_of_frame)))
        .collect()
}

pub fn run_reconstruct(
    guide: &SpectralImage,
    warped: &[WarpedView],
    masks: &[OcclusionMask],
    params: &GridParams,
) -> Result<Vec<SpectralImage>> {
    if warped.len() != masks.len() {
        return Err(Error::InvalidInput(format!(
            "{} warped views but {} masks",
            warped.len(),
            masks.len()
        )));
    }
    warped
        .par_iter()
        .zip(masks)
        .map(|(w, m)| reconstruct_guided(guide, w, m, params).map(|r| io::quantize_image(&r)))
        .collect()
}

fn timed<T>(stage: Stage, timings: &mut Vec<(Stage, Duration)>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    let elapsed = start.elapsed();
    info!("stage {stage}: {:.3} s", elapsed.as_secs_f64());
    timings.push((stage, elapsed));
    Ok(out)
}

/// Registers every peripheral view onto the center view, in memory.
pub fn register(
    frames: &[SpectralImage],
    geom: &ArrayGeometry,
    params: &StageParams,
    external: Option<ExternalDisparity>,
) -> Result<Registration> {
    params.validate()?;
    check_frames(frames, geom)?;
    let mut timings = Vec::new();
    let disparity = timed(Stage::Disparity, &mut timings, || {
        run_disparity(frames, geom, &params.matcher, external)
    })?;
    let warped = timed(Stage::Warp, &mut timings, || run_warp(frames, geom, &disparity.fused))?;
    let masks = timed(Stage::Occlusion, &mut timings, || {
        run_occlusion(&disparity.fused, geom, &params.occlusion, &warped)
    })?;
    let registered = timed(Stage::Reconstruct, &mut timings, || {
        run_reconstruct(&frames[geom.center], &warped, &masks, &params.grid)
    })?;
    let views = geom
        .peripheral()
        .zip(warped.into_iter().zip(masks).zip(registered))
        .map(|((index, _), ((warped, mask), registered))| RegisteredView {
            index,
            warped,
            mask,
            registered,
        })
        .collect();
    Ok(Registration {
        disparity,
        views,
        timings,
    })
}

/// File locations inside an output directory.
#[derive(Clone, Debug)]
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn fused_disparity(&self) -> PathBuf {
        self.root.join("disparity.pfm")
    }

    pub fn view_disparity(&self, name: &str) -> PathBuf {
        self.root.join("disparity").join(format!("{name}.pfm"))
    }

    pub fn warped(&self, name: &str) -> PathBuf {
        self.root.join("warped").join(format!("{name}.png"))
    }

    pub fn out_of_frame(&self, name: &str) -> PathBuf {
        self.root.join("out_of_frame").join(format!("{name}.png"))
    }

    pub fn occlusion(&self, name: &str) -> PathBuf {
        self.root.join("occlusion").join(format!("{name}.png"))
    }

    pub fn registered(&self, name: &str) -> PathBuf {
        self.root.join("registered").join(format!("{name}.png"))
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

/// Input frames `r{row}c{col}.png` for every view of `geom`.
pub fn load_frames(dir: &Path, geom: &ArrayGeometry) -> Result<Vec<SpectralImage>> {
    geom.views
        .iter()
        .map(|v| io::read_image(&dir.join(format!("{}.png", v.name()))))
        .collect()
}

/// Reads external disparity: `disparity.pfm` if present, else per-view maps.
pub fn load_external(dir: &Path, geom: &ArrayGeometry) -> Result<ExternalDisparity> {
    let fused = dir.join("disparity.pfm");
    if fused.is_file() {
        return Ok(ExternalDisparity::Fused(io::read_pfm(&fused)?));
    }
    let maps = geom
        .peripheral()
        .map(|(_, v)| io::read_pfm(&dir.join(format!("{}.pfm", v.name()))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExternalDisparity::PerView(maps))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Last stage to run.
    pub stop_after: Option<Stage>,
    /// First stage to run; earlier stages are read from the output directory.
    pub resume_from: Option<Stage>,
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub timings: Vec<(Stage, Duration)>,
    pub stages_run: Vec<Stage>,
}

/// Runs the pipeline on files: reads `input_dir`, writes every stage's
/// output into `output_dir`.
pub fn run(config: &PipelineConfig, opts: RunOptions) -> Result<RunReport> {
    config.params.validate()?;
    let geom = config.geometry.build()?;
    if geom.num_views() < 2 {
        return Err(Error::NothingToRegister);
    }
    if let Some(vb) = &config.view_bands {
        if vb.len() != geom.num_views() {
            return Err(Error::Config(format!(
                "{} band labels for {} views",
                vb.len(),
                geom.num_views()
            )));
        }
    }
    let first = opts.resume_from.unwrap_or(Stage::Disparity);
    let last = opts.stop_after.unwrap_or(Stage::Reconstruct);
    if first > last {
        return Err(Error::InvalidParameter(format!(
            "cannot resume from {first} and stop after {last}"
        )));
    }
    if !config.input_dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("input directory {} not found", config.input_dir.display()),
        )));
    }
    let frames = load_frames(&config.input_dir, &geom)?;
    check_frames(&frames, &geom)?;
    let out = OutputLayout::new(&config.output_dir);
    std::fs::create_dir_all(out.root())?;
    std::fs::write(out.config(), config.to_toml())?;

    let names: Vec<String> = geom.peripheral().map(|(_, v)| v.name()).collect();
    let active = |s: Stage| first <= s && s <= last;
    let mut report = RunReport::default();

    let disparity = if active(Stage::Disparity) {
        let external = match &config.external_disparity {
            Some(dir) => Some(load_external(dir, &geom)?),
            None => None,
        };
        let stage = timed(Stage::Disparity, &mut report.timings, || {
            run_disparity(&frames, &geom, &config.params.matcher, external)
        })?;
        io::write_pfm(&out.fused_disparity(), &stage.fused)?;
        if let Some(maps) = &stage.per_view {
            for (name, m) in names.iter().zip(maps) {
                let p = out.view_disparity(name);
                create_parent(&p)?;
                io::write_pfm(&p, m)?;
            }
        }
        report.stages_run.push(Stage::Disparity);
        stage.fused
    } else {
        io::read_pfm(&out.fused_disparity())?
    };
    if last == Stage::Disparity {
        return Ok(report);
    }

    let warped = if active(Stage::Warp) {
        let warped = timed(Stage::Warp, &mut report.timings, || run_warp(&frames, &geom, &disparity))?;
        for (name, w) in names.iter().zip(&warped) {
            let (pi, pm) = (out.warped(name), out.out_of_frame(name));
            create_parent(&pi)?;
            create_parent(&pm)?;
            io::write_image(&pi, &w.image)?;
            io::write_mask(&pm, &w.out_of_frame)?;
        }
        report.stages_run.push(Stage::Warp);
        warped
    } else {
        names
            .iter()
            .map(|n| {
                Ok(WarpedView {
                    image: io::read_image(&out.warped(n))?,
                    out_of_frame: io::read_mask(&out.out_of_frame(n))?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    if last == Stage::Warp {
        return Ok(report);
    }

    let masks = if active(Stage::Occlusion) {
        let masks = timed(Stage::Occlusion, &mut report.timings, || {
            run_occlusion(&disparity, &geom, &config.params.occlusion, &warped)
        })?;
        for (name, m) in names.iter().zip(&masks) {
            let p = out.occlusion(name);
            create_parent(&p)?;
            io::write_mask(&p, m)?;
        }
        report.stages_run.push(Stage::Occlusion);
        masks
    } else {
        names
            .iter()
            .map(|n| io::read_mask(&out.occlusion(n)))
            .collect::<Result<Vec<_>>>()?
    };
    if last == Stage::Occlusion {
        return Ok(report);
    }

    let registered = timed(Stage::Reconstruct, &mut report.timings, || {
        run_reconstruct(&frames[geom.center], &warped, &masks, &config.params.grid)
    })?;
    for (name, r) in names.iter().zip(&registered) {
        let p = out.registered(name);
        create_parent(&p)?;
        io::write_image(&p, r)?;
    }
    report.stages_run.push(Stage::Reconstruct);
    Ok(report)
}
