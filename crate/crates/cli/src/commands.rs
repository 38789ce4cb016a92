use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use msreg_core::augment::{augment as augment_image, sample_params, AugmentParams};
use msreg_core::disparity::estimate_views;
use msreg_core::metrics::{mae_masked, ms_ssim, psnr, psnr_masked, ssim, LossParams};
use msreg_core::occlusion::detect_all;
use msreg_core::pipeline::{self, PipelineConfig, RunOptions, Stage};
use msreg_core::synth::{render, SceneSpec};
use msreg_core::{io, Error, Result};

fn io_error(kind: std::io::ErrorKind, msg: String) -> Error {
    Error::Io(std::io::Error::new(kind, msg))
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(io_error(
            std::io::ErrorKind::NotFound,
            format!("directory {} not found", path.display()),
        ))
    }
}

/// PNG files of a directory, sorted by name.
fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    require_dir(dir)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn register(cfg: &PipelineConfig, stop_after: Option<Stage>, resume_from: Option<Stage>) -> Result<()> {
    let report = pipeline::run(
        cfg,
        RunOptions {
            stop_after,
            resume_from,
        },
    )?;
    let total: f64 = report.timings.iter().map(|(_, d)| d.as_secs_f64()).sum();
    let parts: Vec<String> = report
        .timings
        .iter()
        .map(|(s, d)| format!("{s} {:.3} s", d.as_secs_f64()))
        .collect();
    info!("timings: {} (total {total:.3} s)", parts.join(", "));
    info!("outputs written to {}", cfg.output_dir.display());
    Ok(())
}

pub fn disparity(cfg: &PipelineConfig, output: &Path, per_view: Option<&Path>) -> Result<()> {
    cfg.params.matcher.validate()?;
    let geom = cfg.geometry.build()?;
    require_dir(&cfg.input_dir)?;
    let frames = pipeline::load_frames(&cfg.input_dir, &geom)?;
    let stage = pipeline::run_disparity(&frames, &geom, &cfg.params.matcher, None)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    io::write_pfm(output, &stage.fused)?;
    if let Some(dir) = per_view {
        fs::create_dir_all(dir)?;
        let maps = match stage.per_view {
            Some(m) => m,
            None => estimate_views(&frames, &geom, &cfg.params.matcher)?,
        };
        for ((_, v), m) in geom.peripheral().zip(&maps) {
            io::write_pfm(&dir.join(format!("{}.pfm", v.name())), m)?;
        }
    }
    Ok(())
}

pub fn occlusion(cfg: &PipelineConfig, disparity: &Path, output: &Path) -> Result<()> {
    cfg.params.occlusion.validate()?;
    let geom = cfg.geometry.build()?;
    let d = io::read_pfm(disparity)?;
    let masks = detect_all(&d, &geom, &cfg.params.occlusion)?;
    fs::create_dir_all(output)?;
    for ((_, v), m) in geom.peripheral().zip(&masks) {
        io::write_mask(&output.join(format!("{}.png", v.name())), m)?;
    }
    Ok(())
}

pub fn load_scene_spec(path: &Path) -> Result<SceneSpec> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Writes a scene directory:
///
/// ```text
/// scene.toml                  the specification
/// input/r{r}c{c}.png          what each camera captures (its own band)
/// bands/b{b}/r{r}c{c}.png     every view in every band
/// gt/disparity.pfm            center-view disparity
/// gt/occlusion/r{r}c{c}.png   true occlusion per peripheral view
/// gt/registered/r{r}c{c}.png  the center view in each peripheral view's band
/// ```
pub fn synth(spec: &SceneSpec, out: &Path) -> Result<()> {
    let scene = render(spec)?;
    let dirs = ["input", "gt/occlusion", "gt/registered"];
    for d in dirs {
        fs::create_dir_all(out.join(d))?;
    }
    let text = toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out.join("scene.toml"), text)?;
    for (b, _) in (0..spec.num_bands).enumerate() {
        fs::create_dir_all(out.join(format!("bands/b{b}")))?;
    }
    let captured = scene.captured();
    for (i, v) in scene.geometry.views.iter().enumerate() {
        let name = v.name();
        io::write_image(&out.join("input").join(format!("{name}.png")), &captured[i])?;
        for (b, img) in scene.views[i].iter().enumerate() {
            io::write_image(&out.join(format!("bands/b{b}/{name}.png")), img)?;
        }
        if i != scene.geometry.center {
            io::write_mask(&out.join("gt/occlusion").join(format!("{name}.png")), &scene.gt_occlusion[i])?;
            io::write_image(
                &out.join("gt/registered").join(format!("{name}.png")),
                scene.registered_truth(i),
            )?;
        }
    }
    io::write_pfm(&out.join("gt/disparity.pfm"), &scene.gt_disparity)?;
    info!("scene written to {}", out.display());
    Ok(())
}

#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct ViewReport {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ms_ssim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_masked: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae_masked: Option<f64>,
}

#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct Average {
    pub psnr: f64,
    pub ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ms_ssim: Option<f64>,
}

/// Identical images have a PSNR of `inf`, written as the TOML float `inf`.
#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub average: Average,
    pub views: Vec<ViewReport>,
}

pub fn evaluate(pred: &Path, gt: &Path, masks: Option<&Path>) -> Result<EvalReport> {
    require_dir(pred)?;
    if let Some(m) = masks {
        require_dir(m)?;
    }
    let files = png_files(gt)?;
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("no PNG images in {}", gt.display())));
    }
    let loss = LossParams::default();
    let mut views = Vec::with_capacity(files.len());
    for f in files {
        let name = stem(&f);
        let truth = io::read_image(&f)?;
        let p = io::read_image(&pred.join(format!("{name}.png")))?;
        let ms = match ms_ssim(&p, &truth, &loss) {
            Ok(v) => Some(v),
            Err(Error::ImageTooSmall { .. }) => None,
            Err(e) => return Err(e),
        };
        let (pm, mm) = match masks {
            Some(dir) => {
                let mask = io::read_mask(&dir.join(format!("{name}.png")))?;
                (psnr_masked(&p, &truth, &mask)?, mae_masked(&p, &truth, &mask)?)
            }
            None => (None, None),
        };
        views.push(ViewReport {
            psnr: psnr(&p, &truth)?,
            ssim: ssim(&p, &truth)?,
            ms_ssim: ms,
            psnr_masked: pm,
            mae_masked: mm,
            name,
        });
    }
    let n = views.len() as f64;
    let average = Average {
        psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
        ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
        ms_ssim: views
            .iter()
            .map(|v| v.ms_ssim)
            .sum::<Option<f64>>()
            .map(|s| s / n),
    };
    Ok(EvalReport { average, views })
}

pub fn eval(pred: &Path, gt: &Path, masks: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let report = evaluate(pred, gt, masks)?;
    let text = toml::to_string(&report).map_err(|e| Error::Config(e.to_string()))?;
    match output {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct AugmentRecord {
    file: String,
    #[serde(flatten)]
    params: AugmentParams,
}

#[derive(Serialize)]
struct AugmentSidecar {
    images: Vec<AugmentRecord>,
}

/// Writes one 16-bit grayscale image per RGB input plus `params.toml` with
/// the parameters drawn for each.
pub fn augment(input: &Path, output: &Path, seed: u32) -> Result<()> {
    let files = png_files(input)?;
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("no PNG images in {}", input.display())));
    }
    fs::create_dir_all(output)?;
    let mut records = Vec::with_capacity(files.len());
    for (i, f) in files.iter().enumerate() {
        let params = sample_params(seed as u64 + i as u64);
        let rgb = io::read_rgb(f)?;
        let gray = augment_image(&rgb, &params)?;
        let file = format!("{}.png", stem(f));
        io::write_image(&output.join(&file), &gray)?;
        records.push(AugmentRecord { file, params });
    }
    let text = toml::to_string(&AugmentSidecar { images: records }).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(output.join("params.toml"), text)?;
    Ok(())
}
