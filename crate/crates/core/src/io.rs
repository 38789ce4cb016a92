//! File formats: PFM disparities, 16-bit grayscale PNG images, 8-bit PNG masks.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::augment::RgbImage;
use crate::error::{Error, Result};
use crate::image::{DisparityMap, OcclusionMask, SpectralImage};

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Reads a PFM file. Color (`PF`) files keep their first channel.
pub fn read_pfm(path: &Path) -> Result<DisparityMap> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let mut token = || -> Option<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token().as_deref() {
        Some("Pf") => 1,
        Some("PF") => 3,
        _ => return Err(format_err(path, "missing Pf/PF magic")),
    };
    let mut num = |what: &str| -> Result<String> { token().ok_or_else(|| format_err(path, format!("missing {what}"))) };
    let w: usize = num("width")?.parse().map_err(|_| format_err(path, "bad width"))?;
    let h: usize = num("height")?.parse().map_err(|_| format_err(path, "bad height"))?;
    let scale: f64 = num("scale")?.parse().map_err(|_| format_err(path, "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(path, "scale must be nonzero"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let need = w * h * channels * 4;
    if bytes.len() < start + need {
        return Err(format_err(path, format!("raster truncated: need {need} bytes")));
    }
    let raster = &bytes[start..start + need];
    let little = scale < 0.0;
    let mut data = vec![0.0; w * h];
    for (i, chunk) in raster.chunks_exact(4 * channels).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (x, row) = (i % w, i / w);
        // Rows are stored bottom to top.
        data[(h - 1 - row) * w + x] = v as f64;
    }
    if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
        return Err(format_err(path, format!("non-finite disparity {bad}")));
    }
    DisparityMap::new(w, h, data)
}

/// Writes a single-channel little-endian PFM.
pub fn write_pfm(path: &Path, map: &DisparityMap) -> Result<()> {
    let (w, h) = map.dims();
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    for y in (0..h).rev() {
        for x in 0..w {
            out.write_all(&(map.get(x, y) as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `v` rounded to the nearest 16-bit level.
pub fn quantize16(v: f64) -> f64 {
    (v * 65535.0).round() / 65535.0
}

/// The image as it reads back after a 16-bit round trip.
pub fn quantize_image(img: &SpectralImage) -> SpectralImage {
    SpectralImage::from_fn(img.width(), img.height(), |x, y| quantize16(img.get(x, y)))
}

pub fn write_image(path: &Path, img: &SpectralImage) -> Result<()> {
    let (w, h) = img.dims();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
        w as u32,
        h as u32,
        img.data().iter().map(|v| (v * 65535.0).round() as u16).collect(),
    )
    .expect("buffer length matches dimensions");
    buf.save(path)?;
    Ok(())
}

/// Reads a grayscale image; 8-bit and 16-bit depths are normalized to `[0, 1]`.
pub fn read_image(path: &Path) -> Result<SpectralImage> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => img
            .into_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => {
            return Err(format_err(
                path,
                format!("expected a single-band image, got {:?}", other.color()),
            ))
        }
    };
    SpectralImage::new(w, h, data)
}

pub fn write_mask(path: &Path, mask: &OcclusionMask) -> Result<()> {
    let (w, h) = mask.dims();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        w as u32,
        h as u32,
        mask.data().iter().map(|&m| if m { 255 } else { 0 }).collect(),
    )
    .expect("buffer length matches dimensions");
    buf.save(path)?;
    Ok(())
}

/// Reads a mask; pixels above half intensity are set.
pub fn read_mask(path: &Path) -> Result<OcclusionMask> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    OcclusionMask::new(w, h, img.into_raw().into_iter().map(|v| v > 127).collect())
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageRgb8(b) => b
            .pixels()
            .map(|p| p.0.map(|v| v as f64 / 255.0))
            .collect(),
        other => other
            .into_rgb16()
            .pixels()
            .map(|p| p.0.map(|v| v as f64 / 65535.0))
            .collect(),
    };
    RgbImage::new(w, h, data)
}
