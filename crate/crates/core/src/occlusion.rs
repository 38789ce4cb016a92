//! Occlusion detection by warping the disparity map layer by layer.
//!
//! Layers are swept from the highest disparity (nearest) to the lowest. Each
//! layer is forward-shifted to the peripheral view by its layer index, and a
//! running maximum of the warped disparities is kept. A center pixel whose
//! warped layer value lands at least `phi` below that running maximum is hidden
//! behind something nearer and marked occluded.
//!
//! [`oracle_occlusions`] answers the same question by brute force over pixel
//! pairs and is used to cross-check the sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ViewGeometry};
use crate::image::{DisparityMap, OcclusionMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcclusionParams {
    /// Half-width of a disparity layer; layers overlap when above 0.5.
    pub tau: f64,
    /// Disparity margin by which an occluder must be nearer.
    pub phi: f64,
    /// Extra pixels masked along the warp direction.
    pub kappa: usize,
}

impl Default for OcclusionParams {
    fn default() -> Self {
        Self {
            tau: 0.75,
            phi: 0.5,
            kappa: 2,
        }
    }
}

impl OcclusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.5) {
            return Err(Error::InvalidParameter(format!("tau must be >= 0.5, got {}", self.tau)));
        }
        if !(self.phi > 0.0) || !self.phi.is_finite() {
            return Err(Error::InvalidParameter(format!("phi must be > 0, got {}", self.phi)));
        }
        Ok(())
    }
}

/// The pixels of a disparity map that belong to one integer layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerImage {
    pub index: i64,
    width: usize,
    height: usize,
    data: Vec<f64>,
    member: Vec<bool>,
}

impl LayerImage {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Layer raster with 0 outside the band.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Disparity at `(x, y)` if the pixel belongs to the layer.
    pub fn value(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.member[i].then_some(self.data[i])
    }

    pub fn len(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pixels with `d - tau <= D <= d + tau` keep their disparity; the rest are 0.
pub fn extract_layer(disparity: &DisparityMap, index: i64, tau: f64) -> LayerImage {
    let d = index as f64;
    let member: Vec<bool> = disparity
        .data()
        .iter()
        .map(|&v| v - tau <= d && d <= v + tau)
        .collect();
    let data = disparity
        .data()
        .iter()
        .zip(&member)
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    LayerImage {
        index,
        width: disparity.width(),
        height: disparity.height(),
        data,
        member,
    }
}

/// Running maximum of warped layer disparities in peripheral coordinates.
///
/// The canvas is extended beyond the center frame so that landings outside
/// the frame still collide with each other.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeWarp {
    /// Peripheral coordinate of canvas pixel `(0, 0)`.
    pub origin: (i64, i64),
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl CumulativeWarp {
    fn zeros(origin: (i64, i64), width: usize, height: usize) -> Self {
        Self {
            origin,
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    fn index(&self, px: i64, py: i64) -> usize {
        let x = (px - self.origin.0) as usize;
        let y = (py - self.origin.1) as usize;
        y * self.width + x
    }

    /// Value at a peripheral coordinate; 0 off the canvas.
    pub fn get(&self, px: i64, py: i64) -> f64 {
        let x = px - self.origin.0;
        let y = py - self.origin.1;
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return 0.0;
        }
        self.data[self.index(px, py)]
    }
}

/// Integer layer range `[floor(min D), ceil(max D)]`.
fn layer_range(disparity: &DisparityMap) -> Option<(i64, i64)> {
    let (lo, hi) = disparity.range()?;
    Some((lo.floor() as i64, hi.ceil() as i64))
}

fn layer_shift(alpha: (f64, f64), d: i64) -> (i64, i64) {
    (
        (alpha.0 * d as f64).round() as i64,
        (alpha.1 * d as f64).round() as i64,
    )
}

/// Runs the layer sweep for warp coefficients `alpha` and returns the raw
/// (undilated) mask. `on_layer` sees the cumulative warp after each layer.
pub fn sweep_occlusions(
    disparity: &DisparityMap,
    alpha: (f64, f64),
    params: &OcclusionParams,
    mut on_layer: impl FnMut(i64, &CumulativeWarp),
) -> Result<OcclusionMask> {
    params.validate()?;
    let (w, h) = disparity.dims();
    let mut mask = OcclusionMask::empty(w, h);
    let Some((d_lo, d_hi)) = layer_range(disparity) else {
        return Ok(mask);
    };

    let (a, b) = (layer_shift(alpha, d_lo), layer_shift(alpha, d_hi));
    let (sx_lo, sx_hi) = (a.0.min(b.0).min(0), a.0.max(b.0).max(0));
    let (sy_lo, sy_hi) = (a.1.min(b.1).min(0), a.1.max(b.1).max(0));
    let mut warp = CumulativeWarp::zeros(
        (sx_lo, sy_lo),
        w + (sx_hi - sx_lo) as usize,
        h + (sy_hi - sy_lo) as usize,
    );

    for d in (d_lo..=d_hi).rev() {
        let (sx, sy) = layer_shift(alpha, d);
        let df = d as f64;
        for y in 0..h {
            for x in 0..w {
                let v = disparity.get(x, y);
                if !(v - params.tau <= df && df <= v + params.tau) {
                    continue;
                }
                // Each landing position receives at most one pixel per layer, so
                // the stored value is still the previous layer's maximum here.
                let i = warp.index(x as i64 + sx, y as i64 + sy);
                let prev = warp.data[i];
                if v <= prev - params.phi {
                    mask.set(x, y, true);
                }
                if v >= prev {
                    warp.data[i] = v;
                }
            }
        }
        on_layer(d, &warp);
    }
    Ok(mask)
}

/// Occlusion mask for the canonical `+x` warp direction, dilated by `kappa`.
pub fn detect_occlusions(disparity: &DisparityMap, params: &OcclusionParams) -> Result<OcclusionMask> {
    let raw = sweep_occlusions(disparity, (1.0, 0.0), params, |_, _| {})?;
    Ok(dilate_directional(&raw, params.kappa, (1, 0)))
}

/// Brute-force occlusion test for warp coefficients `alpha` whose direction is
/// one of the eight compass directions.
///
/// A pixel is occluded iff another pixel on its epipolar line is nearer by
/// more than `phi` and lands within half a pixel of the same peripheral position.
pub fn oracle_occlusions_directed(
    disparity: &DisparityMap,
    phi: f64,
    alpha: (f64, f64),
) -> Result<OcclusionMask> {
    let (ax, ay) = alpha;
    let compass = ax == 0.0 || ay == 0.0 || ax.abs() == ay.abs();
    if !compass || (ax == 0.0 && ay == 0.0) {
        return Err(Error::InvalidParameter(format!(
            "oracle supports only compass directions, got ({ax}, {ay})"
        )));
    }
    let step = (ax.signum() as i64 * (ax != 0.0) as i64, ay.signum() as i64 * (ay != 0.0) as i64);
    let m = ax.abs().max(ay.abs());
    let (w, h) = disparity.dims();
    let data: Vec<bool> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let dp = disparity.get(x as usize, y as usize);
            let mut t = -(w.max(h) as i64);
            while t <= w.max(h) as i64 {
                let (qx, qy) = (x + t * step.0, y + t * step.1);
                if t != 0 && qx >= 0 && qy >= 0 && (qx as usize) < w && (qy as usize) < h {
                    let dq = disparity.get(qx as usize, qy as usize);
                    if dq > dp + phi && (t as f64 + m * (dq - dp)).abs() < 0.5 {
                        return true;
                    }
                }
                t += 1;
            }
            false
        })
        .collect();
    OcclusionMask::new(w, h, data)
}

/// Brute-force occlusion test along `+x`, `O(width^2)` per row.
pub fn oracle_occlusions(disparity: &DisparityMap, phi: f64) -> OcclusionMask {
    oracle_occlusions_directed(disparity, phi, (1.0, 0.0)).expect("+x is a compass direction")
}

/// Adds `kappa` copies of the mask translated by `1..=kappa` steps along `step`.
pub fn dilate_directional(mask: &OcclusionMask, kappa: usize, step: (i32, i32)) -> OcclusionMask {
    if kappa == 0 || step == (0, 0) {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    OcclusionMask::from_fn(w, h, |x, y| {
        (0..=kappa as i64).any(|k| {
            let sx = x as i64 - k * step.0 as i64;
            let sy = y as i64 - k * step.1 as i64;
            sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h && mask.get(sx as usize, sy as usize)
        })
    })
}

/// Mask for one peripheral view: sweep along the view's warp direction, merge
/// `extra` (typically the warp's out-of-frame pixels), then dilate.
pub fn detect_view(
    disparity: &DisparityMap,
    view: &ViewGeometry,
    params: &OcclusionParams,
    extra: Option<&OcclusionMask>,
) -> Result<OcclusionMask> {
    let raw = sweep_occlusions(disparity, (view.alpha_x, view.alpha_y), params, |_, _| {})?;
    let merged = match extra {
        Some(e) => raw.union(e)?,
        None => raw,
    };
    Ok(dilate_directional(&merged, params.kappa, view.step()))
}

/// Dilated masks for every peripheral view, in view-index order.
pub fn detect_all(
    disparity: &DisparityMap,
    geom: &ArrayGeometry,
    params: &OcclusionParams,
) -> Result<Vec<OcclusionMask>> {
    geom.validate()?;
    let views: Vec<_> = geom.peripheral().map(|(_, v)| v).collect();
    views
        .par_iter()
        .map(|v| detect_view(disparity, v, params, None))
        .collect()
}
