//! Guided reconstruction of occluded pixels.
//!
//! A low-resolution grid over (x bin, y bin, guide-luma bin) stores an affine
//! model `target = gain * guide + bias` per cell. The grid is fitted by
//! weighted least squares on the observed pixels, sliced back to full
//! resolution with tent weights, applied to the center view, and blended into
//! the occluded pixels only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{OcclusionMask, SpectralImage};
use crate::warp::WarpedView;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    /// Pixels per spatial bin along x and y.
    pub spatial_bin: usize,
    pub luma_bins: usize,
    /// Pull toward the global affine fit, scaled by each cell's total weight.
    pub lambda_reg: f64,
    /// Cells with less total weight fall back to the global fit.
    pub min_weight: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            spatial_bin: 16,
            luma_bins: 32,
            lambda_reg: 1e-6,
            min_weight: 1.0,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if self.spatial_bin < 1 {
            return Err(Error::InvalidParameter("spatial_bin must be at least 1".into()));
        }
        if self.luma_bins < 2 {
            return Err(Error::InvalidParameter("luma_bins must be at least 2".into()));
        }
        if !(self.lambda_reg > 0.0) || !self.lambda_reg.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda_reg must be > 0, got {}",
                self.lambda_reg
            )));
        }
        if !(self.min_weight >= 0.0) {
            return Err(Error::InvalidParameter("min_weight must be >= 0".into()));
        }
        Ok(())
    }

    /// Grid dimensions `(Gx, Gy, Gl)` for a `width x height` image.
    pub fn grid_dims(&self, width: usize, height: usize) -> (usize, usize, usize) {
        (
            width.div_ceil(self.spatial_bin) + 1,
            height.div_ceil(self.spatial_bin) + 1,
            self.luma_bins,
        )
    }

    fn spatial_ratio(&self) -> f64 {
        1.0 / self.spatial_bin as f64
    }

    fn luma_ratio(&self) -> f64 {
        (self.luma_bins - 1) as f64
    }
}

/// Linear interpolation kernel `max(1 - |t|, 0)`.
#[inline]
pub fn tent(t: f64) -> f64 {
    (1.0 - t.abs()).max(0.0)
}

/// Lattice of affine coefficients: gain `A` and bias `B` per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientGrid {
    gx: usize,
    gy: usize,
    gl: usize,
    gain: Vec<f64>,
    bias: Vec<f64>,
}

impl CoefficientGrid {
    pub fn from_fn(
        (gx, gy, gl): (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> (f64, f64),
    ) -> Self {
        let mut gain = Vec::with_capacity(gx * gy * gl);
        let mut bias = Vec::with_capacity(gx * gy * gl);
        for k in 0..gl {
            for j in 0..gy {
                for i in 0..gx {
                    let (a, b) = f(i, j, k);
                    gain.push(a);
                    bias.push(b);
                }
            }
        }
        Self { gx, gy, gl, gain, bias }
    }

    pub fn constant(dims: (usize, usize, usize), gain: f64, bias: f64) -> Self {
        Self::from_fn(dims, |_, _, _| (gain, bias))
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.gx, self.gy, self.gl)
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.gy + j) * self.gx + i
    }

    /// `(gain, bias)` of cell `(i, j, k)`.
    pub fn cell(&self, i: usize, j: usize, k: usize) -> (f64, f64) {
        let n = self.index(i, j, k);
        (self.gain[n], self.bias[n])
    }

    /// `a * self + b * other`, cell by cell.
    pub fn combine(&self, a: f64, other: &CoefficientGrid, b: f64) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::InvalidInput("grid dimensions differ".into()));
        }
        Ok(Self {
            gain: self.gain.iter().zip(&other.gain).map(|(x, y)| a * x + b * y).collect(),
            bias: self.bias.iter().zip(&other.bias).map(|(x, y)| a * x + b * y).collect(),
            ..*self
        })
    }
}

/// Full-resolution coefficient raster.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl CoefficientImage {
    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, data }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Base index and fraction of a lattice coordinate, with the base clamped so
/// that `base + 1` stays on a lattice of `n` nodes.
#[inline]
fn lattice(t: f64, n: usize) -> (usize, f64) {
    let t = t.clamp(0.0, (n - 1) as f64);
    let base = (t.floor() as usize).min(n - 2);
    (base, t - base as f64)
}

/// The up to eight supporting cells of a pixel with their tent weights.
#[inline]
fn support(
    x: usize,
    y: usize,
    g: f64,
    dims: (usize, usize, usize),
    p: &GridParams,
) -> [(usize, usize, usize, f64); 8] {
    let (i0, fx) = lattice(x as f64 * p.spatial_ratio(), dims.0);
    let (j0, fy) = lattice(y as f64 * p.spatial_ratio(), dims.1);
    let (k0, fr) = lattice(g * p.luma_ratio(), dims.2);
    let mut out = [(0, 0, 0, 0.0); 8];
    let mut n = 0;
    for (dk, wr) in [(0, 1.0 - fr), (1, fr)] {
        for (dj, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (di, wx) in [(0, 1.0 - fx), (1, fx)] {
                out[n] = (i0 + di, j0 + dj, k0 + dk, wx * wy * wr);
                n += 1;
            }
        }
    }
    out
}

fn check_grid_dims(grid: &CoefficientGrid, dims: (usize, usize), p: &GridParams) -> Result<()> {
    let expected = p.grid_dims(dims.0, dims.1);
    if grid.dims() != expected {
        return Err(Error::InvalidInput(format!(
            "grid {:?} does not fit a {}x{} image (expected {:?})",
            grid.dims(),
            dims.0,
            dims.1,
            expected
        )));
    }
    Ok(())
}

/// Unweighted least-squares affine fit over the observed pixels. A constant
/// guide yields gain 0 and the mean target as bias.
fn global_fit(guide: &SpectralImage, target: &SpectralImage, mask: &OcclusionMask) -> Result<(f64, f64)> {
    let (mut n, mut sg, mut st, mut sgg, mut sgt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&g, &t), &occ) in guide.data().iter().zip(target.data()).zip(mask.data()) {
        if occ {
            continue;
        }
        n += 1.0;
        sg += g;
        st += t;
        sgg += g * g;
        sgt += g * t;
    }
    if n == 0.0 {
        return Err(Error::NoGuideSupport);
    }
    let (mg, mt) = (sg / n, st / n);
    let var = sgg / n - mg * mg;
    if var <= 1e-12 {
        return Ok((0.0, mt));
    }
    let gain = (sgt / n - mg * mt) / var;
    Ok((gain, mt - gain * mg))
}

/// Fits one affine model per grid cell from the non-occluded pixels.
///
/// Each cell minimizes `sum w (A g + B - t)^2 + lambda * sum w * ((A - A_g)^2 + (B - B_g)^2)`
/// where `(A_g, B_g)` is the global fit. Cells with less than `min_weight`
/// total weight take the global fit; cells whose guide has no spread keep the
/// global gain and match the weighted mean target.
pub fn fit_grid(
    guide: &SpectralImage,
    target: &SpectralImage,
    mask: &OcclusionMask,
    p: &GridParams,
) -> Result<CoefficientGrid> {
    p.validate()?;
    target.ensure_dims(guide.dims())?;
    guide.ensure_dims(mask.dims())?;
    let (w, h) = guide.dims();
    let (global_gain, global_bias) = global_fit(guide, target, mask)?;

    let dims = p.grid_dims(w, h);
    let cells = dims.0 * dims.1 * dims.2;
    // Per cell: [sum w, sum w g, sum w t, sum w g g, sum w g t]
    let mut acc = vec![[0.0f64; 5]; cells];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                continue;
            }
            let g = guide.get(x, y);
            let t = target.get(x, y);
            for (i, j, k, wt) in support(x, y, g, dims, p) {
                if wt <= 0.0 {
                    continue;
                }
                let a = &mut acc[(k * dims.1 + j) * dims.0 + i];
                a[0] += wt;
                a[1] += wt * g;
                a[2] += wt * t;
                a[3] += wt * g * g;
                a[4] += wt * g * t;
            }
        }
    }

    let mut gain = Vec::with_capacity(cells);
    let mut bias = Vec::with_capacity(cells);
    for [s, sg, st, sgg, sgt] in acc {
        if s < p.min_weight || s <= 0.0 {
            gain.push(global_gain);
            bias.push(global_bias);
            continue;
        }
        if s * sgg - sg * sg <= 1e-12 * s * s {
            gain.push(global_gain);
            bias.push((st - global_gain * sg) / s);
            continue;
        }
        let lam = p.lambda_reg * s;
        let (m00, m01, m11) = (sgg + lam, sg, s + lam);
        let (r0, r1) = (sgt + lam * global_gain, st + lam * global_bias);
        let det = m00 * m11 - m01 * m01;
        gain.push((r0 * m11 - m01 * r1) / det);
        bias.push((m00 * r1 - m01 * r0) / det);
    }
    Ok(CoefficientGrid {
        gx: dims.0,
        gy: dims.1,
        gl: dims.2,
        gain,
        bias,
    })
}

/// Evaluates the grid at every pixel by trilinear tent interpolation over
/// `(x / bin, y / bin, (luma_bins - 1) * guide)`. Returns `(gain, bias)` images.
pub fn slice(
    grid: &CoefficientGrid,
    guide: &SpectralImage,
    p: &GridParams,
) -> Result<(CoefficientImage, CoefficientImage)> {
    p.validate()?;
    let (w, h) = guide.dims();
    check_grid_dims(grid, (w, h), p)?;
    let mut gain = Vec::with_capacity(w * h);
    let mut bias = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (mut a, mut b) = (0.0, 0.0);
            for (i, j, k, wt) in support(x, y, guide.get(x, y), grid.dims(), p) {
                let (ca, cb) = grid.cell(i, j, k);
                a += wt * ca;
                b += wt * cb;
            }
            gain.push(a);
            bias.push(b);
        }
    }
    Ok((
        CoefficientImage { width: w, height: h, data: gain },
        CoefficientImage { width: w, height: h, data: bias },
    ))
}

/// `N = A * K_c + B`, clamped to `[0, 1]`.
pub fn apply_coefficients(
    gain: &CoefficientImage,
    bias: &CoefficientImage,
    guide: &SpectralImage,
) -> Result<SpectralImage> {
    let dims = guide.dims();
    for c in [gain, bias] {
        if c.dims() != dims {
            return Err(Error::dims(dims, c.dims()));
        }
    }
    let data = guide
        .data()
        .iter()
        .zip(gain.data.iter().zip(&bias.data))
        .map(|(&g, (&a, &b))| crate::image::clamp_unit(a * g + b))
        .collect();
    SpectralImage::new(dims.0, dims.1, data)
}

/// Takes `reconstructed` where the mask is set and `observed` elsewhere.
pub fn blend(
    observed: &SpectralImage,
    reconstructed: &SpectralImage,
    mask: &OcclusionMask,
) -> Result<SpectralImage> {
    reconstructed.ensure_dims(observed.dims())?;
    observed.ensure_dims(mask.dims())?;
    let data = observed
        .data()
        .iter()
        .zip(reconstructed.data())
        .zip(mask.data())
        .map(|((&k, &n), &o)| if o { n } else { k })
        .collect();
    SpectralImage::new(observed.width(), observed.height(), data)
}

fn pad_replicate<T: Copy>(data: &[T], (w, h): (usize, usize), (pw, ph): (usize, usize)) -> Vec<T> {
    (0..ph)
        .flat_map(|y| (0..pw).map(move |x| (x.min(w - 1), y.min(h - 1))))
        .map(|(x, y)| data[y * w + x])
        .collect()
}

/// Fit, slice, apply and blend. The images are edge-replicated to a whole
/// number of spatial bins first and cropped afterwards; out-of-frame pixels of
/// the warped view are always treated as occluded.
pub fn reconstruct_guided(
    guide: &SpectralImage,
    warped: &WarpedView,
    mask: &OcclusionMask,
    p: &GridParams,
) -> Result<SpectralImage> {
    p.validate()?;
    let dims = guide.dims();
    warped.image.ensure_dims(dims)?;
    if mask.dims() != dims {
        return Err(Error::dims(dims, mask.dims()));
    }
    let mask = mask.union(&warped.out_of_frame)?;
    if mask.count() == 0 {
        return Ok(warped.image.clone());
    }

    let padded = (
        dims.0.div_ceil(p.spatial_bin) * p.spatial_bin,
        dims.1.div_ceil(p.spatial_bin) * p.spatial_bin,
    );
    let pg = SpectralImage::from_parts(padded.0, padded.1, pad_replicate(guide.data(), dims, padded), None);
    let pt = SpectralImage::from_parts(
        padded.0,
        padded.1,
        pad_replicate(warped.image.data(), dims, padded),
        None,
    );
    let pm = OcclusionMask::new(padded.0, padded.1, pad_replicate(mask.data(), dims, padded))?;

    let grid = fit_grid(&pg, &pt, &pm, p)?;
    let (gain, bias) = slice(&grid, &pg, p)?;
    let predicted = apply_coefficients(&gain, &bias, &pg)?.crop(0, 0, dims.0, dims.1)?;
    blend(&warped.image, &predicted, &mask)
}
