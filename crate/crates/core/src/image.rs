//! Raster types shared by every stage.
//!
//! All rasters are row-major, indexed `y * width + x`, with pixel centers at
//! integer coordinates.

use crate::error::{Error, Result};

/// Coordinates within this distance of the frame edge are snapped onto it.
pub(crate) const EDGE_EPS: f64 = 1e-9;

/// Single-band image with intensities normalized to `[0, 1]`.
///
/// The optional validity mask marks pixels that carry scene content; padding
/// introduced by rotation has `valid = false` and value 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    valid: Option<Vec<bool>>,
}

impl SpectralImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "raster of {}x{} needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            valid: None,
        })
    }

    /// Builds an image from a per-pixel function; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(clamp_unit(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
            valid: None,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    /// Attaches a validity mask. Pixels marked invalid are forced to 0.
    pub fn with_valid(mut self, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != self.data.len() {
            return Err(Error::InvalidInput(format!(
                "validity mask has {} entries for a {}x{} image",
                valid.len(),
                self.width,
                self.height
            )));
        }
        for (v, ok) in self.data.iter_mut().zip(&valid) {
            if !ok {
                *v = 0.0;
            }
        }
        self.valid = Some(valid);
        Ok(self)
    }

    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        data: Vec<f64>,
        valid: Option<Vec<bool>>,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn valid_mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid
            .as_ref()
            .is_none_or(|v| v[y * self.width + x])
    }

    /// Validity mask, materialized (all true when absent).
    pub fn validity(&self) -> Vec<bool> {
        self.valid
            .clone()
            .unwrap_or_else(|| vec![true; self.data.len()])
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidParameter(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let pick = |src: &[f64]| {
            (0..height)
                .flat_map(|y| src[(y0 + y) * self.width + x0..][..width].iter().copied())
                .collect::<Vec<_>>()
        };
        let valid = self.valid.as_ref().map(|v| {
            (0..height)
                .flat_map(|y| v[(y0 + y) * self.width + x0..][..width].iter().copied())
                .collect()
        });
        Ok(Self::from_parts(width, height, pick(&self.data), valid))
    }

    /// Bilinear sample at a real-valued position; `None` outside the frame.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        sample_bilinear(&self.data, self.width, self.height, x, y).map(clamp_unit)
    }

    pub(crate) fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::dims(dims, self.dims()));
        }
        Ok(())
    }
}

/// Per-pixel disparity in center-view coordinates and center-baseline pixel units.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "disparity raster of {}x{} needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "disparity {bad} is negative or not finite"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let d = f(x, y);
                data.push(if d.is_finite() { d.max(0.0) } else { 0.0 });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
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

    /// `(min, max)` over all pixels; `None` for an empty map.
    pub fn range(&self) -> Option<(f64, f64)> {
        if self.data.is_empty() {
            return None;
        }
        Some(self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        }))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(self.width, self.height, |x, y| f(self.get(x, y)))
    }

    /// Rounds every value through `f32`, the precision disparities are stored at on disk.
    pub fn to_f32_precision(&self) -> Self {
        self.map(|d| d as f32 as f64)
    }

    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        sample_bilinear(&self.data, self.width, self.height, x, y)
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }
}

/// Binary mask in center-view coordinates; `true` means occluded in the peripheral view.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OcclusionMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl OcclusionMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask of {}x{} needs {} entries, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub(crate) fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn union(&self, other: &OcclusionMask) -> Result<OcclusionMask> {
        if self.dims() != other.dims() {
            return Err(Error::dims(self.dims(), other.dims()));
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
        })
    }

    /// True when every occluded pixel of `self` is also occluded in `other`.
    pub fn is_subset_of(&self, other: &OcclusionMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(a, b)| !a || *b)
    }

    /// Fraction of pixels on which the two masks agree.
    pub fn agreement(&self, other: &OcclusionMask) -> f64 {
        assert_eq!(self.dims(), other.dims());
        if self.data.is_empty() {
            return 1.0;
        }
        let same = self.data.iter().zip(&other.data).filter(|(a, b)| a == b).count();
        same as f64 / self.data.len() as f64
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Bilinear interpolation of a row-major raster, `None` outside `[0, w-1] x [0, h-1]`.
///
/// At integer positions the stored sample is returned exactly.
pub(crate) fn sample_bilinear(data: &[f64], w: usize, h: usize, x: f64, y: f64) -> Option<f64> {
    let (x0, fx) = split_coord(x, w)?;
    let (y0, fy) = split_coord(y, h)?;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let row0 = y0 * w;
    let row1 = y1 * w;
    let top = if fx == 0.0 {
        data[row0 + x0]
    } else {
        data[row0 + x0] * (1.0 - fx) + data[row0 + x1] * fx
    };
    if fy == 0.0 {
        return Some(top);
    }
    let bottom = if fx == 0.0 {
        data[row1 + x0]
    } else {
        data[row1 + x0] * (1.0 - fx) + data[row1 + x1] * fx
    };
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Splits a coordinate into the base index and fractional weight, snapping
/// near-integer values so exact shifts stay exact.
#[inline]
pub(crate) fn split_coord(c: f64, n: usize) -> Option<(usize, f64)> {
    if n == 0 || !c.is_finite() {
        return None;
    }
    let last = (n - 1) as f64;
    if c < -EDGE_EPS || c > last + EDGE_EPS {
        return None;
    }
    let c = c.clamp(0.0, last);
    let r = c.round();
    let c = if (c - r).abs() <= EDGE_EPS { r } else { c };
    let base = c.floor();
    let frac = c - base;
    let i = base as usize;
    if i >= n - 1 {
        Some((n - 1, 0.0))
    } else {
        Some((i, frac))
    }
}
