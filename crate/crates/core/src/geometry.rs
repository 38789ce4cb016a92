//! Camera-array geometry and the rotations that make each view pair's
//! epipolar line horizontal.
//!
//! Convention: a center pixel `(x, y)` with disparity `D` appears in
//! peripheral view `v` at `(x + alpha_x * D, y + alpha_y * D)`. Image
//! coordinates have `y` pointing down, so a positive `angle` is measured
//! clockwise from the `+x` axis as seen on screen.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{split_coord, DisparityMap, SpectralImage};

/// Placement of one camera relative to the center camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewGeometry {
    pub row: usize,
    pub col: usize,
    /// Direction of the epipolar displacement, radians clockwise from `+x`.
    pub angle: f64,
    /// Distance to the center camera in units of the axis-aligned baseline.
    pub baseline_factor: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
}

impl ViewGeometry {
    /// Geometry of the camera at `(row, col)` for a grid centered at `(center_row, center_col)`.
    pub fn from_grid_position(row: usize, col: usize, center_row: usize, center_col: usize) -> Self {
        let alpha_x = center_col as f64 - col as f64;
        let alpha_y = center_row as f64 - row as f64;
        let baseline_factor = alpha_x.hypot(alpha_y);
        let angle = if baseline_factor == 0.0 {
            0.0
        } else {
            alpha_y.atan2(alpha_x)
        };
        Self {
            row,
            col,
            angle,
            baseline_factor,
            alpha_x,
            alpha_y,
        }
    }

    /// File-name stem, `r{row}c{col}`.
    pub fn name(&self) -> String {
        format!("r{}c{}", self.row, self.col)
    }

    pub fn is_center(&self) -> bool {
        self.alpha_x == 0.0 && self.alpha_y == 0.0
    }

    /// Unit grid step along the warp direction, each component in `{-1, 0, 1}`.
    pub fn step(&self) -> (i32, i32) {
        (signum(self.alpha_x), signum(self.alpha_y))
    }
}

fn signum(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Geometry of an `E`-camera array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Disparity (pixels) of a point at unit depth for the axis-aligned baseline.
    pub baseline: f64,
    pub center: usize,
    pub views: Vec<ViewGeometry>,
}

impl ArrayGeometry {
    /// Regular `rows x cols` grid, views numbered row-major, center at `(rows/2, cols/2)`.
    pub fn grid(rows: usize, cols: usize, baseline: f64) -> Self {
        let (cr, cc) = (rows / 2, cols / 2);
        let views = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| ViewGeometry::from_grid_position(r, c, cr, cc)))
            .collect();
        Self {
            baseline,
            center: cr * cols + cc,
            views,
        }
    }

    /// The 3x3 array: center index 4, axis neighbors at factor 1, corners at factor sqrt(2).
    pub fn standard_3x3(baseline: f64) -> Self {
        Self::grid(3, 3, baseline)
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn center_view(&self) -> &ViewGeometry {
        &self.views[self.center]
    }

    /// Peripheral views with their indices, in index order.
    pub fn peripheral(&self) -> impl Iterator<Item = (usize, &ViewGeometry)> {
        let center = self.center;
        self.views.iter().enumerate().filter(move |(i, _)| *i != center)
    }

    /// Checks the per-view invariants.
    pub fn validate(&self) -> Result<()> {
        if self.center >= self.views.len() {
            return Err(Error::Config(format!(
                "center index {} out of range for {} views",
                self.center,
                self.views.len()
            )));
        }
        if !self.center_view().is_center() {
            return Err(Error::Config("center view must have zero warp coefficients".into()));
        }
        for (i, v) in self.peripheral() {
            let norm = v.alpha_x.hypot(v.alpha_y);
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::Config(format!("view {i} has zero warp coefficients")));
            }
            if (norm - v.baseline_factor).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "view {i}: |alpha| = {norm} differs from baseline factor {}",
                    v.baseline_factor
                )));
            }
            let expected = v.alpha_y.atan2(v.alpha_x);
            let diff = (v.angle - expected).rem_euclid(std::f64::consts::TAU);
            if diff.min(std::f64::consts::TAU - diff) > 1e-9 {
                return Err(Error::Config(format!(
                    "view {i}: angle {} does not match warp direction {expected}",
                    v.angle
                )));
            }
        }
        Ok(())
    }
}

/// Array layout as written in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryConfig {
    Grid { rows: usize, cols: usize, baseline: f64 },
    Explicit(ArrayGeometry),
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig::Grid {
            rows: 3,
            cols: 3,
            baseline: 1.0,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<ArrayGeometry> {
        let g = match self {
            GeometryConfig::Grid { rows, cols, baseline } => {
                if *rows == 0 || *cols == 0 || rows % 2 == 0 || cols % 2 == 0 {
                    return Err(Error::Config(format!(
                        "grid of {rows}x{cols} has no center camera; both sides must be odd"
                    )));
                }
                ArrayGeometry::grid(*rows, *cols, *baseline)
            }
            GeometryConfig::Explicit(g) => g.clone(),
        };
        g.validate()?;
        Ok(g)
    }
}

/// `(sin, cos)` with values within 1e-12 of -1, 0 or 1 snapped, so quarter
/// turns resample on the integer grid.
fn snapped_sin_cos(angle: f64) -> (f64, f64) {
    let snap = |v: f64| {
        for t in [-1.0, 0.0, 1.0] {
            if (v - t).abs() < 1e-12 {
                return t;
            }
        }
        v
    };
    let (s, c) = angle.sin_cos();
    (snap(s), snap(c))
}

/// Canvas size of a `width x height` frame rotated by `angle` (axis-aligned bounding box).
pub fn rotated_dims(width: usize, height: usize, angle: f64) -> (usize, usize) {
    let (s, c) = snapped_sin_cos(angle);
    let (w, h) = (width as f64, height as f64);
    let rw = (c.abs() * w + s.abs() * h - 1e-9).ceil().max(1.0) as usize;
    let rh = (s.abs() * w + c.abs() * h - 1e-9).ceil().max(1.0) as usize;
    (rw, rh)
}

/// Resamples `src` onto an `out_w x out_h` canvas whose center coincides with
/// the source center. Output pixel `p` reads source position
/// `R(angle) (p - c_out) + c_src`.
///
/// Returns the samples and a validity mask; positions outside the source
/// frame, or touching an invalid source pixel, are `None` in the callback's
/// view and reported invalid.
fn resample_rotated(
    src: &[f64],
    src_valid: Option<&[bool]>,
    (w, h): (usize, usize),
    angle: f64,
    (out_w, out_h): (usize, usize),
    clamp_to_edge: bool,
) -> (Vec<f64>, Vec<bool>) {
    let (s, c) = snapped_sin_cos(angle);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (ox, oy) = ((out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0);
    let mut data = vec![0.0; out_w * out_h];
    let mut valid = vec![false; out_w * out_h];
    for yo in 0..out_h {
        let dy = yo as f64 - oy;
        for xo in 0..out_w {
            let dx = xo as f64 - ox;
            let mut sx = cx + c * dx - s * dy;
            let mut sy = cy + s * dx + c * dy;
            if clamp_to_edge {
                sx = sx.clamp(0.0, w as f64 - 1.0);
                sy = sy.clamp(0.0, h as f64 - 1.0);
            }
            let (Some((x0, fx)), Some((y0, fy))) = (split_coord(sx, w), split_coord(sy, h)) else {
                continue;
            };
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            if let Some(v) = src_valid {
                let mut ok = v[y0 * w + x0];
                if fx > 0.0 {
                    ok &= v[y0 * w + x1];
                }
                if fy > 0.0 {
                    ok &= v[y1 * w + x0];
                }
                if fx > 0.0 && fy > 0.0 {
                    ok &= v[y1 * w + x1];
                }
                if !ok {
                    continue;
                }
            }
            let at = |x: usize, y: usize| src[y * w + x];
            let top = if fx == 0.0 {
                at(x0, y0)
            } else {
                at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx
            };
            let value = if fy == 0.0 {
                top
            } else {
                let bottom = if fx == 0.0 {
                    at(x0, y1)
                } else {
                    at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx
                };
                top * (1.0 - fy) + bottom * fy
            };
            let i = yo * out_w + xo;
            data[i] = value;
            valid[i] = true;
        }
    }
    (data, valid)
}

/// Rotates `img` about its center so that the direction `angle` becomes `+x`.
///
/// The canvas grows to the bounding box of the rotated frame; padding has
/// value 0 and is marked invalid. An angle of 0 is the exact identity.
pub fn rotate_image(img: &SpectralImage, angle: f64) -> SpectralImage {
    let dims = rotated_dims(img.width(), img.height(), angle);
    let (data, valid) =
        resample_rotated(img.data(), img.valid_mask(), img.dims(), angle, dims, false);
    let data = data.into_iter().map(crate::image::clamp_unit).collect();
    SpectralImage::from_parts(dims.0, dims.1, data, Some(valid))
}

/// Inverse of [`rotate_image`] for an image that was rotated from a
/// `width x height` frame; the canvas is cropped back to that frame.
pub fn unrotate_image(img: &SpectralImage, angle: f64, (width, height): (usize, usize)) -> Result<SpectralImage> {
    let expected = rotated_dims(width, height, angle);
    img.ensure_dims(expected)?;
    let (data, valid) =
        resample_rotated(img.data(), img.valid_mask(), img.dims(), -angle, (width, height), false);
    let data = data.into_iter().map(crate::image::clamp_unit).collect();
    Ok(SpectralImage::from_parts(width, height, data, Some(valid)))
}

/// Rotates a disparity map estimated in the rotated frame back to the
/// `width x height` center frame and divides by `baseline_factor`, giving
/// center-baseline units.
pub fn derotate_disparity(
    disp_rot: &DisparityMap,
    angle: f64,
    baseline_factor: f64,
    (width, height): (usize, usize),
) -> Result<DisparityMap> {
    if !(baseline_factor > 0.0) || !baseline_factor.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "baseline factor must be positive, got {baseline_factor}"
        )));
    }
    let expected = rotated_dims(width, height, angle);
    if disp_rot.dims() != expected {
        return Err(Error::dims(expected, disp_rot.dims()));
    }
    let (data, _) = resample_rotated(
        disp_rot.data(),
        None,
        disp_rot.dims(),
        -angle,
        (width, height),
        true,
    );
    let data = data.into_iter().map(|d| (d / baseline_factor).max(0.0)).collect();
    Ok(DisparityMap::from_raw(width, height, data))
}
