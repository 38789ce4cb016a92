//! Cross-spectral block matching and median fusion of per-view estimates.
//!
//! Each peripheral view is rotated together with the center view so the
//! disparity is purely horizontal, matched with a zero-normalized cross
//! correlation score, rotated back, and rescaled to center-baseline units.
//! The `E - 1` maps are fused with a per-pixel median.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{derotate_disparity, rotate_image, ArrayGeometry, ViewGeometry};
use crate::image::{DisparityMap, SpectralImage};

/// Similarity used to rank candidate disparities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MatchScore {
    /// `|ZNCC|`: matches inverted contrast as well as preserved contrast.
    #[default]
    AbsZncc,
    /// Signed ZNCC.
    Zncc,
}

/// Which windows score a pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// The window centered on the pixel.
    Centered,
    /// The best of all windows that contain the pixel, which keeps
    /// foreground disparities from spreading across depth edges.
    #[default]
    Shiftable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherParams {
    pub window_radius: usize,
    /// Search range in center-baseline pixels; scaled by each view's baseline factor.
    pub d_min: usize,
    pub d_max: usize,
    pub subpixel: bool,
    pub score: MatchScore,
    pub aggregation: Aggregation,
}

impl Default for MatcherParams {
    fn default() -> Self {
        Self {
            window_radius: 7,
            d_min: 0,
            d_max: 32,
            subpixel: true,
            score: MatchScore::AbsZncc,
            aggregation: Aggregation::Shiftable,
        }
    }
}

impl MatcherParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_radius < 1 {
            return Err(Error::InvalidParameter("window_radius must be at least 1".into()));
        }
        if self.d_min > self.d_max {
            return Err(Error::InvalidParameter(format!(
                "d_min {} exceeds d_max {}",
                self.d_min, self.d_max
            )));
        }
        Ok(())
    }

    /// Search range for a view whose baseline is `factor` times the axis-aligned one.
    fn scaled(&self, factor: f64) -> Self {
        Self {
            d_min: (self.d_min as f64 * factor).floor() as usize,
            d_max: (self.d_max as f64 * factor).ceil() as usize,
            ..self.clone()
        }
    }
}

/// Minimum fraction of a window that must overlap valid pixels in both views.
const MIN_WINDOW_COVERAGE: f64 = 0.25;
/// Windows with variance at or below this are treated as textureless.
const ZERO_VARIANCE: f64 = 1e-10;

/// Summed-area tables of the six window statistics for one candidate disparity.
struct WindowSums {
    stride: usize,
    n: Vec<f64>,
    c: Vec<f64>,
    p: Vec<f64>,
    cc: Vec<f64>,
    pp: Vec<f64>,
    cp: Vec<f64>,
}

impl WindowSums {
    fn build(center: &SpectralImage, periph: &SpectralImage, d: usize) -> Self {
        let (w, h) = center.dims();
        let stride = w + 1;
        let len = stride * (h + 1);
        let mut t = Self {
            stride,
            n: vec![0.0; len],
            c: vec![0.0; len],
            p: vec![0.0; len],
            cc: vec![0.0; len],
            pp: vec![0.0; len],
            cp: vec![0.0; len],
        };
        for y in 0..h {
            let (mut rn, mut rc, mut rp, mut rcc, mut rpp, mut rcp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for x in 0..w {
                let xp = x + d;
                if xp < w && center.is_valid(x, y) && periph.is_valid(xp, y) {
                    let a = center.get(x, y);
                    let b = periph.get(xp, y);
                    rn += 1.0;
                    rc += a;
                    rp += b;
                    rcc += a * a;
                    rpp += b * b;
                    rcp += a * b;
                }
                let i = (y + 1) * stride + x + 1;
                let above = y * stride + x + 1;
                t.n[i] = t.n[above] + rn;
                t.c[i] = t.c[above] + rc;
                t.p[i] = t.p[above] + rp;
                t.cc[i] = t.cc[above] + rcc;
                t.pp[i] = t.pp[above] + rpp;
                t.cp[i] = t.cp[above] + rcp;
            }
        }
        t
    }

    #[inline]
    fn rect(&self, table: &[f64], x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.stride;
        table[y1 * s + x1] - table[y0 * s + x1] - table[y1 * s + x0] + table[y0 * s + x0]
    }
}

/// Score plane for one candidate disparity; `NaN` where no score exists.
fn score_plane(
    center: &SpectralImage,
    periph: &SpectralImage,
    d: usize,
    radius: usize,
    score: MatchScore,
) -> Vec<f64> {
    let (w, h) = center.dims();
    let sums = WindowSums::build(center, periph, d);
    let side = 2 * radius + 1;
    let min_count = MIN_WINDOW_COVERAGE * (side * side) as f64;
    let mut out = vec![f64::NAN; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius + 1).min(h);
        for x in 0..w {
            if !center.is_valid(x, y) {
                continue;
            }
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius + 1).min(w);
            let n = sums.rect(&sums.n, x0, y0, x1, y1);
            if n < min_count {
                continue;
            }
            let mc = sums.rect(&sums.c, x0, y0, x1, y1) / n;
            let mp = sums.rect(&sums.p, x0, y0, x1, y1) / n;
            let vc = sums.rect(&sums.cc, x0, y0, x1, y1) / n - mc * mc;
            let vp = sums.rect(&sums.pp, x0, y0, x1, y1) / n - mp * mp;
            if vc <= ZERO_VARIANCE || vp <= ZERO_VARIANCE {
                continue;
            }
            let cov = sums.rect(&sums.cp, x0, y0, x1, y1) / n - mc * mp;
            let z = (cov / (vc * vp).sqrt()).clamp(-1.0, 1.0);
            out[y * w + x] = match score {
                MatchScore::AbsZncc => z.abs(),
                MatchScore::Zncc => z,
            };
        }
    }
    out
}

/// Replaces each score by the maximum over the `(2r+1)^2` neighborhood,
/// i.e. over all windows containing the pixel. `NaN` entries do not
/// contribute; pixels invalid in the center view stay `NaN`.
fn max_over_windows(plane: &[f64], center: &SpectralImage, radius: usize) -> Vec<f64> {
    let (w, h) = center.dims();
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut rows = vec![f64::NEG_INFINITY; w * h];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(radius), (x + radius + 1).min(w));
            rows[y * w + x] = line[x0..x1].iter().fold(f64::NEG_INFINITY, |m, &v| m.max(key(v)));
        }
    }
    let mut out = vec![f64::NAN; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(radius), (y + radius + 1).min(h));
        for x in 0..w {
            if !center.is_valid(x, y) {
                continue;
            }
            let m = (y0..y1).fold(f64::NEG_INFINITY, |m, yy| m.max(rows[yy * w + x]));
            if m > f64::NEG_INFINITY {
                out[y * w + x] = m;
            }
        }
    }
    out
}

/// Block-matches two rotated views along `+x`: the center window at `(x, y)`
/// is compared against the peripheral window at `(x + d, y)`. With
/// [`Aggregation::Shiftable`] the window may sit anywhere around the pixel.
///
/// Pixels without any scorable window (textureless, or less than a quarter of
/// the window valid) take the value of the nearest scored pixel on the same
/// row, ties going left.
pub fn estimate_zncc(
    center_rot: &SpectralImage,
    periph_rot: &SpectralImage,
    params: &MatcherParams,
) -> Result<DisparityMap> {
    params.validate()?;
    periph_rot.ensure_dims(center_rot.dims())?;
    let (w, h) = center_rot.dims();
    if params.d_max >= w {
        return Err(Error::InvalidParameter(format!(
            "d_max {} must be below the image width {w}",
            params.d_max
        )));
    }

    let planes: Vec<Vec<f64>> = (params.d_min..=params.d_max)
        .into_par_iter()
        .map(|d| {
            let plane = score_plane(center_rot, periph_rot, d, params.window_radius, params.score);
            match params.aggregation {
                Aggregation::Centered => plane,
                Aggregation::Shiftable => max_over_windows(&plane, center_rot, params.window_radius),
            }
        })
        .collect();

    let mut best: Vec<Option<f64>> = vec![None; w * h];
    for (i, slot) in best.iter_mut().enumerate() {
        let mut arg = None;
        let mut top = f64::NEG_INFINITY;
        for (k, plane) in planes.iter().enumerate() {
            let s = plane[i];
            if !s.is_nan() && s > top {
                top = s;
                arg = Some(k);
            }
        }
        let Some(k) = arg else { continue };
        let mut d = (params.d_min + k) as f64;
        if params.subpixel && k > 0 && k + 1 < planes.len() {
            let (sm, sp) = (planes[k - 1][i], planes[k + 1][i]);
            if !sm.is_nan() && !sp.is_nan() {
                let denom = sm - 2.0 * top + sp;
                if denom < -1e-12 {
                    d += (0.5 * (sm - sp) / denom).clamp(-0.5, 0.5);
                }
            }
        }
        *slot = Some(d.max(0.0));
    }

    Ok(DisparityMap::from_raw(w, h, fill_missing(&best, w, h, params.d_min as f64)))
}

/// Fills `None` entries from the nearest filled pixel on the same row (ties
/// to the left); rows without any value copy the nearest filled row (ties
/// upward); `fallback` if nothing is filled at all.
fn fill_missing(values: &[Option<f64>], w: usize, h: usize, fallback: f64) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let mut row_filled = vec![false; h];
    for y in 0..h {
        let row = &values[y * w..(y + 1) * w];
        let mut left: Vec<Option<(usize, f64)>> = vec![None; w];
        let mut last = None;
        for x in 0..w {
            if let Some(v) = row[x] {
                last = Some((x, v));
            }
            left[x] = last;
        }
        let mut right = None;
        let mut any = false;
        for x in (0..w).rev() {
            if let Some(v) = row[x] {
                right = Some((x, v));
            }
            let pick = match (left[x], right) {
                (Some((lx, lv)), Some((rx, rv))) => {
                    if x - lx <= rx - x {
                        Some(lv)
                    } else {
                        Some(rv)
                    }
                }
                (Some((_, lv)), None) => Some(lv),
                (None, Some((_, rv))) => Some(rv),
                (None, None) => None,
            };
            if let Some(v) = pick {
                out[y * w + x] = v;
                any = true;
            }
        }
        row_filled[y] = any;
    }
    if row_filled.iter().all(|&f| !f) {
        return vec![fallback; w * h];
    }
    for y in 0..h {
        if row_filled[y] {
            continue;
        }
        let src = (1..h)
            .flat_map(|k| [y.checked_sub(k), Some(y + k)])
            .flatten()
            .find(|&yy| yy < h && row_filled[yy])
            .expect("at least one row is filled");
        out.copy_within(src * w..src * w + w, y * w);
    }
    out
}

/// Per-pixel median; for even counts, the mean of the two middle values.
pub fn fuse_median(estimates: &[DisparityMap]) -> Result<DisparityMap> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InvalidInput("no disparity maps to fuse".into()))?;
    for e in estimates {
        if e.dims() != first.dims() {
            return Err(Error::dims(first.dims(), e.dims()));
        }
    }
    let (w, h) = first.dims();
    let n = estimates.len();
    let data = (0..w * h)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |buf, i| {
                buf.clear();
                buf.extend(estimates.iter().map(|e| e.data()[i]));
                buf.sort_by(f64::total_cmp);
                if n % 2 == 1 {
                    buf[n / 2]
                } else {
                    0.5 * (buf[n / 2 - 1] + buf[n / 2])
                }
            },
        )
        .collect();
    Ok(DisparityMap::from_raw(w, h, data))
}

/// Disparity of the center view against one peripheral view, in center
/// coordinates and center-baseline units.
pub fn estimate_view(
    center: &SpectralImage,
    periph: &SpectralImage,
    view: &ViewGeometry,
    params: &MatcherParams,
) -> Result<DisparityMap> {
    periph.ensure_dims(center.dims())?;
    let center_rot = rotate_image(center, view.angle);
    let periph_rot = rotate_image(periph, view.angle);
    let rot = estimate_zncc(&center_rot, &periph_rot, &params.scaled(view.baseline_factor))?;
    derotate_disparity(&rot, view.angle, view.baseline_factor, center.dims())
}

/// Per-view estimates for every peripheral view, in view-index order.
pub fn estimate_views(
    frames: &[SpectralImage],
    geom: &ArrayGeometry,
    params: &MatcherParams,
) -> Result<Vec<DisparityMap>> {
    geom.validate()?;
    params.validate()?;
    if frames.len() != geom.num_views() {
        return Err(Error::InvalidInput(format!(
            "geometry has {} views but {} frames were given",
            geom.num_views(),
            frames.len()
        )));
    }
    if frames.len() < 2 {
        return Err(Error::NothingToRegister);
    }
    let center = &frames[geom.center];
    for f in frames {
        f.ensure_dims(center.dims())?;
    }
    let views: Vec<_> = geom.peripheral().collect();
    views
        .par_iter()
        .map(|(i, v)| estimate_view(center, &frames[*i], v, params))
        .collect()
}

/// Estimates every peripheral view against the center and fuses them with the median.
pub fn estimate_all(
    frames: &[SpectralImage],
    geom: &ArrayGeometry,
    params: &MatcherParams,
) -> Result<DisparityMap> {
    fuse_median(&estimate_views(frames, geom, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_prefers_nearest_then_left() {
        let v = vec![None, Some(1.0), None, None, Some(4.0), None];
        let out = fill_missing(&v, 6, 1, 0.0);
        assert_eq!(out, vec![1.0, 1.0, 1.0, 4.0, 4.0, 4.0]);
        let v = vec![Some(1.0), None, Some(3.0)];
        assert_eq!(fill_missing(&v, 3, 1, 0.0), vec![1.0, 1.0, 3.0]);
    }

    #[test]
    fn fill_copies_rows_and_falls_back() {
        let v = vec![None, None, Some(2.0), None, None, None];
        assert_eq!(fill_missing(&v, 2, 3, 0.0), vec![2.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(fill_missing(&[None; 4], 2, 2, 3.0), vec![3.0; 4]);
    }

    #[test]
    fn median_even_count_takes_mean() {
        let maps: Vec<_> = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 100.0]
            .iter()
            .map(|&v| DisparityMap::constant(2, 2, v))
            .collect();
        let m = fuse_median(&maps).unwrap();
        assert!(m.data().iter().all(|&v| v == 4.5));
    }

    #[test]
    fn median_is_robust() {
        let maps: Vec<_> = [1.0, 1.0, 1.0, 1.0, 1.0, 9.0, 9.0, 9.0]
            .iter()
            .map(|&v| DisparityMap::constant(3, 1, v))
            .collect();
        assert!(fuse_median(&maps).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn median_errors() {
        assert!(fuse_median(&[]).is_err());
        let a = DisparityMap::constant(2, 2, 1.0);
        let b = DisparityMap::constant(3, 2, 1.0);
        assert!(matches!(fuse_median(&[a, b]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_bad_params() {
        let img = SpectralImage::constant(8, 8, 0.5);
        let p = MatcherParams { d_max: 8, ..MatcherParams::default() };
        assert!(estimate_zncc(&img, &img, &p).is_err());
        let p = MatcherParams { window_radius: 0, d_max: 2, ..MatcherParams::default() };
        assert!(estimate_zncc(&img, &img, &p).is_err());
        let p = MatcherParams { d_min: 3, d_max: 2, ..MatcherParams::default() };
        assert!(p.validate().is_err());
        let other = SpectralImage::constant(9, 8, 0.5);
        let p = MatcherParams { d_max: 2, ..MatcherParams::default() };
        assert!(matches!(
            estimate_zncc(&img, &other, &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constant_images_fill_to_constant() {
        let img = SpectralImage::constant(20, 10, 0.5);
        let p = MatcherParams { d_max: 4, window_radius: 2, ..MatcherParams::default() };
        let d = estimate_zncc(&img, &img, &p).unwrap();
        let first = d.data()[0];
        assert!(d.data().iter().all(|&v| v == first));
    }

    #[test]
    fn single_view_fusion_is_that_view() {
        let a = DisparityMap::from_fn(4, 3, |x, y| (x + y) as f64);
        assert_eq!(fuse_median(std::slice::from_ref(&a)).unwrap(), a);
    }
}
