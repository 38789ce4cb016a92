//! Synthetic camera-array scenes with exact ground truth.
//!
//! A scene is a stack of fronto-parallel layers. Each layer covers a region of
//! the center view, carries one constant disparity and a procedural texture,
//! and maps that texture to every spectral band through an affine gain/bias.
//! Views are rendered by shifting every layer along the view's warp
//! direction; the nearest layer wins.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, GeometryConfig};
use crate::image::{split_coord, DisparityMap, OcclusionMask, SpectralImage};

/// Part of the center-view plane covered by a layer, in pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Full,
    /// `x0 <= x < x1` and `y0 <= y < y1`.
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    /// `nx * x + ny * y >= offset`.
    HalfPlane { nx: f64, ny: f64, offset: f64 },
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Region::Full => true,
            Region::Rect { x0, y0, x1, y1 } => x0 <= x && x < x1 && y0 <= y && y < y1,
            Region::HalfPlane { nx, ny, offset } => nx * x + ny * y >= offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Flat { value: f64 },
    /// Three octaves of value noise; `scale` is the coarsest lattice spacing in pixels.
    Noise { seed: u64, scale: f64 },
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(ix as u64 ^ splitmix(iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let top = lattice(seed, ix, iy) * (1.0 - tx) + lattice(seed, ix + 1, iy) * tx;
    let bottom = lattice(seed, ix, iy + 1) * (1.0 - tx) + lattice(seed, ix + 1, iy + 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

impl Texture {
    /// Texture value in `[0, 1]` at a layer-plane position.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Texture::Flat { value } => value,
            Texture::Noise { seed, scale } => {
                let mut sum = 0.0;
                let mut amp = 1.0;
                let mut s = scale;
                for octave in 0..3u64 {
                    sum += amp * value_noise(seed.wrapping_add(octave.wrapping_mul(0x5851_F42D)), x / s, y / s);
                    amp *= 0.5;
                    s *= 0.5;
                }
                (sum / 1.75).clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub region: Region,
    pub disparity: f64,
    pub texture: Texture,
    /// Per band `(gain, bias)`: `band_b = gain * texture + bias`.
    pub spectral_gains: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub num_bands: usize,
    #[serde(default)]
    pub geometry: GeometryConfig,
    /// Band captured by each view; defaults to `view % num_bands`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_bands: Option<Vec<usize>>,
    pub layers: Vec<LayerSpec>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<ArrayGeometry> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("scene must have positive size".into()));
        }
        if self.num_bands == 0 {
            return Err(Error::InvalidParameter("scene needs at least one band".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("scene has no layers".into()));
        }
        let geom = self.geometry.build()?;
        for (i, l) in self.layers.iter().enumerate() {
            if !l.disparity.is_finite() || l.disparity < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "layer {i}: disparity {} must be finite and non-negative",
                    l.disparity
                )));
            }
            match l.texture {
                Texture::Flat { value } if !(0.0..=1.0).contains(&value) => {
                    return Err(Error::InvalidParameter(format!("layer {i}: flat value {value} outside [0, 1]")));
                }
                Texture::Noise { scale, .. } if !(scale > 0.0) => {
                    return Err(Error::InvalidParameter(format!("layer {i}: texture scale must be positive")));
                }
                _ => {}
            }
            if l.spectral_gains.len() != self.num_bands {
                return Err(Error::InvalidParameter(format!(
                    "layer {i}: {} gain pairs for {} bands",
                    l.spectral_gains.len(),
                    self.num_bands
                )));
            }
            for &(g, b) in &l.spectral_gains {
                let (lo, hi) = (b.min(g + b), b.max(g + b));
                if !(lo >= -1e-12 && hi <= 1.0 + 1e-12) {
                    return Err(Error::InvalidParameter(format!(
                        "layer {i}: gain {g} and bias {b} leave [0, 1]"
                    )));
                }
            }
        }
        if let Some(vb) = &self.view_bands {
            if vb.len() != geom.num_views() {
                return Err(Error::InvalidParameter(format!(
                    "{} band assignments for {} views",
                    vb.len(),
                    geom.num_views()
                )));
            }
            if let Some(b) = vb.iter().find(|&&b| b >= self.num_bands) {
                return Err(Error::InvalidParameter(format!("band {b} out of range")));
            }
        }
        Ok(geom)
    }

    pub fn band_of_view(&self, view: usize) -> usize {
        match &self.view_bands {
            Some(vb) => vb[view],
            None => view % self.num_bands,
        }
    }

    /// Textured foreground square over a textured background, 9 views, 9 bands.
    ///
    /// Disparities are 2 and 10 (difference 8). In every band each layer
    /// occupies its own half of the intensity range; which layer is brighter
    /// and whether a layer's texture is inverted are drawn from `seed`.
    pub fn two_plane(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let num_bands = 9;
        let half = |rng: &mut ChaCha8Rng, upper: bool| -> (f64, f64) {
            let lo = if upper { 0.5 } else { 0.0 };
            let g: f64 = rng.gen_range(0.25..0.45);
            if rng.gen_bool(0.3) {
                (-g, rng.gen_range(lo + g..=lo + 0.5))
            } else {
                (g, rng.gen_range(lo..=lo + 0.5 - g))
            }
        };
        let (mut bg_gains, mut fg_gains) = (Vec::new(), Vec::new());
        for _ in 0..num_bands {
            let fg_upper = rng.gen_bool(0.5);
            bg_gains.push(half(&mut rng, !fg_upper));
            fg_gains.push(half(&mut rng, fg_upper));
        }
        Self {
            width: 256,
            height: 256,
            num_bands,
            geometry: GeometryConfig::default(),
            view_bands: None,
            layers: vec![
                LayerSpec {
                    region: Region::Full,
                    disparity: 2.0,
                    texture: Texture::Noise {
                        seed: rng.gen::<u32>() as u64,
                        scale: 6.0,
                    },
                    spectral_gains: bg_gains,
                },
                LayerSpec {
                    region: Region::Rect {
                        x0: 80.0,
                        y0: 80.0,
                        x1: 176.0,
                        y1: 176.0,
                    },
                    disparity: 10.0,
                    texture: Texture::Noise {
                        seed: rng.gen::<u32>() as u64,
                        scale: 6.0,
                    },
                    spectral_gains: fg_gains,
                },
            ],
        }
    }
}

/// Rendered scene.
#[derive(Clone, Debug)]
pub struct Scene {
    pub geometry: ArrayGeometry,
    /// `views[v][b]`: view `v` seen through band `b`.
    pub views: Vec<Vec<SpectralImage>>,
    pub gt_disparity: DisparityMap,
    /// Per view; the center view's mask is empty.
    pub gt_occlusion: Vec<OcclusionMask>,
    pub view_bands: Vec<usize>,
}

impl Scene {
    /// The image each view actually captures, in view order.
    pub fn captured(&self) -> Vec<SpectralImage> {
        self.views
            .iter()
            .zip(&self.view_bands)
            .map(|(bands, &b)| bands[b].clone())
            .collect()
    }

    /// Ground truth of the registered view `v`: the center view in `v`'s band.
    pub fn registered_truth(&self, v: usize) -> &SpectralImage {
        &self.views[self.geometry.center][self.view_bands[v]]
    }
}

/// Index of the nearest layer covering a layer-plane position seen through
/// shift `(sx, sy)` per unit disparity. Later layers win ties.
fn front_layer(layers: &[LayerSpec], x: f64, y: f64, sx: f64, sy: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, l) in layers.iter().enumerate() {
        if l.region.contains(x - sx * l.disparity, y - sy * l.disparity)
            && best.is_none_or(|b| l.disparity >= layers[b].disparity)
        {
            best = Some(i);
        }
    }
    best
}

pub fn render(spec: &SceneSpec) -> Result<Scene> {
    let geometry = spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let layers = &spec.layers;

    let mut center_layer = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            match front_layer(layers, x as f64, y as f64, 0.0, 0.0) {
                Some(i) => center_layer.push(i),
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "no layer covers center pixel ({x}, {y})"
                    )))
                }
            }
        }
    }
    let gt_disparity = DisparityMap::new(w, h, center_layer.iter().map(|&i| layers[i].disparity).collect())?;

    let per_view: Vec<(Vec<SpectralImage>, OcclusionMask)> = geometry
        .views
        .par_iter()
        .map(|v| {
            let (ax, ay) = (v.alpha_x, v.alpha_y);
            let mut owner = Vec::with_capacity(w * h);
            let mut base = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let (xf, yf) = (x as f64, y as f64);
                    let i = front_layer(layers, xf, yf, ax, ay);
                    owner.push(i);
                    base.push(i.map_or(0.0, |i| {
                        let d = layers[i].disparity;
                        layers[i].texture.eval(xf - ax * d, yf - ay * d)
                    }));
                }
            }
            let bands = (0..spec.num_bands)
                .map(|b| {
                    SpectralImage::from_fn(w, h, |x, y| {
                        let i = y * w + x;
                        owner[i].map_or(0.0, |l| {
                            let (g, c) = layers[l].spectral_gains[b];
                            g * base[i] + c
                        })
                    })
                })
                .collect();
            let occ = OcclusionMask::from_fn(w, h, |x, y| {
                let layer = &layers[center_layer[y * w + x]];
                let (px, py) = (x as f64 + ax * layer.disparity, y as f64 + ay * layer.disparity);
                let (Some((ix, fx)), Some((iy, fy))) = (split_coord(px, w), split_coord(py, h)) else {
                    return true;
                };
                if fx != 0.0 || fy != 0.0 {
                    // Between pixel centers: occluded if any neighbor shows a nearer layer.
                    let xs = [ix, (ix + 1).min(w - 1)];
                    let ys = [iy, (iy + 1).min(h - 1)];
                    return ys.iter().any(|&qy| {
                        xs.iter().any(|&qx| {
                            owner[qy * w + qx].is_some_and(|o| layers[o].disparity > layer.disparity)
                        })
                    });
                }
                owner[iy * w + ix].is_some_and(|o| layers[o].disparity > layer.disparity)
            });
            (bands, occ)
        })
        .collect();

    let view_bands = (0..geometry.num_views()).map(|v| spec.band_of_view(v)).collect();
    let (views, gt_occlusion) = per_view.into_iter().unzip();
    Ok(Scene {
        geometry,
        views,
        gt_disparity,
        gt_occlusion,
        view_bands,
    })
}
