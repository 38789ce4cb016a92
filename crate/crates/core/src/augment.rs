//! Pseudo-spectral grayscale images from RGB.
//!
//! Hue rotation, brightness, saturation and contrast jitter are applied in a
//! chosen order, then a single channel is kept. Each adjustment is a per-pixel
//! color map, so the result preserves image structure while reshuffling
//! the grayscale values of differently colored objects.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::SpectralImage;

/// Three-band raster with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "rgb raster of {width}x{height} needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("rgb values must lie in [0, 1]".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y).map(crate::image::clamp_unit))
            .collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidParameter("crop exceeds the image".into()));
        }
        Ok(Self::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    Hue,
    Brightness,
    Saturation,
    Contrast,
}

impl Adjustment {
    pub const ALL: [Adjustment; 4] = [
        Adjustment::Hue,
        Adjustment::Brightness,
        Adjustment::Saturation,
        Adjustment::Contrast,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Rotation of the HSV hue circle, radians.
    pub hue_angle: f64,
    pub brightness: f64,
    pub saturation: f64,
    pub contrast: f64,
    pub order: [Adjustment; 4],
    pub channel: Channel,
    pub rng_seed: u64,
}

impl AugmentParams {
    /// Parameters that leave the colors untouched.
    pub fn identity(channel: Channel) -> Self {
        Self {
            hue_angle: 0.0,
            brightness: 1.0,
            saturation: 1.0,
            contrast: 1.0,
            order: Adjustment::ALL,
            channel,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("brightness", self.brightness),
            ("saturation", self.saturation),
            ("contrast", self.contrast),
        ] {
            if !(0.5..=1.5).contains(&f) {
                return Err(Error::InvalidParameter(format!("{name} factor {f} outside [0.5, 1.5]")));
            }
        }
        if !self.hue_angle.is_finite() {
            return Err(Error::InvalidParameter("hue angle must be finite".into()));
        }
        for a in Adjustment::ALL {
            if !self.order.contains(&a) {
                return Err(Error::InvalidParameter(format!("order is missing {a:?}")));
            }
        }
        Ok(())
    }
}

/// Draws hue from `[0, 2pi)`, each factor from `[0.5, 1.5]`, a uniform order
/// and a uniform channel; deterministic in `seed`.
pub fn sample_params(seed: u64) -> AugmentParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hue_angle = rng.gen_range(0.0..TAU);
    let brightness = rng.gen_range(0.5..=1.5);
    let saturation = rng.gen_range(0.5..=1.5);
    let contrast = rng.gen_range(0.5..=1.5);
    let mut order = Adjustment::ALL;
    order.shuffle(&mut rng);
    let channel = [Channel::R, Channel::G, Channel::B][rng.gen_range(0..3)];
    AugmentParams {
        hue_angle,
        brightness,
        saturation,
        contrast,
        order,
        channel,
        rng_seed: seed,
    }
}

/// Hexcone HSV with `h` in `[0, 1)`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let v = r.max(g).max(b);
    let m = r.min(g).min(b);
    let c = v - m;
    let s = if v > 0.0 { c / v } else { 0.0 };
    if c == 0.0 {
        return [0.0, s, v];
    }
    let h = if v == r {
        ((g - b) / c).rem_euclid(6.0)
    } else if v == g {
        (b - r) / c + 2.0
    } else {
        (r - g) / c + 4.0
    };
    [(h / 6.0).rem_euclid(1.0), s, v]
}

pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as usize).min(5);
    let f = h6 - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn adjust(rgb: [f64; 3], which: Adjustment, p: &AugmentParams) -> [f64; 3] {
    match which {
        Adjustment::Hue => {
            if p.hue_angle == 0.0 {
                return rgb;
            }
            let [h, s, v] = rgb_to_hsv(rgb);
            hsv_to_rgb([(h + p.hue_angle / TAU).rem_euclid(1.0), s, v])
        }
        Adjustment::Brightness => {
            if p.brightness == 1.0 {
                return rgb;
            }
            let [h, s, v] = rgb_to_hsv(rgb);
            hsv_to_rgb([h, s, (v * p.brightness).clamp(0.0, 1.0)])
        }
        Adjustment::Saturation => {
            if p.saturation == 1.0 {
                return rgb;
            }
            let [h, s, v] = rgb_to_hsv(rgb);
            hsv_to_rgb([h, (s * p.saturation).clamp(0.0, 1.0), v])
        }
        Adjustment::Contrast => {
            if p.contrast == 1.0 {
                return rgb;
            }
            rgb.map(|c| (0.5 + p.contrast * (c - 0.5)).clamp(0.0, 1.0))
        }
    }
}

/// Applies the four adjustments in `p.order` and keeps `p.channel`.
pub fn augment(rgb: &RgbImage, p: &AugmentParams) -> Result<SpectralImage> {
    p.validate()?;
    let ch = p.channel.index();
    let data = rgb
        .data
        .iter()
        .map(|&px| {
            let out = p.order.iter().fold(px, |acc, &a| adjust(acc, a, p));
            crate::image::clamp_unit(out[ch])
        })
        .collect();
    SpectralImage::new(rgb.width, rgb.height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn colorful(w: usize, h: usize) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            [
                (x as f64 / w as f64),
                (y as f64 / h as f64),
                ((x * 7 + y * 13) % 17) as f64 / 16.0,
            ]
        })
    }

    #[test]
    fn identity_keeps_channel_exactly() {
        let img = colorful(16, 9);
        for (ch, idx) in [(Channel::R, 0), (Channel::G, 1), (Channel::B, 2)] {
            let out = augment(&img, &AugmentParams::identity(ch)).unwrap();
            for (o, px) in out.data().iter().zip(img.data()) {
                assert_eq!(*o, px[idx]);
            }
        }
    }

    #[test]
    fn red_rotates_onto_green() {
        let red = RgbImage::from_fn(4, 4, |_, _| [1.0, 0.0, 0.0]);
        let p = AugmentParams { hue_angle: TAU / 3.0, ..AugmentParams::identity(Channel::G) };
        let out = augment(&red, &p).unwrap();
        assert!(out.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let p = AugmentParams { channel: Channel::R, ..p };
        let out = augment(&red, &p).unwrap();
        assert!(out.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn brightness_scales_gray() {
        let gray = RgbImage::from_fn(3, 3, |_, _| [0.5; 3]);
        let p = AugmentParams { brightness: 1.5, ..AugmentParams::identity(Channel::B) };
        let out = augment(&gray, &p).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn contrast_about_mid_gray() {
        let img = RgbImage::from_fn(2, 1, |x, _| [0.25 + 0.5 * x as f64; 3]);
        let p = AugmentParams { contrast: 1.5, ..AugmentParams::identity(Channel::R) };
        let out = augment(&img, &p).unwrap();
        assert_eq!(out.data(), &[0.125, 0.875]);
    }

    #[test]
    fn hsv_round_trip() {
        for rgb in [[0.2, 0.4, 0.9], [1.0, 0.0, 0.0], [0.3, 0.3, 0.3], [0.0, 0.0, 0.0], [0.9, 0.8, 0.1]] {
            let back = hsv_to_rgb(rgb_to_hsv(rgb));
            for (a, b) in rgb.iter().zip(back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_factor() {
        let img = colorful(2, 2);
        let p = AugmentParams { saturation: 1.6, ..AugmentParams::identity(Channel::R) };
        assert!(augment(&img, &p).is_err());
        let p = AugmentParams {
            order: [Adjustment::Hue; 4],
            ..AugmentParams::identity(Channel::R)
        };
        assert!(augment(&img, &p).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_params(42), sample_params(42));
        assert_ne!(sample_params(42), sample_params(43));
        sample_params(7).validate().unwrap();
    }
}
