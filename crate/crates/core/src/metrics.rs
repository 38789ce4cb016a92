//! Image quality metrics and the masked reconstruction loss.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5) evaluated over the valid
//! region only, with `C1 = (0.01)^2` and `C2 = (0.03)^2` for a dynamic range
//! of 1. MS-SSIM downsamples by 2x2 averaging between scales.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{OcclusionMask, SpectralImage};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Per-scale weights of the five-scale MS-SSIM index.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossParams {
    /// Weight of the MS-SSIM term; the masked L1 term gets `1 - theta`.
    pub theta: f64,
    /// One weight per MS-SSIM scale.
    pub msssim_weights: Vec<f64>,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            theta: 0.84,
            msssim_weights: MS_SSIM_WEIGHTS.to_vec(),
        }
    }
}

impl LossParams {
    pub fn msssim_scales(&self) -> usize {
        self.msssim_weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!("theta {} outside [0, 1]", self.theta)));
        }
        if self.msssim_weights.is_empty() {
            return Err(Error::InvalidParameter("at least one MS-SSIM scale is required".into()));
        }
        let sum: f64 = self.msssim_weights.iter().sum();
        // The published five-scale weights sum to 1.0001.
        if (sum - 1.0).abs() > 1e-3 || self.msssim_weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "MS-SSIM weights must be non-negative and sum to 1, got sum {sum}"
            )));
        }
        Ok(())
    }
}

fn same_dims(a: &SpectralImage, b: &SpectralImage) -> Result<()> {
    b.ensure_dims(a.dims())
}

pub fn mse(a: &SpectralImage, b: &SpectralImage) -> Result<f64> {
    same_dims(a, b)?;
    let n = a.data().len().max(1) as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// Peak signal-to-noise ratio for peak 1.0; identical images give `f64::INFINITY`.
pub fn psnr(a: &SpectralImage, b: &SpectralImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// PSNR over the pixels where `mask` is set; `None` if the mask is empty.
pub fn psnr_masked(a: &SpectralImage, b: &SpectralImage, mask: &OcclusionMask) -> Result<Option<f64>> {
    Ok(masked_mean(a, b, mask, |d| d * d)?.map(psnr_from_mse))
}

/// Mean absolute error over the pixels where `mask` is set; `None` if the mask is empty.
pub fn mae_masked(a: &SpectralImage, b: &SpectralImage, mask: &OcclusionMask) -> Result<Option<f64>> {
    masked_mean(a, b, mask, f64::abs)
}

fn masked_mean(
    a: &SpectralImage,
    b: &SpectralImage,
    mask: &OcclusionMask,
    f: impl Fn(f64) -> f64,
) -> Result<Option<f64>> {
    same_dims(a, b)?;
    if mask.dims() != a.dims() {
        return Err(Error::dims(a.dims(), mask.dims()));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for ((x, y), &m) in a.data().iter().zip(b.data()).zip(mask.data()) {
        if m {
            sum += f(x - y);
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let t = i as f64 - c;
        *v = (-t * t / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable valid-mode filtering of a plane with the Gaussian window.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w + 1 - WINDOW;
    let oh = h + 1 - WINDOW;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term of one scale.
fn ssim_terms(a: &[f64], b: &[f64], w: usize, h: usize) -> (f64, f64) {
    let k = gaussian_window();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, w, h, &k);
    let mu_b = filter_valid(b, w, h, &k);
    let e_aa = filter_valid(&aa, w, h, &k);
    let e_bb = filter_valid(&bb, w, h, &k);
    let e_ab = filter_valid(&ab, w, h, &k);
    let n = mu_a.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let c = (2.0 * cov + C2) / (va + vb + C2);
        let l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        ssim += l * c;
        cs += c;
    }
    (ssim / n, cs / n)
}

fn check_size(a: &SpectralImage, scales: usize) -> Result<()> {
    let min_side = (1usize << (scales - 1)) * WINDOW;
    if a.width() < min_side || a.height() < min_side {
        return Err(Error::ImageTooSmall {
            width: a.width(),
            height: a.height(),
            scales,
            min_side,
        });
    }
    Ok(())
}

/// Mean structural similarity.
pub fn ssim(a: &SpectralImage, b: &SpectralImage) -> Result<f64> {
    same_dims(a, b)?;
    check_size(a, 1)?;
    Ok(ssim_terms(a.data(), b.data(), a.width(), a.height()).0)
}

fn downsample(data: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out.push(0.25 * (data[i] + data[i + 1] + data[i + w] + data[i + w + 1]));
        }
    }
    (out, ow, oh)
}

/// Multi-scale SSIM: `prod_j cs_j^{w_j}` over every scale but the coarsest,
/// times `ssim_M^{w_M}` at the coarsest. Negative terms are clamped to 0.
pub fn ms_ssim(a: &SpectralImage, b: &SpectralImage, p: &LossParams) -> Result<f64> {
    p.validate()?;
    same_dims(a, b)?;
    let scales = p.msssim_scales();
    check_size(a, scales)?;
    let (mut da, mut db) = (a.data().to_vec(), b.data().to_vec());
    let (mut w, mut h) = a.dims();
    let mut value = 1.0;
    for (s, weight) in p.msssim_weights.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&da, &db, w, h);
        let term = if s + 1 == scales { ssim } else { cs };
        value *= term.max(0.0).powf(*weight);
        if s + 1 < scales {
            let (na, nw, nh) = downsample(&da, w, h);
            da = na;
            db = downsample(&db, w, h).0;
            w = nw;
            h = nh;
        }
    }
    Ok(value)
}

/// `(1 - theta) * mean_{O=1} |N - M| + theta * (1 - MS-SSIM(N, M))`.
///
/// The L1 term is 0 when the mask is empty.
pub fn masked_loss(
    predicted: &SpectralImage,
    truth: &SpectralImage,
    mask: &OcclusionMask,
    p: &LossParams,
) -> Result<f64> {
    p.validate()?;
    same_dims(predicted, truth)?;
    let l1 = mae_masked(predicted, truth, mask)?.unwrap_or(0.0);
    let structural = if p.theta > 0.0 {
        p.theta * (1.0 - ms_ssim(predicted, truth, p)?)
    } else {
        0.0
    };
    Ok((1.0 - p.theta) * l1 + structural)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, seed: u64) -> SpectralImage {
        let mut s = seed;
        SpectralImage::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn psnr_closed_forms() {
        let a = SpectralImage::constant(10, 10, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = SpectralImage::constant(10, 10, 0.6);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = SpectralImage::from_fn(10, 10, |x, y| if x == 3 && y == 7 { 1.0 } else { 0.0 });
        let z = SpectralImage::constant(10, 10, 0.0);
        assert!((psnr(&c, &z).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_dimension_mismatch() {
        let a = SpectralImage::constant(10, 10, 0.5);
        let b = SpectralImage::constant(10, 11, 0.5);
        assert!(matches!(psnr(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = noise(64, 64, 3);
        let a = SpectralImage::from_fn(64, 64, |x, y| 0.9 * a.get(x, y));
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let inv = SpectralImage::from_fn(64, 64, |x, y| 1.0 - a.get(x, y));
        let s_inv = ssim(&a, &inv).unwrap();
        assert!(s_inv < 0.2, "{s_inv}");
        let off = SpectralImage::from_fn(64, 64, |x, y| a.get(x, y) + 0.05);
        let s_off = ssim(&a, &off).unwrap();
        assert!(s_off < 1.0 && s_off > s_inv);
        assert!((ssim(&a, &off).unwrap() - ssim(&off, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn ms_ssim_requires_size() {
        let a = noise(100, 100, 1);
        assert!(matches!(
            ms_ssim(&a, &a, &LossParams::default()),
            Err(Error::ImageTooSmall { min_side: 176, .. })
        ));
        let b = noise(176, 176, 1);
        assert!((ms_ssim(&b, &b, &LossParams::default()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weights_validation() {
        let p = LossParams { msssim_weights: vec![0.5, 0.2], ..LossParams::default() };
        assert!(p.validate().is_err());
        let p = LossParams { theta: 1.2, ..LossParams::default() };
        assert!(p.validate().is_err());
        LossParams::default().validate().unwrap();
    }

    #[test]
    fn loss_zero_and_pure_l1() {
        let a = noise(180, 180, 5);
        let mask = OcclusionMask::from_fn(180, 180, |x, _| x < 18);
        assert!(masked_loss(&a, &a, &mask, &LossParams::default()).unwrap().abs() < 1e-9);
        let b = SpectralImage::from_fn(180, 180, |x, y| {
            if x < 18 {
                (a.get(x, y) + 0.1).min(1.0)
            } else {
                a.get(x, y)
            }
        });
        let p = LossParams { theta: 0.0, ..LossParams::default() };
        let l = masked_loss(&b, &a, &mask, &p).unwrap();
        let mae = mae_masked(&b, &a, &mask).unwrap().unwrap();
        assert!((l - mae).abs() < 1e-15);
    }
}
