//! Backward warping of peripheral views into center-view coordinates.

use rayon::prelude::*;

use crate::error::Result;
use crate::image::{DisparityMap, OcclusionMask, SpectralImage};

/// A peripheral view pulled into center coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedView {
    pub image: SpectralImage,
    /// Pixels whose pull position left the peripheral frame; their value is 0.
    pub out_of_frame: OcclusionMask,
}

/// `out[x, y] = periph(x + alpha_x * D[x, y], y + alpha_y * D[x, y])`, bilinear.
pub fn warp_view(
    periph: &SpectralImage,
    disparity: &DisparityMap,
    alpha_x: f64,
    alpha_y: f64,
) -> Result<WarpedView> {
    periph.ensure_dims(disparity.dims())?;
    let (w, h) = periph.dims();
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut vals = Vec::with_capacity(w);
            let mut oof = Vec::with_capacity(w);
            for x in 0..w {
                let d = disparity.get(x, y);
                match periph.sample(x as f64 + alpha_x * d, y as f64 + alpha_y * d) {
                    Some(v) => {
                        vals.push(v);
                        oof.push(false);
                    }
                    None => {
                        vals.push(0.0);
                        oof.push(true);
                    }
                }
            }
            (vals, oof)
        })
        .collect();
    let mut data = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for (v, o) in rows {
        data.extend(v);
        mask.extend(o);
    }
    Ok(WarpedView {
        image: SpectralImage::new(w, h, data)?,
        out_of_frame: OcclusionMask::new(w, h, mask)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn texture(w: usize, h: usize) -> SpectralImage {
        SpectralImage::from_fn(w, h, |x, y| ((x * 53 + y * 29 + x * y) % 97) as f64 / 96.0)
    }

    #[test]
    fn zero_disparity_is_identity() {
        let img = texture(13, 9);
        let out = warp_view(&img, &DisparityMap::constant(13, 9, 0.0), 1.0, 0.0).unwrap();
        assert_eq!(out.image, img);
        assert_eq!(out.out_of_frame.count(), 0);
    }

    #[test]
    fn integer_shift_is_exact() {
        let img = texture(16, 8);
        let out = warp_view(&img, &DisparityMap::constant(16, 8, 3.0), 1.0, 0.0).unwrap();
        for y in 0..8 {
            for x in 0..16 {
                if x + 3 < 16 {
                    assert_eq!(out.image.get(x, y), img.get(x + 3, y));
                    assert!(!out.out_of_frame.get(x, y));
                } else {
                    assert_eq!(out.image.get(x, y), 0.0);
                    assert!(out.out_of_frame.get(x, y));
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let img = texture(4, 4);
        assert!(matches!(
            warp_view(&img, &DisparityMap::constant(4, 5, 0.0), 1.0, 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
