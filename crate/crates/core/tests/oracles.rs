//! Rotation, warping and rendering checked against independent computations.

use std::f64::consts::{FRAC_PI_4, SQRT_2};

use msreg_core::geometry::{rotate_image, rotated_dims};
use msreg_core::occlusion::oracle_occlusions_directed;
use msreg_core::synth::{render, LayerSpec, Region, SceneSpec, Texture};
use msreg_core::warp::warp_view;
use msreg_core::{ArrayGeometry, DisparityMap, GeometryConfig, SpectralImage};

fn smooth(x: f64, y: f64) -> f64 {
    0.5 + 0.2 * (0.21 * x + 0.05 * y).sin() + 0.15 * (0.13 * y - 0.08 * x).cos()
}

#[test]
fn diagonal_rotation_matches_supersampled_oracle() {
    let (w, h) = (64usize, 64usize);
    let img = SpectralImage::from_fn(w, h, |x, y| smooth(x as f64, y as f64));
    let rot = rotate_image(&img, FRAC_PI_4);
    assert_eq!(rot.dims(), (91, 91));

    // One resampling step: the largest change between neighboring source pixels.
    let mut step: f64 = 0.0;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                step = step.max((img.get(x + 1, y) - img.get(x, y)).abs());
            }
            if y + 1 < h {
                step = step.max((img.get(x, y + 1) - img.get(x, y)).abs());
            }
        }
    }

    // Oracle: average the continuous image over an 8x8 grid of sub-samples of
    // each output pixel, mapped through the exact rotation.
    let (s, c) = FRAC_PI_4.sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (ox, oy) = (45.0, 45.0);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for yo in 0..91 {
        for xo in 0..91 {
            let interior = (-2..=2).all(|dy: i64| {
                (-2..=2).all(|dx: i64| {
                    let (x, y) = (xo as i64 + dx, yo as i64 + dy);
                    (0..91).contains(&x) && (0..91).contains(&y) && rot.is_valid(x as usize, y as usize)
                })
            });
            if !interior {
                continue;
            }
            let mut acc = 0.0;
            for j in 0..8 {
                for i in 0..8 {
                    let dx = xo as f64 - ox + (i as f64 + 0.5) / 8.0 - 0.5;
                    let dy = yo as f64 - oy + (j as f64 + 0.5) / 8.0 - 0.5;
                    acc += smooth(cx + c * dx - s * dy, cy + s * dx + c * dy);
                }
            }
            let err = (rot.get(xo, yo) - acc / 64.0).abs();
            worst = worst.max(err);
            checked += 1;
        }
    }
    assert!(checked > 3000, "only {checked} interior pixels");
    assert!(worst <= step, "worst error {worst} exceeds one resampling step {step}");
}

#[test]
fn rotated_canvas_sizes() {
    assert_eq!(rotated_dims(64, 64, FRAC_PI_4), (91, 91));
    assert_eq!(rotated_dims(64, 48, std::f64::consts::FRAC_PI_2), (48, 64));
    assert_eq!(rotated_dims(64, 48, 0.0), (64, 48));
}

#[test]
fn diagonal_warp_matches_direct_bilinear_sampling() {
    let (w, h) = (40usize, 30usize);
    let mut s = 0x9e37_79b9_7f4a_7c15u64;
    let periph = SpectralImage::from_fn(w, h, |_, _| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64
    });
    let d = DisparityMap::constant(w, h, 4.0);
    let a = 1.0 / SQRT_2;
    let out = warp_view(&periph, &d, a, a).unwrap();
    let off = 4.0 * a;
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + off, y as f64 + off);
            if px > (w - 1) as f64 || py > (h - 1) as f64 {
                assert!(out.out_of_frame.get(x, y));
                assert_eq!(out.image.get(x, y), 0.0);
                continue;
            }
            let (x0, y0) = (px.floor() as usize, py.floor() as usize);
            let (fx, fy) = (px - x0 as f64, py - y0 as f64);
            let at = |x: usize, y: usize| periph.get(x, y);
            let expected = (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0))
                + fy * ((1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1));
            assert!(!out.out_of_frame.get(x, y));
            assert!((out.image.get(x, y) - expected).abs() < 1e-12, "({x}, {y})");
        }
    }
}

fn layered_scene(w: usize, h: usize, geometry: GeometryConfig, layers: &[(Region, f64)]) -> SceneSpec {
    SceneSpec {
        width: w,
        height: h,
        num_bands: 3,
        geometry,
        view_bands: None,
        layers: layers
            .iter()
            .enumerate()
            .map(|(i, (region, d))| LayerSpec {
                region: region.clone(),
                disparity: *d,
                texture: Texture::Noise {
                    seed: i as u64 + 1,
                    scale: 5.0,
                },
                spectral_gains: vec![(0.8, 0.1), (-0.6, 0.8), (0.4, 0.3)],
            })
            .collect(),
    }
}

fn check_renderer_against_oracle(spec: &SceneSpec) {
    let scene = render(spec).unwrap();
    let geom: &ArrayGeometry = &scene.geometry;
    let (w, h) = scene.gt_disparity.dims();
    let mut checked = 0;
    for (v, view) in geom.peripheral() {
        let (ax, ay) = (view.alpha_x, view.alpha_y);
        // The oracle walks grid lines, so only compass directions have one.
        if ax != 0.0 && ay != 0.0 && ax.abs() != ay.abs() {
            continue;
        }
        checked += 1;
        let oracle = oracle_occlusions_directed(&scene.gt_disparity, 0.5, (view.alpha_x, view.alpha_y)).unwrap();
        let oof = warp_view(&SpectralImage::constant(w, h, 0.5), &scene.gt_disparity, view.alpha_x, view.alpha_y)
            .unwrap()
            .out_of_frame;
        let expected = oracle.union(&oof).unwrap();
        assert_eq!(scene.gt_occlusion[v], expected, "view {}", view.name());
    }
    assert!(checked >= 8);
}

#[test]
fn renderer_occlusion_equals_oracle_and_out_of_frame() {
    check_renderer_against_oracle(&SceneSpec::two_plane(3));
    let three = layered_scene(
        96,
        80,
        GeometryConfig::default(),
        &[
            (Region::Full, 1.0),
            (
                Region::Rect {
                    x0: 10.0,
                    y0: 12.0,
                    x1: 40.0,
                    y1: 50.0,
                },
                7.0,
            ),
            (
                Region::Rect {
                    x0: 55.0,
                    y0: 30.0,
                    x1: 85.0,
                    y1: 70.0,
                },
                4.0,
            ),
        ],
    );
    check_renderer_against_oracle(&three);
    let wide = layered_scene(
        72,
        72,
        GeometryConfig::Grid {
            rows: 5,
            cols: 5,
            baseline: 1.0,
        },
        &[
            (Region::Full, 0.0),
            (
                Region::Rect {
                    x0: 20.0,
                    y0: 20.0,
                    x1: 50.0,
                    y1: 44.0,
                },
                3.0,
            ),
        ],
    );
    check_renderer_against_oracle(&wide);
}
