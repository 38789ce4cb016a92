//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::{SQRT_2, TAU};
use std::time::Instant;

use msreg_core::augment::{augment, sample_params, AugmentParams, Channel, RgbImage};
use msreg_core::disparity::fuse_median;
use msreg_core::geometry::derotate_disparity;
use msreg_core::io;
use msreg_core::metrics::{mae_masked, masked_loss, ms_ssim, psnr, ssim, LossParams};
use msreg_core::occlusion::{detect_occlusions, oracle_occlusions, OcclusionParams};
use msreg_core::pipeline::{self, PipelineConfig, RunOptions};
use msreg_core::reconstruct::{reconstruct_guided, slice, tent, CoefficientGrid, GridParams};
use msreg_core::synth::{render, SceneSpec};
use msreg_core::warp::WarpedView;
use msreg_core::{DisparityMap, OcclusionMask, SpectralImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn noise_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> SpectralImage {
    SpectralImage::from_fn(w, h, |_, _| rng.gen::<f64>())
}

fn random_piecewise_map(rng: &mut ChaCha8Rng, fractional: bool) -> DisparityMap {
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if fractional {
            rng.gen_range(0.0..16.0)
        } else {
            rng.gen_range(0..=16) as f64
        }
    };
    let layers = rng.gen_range(2..=5);
    let mut data = vec![draw(rng); 64 * 64];
    for _ in 1..layers {
        let d = draw(rng);
        let (x0, y0) = (rng.gen_range(0..56), rng.gen_range(0..56));
        let (x1, y1) = (rng.gen_range(x0 + 4..=64), rng.gen_range(y0 + 4..=64));
        for y in y0..y1 {
            for x in x0..x1 {
                data[y * 64 + x] = d;
            }
        }
    }
    DisparityMap::new(64, 64, data).unwrap()
}

fn criterion_1() -> Outcome {
    let params = OcclusionParams {
        tau: 0.75,
        phi: 0.5,
        kappa: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let start = Instant::now();
    let mut mismatched_maps = 0;
    for _ in 0..100 {
        let d = random_piecewise_map(&mut rng, false);
        if detect_occlusions(&d, &params).unwrap() != oracle_occlusions(&d, params.phi) {
            mismatched_maps += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();

    let mut agree = 0.0;
    for _ in 0..100 {
        let d = random_piecewise_map(&mut rng, true);
        agree += detect_occlusions(&d, &params)
            .unwrap()
            .agreement(&oracle_occlusions(&d, params.phi));
    }
    let agree = agree / 100.0;
    outcome(
        mismatched_maps == 0 && elapsed < 1.0 && agree >= 0.99,
        format!(
            "integer maps differing from oracle: {mismatched_maps}/100 in {elapsed:.3} s (limit 1 s); \
             fractional agreement {:.4}% (limit 99%)",
            agree * 100.0
        ),
    )
}

fn criterion_2() -> Outcome {
    let p = GridParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let (w, h) = (128, 128);
    let dims = p.grid_dims(w, h);
    let (sx, sr) = (1.0 / p.spatial_bin as f64, (p.luma_bins - 1) as f64);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let grid = CoefficientGrid::from_fn(dims, |_, _, _| (rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0)));
        let guide = noise_image(w, h, &mut rng);
        let (gain, bias) = slice(&grid, &guide, &p).unwrap();
        for y in 0..h {
            for x in 0..w {
                let g = guide.get(x, y);
                let (mut a, mut b) = (0.0, 0.0);
                for k in 0..dims.2 {
                    let wk = tent(g * sr - k as f64);
                    for j in 0..dims.1 {
                        let wj = tent(y as f64 * sx - j as f64);
                        for i in 0..dims.0 {
                            let wt = tent(x as f64 * sx - i as f64) * wj * wk;
                            let (ca, cb) = grid.cell(i, j, k);
                            a += ca * wt;
                            b += cb * wt;
                        }
                    }
                }
                worst = worst.max((a - gain.get(x, y)).abs()).max((b - bias.get(x, y)).abs());
            }
        }
    }
    let grid = CoefficientGrid::constant(dims, 0.37, -0.11);
    let guide = noise_image(w, h, &mut rng);
    let (gain, bias) = slice(&grid, &guide, &p).unwrap();
    let unity = gain
        .data()
        .iter()
        .map(|v| (v - 0.37).abs())
        .chain(bias.data().iter().map(|v| (v + 0.11).abs()))
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-10 && unity <= 1e-12,
        format!("max |slice - sum| = {worst:.2e} (limit 1e-10); constant grid error {unity:.2e} (limit 1e-12)"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let (w, h) = (160, 120);
    let guide = SpectralImage::from_fn(w, h, |x, y| {
        0.5 + 0.3 * ((x as f64 * 0.21).sin() * (y as f64 * 0.13).cos()) + 0.15 * rng.gen::<f64>()
    });
    let truth = SpectralImage::from_fn(w, h, |x, y| 0.7 * guide.get(x, y) + 0.1);
    let mut occ = vec![false; w * h];
    while occ.iter().filter(|&&o| o).count() * 10 < 3 * w * h {
        let (x0, y0) = (rng.gen_range(0..w - 8), rng.gen_range(0..h - 8));
        let (bw, bh) = (rng.gen_range(4..24), rng.gen_range(4..24));
        for y in y0..(y0 + bh).min(h) {
            for x in x0..(x0 + bw).min(w) {
                occ[y * w + x] = true;
            }
        }
    }
    let mask = OcclusionMask::new(w, h, occ).unwrap();
    let observed = SpectralImage::from_fn(w, h, |x, y| if mask.get(x, y) { 0.0 } else { truth.get(x, y) });
    let warped = WarpedView {
        image: observed,
        out_of_frame: OcclusionMask::empty(w, h),
    };
    let out = reconstruct_guided(&guide, &warped, &mask, &GridParams::default()).unwrap();
    let mut worst: f64 = 0.0;
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                worst = worst.max((out.get(x, y) - truth.get(x, y)).abs());
            }
        }
    }
    outcome(
        worst <= 1e-3,
        format!(
            "occluded fraction {:.3}, max occluded error {worst:.2e} (limit 1e-3)",
            mask.count() as f64 / (w * h) as f64
        ),
    )
}

fn criterion_4() -> Outcome {
    let spec = SceneSpec::two_plane(4004);
    let scene = render(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("input");
    std::fs::create_dir_all(&input).unwrap();
    let captured = scene.captured();
    for (v, img) in scene.geometry.views.iter().zip(&captured) {
        io::write_image(&input.join(format!("{}.png", v.name())), img).unwrap();
    }
    let config = PipelineConfig {
        input_dir: input.clone(),
        output_dir: dir.path().join("out"),
        ..PipelineConfig::default()
    };
    let start = Instant::now();
    let report = pipeline::run(&config, RunOptions::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let layout = pipeline::OutputLayout::new(&config.output_dir);
    let center = &captured[scene.geometry.center];

    let mut pass = true;
    let mut lines = Vec::new();
    for (i, v) in scene.geometry.peripheral() {
        let truth = scene.registered_truth(i);
        let registered = io::read_image(&layout.registered(&v.name())).unwrap();
        let reg_psnr = psnr(&registered, truth).unwrap();
        let raw_psnr = psnr(&captured[i], truth).unwrap();
        let gt_mask = &scene.gt_occlusion[i];
        let reg_mae = mae_masked(&registered, truth, gt_mask).unwrap().unwrap_or(0.0);
        let copy_mae = mae_masked(center, truth, gt_mask).unwrap().unwrap_or(0.0);
        let ok = reg_psnr >= raw_psnr + 10.0 && reg_mae * 2.0 <= copy_mae;
        pass &= ok;
        lines.push(format!(
            "    {}: psnr {reg_psnr:.2} dB vs unregistered {raw_psnr:.2} dB; occluded mae {reg_mae:.4} vs copy-guide {copy_mae:.4} [{}]",
            v.name(),
            if ok { "ok" } else { "short" }
        ));
    }
    let timings: Vec<String> = report
        .timings
        .iter()
        .map(|(s, d)| format!("{s} {:.3} s", d.as_secs_f64()))
        .collect();
    lines.push(format!("    stage timings: {} (total {elapsed:.2} s)", timings.join(", ")));
    outcome(
        pass,
        format!(
            "per view: psnr gain >= 10 dB and occluded mae <= copy-guide / 2\n{}",
            lines.join("\n")
        ),
    )
}

fn criterion_5() -> Outcome {
    let rot = DisparityMap::constant(91, 91, 10.0);
    let d = derotate_disparity(&rot, TAU / 8.0, SQRT_2, (64, 64)).unwrap();
    let exact = 10.0 / SQRT_2;
    let scale_err = d.data().iter().map(|v| (v - exact).abs()).fold(0.0, f64::max);
    let rounds_ok = d.data().iter().all(|v| (v * 1e4).round() == 70711.0);

    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let truth = DisparityMap::from_fn(48, 32, |x, y| ((x * 7 + y * 3) % 23) as f64 * 0.5);
    let mut maps = vec![truth.clone(); 8];
    for m in maps.iter_mut().take(3) {
        *m = DisparityMap::from_fn(48, 32, |_, _| rng.gen_range(0.0..100.0));
    }
    // Shuffle which maps are corrupted per pixel as well.
    let mut per_pixel: Vec<Vec<f64>> = vec![Vec::new(); 8];
    for y in 0..32 {
        for x in 0..48 {
            let mut vals: Vec<f64> = maps.iter().map(|m| m.get(x, y)).collect();
            let k = rng.gen_range(0..8);
            vals.rotate_left(k);
            for (slot, v) in per_pixel.iter_mut().zip(vals) {
                slot.push(v);
            }
        }
    }
    let shuffled: Vec<_> = per_pixel
        .into_iter()
        .map(|data| DisparityMap::new(48, 32, data).unwrap())
        .collect();
    let fused = fuse_median(&shuffled).unwrap();
    let median_ok = fused == truth;
    outcome(
        scale_err <= 1e-6 && rounds_ok && median_ok,
        format!(
            "diagonal 10 -> max |d - 10/sqrt(2)| = {scale_err:.2e} (limit 1e-6), rounds to 7.0711: {rounds_ok}; \
             median of 8 with 3 corrupted equals truth: {median_ok}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let a = SpectralImage::from_fn(200, 200, |x, y| {
        0.5 + 0.25 * ((x as f64 * 0.1).sin() + (y as f64 * 0.07).cos()) * 0.5 + 0.2 * (rng.gen::<f64>() - 0.5)
    });
    let p = LossParams::default();
    let inf_ok = psnr(&a, &a).unwrap() == f64::INFINITY;
    let s = ssim(&a, &a).unwrap();
    let ms = ms_ssim(&a, &a, &p).unwrap();
    let identity_ok = (s - 1.0).abs() <= 1e-9 && (ms - 1.0).abs() <= 1e-9;
    let full = OcclusionMask::full(200, 200);
    let zero = masked_loss(&a, &a, &full, &p).unwrap();

    let flat = SpectralImage::constant(200, 200, 0.5);
    let mask = OcclusionMask::from_fn(200, 200, |x, y| x < 40 && y < 100);
    let offset = SpectralImage::from_fn(200, 200, |x, y| if mask.get(x, y) { 0.6 } else { 0.5 });
    let loss = masked_loss(&offset, &flat, &mask, &p).unwrap();
    let l1 = (1.0 - 0.84) * 0.1;
    let hand = l1 + 0.84 * (1.0 - ms_ssim(&offset, &flat, &p).unwrap());
    let composite_err = (loss - hand).abs();
    outcome(
        inf_ok && identity_ok && zero == 0.0 && composite_err <= 1e-9 && p.theta == 0.84,
        format!(
            "psnr(a, a) = {}; ssim {s:.12}, ms-ssim {ms:.12}; loss(N = M) = {zero}; \
             flat-offset loss {loss:.9} vs hand {hand:.9} (|diff| {composite_err:.1e}, limit 1e-9; mask covers {:.0}%)",
            psnr(&a, &a).unwrap(),
            mask.count() as f64 / 400.0
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let rgb = RgbImage::from_fn(64, 48, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
    let mut identity_ok = true;
    for (ch, idx) in [(Channel::R, 0), (Channel::G, 1), (Channel::B, 2)] {
        let out = augment(&rgb, &AugmentParams::identity(ch)).unwrap();
        identity_ok &= out.data().iter().zip(rgb.data()).all(|(o, px)| *o == px[idx]);
    }
    let mut hue_err: f64 = 0.0;
    for ch in [Channel::R, Channel::G, Channel::B] {
        let zero = augment(&rgb, &AugmentParams::identity(ch)).unwrap();
        let full = augment(
            &rgb,
            &AugmentParams {
                hue_angle: TAU,
                ..AugmentParams::identity(ch)
            },
        )
        .unwrap();
        for (a, b) in zero.data().iter().zip(full.data()) {
            hue_err = hue_err.max((a - b).abs());
        }
    }
    let n = 10_000;
    let samples: Vec<_> = (0..n).map(|s| sample_params(s as u64)).collect();
    let mean = |f: &dyn Fn(&AugmentParams) -> f64| samples.iter().map(f).sum::<f64>() / n as f64;
    let means = [
        mean(&|p| p.brightness),
        mean(&|p| p.saturation),
        mean(&|p| p.contrast),
    ];
    let freqs: Vec<f64> = [Channel::R, Channel::G, Channel::B]
        .iter()
        .map(|c| samples.iter().filter(|p| p.channel == *c).count() as f64 / n as f64)
        .collect();
    let stats_ok = means.iter().all(|m| (0.97..=1.03).contains(m)) && freqs.iter().all(|f| (f - 1.0 / 3.0).abs() <= 0.02);
    outcome(
        identity_ok && hue_err <= 1.0 / 255.0 && stats_ok,
        format!(
            "identity bit-exact: {identity_ok}; hue 2pi vs 0 max diff {hue_err:.2e} (limit {:.2e}); \
             factor means {:.4}/{:.4}/{:.4} (limit [0.97, 1.03]); channel freqs {:.4}/{:.4}/{:.4} (limit 1/3 +- 0.02)",
            1.0 / 255.0,
            means[0],
            means[1],
            means[2],
            freqs[0],
            freqs[1],
            freqs[2]
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "occlusion oracle equivalence", criterion_1),
        (2, "slicing exactness", criterion_2),
        (3, "affine recovery", criterion_3),
        (4, "end-to-end synthetic registration", criterion_4),
        (5, "geometry scaling and median fusion", criterion_5),
        (6, "metrics sanity", criterion_6),
        (7, "augmentation", criterion_7),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {id} ({name}): {} - {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "criterion 8 (absolute benchmark numbers): NOT REPRODUCIBLE - dataset-level PSNR/SSIM, \
         per-method comparisons and a GPU runtime factor need trained networks and a real \
         multispectral video dataset, neither of which is available here; the suites above and \
         the stage timings of criterion 4 stand in for them"
    );
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
