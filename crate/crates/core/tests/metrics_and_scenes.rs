mod oracles;

use defence_core::evalsynth::{
    generate_scene, psnr, psnr_from_rmse, rmse, score_detections, score_mask, ssim,
    synthetic_background, DetectionScore, FenceSpec, PSNR_IDENTICAL,
};
use defence_core::imagecore::{BinaryMask, GrayImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SHIFTS: [(i64, i64); 4] = [(0, 0), (5, 0), (0, 5), (5, 5)];

#[test]
fn psnr_follows_rmse() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let a = oracles::random_image(&mut rng, 16, 12);
        let b = oracles::random_image(&mut rng, 16, 12);
        let r = rmse(&a, &b).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0 * (255.0 / r).log10()).abs() < 1e-9);
    }
    let a = GrayImage::filled(8, 8, 10.0);
    assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_IDENTICAL);
    let b = GrayImage::filled(8, 8, 11.0);
    assert!((psnr(&a, &b).unwrap() - 48.130803608679).abs() < 1e-9);
    let black = GrayImage::filled(8, 8, 0.0);
    let white = GrayImage::filled(8, 8, 255.0);
    assert_eq!(rmse(&black, &white).unwrap(), 255.0);
    assert_eq!(psnr_from_rmse(255.0), 0.0);
}

#[test]
fn ssim_matches_window_by_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let (w, h) = (rng.random_range(11..30), rng.random_range(11..30));
        let a = oracles::random_image(&mut rng, w, h);
        let b = a.map(|v| (v + 40.0 * (v / 30.0).sin()).clamp(0.0, 255.0));
        let s = ssim(&a, &b).unwrap();
        assert!((s - oracles::ssim_direct(&a, &b)).abs() <= 1e-10);
        assert!((s - ssim(&b, &a).unwrap()).abs() <= 1e-12);
        assert!((-1.0..=1.0).contains(&s));
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ssim_of_inverted_pattern_is_low() {
    let a = GrayImage::from_fn(11, 11, |x, y| 128.0 + 60.0 * (((x + y) % 2) as f64 * 2.0 - 1.0));
    let b = a.map(|v| 255.0 - v);
    let s = ssim(&a, &b).unwrap();
    assert!((s - oracles::ssim_direct(&a, &b)).abs() <= 1e-10);
    assert!(s < 0.2, "{s}");
}

#[test]
fn detection_scores_hand_counted() {
    let truth = [(10.0, 10.0), (30.0, 10.0)];
    let s = score_detections(&[(11.0, 10.0)], &truth, 5.0).unwrap();
    assert_eq!((s.tp, s.fp, s.fn_), (1, 0, 1));
    assert_eq!((s.precision, s.recall), (1.0, 0.5));
    assert!((s.f_measure - 2.0 / 3.0).abs() < 1e-12);
    let none = score_detections(&[], &truth, 5.0).unwrap();
    assert_eq!((none.precision, none.recall, none.f_measure), (0.0, 0.0, 0.0));
    let exact = score_detections(&truth, &truth, 5.0).unwrap();
    assert_eq!((exact.precision, exact.recall, exact.f_measure), (1.0, 1.0, 1.0));
    let s = DetectionScore::from_counts(3, 1, 2);
    assert_eq!((s.precision, s.recall), (0.75, 0.6));
    assert!((s.f_measure - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
}

#[test]
fn detection_score_is_order_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pred: Vec<(f64, f64)> = (0..40).map(|_| (rng.random_range(0.0..60.0), rng.random_range(0.0..60.0))).collect();
    let mut truth: Vec<(f64, f64)> = (0..30).map(|_| (rng.random_range(0.0..60.0), rng.random_range(0.0..60.0))).collect();
    let base = score_detections(&pred, &truth, 6.0).unwrap();
    for _ in 0..10 {
        pred.shuffle(&mut rng);
        truth.shuffle(&mut rng);
        assert_eq!(score_detections(&pred, &truth, 6.0).unwrap(), base);
    }
}

#[test]
fn mask_score_dilated_line() {
    let mut gt = BinaryMask::new(14, 5);
    let mut pred = BinaryMask::new(14, 5);
    for x in 2..12 {
        gt.set(x, 2, true);
    }
    // 4-neighbour dilation by one pixel: rows 1..=3 over x 2..12, plus the two end caps.
    for x in 2..12 {
        for y in 1..=3 {
            pred.set(x, y, true);
        }
    }
    pred.set(1, 2, true);
    pred.set(12, 2, true);
    let s = score_mask(&pred, &gt).unwrap();
    assert_eq!((s.score.tp, s.score.fp, s.score.fn_), (10, 22, 0));
    assert!((s.iou - 10.0 / 32.0).abs() < 1e-12);
    assert_eq!(score_mask(&gt, &gt).unwrap().iou, 1.0);
    let mut other = BinaryMask::new(14, 5);
    other.set(0, 0, true);
    assert_eq!(score_mask(&other, &gt).unwrap().iou, 0.0);
}

#[test]
fn mask_density_matches_bar_count() {
    // Spacing 20, offset 10 on 64x64: bar centre lines at 10, 30, 50 in each
    // axis. A bar of width 2 is drawn with a disc of radius 1, so each band is
    // 3 px wide: 3 vertical + 3 horizontal bands of 3x64 minus 9 crossings.
    let analytic = 2 * 3 * 3 * 64 - 9 * 3 * 3;
    assert_eq!(analytic, 1071);
    let measured = FenceSpec::default().render((64, 64)).unwrap().count();
    let rel = (measured as f64 - analytic as f64).abs() / analytic as f64;
    assert!(rel <= 0.02, "{measured} vs {analytic}");
}

#[test]
fn four_shifts_cover_the_interior() {
    let gt = synthetic_background(64, 64, 1);
    let scene = generate_scene(&gt, &FenceSpec::default(), &SHIFTS, 1.0, 7).unwrap();
    let cover = scene.coverage();
    let interior = scene.interior();
    for y in 0..64 {
        for x in 0..64 {
            if interior.get(x, y) {
                assert!(cover.get(x, y), "uncovered interior pixel ({x},{y})");
            }
        }
    }
    assert!(interior.count() > 0);
}

#[test]
fn generator_is_reproducible_and_noise_free_residual_is_fence_only() {
    let gt = synthetic_background(64, 64, 2);
    let a = generate_scene(&gt, &FenceSpec::default(), &SHIFTS, 1.0, 9).unwrap();
    let b = generate_scene(&gt, &FenceSpec::default(), &SHIFTS, 1.0, 9).unwrap();
    assert_eq!(a, b);
    let clean = generate_scene(&gt, &FenceSpec::default(), &SHIFTS, 0.0, 9).unwrap();
    for (m, (frame, mask)) in clean.frames.iter().zip(&clean.fence_masks).enumerate() {
        let (dx, dy) = SHIFTS[m];
        for y in 0..64 {
            for x in 0..64 {
                let shifted = gt
                    .get_clamped(x as isize - dx as isize, y as isize - dy as isize)
                    .round();
                if frame.get(x, y) != shifted {
                    assert!(mask.get(x, y), "frame {m} differs off-mask at ({x},{y})");
                }
            }
        }
    }
    let still = generate_scene(&gt, &FenceSpec::default(), &[(0, 0); 3], 0.0, 1).unwrap();
    assert!(still.frames.windows(2).all(|w| w[0] == w[1]));
}
