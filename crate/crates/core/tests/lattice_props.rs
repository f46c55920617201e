mod oracles;

use defence_core::classifier::{hog_examples, train, KernelKind, Label, TexelSample, DEFAULT_C, DEFAULT_GAMMA};
use defence_core::evalsynth::{
    generate_scene, harvest_patches, score_mask, synthetic_background, FenceSpec, SyntheticScene,
};
use defence_core::hog::HogParams;
use defence_core::imagecore::{resize_bilinear, GrayImage};
use defence_core::lattice::{
    detect_joints, detect_lattice, estimate_texel, link_joints, render_mask, scale_sequence,
    suppress, DetectorConfig, JointDetection, JointModel, Lattice,
};
use defence_core::classifier::ClassifierModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn jd(x: f64, y: f64) -> JointDetection {
    JointDetection { x, y, scale: 1.0, score: 1.0 }
}

fn grid(n: usize, spacing: f64) -> Vec<JointDetection> {
    (0..n * n)
        .map(|k| jd(10.0 + spacing * (k % n) as f64, 10.0 + spacing * (k / n) as f64))
        .collect()
}

fn scene(seed: u64) -> SyntheticScene {
    let gt = synthetic_background(96, 96, 100 + seed);
    let spec = FenceSpec { offset: 4 + (seed as usize * 3) % 16, ..FenceSpec::default() };
    generate_scene(&gt, &spec, &[(0, 0), (5, 0), (0, 5), (5, 5)], 1.0, seed).unwrap()
}

fn trained_model(seeds: std::ops::Range<u64>) -> JointModel {
    let mut samples = Vec::new();
    for s in seeds {
        for (patch, joint) in harvest_patches(&scene(s), 30, 1, 60, 5.0, s).unwrap() {
            let label = if joint { Label::Joint } else { Label::NonJoint };
            samples.push(TexelSample { patch, label });
        }
    }
    let ex = hog_examples(&samples, &HogParams::default()).unwrap();
    JointModel::Svm(train(&ex, KernelKind::Linear, DEFAULT_C, DEFAULT_GAMMA, 1).unwrap())
}

#[test]
fn suppression_matches_greedy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let joints: Vec<JointDetection> = (0..100)
            .map(|_| JointDetection {
                x: rng.random_range(0..80) as f64,
                y: rng.random_range(0..80) as f64,
                scale: 1.0,
                // Coarse scores so ties exercise the (y, x) rule.
                score: rng.random_range(0..10) as f64,
            })
            .collect();
        let radius = rng.random_range(2.0..12.0);
        let got: Vec<(f64, f64, f64)> = suppress(&joints, radius).iter().map(|j| (j.x, j.y, j.score)).collect();
        let raw: Vec<(f64, f64, f64)> = joints.iter().map(|j| (j.x, j.y, j.score)).collect();
        assert_eq!(got, oracles::suppress_oracle(&raw, radius));
        for (i, a) in got.iter().enumerate() {
            assert!(raw.contains(a));
            for b in &got[i + 1..] {
                assert!((a.0 - b.0).hypot(a.1 - b.1) >= radius);
            }
        }
    }
    let two = [JointDetection { score: 2.0, ..jd(0.0, 0.0) }, jd(3.0, 0.0)];
    assert_eq!(suppress(&two, 5.0), vec![two[0]]);
}

#[test]
fn texel_estimate_is_robust_to_an_outlier() {
    assert_eq!(estimate_texel(&grid(5, 20.0)).unwrap(), (20.0, 20.0));
    let mut g = grid(5, 20.0);
    g.push(jd(23.0, 37.0));
    assert_eq!(estimate_texel(&g).unwrap(), (20.0, 20.0));
    assert!(estimate_texel(&[jd(1.0, 1.0)]).is_err());
}

#[test]
fn jittered_grid_keeps_every_edge() {
    let cfg = DetectorConfig::default();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let joints: Vec<JointDetection> = grid(n, 20.0)
            .into_iter()
            .map(|j| jd(j.x + rng.random_range(-2.0..=2.0), j.y + rng.random_range(-2.0..=2.0)))
            .collect();
        let lat = link_joints(&joints, 20.0, 20.0, &cfg).unwrap();
        // Worst case |dx - 20| <= 4 <= 5 and |dy| <= 4 <= 5 for neighbours;
        // diagonal and two-step pairs fall outside the band.
        assert_eq!(lat.edges.len(), 2 * n * (n - 1), "seed {seed}");
        for &(i, j) in &lat.edges {
            let (dx, dy) = ((lat.joints[i].x - lat.joints[j].x).abs(), (lat.joints[i].y - lat.joints[j].y).abs());
            assert!(((dx - 20.0).abs() <= 5.0 && dy <= 5.0) || ((dy - 20.0).abs() <= 5.0 && dx <= 5.0));
        }
    }
    let mut g = grid(4, 20.0);
    g.push(jd(200.0, 200.0));
    let lat = link_joints(&g, 20.0, 20.0, &cfg).unwrap();
    assert_eq!(lat.joints.len(), 16);
    let interior = lat.joints.iter().position(|j| (j.x, j.y) == (30.0, 30.0)).unwrap();
    assert_eq!(lat.degree(interior), 4);
}

#[test]
fn render_is_exact_for_an_axis_segment_and_monotone_in_width() {
    let lat = Lattice { joints: vec![jd(0.0, 5.0), jd(10.0, 5.0)], texel_w: 10.0, texel_h: 10.0, edges: vec![(0, 1)] };
    let m = render_mask(&lat, (16, 12), 1).unwrap();
    assert_eq!(m.count(), 11);
    assert!((0..=10).all(|x| m.get(x, 5)));
    assert_eq!(render_mask(&Lattice::empty(), (16, 12), 3).unwrap().count(), 0);
    let full = link_joints(&grid(4, 20.0), 20.0, 20.0, &DetectorConfig::default()).unwrap();
    for bw in 1..6 {
        let a = render_mask(&full, (80, 80), bw).unwrap();
        let b = render_mask(&full, (80, 80), bw + 2).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x <= y), "bar width {bw}");
    }
}

#[test]
fn scale_sequence_is_geometric() {
    let cfg = DetectorConfig { max_scale: 2.0, ..DetectorConfig::default() };
    let s = scale_sequence(&cfg);
    let want = [1.0, 1.2, 1.44, 1.728];
    assert_eq!(s.len(), 4);
    for (a, b) in s.iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_classifier_detects_nothing() {
    let model = JointModel::Svm(ClassifierModel::linear(vec![0.0; 1296], -1.0, 1.0));
    let img = scene(0).frames[0].clone();
    assert!(detect_joints(&img, &model, &DetectorConfig::default()).unwrap().is_empty());
    let tiny = GrayImage::new(20, 20);
    assert!(detect_joints(&tiny, &model, &DetectorConfig::default()).is_err());
}

#[test]
fn detected_mask_overlaps_truth_and_mapped_windows_keep_their_sign() {
    let model = trained_model(0..5);
    let held = scene(6);
    let r = detect_lattice(&held.frames[0], &model, &DetectorConfig::default()).unwrap();
    let iou = score_mask(&r.mask, &held.fence_masks[0]).unwrap().iou;
    assert!(iou >= 0.8, "mask IoU {iou}");

    let cfg = DetectorConfig { max_scale: 1.5, ..DetectorConfig::default() };
    let img = &held.frames[1];
    let mut dets = detect_joints(img, &model, &cfg).unwrap();
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut checked = 0;
    for d in &dets {
        let side = (30.0 * d.scale).round() as usize;
        let x0 = (d.x - side as f64 / 2.0).round();
        let y0 = (d.y - side as f64 / 2.0).round();
        if x0 < 0.0 || y0 < 0.0 || x0 as usize + side > 96 || y0 as usize + side > 96 {
            continue;
        }
        let crop = img.crop(x0 as usize, y0 as usize, side, side).unwrap();
        let window = resize_bilinear(&crop, 30, 30).unwrap();
        let score = model.score_windows(&window, &[(0, 0)]).unwrap()[0];
        assert!(score > 0.0, "detection {d:?} rescored {score}");
        checked += 1;
        if checked == 20 {
            break;
        }
    }
    assert_eq!(checked, 20);
}
