mod oracles;

use defence_core::cnn::{
    backward, forward, gradient_check_report, train, AugmentPolicy, CnnNetwork, TrainConfig, CONV1_SIDE,
    CONV2_SIDE, FLAT_LEN, POOL1_SIDE, POOL2_SIDE,
};
use defence_core::imagecore::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_input(rng: &mut impl Rng) -> GrayImage {
    GrayImage::from_fn(32, 32, |_, _| rng.random::<f64>())
}

#[test]
fn shape_chain_is_32_28_14_10_5_300() {
    assert_eq!((CONV1_SIDE, POOL1_SIDE, CONV2_SIDE, POOL2_SIDE, FLAT_LEN), (28, 14, 10, 5, 300));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, cache) = forward(&CnnNetwork::random(1), &[unit_input(&mut rng)], true).unwrap();
    let s = &cache.unwrap().samples[0];
    assert_eq!(s.conv1_act.len(), 6 * 28 * 28);
    assert_eq!(s.pool1.len(), 6 * 14 * 14);
    assert_eq!(s.conv2_act.len(), 12 * 10 * 10);
    assert_eq!(s.pool2.len(), 300);
    for (o, &src) in s.pool1_argmax.iter().enumerate() {
        let (m, y, x) = (o / 196, (o % 196) / 14, o % 14);
        let (sm, sy, sx) = (src / 784, (src % 784) / 28, src % 28);
        assert!(sm == m && sy / 2 == y && sx / 2 == x);
    }
}

#[test]
fn forward_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..10 {
        let net = CnnNetwork::random(100 + trial);
        let input = unit_input(&mut rng);
        let (out, _) = forward(&net, &[input.clone()], false).unwrap();
        let oracle = oracles::cnn_forward_naive(&net.params, &input);
        assert!((out[0] - oracle).abs() <= 1e-10, "trial {trial}: {} vs {oracle}", out[0]);
    }
}

#[test]
fn gradient_check_on_random_nets() {
    for seed in 0..3 {
        let r = gradient_check_report(&CnnNetwork::random(seed), 200, 1e-5, seed).unwrap();
        assert!(r.max_rel_error < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn pool_routing_conserves_delta_mass() {
    // Only fc weights feed pool2, so d pool2 = dE/dout * sigma' * fc_w and the
    // conv2 pre-activation deltas must sum to the same mass once the sigmoid
    // derivative is divided back out.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = CnnNetwork::random(4);
    let x = unit_input(&mut rng);
    let (out, cache) = forward(&net, &[x], true).unwrap();
    let cache = cache.unwrap();
    let s = &cache.samples[0];
    let g = backward(&net, Some(&cache), &[0.0]).unwrap();
    let d_out = 2.0 * out[0] * out[0] * (1.0 - out[0]);
    let d_pool2: Vec<f64> = net.params.fc_w.iter().map(|w| d_out * w).collect();
    // conv2 bias gradient = sum of conv2 pre-activation deltas per map.
    for m in 0..12 {
        let mut routed = 0.0;
        for (o, &src) in s.pool2_argmax.iter().enumerate().filter(|(o, _)| o / 25 == m) {
            let a = s.conv2_act[src];
            routed += d_pool2[o] * a * (1.0 - a);
        }
        assert!((routed - g.conv2_b[m]).abs() <= 1e-12 * (1.0 + routed.abs()), "map {m}");
    }
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let samples: Vec<(GrayImage, bool)> = (0..200)
        .map(|i| {
            let joint = i % 2 == 0;
            let img = GrayImage::from_fn(32, 32, |x, y| {
                let bar = (14..18).contains(&x) || (joint && (14..18).contains(&y));
                (if bar { 220.0 } else { 60.0 }) + rng.random_range(-20.0..20.0)
            });
            (img, joint)
        })
        .collect();
    let cfg = TrainConfig { epochs: 30, learning_rate: 0.5, seed: 2, ..TrainConfig::default() };
    let policy = AugmentPolicy::default();
    let (a, ra) = train(&CnnNetwork::random(6), &samples, &cfg, &policy).unwrap();
    let (b, rb) = train(&CnnNetwork::random(6), &samples, &cfg, &policy).unwrap();
    assert!(ra.epoch_loss.last().unwrap() < ra.epoch_loss.first().unwrap());
    assert_eq!(a, b);
    assert_eq!(ra.epoch_loss, rb.epoch_loss);
    let flipped = train(
        &CnnNetwork::random(6),
        &samples,
        &TrainConfig { epochs: 1, ..cfg },
        &AugmentPolicy { flip_y: true, center_crop: None },
    )
    .unwrap()
    .1;
    assert_eq!(flipped.samples_used, 400);
}
