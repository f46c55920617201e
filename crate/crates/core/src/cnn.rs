//! Small convolutional joint classifier, trained from scratch.
//!
//! Fixed layer stack:
//!
//! ```text
//! input 32x32x1
//!   conv1  6 x (5x5)            -> 28x28x6   sigmoid
//!   pool1  2x2 max              -> 14x14x6
//!   conv2  12 x (6 x 5x5), summed over input maps -> 10x10x12  sigmoid
//!   pool2  2x2 max              -> 5x5x12
//!   flatten                     -> 300
//!   fc     300 -> 1             sigmoid
//! ```
//!
//! "Convolution" here is the usual valid cross-correlation (kernels are not
//! flipped). Loss is the mean squared residual over the batch.
//!
//! Parameter order (also the on-disk order): conv1 weights `[map][ky][kx]`,
//! conv1 biases, conv2 weights `[out][in][ky][kx]`, conv2 biases, fc weights
//! (flatten order `[map][y][x]`), fc bias.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::ByteReader;
use crate::error::{Error, Result};
use crate::imagecore::{resize_bilinear, GrayImage};

pub const INPUT_SIDE: usize = 32;
pub const KERNEL: usize = 5;
pub const CONV1_MAPS: usize = 6;
pub const CONV1_SIDE: usize = INPUT_SIDE - KERNEL + 1;
pub const POOL1_SIDE: usize = CONV1_SIDE / 2;
pub const CONV2_MAPS: usize = 12;
pub const CONV2_SIDE: usize = POOL1_SIDE - KERNEL + 1;
pub const POOL2_SIDE: usize = CONV2_SIDE / 2;
pub const FLAT_LEN: usize = CONV2_MAPS * POOL2_SIDE * POOL2_SIDE;

const KK: usize = KERNEL * KERNEL;
const NET_MAGIC: &[u8; 4] = b"DFKC";

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Every trainable value of the network, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
}

impl Params {
    pub fn zeros() -> Self {
        Self {
            conv1_w: vec![0.0; CONV1_MAPS * KK],
            conv1_b: vec![0.0; CONV1_MAPS],
            conv2_w: vec![0.0; CONV2_MAPS * CONV1_MAPS * KK],
            conv2_b: vec![0.0; CONV2_MAPS],
            fc_w: vec![0.0; FLAT_LEN],
            fc_b: vec![0.0; 1],
        }
    }

    fn segments(&self) -> [&Vec<f64>; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.fc_w,
            &self.fc_b,
        ]
    }

    fn segments_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc_w,
            &mut self.fc_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.segments().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments().into_iter().flat_map(|s| s.iter().copied())
    }

    fn slot(&mut self, mut index: usize) -> &mut f64 {
        for seg in self.segments_mut() {
            if index < seg.len() {
                return &mut seg[index];
            }
            index -= seg.len();
        }
        panic!("parameter index out of range");
    }

    pub fn get(&self, index: usize) -> f64 {
        self.iter().nth(index).expect("parameter index out of range")
    }

    pub fn set(&mut self, index: usize, value: f64) {
        *self.slot(index) = value;
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.segments()
            .iter()
            .zip(other.segments())
            .all(|(a, b)| a.len() == b.len())
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.segments_mut().into_iter().zip(other.segments()) {
            a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += y);
        }
    }
}

pub type Gradients = Params;

#[derive(Debug, Clone, PartialEq)]
pub struct CnnNetwork {
    pub params: Params,
}

impl CnnNetwork {
    pub fn zeros() -> Self {
        Self {
            params: Params::zeros(),
        }
    }

    /// Uniform init in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::zeros();
        let mut fill = |v: &mut Vec<f64>, fan_in: usize, fan_out: usize| {
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            v.iter_mut().for_each(|w| *w = rng.random_range(-r..r));
        };
        fill(&mut p.conv1_w, KK, CONV1_MAPS * KK);
        fill(&mut p.conv2_w, CONV1_MAPS * KK, CONV2_MAPS * KK);
        fill(&mut p.fc_w, FLAT_LEN, 1);
        Self { params: p }
    }

    /// Scale an 8-bit-range window into the `[0, 1]` input range.
    pub fn prepare_input(img: &GrayImage) -> GrayImage {
        img.map(|v| v / 255.0)
    }

    /// Detection score for a window in `[0, 255]`: output minus 0.5, so the
    /// sign agrees with the 0.5 decision threshold.
    pub fn score(&self, window: &GrayImage) -> Result<f64> {
        let input = Self::prepare_input(window);
        check_input(&input)?;
        Ok(forward_one(&self.params, input.data()).output - 0.5)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(NET_MAGIC);
        for d in layer_dims() {
            out.extend_from_slice(&d.to_le_bytes());
        }
        self.params
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != NET_MAGIC {
            return Err(Error::ModelFormat("missing DFKC magic".into()));
        }
        for expected in layer_dims() {
            let got = r.u32()?;
            if got != expected {
                return Err(Error::ModelFormat(format!(
                    "layer dimension {got}, expected {expected}"
                )));
            }
        }
        let mut params = Params::zeros();
        for seg in params.segments_mut() {
            *seg = r.f64s(seg.len())?;
        }
        if !r.is_empty() {
            return Err(Error::ModelFormat("trailing bytes".into()));
        }
        Ok(Self { params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// input side, kernel, conv1 maps, conv2 maps, fc inputs, outputs
fn layer_dims() -> [u32; 6] {
    [
        INPUT_SIDE as u32,
        KERNEL as u32,
        CONV1_MAPS as u32,
        CONV2_MAPS as u32,
        FLAT_LEN as u32,
        1,
    ]
}

/// Activations of one sample.
#[derive(Debug, Clone)]
pub struct SampleCache {
    pub input: Vec<f64>,
    pub conv1_pre: Vec<f64>,
    pub conv1_act: Vec<f64>,
    pub pool1: Vec<f64>,
    /// Flat index into `conv1_act` of each pooled maximum.
    pub pool1_argmax: Vec<usize>,
    pub conv2_pre: Vec<f64>,
    pub conv2_act: Vec<f64>,
    pub pool2: Vec<f64>,
    pub pool2_argmax: Vec<usize>,
    pub fc_pre: f64,
    pub output: f64,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub samples: Vec<SampleCache>,
}

fn check_input(img: &GrayImage) -> Result<()> {
    if img.dims() != (INPUT_SIDE, INPUT_SIDE) {
        return Err(Error::Dimension(format!(
            "network input must be {INPUT_SIDE}x{INPUT_SIDE}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

fn max_pool(input: &[f64], maps: usize, side: usize) -> (Vec<f64>, Vec<usize>) {
    let out_side = side / 2;
    let mut out = Vec::with_capacity(maps * out_side * out_side);
    let mut arg = Vec::with_capacity(out.capacity());
    for m in 0..maps {
        for y in 0..out_side {
            for x in 0..out_side {
                let mut best = usize::MAX;
                let mut best_v = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = m * side * side + (2 * y + dy) * side + 2 * x + dx;
                        if input[i] > best_v {
                            best_v = input[i];
                            best = i;
                        }
                    }
                }
                out.push(best_v);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Pool routing of one sample: the argmax indices of both pool layers.
type Routing<'a> = (&'a [usize], &'a [usize]);

fn pool_routed(input: &[f64], argmax: &[usize]) -> (Vec<f64>, Vec<usize>) {
    (argmax.iter().map(|&i| input[i]).collect(), argmax.to_vec())
}

fn forward_one(p: &Params, input: &[f64]) -> SampleCache {
    forward_routed(p, input, None)
}

/// Forward pass; with `routing` the pools read the given positions instead
/// of taking their block maxima.
fn forward_routed(p: &Params, input: &[f64], routing: Option<Routing>) -> SampleCache {
    let mut conv1_pre = vec![0.0; CONV1_MAPS * CONV1_SIDE * CONV1_SIDE];
    for k in 0..CONV1_MAPS {
        let w = &p.conv1_w[k * KK..(k + 1) * KK];
        for y in 0..CONV1_SIDE {
            for x in 0..CONV1_SIDE {
                let mut acc = p.conv1_b[k];
                for v in 0..KERNEL {
                    let row = &input[(y + v) * INPUT_SIDE + x..];
                    for u in 0..KERNEL {
                        acc += w[v * KERNEL + u] * row[u];
                    }
                }
                conv1_pre[(k * CONV1_SIDE + y) * CONV1_SIDE + x] = acc;
            }
        }
    }
    let conv1_act: Vec<f64> = conv1_pre.iter().map(|&z| sigmoid(z)).collect();
    let (pool1, pool1_argmax) = match routing {
        Some((r1, _)) => pool_routed(&conv1_act, r1),
        None => max_pool(&conv1_act, CONV1_MAPS, CONV1_SIDE),
    };

    let mut conv2_pre = vec![0.0; CONV2_MAPS * CONV2_SIDE * CONV2_SIDE];
    for m in 0..CONV2_MAPS {
        for y in 0..CONV2_SIDE {
            for x in 0..CONV2_SIDE {
                let mut acc = p.conv2_b[m];
                for k in 0..CONV1_MAPS {
                    let w = &p.conv2_w[(m * CONV1_MAPS + k) * KK..][..KK];
                    let map = &pool1[k * POOL1_SIDE * POOL1_SIDE..];
                    for v in 0..KERNEL {
                        let row = &map[(y + v) * POOL1_SIDE + x..];
                        for u in 0..KERNEL {
                            acc += w[v * KERNEL + u] * row[u];
                        }
                    }
                }
                conv2_pre[(m * CONV2_SIDE + y) * CONV2_SIDE + x] = acc;
            }
        }
    }
    let conv2_act: Vec<f64> = conv2_pre.iter().map(|&z| sigmoid(z)).collect();
    let (pool2, pool2_argmax) = match routing {
        Some((_, r2)) => pool_routed(&conv2_act, r2),
        None => max_pool(&conv2_act, CONV2_MAPS, CONV2_SIDE),
    };

    let fc_pre = p.fc_b[0] + p.fc_w.iter().zip(&pool2).map(|(w, a)| w * a).sum::<f64>();
    SampleCache {
        input: input.to_vec(),
        conv1_pre,
        conv1_act,
        pool1,
        pool1_argmax,
        conv2_pre,
        conv2_act,
        pool2,
        pool2_argmax,
        fc_pre,
        output: sigmoid(fc_pre),
    }
}

/// Inputs must already be scaled to `[0, 1]` (see [`CnnNetwork::prepare_input`]).
pub fn forward(
    net: &CnnNetwork,
    batch: &[GrayImage],
    keep_cache: bool,
) -> Result<(Vec<f64>, Option<ForwardCache>)> {
    batch.iter().try_for_each(check_input)?;
    let samples: Vec<SampleCache> = batch
        .par_iter()
        .map(|img| forward_one(&net.params, img.data()))
        .collect();
    let outputs = samples.iter().map(|s| s.output).collect();
    Ok((outputs, keep_cache.then_some(ForwardCache { samples })))
}

pub fn mse(outputs: &[f64], targets: &[f64]) -> f64 {
    let n = outputs.len().max(1) as f64;
    outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| (o - t) * (o - t))
        .sum::<f64>()
        / n
}

/// Route each pooled delta to the position that won the max.
fn unpool(delta: &[f64], argmax: &[usize], source_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; source_len];
    for (d, &i) in delta.iter().zip(argmax) {
        out[i] += d;
    }
    out
}

fn backward_one(p: &Params, s: &SampleCache, d_output: f64) -> Gradients {
    let mut g = Params::zeros();

    let delta_fc = d_output * s.output * (1.0 - s.output);
    for (gw, a) in g.fc_w.iter_mut().zip(&s.pool2) {
        *gw = delta_fc * a;
    }
    g.fc_b[0] = delta_fc;

    let d_pool2: Vec<f64> = p.fc_w.iter().map(|w| w * delta_fc).collect();
    let d_act2 = unpool(&d_pool2, &s.pool2_argmax, s.conv2_act.len());
    let delta2: Vec<f64> = d_act2
        .iter()
        .zip(&s.conv2_act)
        .map(|(d, a)| d * a * (1.0 - a))
        .collect();

    let mut d_pool1 = vec![0.0; s.pool1.len()];
    for m in 0..CONV2_MAPS {
        let dmap = &delta2[m * CONV2_SIDE * CONV2_SIDE..][..CONV2_SIDE * CONV2_SIDE];
        g.conv2_b[m] = dmap.iter().sum();
        for k in 0..CONV1_MAPS {
            let woff = (m * CONV1_MAPS + k) * KK;
            let moff = k * POOL1_SIDE * POOL1_SIDE;
            for v in 0..KERNEL {
                for u in 0..KERNEL {
                    let w = p.conv2_w[woff + v * KERNEL + u];
                    let mut acc = 0.0;
                    for y in 0..CONV2_SIDE {
                        for x in 0..CONV2_SIDE {
                            let d = dmap[y * CONV2_SIDE + x];
                            let idx = moff + (y + v) * POOL1_SIDE + x + u;
                            acc += d * s.pool1[idx];
                            d_pool1[idx] += w * d;
                        }
                    }
                    g.conv2_w[woff + v * KERNEL + u] = acc;
                }
            }
        }
    }

    let d_act1 = unpool(&d_pool1, &s.pool1_argmax, s.conv1_act.len());
    for k in 0..CONV1_MAPS {
        let off = k * CONV1_SIDE * CONV1_SIDE;
        let delta1: Vec<f64> = (0..CONV1_SIDE * CONV1_SIDE)
            .map(|i| {
                let a = s.conv1_act[off + i];
                d_act1[off + i] * a * (1.0 - a)
            })
            .collect();
        g.conv1_b[k] = delta1.iter().sum();
        for v in 0..KERNEL {
            for u in 0..KERNEL {
                let mut acc = 0.0;
                for y in 0..CONV1_SIDE {
                    for x in 0..CONV1_SIDE {
                        acc += delta1[y * CONV1_SIDE + x] * s.input[(y + v) * INPUT_SIDE + x + u];
                    }
                }
                g.conv1_w[k * KK + v * KERNEL + u] = acc;
            }
        }
    }
    g
}

/// Gradients of the batch MSE `(1/n) sum (out - target)^2`.
pub fn backward(
    net: &CnnNetwork,
    cache: Option<&ForwardCache>,
    targets: &[f64],
) -> Result<Gradients> {
    let cache =
        cache.ok_or_else(|| Error::State("backward needs a cache from forward(keep_cache)".into()))?;
    if cache.samples.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} cached samples, {} targets",
            cache.samples.len(),
            targets.len()
        )));
    }
    let n = targets.len().max(1) as f64;
    let per_sample: Vec<Gradients> = cache
        .samples
        .par_iter()
        .zip(targets)
        .map(|(s, t)| backward_one(&net.params, s, 2.0 * (s.output - t) / n))
        .collect();
    // Sequential reduction keeps the sum order fixed.
    let mut total = Params::zeros();
    for g in &per_sample {
        total.add_assign(g);
    }
    Ok(total)
}

/// `w <- w - alpha * dE/dw` for every parameter.
pub fn sgd_step(net: &CnnNetwork, grads: &Gradients, alpha: f64) -> Result<CnnNetwork> {
    if !net.params.same_shape(grads) {
        return Err(Error::Dimension("gradient shape does not match network".into()));
    }
    let mut out = net.clone();
    for (w, g) in out.params.segments_mut().into_iter().zip(grads.segments()) {
        w.iter_mut().zip(g.iter()).for_each(|(w, g)| *w -= alpha * g);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            epochs: 100,
            learning_rate: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Parameter(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AugmentPolicy {
    pub flip_y: bool,
    pub center_crop: Option<usize>,
}

pub fn center_crop(img: &GrayImage, side: usize) -> Result<GrayImage> {
    if side == 0 || side > img.width() || side > img.height() {
        return Err(Error::Parameter(format!(
            "crop side {side} does not fit {}x{}",
            img.width(),
            img.height()
        )));
    }
    img.crop((img.width() - side) / 2, (img.height() - side) / 2, side, side)
}

/// Crop (if configured) every image, then append the mirrored copies.
pub fn augment(images: &[GrayImage], policy: &AugmentPolicy) -> Result<Vec<GrayImage>> {
    let mut out = match policy.center_crop {
        Some(side) => images
            .iter()
            .map(|img| center_crop(img, side))
            .collect::<Result<Vec<_>>>()?,
        None => images.to_vec(),
    };
    if policy.flip_y {
        let mirrored: Vec<GrayImage> = out.iter().map(GrayImage::flip_horizontal).collect();
        out.extend(mirrored);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub samples_used: usize,
}

/// Mini-batch SGD over `[0, 255]` patches labelled joint (`true`) or not.
pub fn train(
    net: &CnnNetwork,
    samples: &[(GrayImage, bool)],
    cfg: &TrainConfig,
    policy: &AugmentPolicy,
) -> Result<(CnnNetwork, TrainReport)> {
    cfg.validate()?;
    let positives = samples.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::DegenerateTraining(format!(
            "need both classes, got {positives} joints of {}",
            samples.len()
        )));
    }
    let images: Vec<GrayImage> = samples.iter().map(|(i, _)| i.clone()).collect();
    let mut labels: Vec<f64> = samples.iter().map(|(_, y)| *y as u8 as f64).collect();
    let augmented = augment(&images, policy)?;
    if policy.flip_y {
        labels.extend_from_within(..);
    }
    let inputs: Vec<GrayImage> = augmented
        .iter()
        .map(|img| {
            let sized = if img.dims() == (INPUT_SIDE, INPUT_SIDE) {
                img.clone()
            } else {
                resize_bilinear(img, INPUT_SIDE, INPUT_SIDE)?
            };
            Ok(CnnNetwork::prepare_input(&sized))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let batch = cfg.batch_size.min(inputs.len());
    let mut net = net.clone();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            let xs: Vec<GrayImage> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let ts: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            let (out, cache) = forward(&net, &xs, true)?;
            loss_sum += mse(&out, &ts) * chunk.len() as f64;
            let grads = backward(&net, cache.as_ref(), &ts)?;
            net = sgd_step(&net, &grads, cfg.learning_rate)?;
        }
        epoch_loss.push(loss_sum / inputs.len() as f64);
    }
    Ok((
        net,
        TrainReport {
            epoch_loss,
            samples_used: inputs.len(),
        },
    ))
}

fn batch_loss(params: &Params, batch: &[GrayImage], targets: &[f64], routing: &[Routing]) -> f64 {
    let outputs: Vec<f64> = batch
        .iter()
        .zip(routing)
        .map(|(img, &r)| forward_routed(params, img.data(), Some(r)).output)
        .collect();
    mse(&outputs, targets)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    /// Probes whose +-h step changes a max-pool winner. The finite
    /// difference for those is taken on the unperturbed routing.
    pub kinked_probes: usize,
}

/// Central-difference check of `probes` randomly chosen parameters against
/// the analytic gradient on the given batch. The relative error of a probe is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
///
/// Max pooling is piecewise smooth: the analytic gradient is the derivative
/// of the branch selected by the current pool winners, so the perturbed
/// losses are evaluated with those winners held fixed. Where no winner
/// changes this is the plain network loss.
pub fn gradient_check_on(
    net: &CnnNetwork,
    batch: &[GrayImage],
    targets: &[f64],
    probes: usize,
    h: f64,
    seed: u64,
) -> Result<GradientCheck> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::Parameter(format!("step {h} outside [1e-7, 1e-3]")));
    }
    if probes == 0 {
        return Ok(GradientCheck {
            max_rel_error: 0.0,
            kinked_probes: 0,
        });
    }
    let (_, cache) = forward(net, batch, true)?;
    let cache = cache.expect("cache requested");
    let analytic: Vec<f64> = backward(net, Some(&cache), targets)?.iter().collect();
    let routing: Vec<Routing> = cache
        .samples
        .iter()
        .map(|s| (s.pool1_argmax.as_slice(), s.pool2_argmax.as_slice()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = analytic.len();
    let indices: Vec<usize> = (0..probes).map(|_| rng.random_range(0..count)).collect();
    let results: Vec<(f64, bool)> = indices
        .par_iter()
        .map(|&i| {
            let mut p = net.params.clone();
            let w = p.get(i);
            let mut kinked = false;
            let mut loss_at = |p: &Params| {
                kinked |= batch.iter().zip(&cache.samples).any(|(img, s)| {
                    let free = forward_one(p, img.data());
                    free.pool1_argmax != s.pool1_argmax || free.pool2_argmax != s.pool2_argmax
                });
                batch_loss(p, batch, targets, &routing)
            };
            p.set(i, w + h);
            let plus = loss_at(&p);
            p.set(i, w - h);
            let minus = loss_at(&p);
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            (err, kinked)
        })
        .collect();
    Ok(GradientCheck {
        max_rel_error: results.iter().map(|r| r.0).fold(0.0, f64::max),
        kinked_probes: results.iter().filter(|r| r.1).count(),
    })
}

/// [`gradient_check_on`] with a seeded batch of four random inputs and
/// binary targets.
pub fn gradient_check_report(
    net: &CnnNetwork,
    probes: usize,
    h: f64,
    seed: u64,
) -> Result<GradientCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let batch: Vec<GrayImage> = (0..4)
        .map(|_| GrayImage::from_fn(INPUT_SIDE, INPUT_SIDE, |_, _| rng.random::<f64>()))
        .collect();
    let targets: Vec<f64> = (0..4).map(|i| (i % 2) as f64).collect();
    gradient_check_on(net, &batch, &targets, probes, h, seed)
}

/// Largest relative error of [`gradient_check_report`].
pub fn gradient_check(net: &CnnNetwork, probes: usize, h: f64, seed: u64) -> Result<f64> {
    Ok(gradient_check_report(net, probes, h, seed)?.max_rel_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_fixed_point() {
        let net = CnnNetwork::zeros();
        let (out, cache) = forward(&net, &[GrayImage::new(32, 32)], true).unwrap();
        assert_eq!(out, vec![0.5]);
        let s = &cache.unwrap().samples[0];
        assert!(s.conv1_pre.iter().all(|&z| z == 0.0));
        assert!(s.conv1_act.iter().all(|&a| a == 0.5));
        assert!(s.pool2.iter().all(|&a| a == 0.5));
        assert_eq!(s.pool2.len(), FLAT_LEN);
    }

    #[test]
    fn shape_chain() {
        assert_eq!(
            (CONV1_SIDE, POOL1_SIDE, CONV2_SIDE, POOL2_SIDE, FLAT_LEN),
            (28, 14, 10, 5, 300)
        );
        let p = Params::zeros();
        assert_eq!(p.len(), 150 + 6 + 1800 + 12 + 300 + 1);
    }

    #[test]
    fn impulse_filter_passes_constant_through() {
        let mut net = CnnNetwork::zeros();
        net.params.conv1_w[2 * KERNEL + 2] = 1.0;
        let input = GrayImage::filled(32, 32, 0.3);
        let (_, cache) = forward(&net, &[input], true).unwrap();
        let s = &cache.unwrap().samples[0];
        assert!(s.conv1_pre[..CONV1_SIDE * CONV1_SIDE]
            .iter()
            .all(|&z| (z - 0.3).abs() < 1e-15));
    }

    #[test]
    fn wrong_input_size() {
        assert!(matches!(
            forward(&CnnNetwork::zeros(), &[GrayImage::new(30, 32)], false),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn backward_needs_cache() {
        assert!(matches!(
            backward(&CnnNetwork::zeros(), None, &[1.0]),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let net = CnnNetwork::random(5);
        let batch = vec![GrayImage::filled(32, 32, 0.2), GrayImage::filled(32, 32, 0.7)];
        let (out, cache) = forward(&net, &batch, true).unwrap();
        let g = backward(&net, cache.as_ref(), &out).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn sgd_arithmetic() {
        let net = CnnNetwork::random(1);
        assert_eq!(sgd_step(&net, &Params::zeros(), 0.7).unwrap(), net);
        let mut g = Params::zeros();
        g.fc_b[0] = 2.0;
        assert_eq!(sgd_step(&net, &g, 0.0).unwrap(), net);
        let mut one = CnnNetwork::zeros();
        one.params.fc_b[0] = 1.0;
        let stepped = sgd_step(&one, &g, 0.1).unwrap();
        assert!((stepped.params.fc_b[0] - 0.8).abs() < 1e-15);
        let mut bad = Params::zeros();
        bad.fc_w.pop();
        assert!(sgd_step(&net, &bad, 0.1).is_err());
    }

    #[test]
    fn augmentation_rules() {
        let sym = GrayImage::from_fn(4, 2, |x, _| [1.0, 2.0, 2.0, 1.0][x]);
        let out = augment(
            &[sym.clone()],
            &AugmentPolicy {
                flip_y: true,
                center_crop: None,
            },
        )
        .unwrap();
        assert_eq!(out, vec![sym.clone(), sym]);

        let ab = GrayImage::from_vec(2, 1, vec![3.0, 8.0]).unwrap();
        assert_eq!(ab.flip_horizontal().data(), &[8.0, 3.0]);

        let big = GrayImage::from_fn(32, 32, |x, y| (y * 32 + x) as f64);
        let cropped = center_crop(&big, 27).unwrap();
        assert_eq!(cropped.dims(), (27, 27));
        assert_eq!(cropped.get(0, 0), big.get(2, 2));
        assert!(center_crop(&big, 33).is_err());
    }

    #[test]
    fn gradient_check_conventions() {
        let net = CnnNetwork::random(2);
        assert_eq!(gradient_check(&net, 0, 1e-5, 0).unwrap(), 0.0);
        assert!(gradient_check(&net, 3, 1.0, 0).is_err());

        // Saturated output equal to the target: every residual is zero and
        // stays zero under +-h perturbations.
        let mut saturated = CnnNetwork::random(3);
        saturated.params.fc_b[0] = 100.0;
        let batch = vec![GrayImage::filled(32, 32, 0.4)];
        let err = gradient_check_on(&saturated, &batch, &[1.0], 50, 1e-5, 1).unwrap();
        assert!(err.max_rel_error <= 1e-8);
    }

    #[test]
    fn network_bytes_round_trip() {
        let net = CnnNetwork::random(11);
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..4], b"DFKC");
        assert_eq!(CnnNetwork::from_bytes(&bytes).unwrap(), net);
        assert!(CnnNetwork::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
