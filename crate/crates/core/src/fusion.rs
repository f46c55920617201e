//! MAP reconstruction of the occluded reference frame.
//!
//! Each registered observation contributes a squared-error data cost at the
//! pixels where it sees the background; a linear smoothness cost
//! `lambda * |f_p - f_q|` couples 4-connected neighbours. Min-sum loopy belief
//! propagation minimizes the resulting energy. Messages are computed with the
//! two-pass lower-envelope recurrence, which is exact for the linear cost and
//! `O(L)` per message instead of `O(L^2)`.
//!
//! Visibility masks passed to [`build_data_cost`] use 1 = visible. Fence masks
//! passed to [`defence`] use 1 = fence; the inversion happens there.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::classifier::ByteReader;
use crate::error::{Error, Result};
use crate::imagecore::{warp_affine, warp_mask, BinaryMask, GrayImage, Sampling};
use crate::motion::AffineTransform;

const COST_MAGIC: &[u8; 4] = b"DFKD";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Every message recomputed from the previous sweep's messages.
    Synchronous,
    /// Red-black half sweeps; the second half already sees the first half's updates.
    Checkerboard,
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synchronous" => Ok(Self::Synchronous),
            "checkerboard" => Ok(Self::Checkerboard),
            _ => Err(Error::Parameter(format!("unknown schedule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub lambda: f64,
    pub labels: usize,
    pub iterations: usize,
    pub schedule: Schedule,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            labels: 256,
            iterations: 40,
            schedule: Schedule::Checkerboard,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.labels < 2 {
            return Err(Error::Parameter(format!("need at least 2 labels, got {}", self.labels)));
        }
        if self.iterations == 0 {
            return Err(Error::Parameter("need at least one iteration".into()));
        }
        Ok(())
    }
}

/// Per-pixel data-cost vectors `D_p(f)`, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostField {
    width: usize,
    height: usize,
    labels: usize,
    costs: Vec<f64>,
    observations: Vec<u32>,
}

impl CostField {
    pub fn zeros(width: usize, height: usize, labels: usize) -> Self {
        Self {
            width,
            height,
            labels,
            costs: vec![0.0; width * height * labels],
            observations: vec![0; width * height],
        }
    }

    pub fn from_costs(width: usize, height: usize, labels: usize, costs: Vec<f64>) -> Result<Self> {
        if labels == 0 || costs.len() != width * height * labels {
            return Err(Error::Dimension(format!(
                "{} costs for {width}x{height} pixels with {labels} labels",
                costs.len()
            )));
        }
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Parameter("costs must be finite and non-negative".into()));
        }
        Ok(Self {
            width,
            height,
            labels,
            costs,
            observations: vec![0; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn cost(&self, p: usize) -> &[f64] {
        &self.costs[p * self.labels..(p + 1) * self.labels]
    }

    pub fn cost_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.costs[p * self.labels..(p + 1) * self.labels]
    }

    pub fn observations(&self) -> &[u32] {
        &self.observations
    }

    /// `DFKD`, then width, height, labels as little-endian u32, then each
    /// pixel's cost vector as little-endian f64, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.costs.len() * 8);
        out.extend_from_slice(COST_MAGIC);
        for d in [self.width, self.height, self.labels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        self.costs
            .iter()
            .for_each(|c| out.extend_from_slice(&c.to_le_bytes()));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != COST_MAGIC {
            return Err(Error::ModelFormat("missing DFKD magic".into()));
        }
        let (w, h, l) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let costs = r.f64s(w * h * l)?;
        if !r.is_empty() {
            return Err(Error::ModelFormat("trailing bytes".into()));
        }
        Self::from_costs(w, h, l, costs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<usize>,
}

impl Labeling {
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            self.labels[y * self.width + x] as f64
        })
    }
}

/// `D_p(f) = sum_m v_m(p) (f - y_m(p))^2`; unobserved pixels get all zeros.
pub fn build_data_cost(
    frames: &[GrayImage],
    visibility: &[BinaryMask],
    labels: usize,
) -> Result<CostField> {
    if frames.is_empty() || frames.len() != visibility.len() {
        return Err(Error::Dimension(format!(
            "{} frames and {} visibility masks",
            frames.len(),
            visibility.len()
        )));
    }
    let dims = frames[0].dims();
    if frames.iter().any(|f| f.dims() != dims) || visibility.iter().any(|v| v.dims() != dims) {
        return Err(Error::Dimension("frames and masks must share dimensions".into()));
    }
    let (w, h) = dims;
    let mut field = CostField::zeros(w, h, labels);
    field
        .costs
        .par_chunks_mut(labels)
        .zip(field.observations.par_iter_mut())
        .enumerate()
        .for_each(|(p, (cost, count))| {
            let (x, y) = (p % w, p / w);
            for (frame, vis) in frames.iter().zip(visibility) {
                if vis.get(x, y) {
                    let obs = frame.get(x, y);
                    for (f, c) in cost.iter_mut().enumerate() {
                        let d = f as f64 - obs;
                        *c += d * d;
                    }
                    *count += 1;
                }
            }
        });
    Ok(field)
}

#[inline]
pub fn smoothness_cost(fp: usize, fq: usize, lambda: f64) -> f64 {
    lambda * (fp as f64 - fq as f64).abs()
}

fn normalize(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::INFINITY, f64::min);
    v.iter_mut().for_each(|x| *x -= m);
}

fn message_base(incoming: &[&[f64]], d_p: &[f64]) -> Vec<f64> {
    let mut base = d_p.to_vec();
    for m in incoming {
        base.iter_mut().zip(m.iter()).for_each(|(b, v)| *b += v);
    }
    base
}

/// `out(f_q) = min_{f_p} [lambda |f_p - f_q| + D_p(f_p) + sum incoming(f_p)]`,
/// normalized to minimum zero. Quadratic in the label count.
pub fn message_update_naive(incoming: &[&[f64]], d_p: &[f64], lambda: f64) -> Vec<f64> {
    let base = message_base(incoming, d_p);
    let mut out: Vec<f64> = (0..base.len())
        .map(|fq| {
            base.iter()
                .enumerate()
                .map(|(fp, b)| b + smoothness_cost(fp, fq, lambda))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    normalize(&mut out);
    out
}

/// Same result as [`message_update_naive`] in linear time.
pub fn message_update_dt(incoming: &[&[f64]], d_p: &[f64], lambda: f64) -> Vec<f64> {
    let base = message_base(incoming, d_p);
    let mut out = vec![0.0; base.len()];
    lower_envelope(&base, lambda, &mut out);
    normalize(&mut out);
    out
}

/// `out(f) = min_s base(s) + lambda |f - s|`. Each pass tracks the winning
/// source label and evaluates `base(s) + lambda * |f - s|` directly, so every
/// value is bit-identical to a term of the naive minimum.
fn lower_envelope(base: &[f64], lambda: f64, out: &mut [f64]) {
    let n = base.len();
    if n == 0 {
        return;
    }
    let mut src = 0;
    out[0] = base[0];
    for f in 1..n {
        let carried = base[src] + lambda * (f - src) as f64;
        if base[f] <= carried {
            src = f;
            out[f] = base[f];
        } else {
            out[f] = carried;
        }
    }
    src = n - 1;
    for f in (0..n - 1).rev() {
        let carried = base[src] + lambda * (src - f) as f64;
        let right = if base[f] <= carried {
            src = f;
            base[f]
        } else {
            carried
        };
        if right < out[f] {
            out[f] = right;
        }
    }
}

// Direction of the neighbour a message slot was received from.
const LEFT: usize = 0;
const RIGHT: usize = 1;
const UP: usize = 2;
const DOWN: usize = 3;

#[inline]
fn opposite(d: usize) -> usize {
    d ^ 1
}

#[inline]
fn neighbor(x: usize, y: usize, w: usize, h: usize, d: usize) -> Option<usize> {
    match d {
        LEFT if x > 0 => Some(y * w + x - 1),
        RIGHT if x + 1 < w => Some(y * w + x + 1),
        UP if y > 0 => Some((y - 1) * w + x),
        DOWN if y + 1 < h => Some((y + 1) * w + x),
        _ => None,
    }
}

/// Message slots: `msgs[(q * 4 + d) * L + f]` is what `q` last received from
/// its neighbour in direction `d`.
fn update_receivers(
    costs: &CostField,
    lambda: f64,
    old: &[f64],
    msgs: &mut [f64],
    select: impl Fn(usize, usize) -> bool + Sync,
) {
    let (w, h, l) = (costs.width, costs.height, costs.labels);
    msgs.par_chunks_mut(4 * l).enumerate().for_each(|(q, slots)| {
        let (x, y) = (q % w, q / w);
        if !select(x, y) {
            return;
        }
        let mut base = vec![0.0; l];
        for d in 0..4 {
            let Some(p) = neighbor(x, y, w, h, d) else {
                continue;
            };
            // p sends to q; exclude what p received from q.
            let back = opposite(d);
            base.copy_from_slice(costs.cost(p));
            for e in (0..4).filter(|&e| e != back) {
                let m = &old[(p * 4 + e) * l..(p * 4 + e + 1) * l];
                base.iter_mut().zip(m).for_each(|(b, v)| *b += v);
            }
            let out = &mut slots[d * l..(d + 1) * l];
            lower_envelope(&base, lambda, out);
            normalize(out);
        }
    });
}

#[derive(Debug, Clone)]
pub struct LbpResult {
    pub labeling: Labeling,
    /// `belief_q(f)`, pixel-major.
    pub beliefs: Vec<f64>,
    pub messages: Vec<f64>,
}

/// Min-sum loopy BP from all-zero messages; labels are per-pixel belief
/// argmins with ties to the lowest label.
pub fn lbp_run(costs: &CostField, params: &EnergyParams) -> Result<LbpResult> {
    params.validate()?;
    if params.labels != costs.labels {
        return Err(Error::Dimension(format!(
            "cost field has {} labels, parameters say {}",
            costs.labels, params.labels
        )));
    }
    if costs.costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Parameter("non-finite data cost".into()));
    }
    let (w, h, l) = (costs.width, costs.height, costs.labels);
    let mut msgs = vec![0.0; w * h * 4 * l];
    for _ in 0..params.iterations {
        match params.schedule {
            Schedule::Synchronous => {
                let old = msgs.clone();
                update_receivers(costs, params.lambda, &old, &mut msgs, |_, _| true);
            }
            Schedule::Checkerboard => {
                for color in 0..2 {
                    let old = msgs.clone();
                    update_receivers(costs, params.lambda, &old, &mut msgs, |x, y| {
                        (x + y) % 2 == color
                    });
                }
            }
        }
    }
    let mut beliefs = costs.costs.clone();
    beliefs
        .par_chunks_mut(l)
        .zip(msgs.par_chunks(4 * l))
        .for_each(|(b, m)| {
            for d in 0..4 {
                b.iter_mut()
                    .zip(&m[d * l..(d + 1) * l])
                    .for_each(|(x, v)| *x += v);
            }
        });
    let labels = beliefs.chunks(l).map(argmin).collect();
    Ok(LbpResult {
        labeling: Labeling {
            width: w,
            height: h,
            labels,
        },
        beliefs,
        messages: msgs,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Data cost plus `lambda |f_p - f_q|` over each 4-connected pair once.
pub fn energy(labeling: &Labeling, costs: &CostField, lambda: f64) -> Result<f64> {
    if (labeling.width, labeling.height) != (costs.width, costs.height)
        || labeling.labels.len() != costs.pixels()
    {
        return Err(Error::Dimension("labeling does not match cost field".into()));
    }
    if let Some(&bad) = labeling.labels.iter().find(|&&f| f >= costs.labels) {
        return Err(Error::Parameter(format!("label {bad} out of range")));
    }
    Ok(energy_unchecked(&labeling.labels, costs, lambda))
}

fn energy_unchecked(labels: &[usize], costs: &CostField, lambda: f64) -> f64 {
    let (w, h) = (costs.width, costs.height);
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            e += costs.cost(p)[labels[p]];
            if x + 1 < w {
                e += smoothness_cost(labels[p], labels[p + 1], lambda);
            }
            if y + 1 < h {
                e += smoothness_cost(labels[p], labels[p + w], lambda);
            }
        }
    }
    e
}

/// Pixelwise argmin of the data cost alone.
pub fn data_only_labeling(costs: &CostField) -> Labeling {
    Labeling {
        width: costs.width,
        height: costs.height,
        labels: costs.costs.chunks(costs.labels).map(argmin).collect(),
    }
}

/// Largest exhaustive search, in bits of labeling space.
pub const BRUTE_FORCE_BITS: f64 = 20.0;

/// Exact MAP: dynamic programming on 1xN / Nx1 chains, exhaustive enumeration
/// otherwise. Ties resolve to the lexicographically smallest labeling.
pub fn brute_force_map(costs: &CostField, lambda: f64) -> Result<Labeling> {
    if costs.width == 1 || costs.height == 1 {
        chain_map(costs, lambda)
    } else {
        exhaustive_map(costs, lambda)
    }
}

pub fn exhaustive_map(costs: &CostField, lambda: f64) -> Result<Labeling> {
    let n = costs.pixels();
    let l = costs.labels;
    let bits = n as f64 * (l as f64).log2();
    if bits > BRUTE_FORCE_BITS + 1e-9 {
        return Err(Error::Capacity(format!(
            "{n} pixels x {l} labels is {bits:.1} bits, limit {BRUTE_FORCE_BITS}"
        )));
    }
    let mut current = vec![0usize; n];
    let mut best = current.clone();
    let mut best_e = energy_unchecked(&current, costs, lambda);
    // Odometer with the last pixel fastest: lexicographic order.
    'outer: loop {
        let mut i = n;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            current[i] += 1;
            if current[i] < l {
                break;
            }
            current[i] = 0;
        }
        let e = energy_unchecked(&current, costs, lambda);
        if e < best_e {
            best_e = e;
            best.copy_from_slice(&current);
        }
    }
    Ok(Labeling {
        width: costs.width,
        height: costs.height,
        labels: best,
    })
}

/// Viterbi on a chain with backward cost-to-go and a forward lowest-label
/// decode.
pub fn chain_map(costs: &CostField, lambda: f64) -> Result<Labeling> {
    if costs.width != 1 && costs.height != 1 {
        return Err(Error::Dimension("chain_map needs a 1xN or Nx1 field".into()));
    }
    let n = costs.pixels();
    let l = costs.labels;
    let mut to_go = vec![vec![0.0; l]; n];
    to_go[n - 1].copy_from_slice(costs.cost(n - 1));
    for i in (0..n - 1).rev() {
        for f in 0..l {
            let best = (0..l)
                .map(|g| smoothness_cost(f, g, lambda) + to_go[i + 1][g])
                .fold(f64::INFINITY, f64::min);
            to_go[i][f] = costs.cost(i)[f] + best;
        }
    }
    let mut labels = Vec::with_capacity(n);
    labels.push(argmin(&to_go[0]));
    for i in 1..n {
        let prev = labels[i - 1];
        let scores: Vec<f64> = (0..l)
            .map(|g| smoothness_cost(prev, g, lambda) + to_go[i][g])
            .collect();
        labels.push(argmin(&scores));
    }
    Ok(Labeling {
        width: costs.width,
        height: costs.height,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelabelMode {
    /// Every pixel of the reference frame is re-estimated.
    #[default]
    All,
    /// Pixels visible in the reference frame keep their (rounded) observed value.
    OccludedOnly,
}

impl FromStr for RelabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "occluded" => Ok(Self::OccludedOnly),
            _ => Err(Error::Parameter(format!("unknown relabel mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DefenceOutput {
    pub image: GrayImage,
    pub labeling: Labeling,
    pub costs: CostField,
    /// Energy of the pixelwise data-only labeling.
    pub energy_before: f64,
    pub energy_after: f64,
}

/// Warp every frame and its visibility into reference coordinates, build the
/// data cost, and run LBP. `transforms[m]` maps frame `m` into the reference
/// frame; `fence_masks` use 1 = fence.
pub fn defence(
    frames: &[GrayImage],
    fence_masks: &[BinaryMask],
    transforms: &[AffineTransform],
    reference: usize,
    params: &EnergyParams,
    relabel: RelabelMode,
) -> Result<DefenceOutput> {
    params.validate()?;
    if frames.is_empty() {
        return Err(Error::Parameter("need at least one frame".into()));
    }
    if fence_masks.len() != frames.len() || transforms.len() != frames.len() {
        return Err(Error::Dimension(format!(
            "{} frames, {} masks, {} transforms",
            frames.len(),
            fence_masks.len(),
            transforms.len()
        )));
    }
    if reference >= frames.len() {
        return Err(Error::Parameter(format!(
            "reference index {reference} out of range for {} frames",
            frames.len()
        )));
    }
    let dims = frames[reference].dims();
    if frames.iter().any(|f| f.dims() != dims) || fence_masks.iter().any(|m| m.dims() != dims) {
        return Err(Error::Dimension("frames and masks must share dimensions".into()));
    }

    let mut warped = Vec::with_capacity(frames.len());
    let mut visible = Vec::with_capacity(frames.len());
    for ((frame, fence), t) in frames.iter().zip(fence_masks).zip(transforms) {
        let (img, invalid) = warp_affine(frame, t, Sampling::Bilinear)?;
        let blocked = warp_mask(fence, t)?.or(&invalid)?;
        warped.push(img);
        visible.push(blocked.inverted());
    }
    let mut costs = build_data_cost(&warped, &visible, params.labels)?;
    if costs.observations.iter().all(|&c| c == 0) {
        return Err(Error::DegenerateInput("no pixel is visible in any frame".into()));
    }
    if relabel == RelabelMode::OccludedOnly {
        // Larger than any possible spread of four normalized incoming messages.
        let penalty = 4.0 * params.lambda * (params.labels - 1) as f64 + 1.0;
        let (w, _) = dims;
        for p in 0..costs.pixels() {
            let (x, y) = (p % w, p / w);
            if visible[reference].get(x, y) {
                let keep = (warped[reference].get(x, y).round().max(0.0) as usize)
                    .min(params.labels - 1);
                for (f, c) in costs.cost_mut(p).iter_mut().enumerate() {
                    *c = if f == keep { 0.0 } else { penalty };
                }
            }
        }
    }
    let before = data_only_labeling(&costs);
    let energy_before = energy_unchecked(&before.labels, &costs, params.lambda);
    let result = lbp_run(&costs, params)?;
    let energy_after = energy_unchecked(&result.labeling.labels, &costs, params.lambda);
    Ok(DefenceOutput {
        image: result.labeling.to_image(),
        labeling: result.labeling,
        costs,
        energy_before,
        energy_after,
    })
}
