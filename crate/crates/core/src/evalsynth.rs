//! Quality metrics and a synthetic fenced-scene generator.
//!
//! Scenes follow the static-fence model: the background moves by a per-frame
//! integer shift while the fence stays put, so every frame's fence mask is
//! the same and the ground truth is known exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imagecore::{
    gaussian_kernel, load_gray, load_mask, save_gray, save_mask, separable_filter, BinaryMask,
    GrayImage,
};
use crate::lattice::{parse_detections, render_segments, JointDetection};
use crate::motion::AffineTransform;

/// Reported PSNR for identical images.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!(
            "{}x{} versus {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

pub fn rmse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_dims(a.dims(), b.dims())?;
    let n = a.data().len().max(1) as f64;
    let sq: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sq / n).sqrt())
}

/// RMSE restricted to pixels where `mask` is set.
pub fn masked_rmse(a: &GrayImage, b: &GrayImage, mask: &BinaryMask) -> Result<f64> {
    same_dims(a.dims(), b.dims())?;
    same_dims(a.dims(), mask.dims())?;
    let mut sq = 0.0;
    let mut n = 0usize;
    for ((x, y), m) in a.data().iter().zip(b.data()).zip(mask.data()) {
        if *m != 0 {
            sq += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::DegenerateInput("empty evaluation mask".into()));
    }
    Ok((sq / n as f64).sqrt())
}

/// `20 log10(255 / rmse)`, or [`PSNR_IDENTICAL`] when the images agree.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    Ok(psnr_from_rmse(rmse(a, b)?))
}

pub fn psnr_from_rmse(rmse: f64) -> f64 {
    if rmse == 0.0 {
        PSNR_IDENTICAL
    } else {
        20.0 * (255.0 / rmse).log10()
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Single-scale SSIM averaged over every position where the 11x11 Gaussian
/// window fits entirely inside the image.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {0}x{0}, got {w}x{h}",
            SSIM_WINDOW
        )));
    }
    let kernel = gaussian_kernel(SSIM_SIGMA)?;
    debug_assert_eq!(kernel.len(), SSIM_WINDOW);
    let product = |f: &dyn Fn(f64, f64) -> f64| {
        let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
        separable_filter(&GrayImage::from_vec(w, h, data).expect("finite"), &kernel)
    };
    let mu_a = separable_filter(a, &kernel);
    let mu_b = separable_filter(b, &kernel);
    let e_aa = product(&|x, _| x * x);
    let e_bb = product(&|_, y| y * y);
    let e_ab = product(&|x, y| x * y);
    let r = SSIM_WINDOW / 2;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in r..h - r {
        for x in r..w - r {
            let (ma, mb) = (mu_a.get(x, y), mu_b.get(x, y));
            let va = e_aa.get(x, y) - ma * ma;
            let vb = e_bb.get(x, y) - mb * mb;
            let cov = e_ab.get(x, y) - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl DetectionScore {
    /// Undefined ratios are reported as 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_measure = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f_measure,
        }
    }
}

/// Greedy one-to-one matching, closest pairs first; pairs within
/// `match_radius` (inclusive) are true positives.
pub fn score_detections(
    pred: &[(f64, f64)],
    truth: &[(f64, f64)],
    match_radius: f64,
) -> Result<DetectionScore> {
    if !(match_radius > 0.0) {
        return Err(Error::Parameter(format!(
            "match radius must be positive, got {match_radius}"
        )));
    }
    let mut pairs = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let d = (p.0 - t.0).hypot(p.1 - t.1);
            if d <= match_radius {
                pairs.push((d, *p, *t, i, j));
            }
        }
    }
    // Coordinates before indices so the result does not depend on input order.
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1 .1.total_cmp(&b.1 .1))
            .then(a.1 .0.total_cmp(&b.1 .0))
            .then(a.2 .1.total_cmp(&b.2 .1))
            .then(a.2 .0.total_cmp(&b.2 .0))
    });
    let mut used_p = vec![false; pred.len()];
    let mut used_t = vec![false; truth.len()];
    let mut tp = 0;
    for (_, _, _, i, j) in pairs {
        if !used_p[i] && !used_t[j] {
            used_p[i] = true;
            used_t[j] = true;
            tp += 1;
        }
    }
    Ok(DetectionScore::from_counts(tp, pred.len() - tp, truth.len() - tp))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskScore {
    pub score: DetectionScore,
    pub iou: f64,
}

pub fn score_mask(pred: &BinaryMask, truth: &BinaryMask) -> Result<MaskScore> {
    same_dims(pred.dims(), truth.dims())?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, t) in pred.data().iter().zip(truth.data()) {
        match (*p != 0, *t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let union = tp + fp + fn_;
    Ok(MaskScore {
        score: DetectionScore::from_counts(tp, fp, fn_),
        iou: if union == 0 { 1.0 } else { tp as f64 / union as f64 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FenceShape {
    /// Horizontal and vertical bars.
    Rectangular,
    /// Bars at 45 and 135 degrees; joints sit on a checkerboard of the grid.
    Diamond,
}

impl FromStr for FenceShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" => Ok(Self::Rectangular),
            "diamond" => Ok(Self::Diamond),
            _ => Err(Error::Parameter(format!("unknown fence shape {s:?}"))),
        }
    }
}

impl FenceShape {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rectangular => "rectangular",
            Self::Diamond => "diamond",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FenceSpec {
    /// Joint spacing along each image axis.
    pub spacing: usize,
    pub bar_width: usize,
    pub shape: FenceShape,
    pub intensity: f64,
    /// Position of the first joint on each axis.
    pub offset: usize,
}

impl Default for FenceSpec {
    fn default() -> Self {
        Self {
            spacing: 20,
            bar_width: 2,
            shape: FenceShape::Rectangular,
            intensity: 230.0,
            offset: 10,
        }
    }
}

impl FenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bar_width == 0 || self.spacing <= self.bar_width {
            return Err(Error::Parameter(format!(
                "need spacing > bar width >= 1, got spacing {} and bar width {}",
                self.spacing, self.bar_width
            )));
        }
        if !(0.0..=255.0).contains(&self.intensity) {
            return Err(Error::Parameter(format!(
                "fence intensity {} outside [0, 255]",
                self.intensity
            )));
        }
        Ok(())
    }

    /// Grid joints (possibly outside the image) and the bar segments
    /// joining them, covering `dims` with one spacing of margin.
    fn grid(&self, dims: (usize, usize)) -> (Vec<(i64, i64)>, Vec<((f64, f64), (f64, f64))>) {
        let s = self.spacing as i64;
        let o = (self.offset as i64).rem_euclid(s);
        let cols = (dims.0 as i64 - o) / s + 2;
        let rows = (dims.1 as i64 - o) / s + 2;
        let at = |i: i64, j: i64| (o + i * s, o + j * s);
        let is_joint = |i: i64, j: i64| match self.shape {
            FenceShape::Rectangular => true,
            FenceShape::Diamond => (i + j).rem_euclid(2) == 0,
        };
        let steps: &[(i64, i64)] = match self.shape {
            FenceShape::Rectangular => &[(1, 0), (0, 1)],
            FenceShape::Diamond => &[(1, 1), (1, -1)],
        };
        let mut joints = Vec::new();
        let mut segments = Vec::new();
        for j in -1..=rows {
            for i in -1..=cols {
                if !is_joint(i, j) {
                    continue;
                }
                joints.push(at(i, j));
                for (di, dj) in steps {
                    let (a, b) = (at(i, j), at(i + di, j + dj));
                    segments.push(((a.0 as f64, a.1 as f64), (b.0 as f64, b.1 as f64)));
                }
            }
        }
        (joints, segments)
    }

    /// Static fence mask for an image of the given size.
    pub fn render(&self, dims: (usize, usize)) -> Result<BinaryMask> {
        self.validate()?;
        render_segments(self.grid(dims).1, dims, self.bar_width)
    }

    /// Joint positions inside the image.
    pub fn joints(&self, dims: (usize, usize)) -> Vec<(f64, f64)> {
        self.grid(dims)
            .0
            .into_iter()
            .filter(|&(x, y)| x >= 0 && y >= 0 && (x as usize) < dims.0 && (y as usize) < dims.1)
            .map(|(x, y)| (x as f64, y as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub ground_truth: GrayImage,
    pub fence: FenceSpec,
    pub shifts: Vec<(i64, i64)>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub frames: Vec<GrayImage>,
    pub fence_masks: Vec<BinaryMask>,
    pub joints: Vec<Vec<(f64, f64)>>,
}

impl SyntheticScene {
    /// Maps of each frame into the ground-truth (reference) coordinates.
    pub fn transforms(&self) -> Vec<AffineTransform> {
        self.shifts
            .iter()
            .map(|&(dx, dy)| AffineTransform::translation(-dx as f64, -dy as f64))
            .collect()
    }

    /// Pixels of the ground truth hidden by the fence in frame `reference`.
    pub fn occluded(&self, reference: usize) -> BinaryMask {
        let (dx, dy) = self.shifts[reference];
        let (w, h) = self.ground_truth.dims();
        let mut out = BinaryMask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as i64 + dx, y as i64 + dy);
                if in_bounds(fx, fy, w, h) && self.fence_masks[reference].get(fx as usize, fy as usize) {
                    out.set(x, y, true);
                }
            }
        }
        out
    }

    /// Ground-truth pixels seen unoccluded by at least one frame.
    pub fn coverage(&self) -> BinaryMask {
        let (w, h) = self.ground_truth.dims();
        let mut out = BinaryMask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let seen = self.shifts.iter().zip(&self.fence_masks).any(|(&(dx, dy), m)| {
                    let (fx, fy) = (x as i64 + dx, y as i64 + dy);
                    in_bounds(fx, fy, w, h) && !m.get(fx as usize, fy as usize)
                });
                out.set(x, y, seen);
            }
        }
        out
    }

    /// Pixels that every frame sees inside its field of view.
    pub fn interior(&self) -> BinaryMask {
        let (w, h) = self.ground_truth.dims();
        let mut out = BinaryMask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let inside = self
                    .shifts
                    .iter()
                    .all(|&(dx, dy)| in_bounds(x as i64 + dx, y as i64 + dy, w, h));
                out.set(x, y, inside);
            }
        }
        out
    }
}

fn in_bounds(x: i64, y: i64, w: usize, h: usize) -> bool {
    x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h
}

/// Frame `m` is `ground_truth(x - shift_m)` (border replicated), the fence
/// painted over its mask, Gaussian noise added, then rounded and clamped to
/// `[0, 255]` so that bundles round-trip through 8-bit files exactly.
pub fn generate_scene(
    ground_truth: &GrayImage,
    fence: &FenceSpec,
    shifts: &[(i64, i64)],
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticScene> {
    fence.validate()?;
    if shifts.is_empty() {
        return Err(Error::Parameter("need at least one shift".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let (w, h) = ground_truth.dims();
    for &(dx, dy) in shifts {
        let overlap = (w as f64 - dx.abs() as f64).max(0.0) * (h as f64 - dy.abs() as f64).max(0.0);
        if overlap < 0.5 * (w * h) as f64 {
            return Err(Error::Parameter(format!(
                "shift ({dx}, {dy}) leaves less than half of a {w}x{h} frame overlapping"
            )));
        }
    }
    let mask = fence.render((w, h))?;
    let joints = fence.joints((w, h));
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(shifts.len());
    for &(dx, dy) in shifts {
        let mut frame = GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut v = if mask.get(x, y) {
                    fence.intensity
                } else {
                    ground_truth.get_clamped(x as isize - dx as isize, y as isize - dy as isize)
                };
                if noise_sigma > 0.0 {
                    v += normal.sample(&mut rng);
                }
                frame.set(x, y, v.round().clamp(0.0, 255.0));
            }
        }
        frames.push(frame);
    }
    Ok(SyntheticScene {
        ground_truth: ground_truth.clone(),
        fence: *fence,
        shifts: shifts.to_vec(),
        noise_sigma,
        seed,
        frames,
        fence_masks: vec![mask; shifts.len()],
        joints: vec![joints; shifts.len()],
    })
}

/// Smooth integer-valued background in roughly `[30, 190]`: a sum of a few
/// seeded low-frequency sinusoids.
pub fn synthetic_background(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let period = rng.random_range(24.0..72.0);
            let k = 2.0 * std::f64::consts::PI / period;
            (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..6.3), rng.random_range(10.0..20.0))
        })
        .collect();
    GrayImage::from_fn(width, height, |x, y| {
        let v: f64 = waves
            .iter()
            .map(|(kx, ky, phase, amp)| amp * (kx * x as f64 + ky * y as f64 + phase).sin())
            .sum();
        (110.0 + v).round().clamp(0.0, 255.0)
    })
}

/// Training windows cut from scene frames: positives centred on joints
/// (plus every offset up to `jitter` px), negatives at seeded random centres
/// at least `min_negative_distance` from every joint.
pub fn harvest_patches(
    scene: &SyntheticScene,
    side: usize,
    jitter: usize,
    negatives_per_frame: usize,
    min_negative_distance: f64,
    seed: u64,
) -> Result<Vec<(GrayImage, bool)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (side / 2) as i64;
    let j = jitter as i64;
    let mut out = Vec::new();
    for (frame, joints) in scene.frames.iter().zip(&scene.joints) {
        let (w, h) = frame.dims();
        if w < side || h < side {
            return Err(Error::Dimension(format!("{w}x{h} frame smaller than {side} px patch")));
        }
        let fits = |cx: i64, cy: i64| {
            cx - half >= 0 && cy - half >= 0 && cx - half + side as i64 <= w as i64
                && cy - half + side as i64 <= h as i64
        };
        for &(jx, jy) in joints {
            for oy in -j..=j {
                for ox in -j..=j {
                    let (cx, cy) = (jx as i64 + ox, jy as i64 + oy);
                    if fits(cx, cy) {
                        out.push((frame.crop((cx - half) as usize, (cy - half) as usize, side, side)?, true));
                    }
                }
            }
        }
        let mut placed = 0;
        let mut attempts = 0;
        while placed < negatives_per_frame && attempts < 100 * negatives_per_frame.max(1) {
            attempts += 1;
            let cx = rng.random_range(half..=w as i64 - side as i64 + half);
            let cy = rng.random_range(half..=h as i64 - side as i64 + half);
            let near = joints
                .iter()
                .any(|&(jx, jy)| (jx - cx as f64).hypot(jy - cy as f64) < min_negative_distance);
            if !near {
                out.push((frame.crop((cx - half) as usize, (cy - half) as usize, side, side)?, false));
                placed += 1;
            }
        }
    }
    Ok(out)
}

/// Ground-truth joints a `side` px sliding window can be centred on, with one
/// pixel of slack: window centres run from `side / 2` to `w - side / 2`
/// exclusive, and an even window has no centre pixel.
pub fn detectable_joints(joints: &[(f64, f64)], dims: (usize, usize), side: usize) -> Vec<(f64, f64)> {
    let half = (side / 2) as f64;
    let hi = |d: usize| d as f64 - side as f64 + half + 1.0;
    joints
        .iter()
        .copied()
        .filter(|&(x, y)| x >= half - 1.0 && y >= half - 1.0 && x <= hi(dims.0) && y <= hi(dims.1))
        .collect()
}

fn format_shifts(shifts: &[(i64, i64)]) -> String {
    shifts
        .iter()
        .map(|(x, y)| format!("{x},{y}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn parse_shifts(text: &str) -> Result<Vec<(i64, i64)>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| Error::Parameter(format!("bad shift {pair:?}, expected dx,dy")))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<i64>()
                    .map_err(|e| Error::Parameter(format!("bad shift {pair:?}: {e}")))
            };
            Ok((parse(x)?, parse(y)?))
        })
        .collect()
}

fn scene_cfg(scene: &SyntheticScene) -> String {
    let f = &scene.fence;
    let mut s = String::new();
    let _ = writeln!(s, "width={}", scene.ground_truth.width());
    let _ = writeln!(s, "height={}", scene.ground_truth.height());
    let _ = writeln!(s, "spacing={}", f.spacing);
    let _ = writeln!(s, "bar_width={}", f.bar_width);
    let _ = writeln!(s, "shape={}", f.shape.name());
    let _ = writeln!(s, "intensity={}", f.intensity);
    let _ = writeln!(s, "offset={}", f.offset);
    let _ = writeln!(s, "shifts={}", format_shifts(&scene.shifts));
    let _ = writeln!(s, "sigma={}", scene.noise_sigma);
    let _ = writeln!(s, "seed={}", scene.seed);
    s
}

/// Writes `frame_NN.pgm`, `mask_NN.pgm`, `joints_NN.txt`, `truth.pgm` and
/// `scene.cfg` into `dir`, creating it if needed.
pub fn save_bundle(scene: &SyntheticScene, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (m, frame) in scene.frames.iter().enumerate() {
        save_gray(frame, dir.join(format!("frame_{m:02}.pgm")))?;
        save_mask(&scene.fence_masks[m], dir.join(format!("mask_{m:02}.pgm")))?;
        let mut text = String::new();
        for (x, y) in &scene.joints[m] {
            let _ = writeln!(text, "{x} {y}");
        }
        let path = dir.join(format!("joints_{m:02}.txt"));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    save_gray(&scene.ground_truth, dir.join("truth.pgm"))?;
    let path = dir.join("scene.cfg");
    fs::write(&path, scene_cfg(scene)).map_err(|e| Error::io(&path, e))
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<SyntheticScene> {
    let dir = dir.as_ref();
    let path = dir.join("scene.cfg");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut kv = BTreeMap::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("bad scene.cfg line {line:?}")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        kv.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Parameter(format!("scene.cfg is missing {k}")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse::<f64>()
            .map_err(|e| Error::Parameter(format!("scene.cfg {k}: {e}")))
    };
    let fence = FenceSpec {
        spacing: num("spacing")? as usize,
        bar_width: num("bar_width")? as usize,
        shape: get("shape")?.parse()?,
        intensity: num("intensity")?,
        offset: num("offset")? as usize,
    };
    let shifts = parse_shifts(get("shifts")?)?;
    let seed = get("seed")?
        .parse::<u64>()
        .map_err(|e| Error::Parameter(format!("scene.cfg seed: {e}")))?;
    let mut frames = Vec::new();
    let mut masks = Vec::new();
    let mut joints = Vec::new();
    for m in 0..shifts.len() {
        frames.push(load_gray(dir.join(format!("frame_{m:02}.pgm")))?);
        masks.push(load_mask(dir.join(format!("mask_{m:02}.pgm")))?);
        let path = dir.join(format!("joints_{m:02}.txt"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        joints.push(parse_detections(&text)?.iter().map(|j| (j.x, j.y)).collect());
    }
    Ok(SyntheticScene {
        ground_truth: load_gray(dir.join("truth.pgm"))?,
        fence,
        shifts,
        noise_sigma: num("sigma")?,
        seed,
        frames,
        fence_masks: masks,
        joints,
    })
}

/// Detection coordinates as plain points.
pub fn points(joints: &[JointDetection]) -> Vec<(f64, f64)> {
    joints.iter().map(|j| (j.x, j.y)).collect()
}
