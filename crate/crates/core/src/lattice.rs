//! Fence-joint detection and lattice recovery.
//!
//! A trained joint classifier is slid over an image pyramid; detections are
//! thinned by greedy score-ordered suppression, the texel size is estimated
//! from nearest axial neighbours, joints are linked to neighbours one texel
//! away, and the linked edges are rasterized into a fence mask.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::classifier::ClassifierModel;
use crate::cnn::{self, CnnNetwork};
use crate::error::{Error, Result};
use crate::hog::{self, HogParams};
use crate::imagecore::{resize_bilinear, BinaryMask, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDetection {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub score: f64,
}

impl JointDetection {
    pub fn distance(&self, other: &Self) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub joints: Vec<JointDetection>,
    pub texel_w: f64,
    pub texel_h: f64,
    /// Index pairs `(i, j)` with `i < j`; each stands for both directions.
    pub edges: Vec<(usize, usize)>,
}

impl Lattice {
    pub fn empty() -> Self {
        Self {
            joints: Vec::new(),
            texel_w: 0.0,
            texel_h: 0.0,
            edges: Vec::new(),
        }
    }

    pub fn degree(&self, joint: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(i, j)| i == joint || j == joint)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub stride: usize,
    pub scale_ratio: f64,
    pub min_scale: f64,
    pub max_scale: f64,
    pub score_threshold: f64,
    /// Suppression radius as a fraction of the texel size.
    pub dominance_radius_factor: f64,
    /// Linking band half-width as a fraction of the texel size.
    pub link_tolerance: f64,
    /// `None` picks `max(2, round(texel_w / 8))`.
    pub bar_width: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            stride: 2,
            scale_ratio: 1.2,
            min_scale: 1.0,
            max_scale: 1.0,
            score_threshold: 0.0,
            dominance_radius_factor: 0.5,
            link_tolerance: 0.25,
            bar_width: None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Parameter("stride must be >= 1".into()));
        }
        if !(self.scale_ratio > 1.0) {
            return Err(Error::Parameter(format!(
                "scale ratio must exceed 1, got {}",
                self.scale_ratio
            )));
        }
        if !(self.min_scale >= 1.0 && self.max_scale >= self.min_scale) {
            return Err(Error::Parameter(format!(
                "need 1 <= min_scale <= max_scale, got {} and {}",
                self.min_scale, self.max_scale
            )));
        }
        if !(self.link_tolerance > 0.0 && self.link_tolerance < 1.0) {
            return Err(Error::Parameter(format!(
                "link tolerance must lie in (0, 1), got {}",
                self.link_tolerance
            )));
        }
        if !(self.dominance_radius_factor > 0.0) {
            return Err(Error::Parameter("dominance radius factor must be > 0".into()));
        }
        if self.bar_width == Some(0) {
            return Err(Error::Parameter("bar width must be >= 1".into()));
        }
        if !self.score_threshold.is_finite() {
            return Err(Error::Parameter("score threshold must be finite".into()));
        }
        Ok(())
    }

    pub fn bar_width_for(&self, texel_w: f64) -> usize {
        self.bar_width
            .unwrap_or_else(|| ((texel_w / 8.0).round() as usize).max(2))
    }
}

/// Either detector backend. The SVM scores HOG descriptors of 30x30 windows,
/// the CNN scores raw 32x32 windows.
#[derive(Debug, Clone)]
pub enum JointModel {
    Svm(ClassifierModel),
    Cnn(CnnNetwork),
}

impl JointModel {
    pub fn window_side(&self) -> usize {
        match self {
            Self::Svm(_) => HogParams::default().window,
            Self::Cnn(_) => cnn::INPUT_SIDE,
        }
    }

    /// Picks the backend from the file's magic bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        match bytes.get(..4) {
            Some(b"DFK1") => Ok(Self::Svm(ClassifierModel::from_bytes(&bytes)?)),
            Some(b"DFKC") => Ok(Self::Cnn(CnnNetwork::from_bytes(&bytes)?)),
            _ => Err(Error::ModelFormat(format!(
                "{} is neither a DFK1 nor a DFKC model",
                path.display()
            ))),
        }
    }

    /// Scores the windows with the given top-left corners on one pyramid level.
    pub fn score_windows(&self, level: &GrayImage, corners: &[(usize, usize)]) -> Result<Vec<f64>> {
        let side = self.window_side();
        let (w, h) = level.dims();
        if let Some(&(x0, y0)) = corners.iter().find(|&&(x, y)| x + side > w || y + side > h) {
            return Err(Error::Bounds(format!(
                "{side}x{side} window at ({x0},{y0}) outside {w}x{h}"
            )));
        }
        match self {
            Self::Svm(model) => {
                let params = HogParams::default();
                if model.dims() != params.descriptor_len() {
                    return Err(Error::Dimension(format!(
                        "model expects {} features, HOG gives {}",
                        model.dims(),
                        params.descriptor_len()
                    )));
                }
                let stack = hog::bin_image(level, &params)?;
                corners
                    .par_iter()
                    .map(|&c| model.decision(hog::extract_at(&stack, c, &params)?.values()))
                    .collect()
            }
            Self::Cnn(net) => corners
                .par_iter()
                .map(|&(x0, y0)| net.score(&level.crop(x0, y0, side, side)?))
                .collect(),
        }
    }
}

/// One pyramid level and the factors mapping its coordinates back.
struct Level {
    image: GrayImage,
    fx: f64,
    fy: f64,
}

fn build_level(img: &GrayImage, scale: f64, side: usize) -> Result<Option<Level>> {
    let (w, h) = img.dims();
    let nw = (w as f64 / scale).round() as usize;
    let nh = (h as f64 / scale).round() as usize;
    if nw < side || nh < side {
        return Ok(None);
    }
    let image = if (nw, nh) == (w, h) {
        img.clone()
    } else {
        resize_bilinear(img, nw, nh)?
    };
    let fx = if nw > 1 { (w - 1) as f64 / (nw - 1) as f64 } else { 1.0 };
    let fy = if nh > 1 { (h - 1) as f64 / (nh - 1) as f64 } else { 1.0 };
    Ok(Some(Level { image, fx, fy }))
}

/// `min_scale * ratio^k` for every `k` that stays at or below `max_scale`.
pub fn scale_sequence(cfg: &DetectorConfig) -> Vec<f64> {
    let mut out = Vec::new();
    let mut s = cfg.min_scale;
    while s <= cfg.max_scale + 1e-9 {
        out.push(s);
        s *= cfg.scale_ratio;
    }
    out
}

/// Window centres are mapped back with the corner-aligned resize factor,
/// so scale 1 is the identity.
pub fn detect_joints(
    img: &GrayImage,
    model: &JointModel,
    cfg: &DetectorConfig,
) -> Result<Vec<JointDetection>> {
    cfg.validate()?;
    let side = model.window_side();
    let (w, h) = img.dims();
    let half = (side / 2) as f64;
    let mut out = Vec::new();
    let mut any_level = false;
    for s in scale_sequence(cfg) {
        let Some(level) = build_level(img, s, side)? else {
            continue;
        };
        any_level = true;
        let (lw, lh) = level.image.dims();
        let corners: Vec<(usize, usize)> = (0..=lh - side)
            .step_by(cfg.stride)
            .flat_map(|y| (0..=lw - side).step_by(cfg.stride).map(move |x| (x, y)))
            .collect();
        let scores = model.score_windows(&level.image, &corners)?;
        for (&(x0, y0), &score) in corners.iter().zip(&scores) {
            if score > cfg.score_threshold {
                out.push(JointDetection {
                    x: (x0 as f64 + half) * level.fx,
                    y: (y0 as f64 + half) * level.fy,
                    scale: s,
                    score,
                });
            }
        }
    }
    if !any_level {
        return Err(Error::Dimension(format!(
            "{w}x{h} image is smaller than the {side}x{side} window at every scale"
        )));
    }
    Ok(out)
}

/// Greedy suppression: highest score first, ties in `(y, x)` order; a joint
/// is dropped when an accepted one lies closer than `radius`.
pub fn suppress(joints: &[JointDetection], radius: f64) -> Vec<JointDetection> {
    let mut order: Vec<&JointDetection> = joints.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    let mut kept: Vec<JointDetection> = Vec::new();
    for j in order {
        if kept.iter().all(|k| k.distance(j) >= radius) {
            kept.push(*j);
        }
    }
    kept
}

// tan(30 degrees): the axial cone half-width used for neighbour search.
const AXIAL_CONE: f64 = 0.577_350_269_189_625_8;

fn lower_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Medians of each joint's nearest horizontal and vertical neighbour distances.
pub fn estimate_texel(joints: &[JointDetection]) -> Result<(f64, f64)> {
    let mut horiz = Vec::new();
    let mut vert = Vec::new();
    for (i, a) in joints.iter().enumerate() {
        let mut best_h = f64::INFINITY;
        let mut best_v = f64::INFINITY;
        for (j, b) in joints.iter().enumerate() {
            if i == j {
                continue;
            }
            let (dx, dy) = ((b.x - a.x).abs(), (b.y - a.y).abs());
            let d = dx.hypot(dy);
            if dx > 0.0 && dy <= AXIAL_CONE * dx {
                best_h = best_h.min(d);
            }
            if dy > 0.0 && dx <= AXIAL_CONE * dy {
                best_v = best_v.min(d);
            }
        }
        if best_h.is_finite() {
            horiz.push(best_h);
        }
        if best_v.is_finite() {
            vert.push(best_v);
        }
    }
    if horiz.len() < 2 || vert.len() < 2 {
        return Err(Error::DegenerateLattice(format!(
            "{} joints with a horizontal neighbour and {} with a vertical one; need 2 of each",
            horiz.len(),
            vert.len()
        )));
    }
    Ok((lower_median(horiz), lower_median(vert)))
}

/// Horizontal link iff `||dx| - texel_w| <= tol * texel_w` and
/// `|dy| <= tol * texel_h`; vertical links swap the axes. Joints left without
/// an edge are dropped and the survivors reindexed.
pub fn link_joints(
    joints: &[JointDetection],
    texel_w: f64,
    texel_h: f64,
    cfg: &DetectorConfig,
) -> Result<Lattice> {
    if !(texel_w > 0.0 && texel_h > 0.0) {
        return Err(Error::Parameter(format!(
            "texel dimensions must be positive, got {texel_w} x {texel_h}"
        )));
    }
    let tol = cfg.link_tolerance;
    let mut edges = Vec::new();
    for i in 0..joints.len() {
        for j in i + 1..joints.len() {
            let dx = (joints[j].x - joints[i].x).abs();
            let dy = (joints[j].y - joints[i].y).abs();
            let horizontal = (dx - texel_w).abs() <= tol * texel_w && dy <= tol * texel_h;
            let vertical = (dy - texel_h).abs() <= tol * texel_h && dx <= tol * texel_w;
            if horizontal || vertical {
                edges.push((i, j));
            }
        }
    }
    let mut remap = vec![usize::MAX; joints.len()];
    let mut kept = Vec::new();
    for &(i, j) in &edges {
        for k in [i, j] {
            if remap[k] == usize::MAX {
                remap[k] = 0;
            }
        }
    }
    for (k, j) in joints.iter().enumerate() {
        if remap[k] != usize::MAX {
            remap[k] = kept.len();
            kept.push(*j);
        }
    }
    Ok(Lattice {
        joints: kept,
        texel_w,
        texel_h,
        edges: edges.iter().map(|&(i, j)| (remap[i], remap[j])).collect(),
    })
}

/// Integer points of the segment, endpoints included.
pub fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64) -> Vec<(i64, i64)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if x == x1 && y == y1 {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Rasterize each edge and dilate by a disc of radius `floor(bar_width / 2)`.
pub fn render_mask(lattice: &Lattice, dims: (usize, usize), bar_width: usize) -> Result<BinaryMask> {
    render_segments(
        lattice.edges.iter().map(|&(i, j)| {
            let (a, b) = (&lattice.joints[i], &lattice.joints[j]);
            ((a.x, a.y), (b.x, b.y))
        }),
        dims,
        bar_width,
    )
}

pub fn render_segments(
    segments: impl IntoIterator<Item = ((f64, f64), (f64, f64))>,
    dims: (usize, usize),
    bar_width: usize,
) -> Result<BinaryMask> {
    if bar_width == 0 {
        return Err(Error::Parameter("bar width must be >= 1".into()));
    }
    let (w, h) = dims;
    let r = (bar_width / 2) as i64;
    let disc: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let mut mask = BinaryMask::new(w, h);
    for ((ax, ay), (bx, by)) in segments {
        let pts = bresenham(
            ax.round() as i64,
            ay.round() as i64,
            bx.round() as i64,
            by.round() as i64,
        );
        for (px, py) in pts {
            for (dx, dy) in &disc {
                let (x, y) = (px + dx, py + dy);
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    mask.set(x as usize, y as usize, true);
                }
            }
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone)]
pub struct LatticeResult {
    /// Raw window detections above threshold.
    pub detections: Vec<JointDetection>,
    pub lattice: Lattice,
    /// `lattice` plus extrapolated joints out to the image border; the mask
    /// is rendered from this one.
    pub extended: Lattice,
    pub mask: BinaryMask,
    pub bar_width: usize,
}

/// Grows the lattice outward: a joint with a neighbour on one side of an axis
/// but none on the other gets a virtual joint mirrored through it, until
/// every frontier joint lies more than one texel outside `dims`. Edges are
/// recomputed with the linking rule after each round.
pub fn extrapolate_lattice(
    lattice: &Lattice,
    dims: (usize, usize),
    cfg: &DetectorConfig,
) -> Result<Lattice> {
    let (tw, th) = (lattice.texel_w, lattice.texel_h);
    if lattice.joints.is_empty() {
        return Ok(lattice.clone());
    }
    let margin = tw.max(th);
    let inside = |j: &JointDetection| {
        j.x >= -margin && j.y >= -margin && j.x <= dims.0 as f64 + margin && j.y <= dims.1 as f64 + margin
    };
    let min_gap = 0.5 * tw.min(th);
    let mut current = lattice.clone();
    loop {
        let n = current.joints.len();
        // Per joint: neighbour toward -x, +x, -y, +y.
        let mut side: Vec<[Option<usize>; 4]> = vec![[None; 4]; n];
        for &(i, k) in &current.edges {
            for (a, b) in [(i, k), (k, i)] {
                let dx = current.joints[b].x - current.joints[a].x;
                let dy = current.joints[b].y - current.joints[a].y;
                let slot = if dx.abs() >= dy.abs() {
                    usize::from(dx > 0.0)
                } else {
                    2 + usize::from(dy > 0.0)
                };
                side[a][slot] = Some(b);
            }
        }
        let mut added: Vec<JointDetection> = Vec::new();
        for (i, s) in side.iter().enumerate() {
            for (missing, present) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
                let (None, Some(k)) = (s[missing], s[present]) else {
                    continue;
                };
                let (a, b) = (current.joints[i], current.joints[k]);
                let v = JointDetection {
                    x: 2.0 * a.x - b.x,
                    y: 2.0 * a.y - b.y,
                    scale: a.scale,
                    score: 0.0,
                };
                let crowded = current
                    .joints
                    .iter()
                    .chain(&added)
                    .any(|j| j.distance(&v) < min_gap);
                if inside(&v) && !crowded {
                    added.push(v);
                }
            }
        }
        if added.is_empty() {
            return Ok(current);
        }
        let mut joints = current.joints;
        joints.extend(added);
        current = link_joints(&joints, tw, th, cfg)?;
    }
}

/// Re-scores every window centre within `radius` px (per axis) of each joint
/// in its pyramid level and moves the joint to the mean of the centres that
/// score above `threshold`. The classifier's positive response is a plateau
/// a few pixels wide whose peak sits off-centre, so the plateau centroid
/// localizes better than the maximum. Scores are left unchanged.
pub fn refine_joints(
    img: &GrayImage,
    model: &JointModel,
    joints: &[JointDetection],
    radius: usize,
    threshold: f64,
) -> Result<Vec<JointDetection>> {
    let side = model.window_side();
    let half = side / 2;
    let r = radius as i64;
    let mut out = joints.to_vec();
    let mut scales: Vec<f64> = joints.iter().map(|j| j.scale).collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    for s in scales {
        let Some(level) = build_level(img, s, side)? else {
            continue;
        };
        let (lw, lh) = level.image.dims();
        let mut owners = Vec::new();
        let mut corners = Vec::new();
        for (k, j) in joints.iter().enumerate().filter(|(_, j)| j.scale == s) {
            let cx = (j.x / level.fx).round() as i64;
            let cy = (j.y / level.fy).round() as i64;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x0, y0) = (cx + dx - half as i64, cy + dy - half as i64);
                    if x0 >= 0 && y0 >= 0 && x0 as usize + side <= lw && y0 as usize + side <= lh {
                        owners.push(k);
                        corners.push((x0 as usize, y0 as usize));
                    }
                }
            }
        }
        let scores = model.score_windows(&level.image, &corners)?;
        let mut sums = vec![(0.0, 0.0, 0usize); joints.len()];
        for ((&k, &(x0, y0)), &sc) in owners.iter().zip(&corners).zip(&scores) {
            if sc > threshold {
                sums[k].0 += (x0 + half) as f64;
                sums[k].1 += (y0 + half) as f64;
                sums[k].2 += 1;
            }
        }
        for (k, &(sx, sy, n)) in sums.iter().enumerate() {
            if n > 0 {
                out[k].x = sx / n as f64 * level.fx;
                out[k].y = sy / n as f64 * level.fy;
            }
        }
    }
    Ok(out)
}

/// Full chain: detect, suppress, estimate the texel, suppress again at the
/// texel-relative radius, refine positions, link, extrapolate to the border, render. The first suppression uses
/// `dominance_radius_factor` times half the window side, since the texel
/// size is not yet known.
pub fn detect_lattice(
    img: &GrayImage,
    model: &JointModel,
    cfg: &DetectorConfig,
) -> Result<LatticeResult> {
    let detections = detect_joints(img, model, cfg)?;
    let first = suppress(
        &detections,
        cfg.dominance_radius_factor * model.window_side() as f64 / 2.0,
    );
    let (tw, th) = estimate_texel(&first)?;
    let second = suppress(&first, cfg.dominance_radius_factor * tw.min(th));
    let second = refine_joints(img, model, &second, cfg.stride + 1, cfg.score_threshold)?;
    let lattice = link_joints(&second, tw, th, cfg)?;
    if lattice.joints.is_empty() {
        return Err(Error::DegenerateLattice("no joint has a linked neighbour".into()));
    }
    let bar_width = cfg.bar_width_for(tw);
    let extended = extrapolate_lattice(&lattice, img.dims(), cfg)?;
    let mask = render_mask(&extended, img.dims(), bar_width)?;
    Ok(LatticeResult {
        detections,
        lattice,
        extended,
        mask,
        bar_width,
    })
}

/// One `x y scale score` line per joint.
pub fn format_detections(joints: &[JointDetection]) -> String {
    let mut s = String::new();
    for j in joints {
        let _ = writeln!(s, "{:.3} {:.3} {:.6} {:.6}", j.x, j.y, j.scale, j.score);
    }
    s
}

pub fn parse_detections(text: &str) -> Result<Vec<JointDetection>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parameter(format!("bad detection line {l:?}: {e}")))?;
            match v.as_slice() {
                [x, y] => Ok(JointDetection {
                    x: *x,
                    y: *y,
                    scale: 1.0,
                    score: 0.0,
                }),
                [x, y, scale, score] => Ok(JointDetection {
                    x: *x,
                    y: *y,
                    scale: *scale,
                    score: *score,
                }),
                _ => Err(Error::Parameter(format!("bad detection line {l:?}"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joint(x: f64, y: f64, score: f64) -> JointDetection {
        JointDetection {
            x,
            y,
            scale: 1.0,
            score,
        }
    }

    fn grid(n: usize, spacing: f64) -> Vec<JointDetection> {
        (0..n)
            .flat_map(|r| (0..n).map(move |c| joint(c as f64 * spacing, r as f64 * spacing, 1.0)))
            .collect()
    }

    #[test]
    fn scale_sequence_to_two() {
        let cfg = DetectorConfig {
            max_scale: 2.0,
            ..Default::default()
        };
        let s = scale_sequence(&cfg);
        assert_eq!(s.len(), 4);
        for (got, want) in s.iter().zip([1.0, 1.2, 1.44, 1.728]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_classifier_detects_nothing() {
        let model = JointModel::Svm(ClassifierModel::linear(vec![0.0; 1296], -1.0, 1.0));
        let img = GrayImage::from_fn(50, 40, |x, y| ((x * y) % 256) as f64);
        assert!(detect_joints(&img, &model, &DetectorConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn too_small_image() {
        let model = JointModel::Svm(ClassifierModel::linear(vec![0.0; 1296], 1.0, 1.0));
        assert!(matches!(
            detect_joints(&GrayImage::new(29, 40), &model, &DetectorConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn window_centres_at_scale_one() {
        let model = JointModel::Svm(ClassifierModel::linear(vec![0.0; 1296], 1.0, 1.0));
        let d = detect_joints(&GrayImage::new(34, 30), &model, &DetectorConfig::default()).unwrap();
        let xs: Vec<f64> = d.iter().map(|j| j.x).collect();
        assert_eq!(xs, vec![15.0, 17.0, 19.0]);
        assert!(d.iter().all(|j| j.y == 15.0));
    }

    #[test]
    fn suppress_examples() {
        let out = suppress(&[joint(0.0, 0.0, 1.0), joint(3.0, 0.0, 2.0)], 5.0);
        assert_eq!(out, vec![joint(3.0, 0.0, 2.0)]);
        let apart = [joint(0.0, 0.0, 1.0), joint(5.0, 0.0, 2.0)];
        assert_eq!(suppress(&apart, 5.0).len(), 2);
    }

    #[test]
    fn suppress_ties_by_row_then_column() {
        let out = suppress(&[joint(2.0, 1.0, 1.0), joint(0.0, 1.0, 1.0)], 5.0);
        assert_eq!(out, vec![joint(0.0, 1.0, 1.0)]);
    }

    #[test]
    fn texel_on_perfect_grid() {
        assert_eq!(estimate_texel(&grid(5, 20.0)).unwrap(), (20.0, 20.0));
    }

    #[test]
    fn texel_with_outlier() {
        let mut g = grid(5, 20.0);
        g.push(joint(47.0, 33.0, 1.0));
        assert_eq!(estimate_texel(&g).unwrap(), (20.0, 20.0));
    }

    #[test]
    fn texel_single_joint() {
        assert!(matches!(
            estimate_texel(&[joint(1.0, 1.0, 1.0)]),
            Err(Error::DegenerateLattice(_))
        ));
    }

    #[test]
    fn lower_middle_median() {
        assert_eq!(lower_median(vec![4.0, 1.0, 3.0, 2.0]), 2.0);
    }

    #[test]
    fn perfect_grid_interior_degree() {
        let lat = link_joints(&grid(5, 20.0), 20.0, 20.0, &DetectorConfig::default()).unwrap();
        assert_eq!(lat.joints.len(), 25);
        assert_eq!(lat.edges.len(), 40);
        for r in 1..4 {
            for c in 1..4 {
                assert_eq!(lat.degree(r * 5 + c), 4);
            }
        }
    }

    #[test]
    fn spurious_joint_dropped() {
        let mut g = grid(3, 20.0);
        g.push(joint(200.0, 200.0, 9.0));
        let lat = link_joints(&g, 20.0, 20.0, &DetectorConfig::default()).unwrap();
        assert_eq!(lat.joints.len(), 9);
        assert!(lat.joints.iter().all(|j| j.x < 100.0));
    }

    #[test]
    fn empty_lattice_mask() {
        let m = render_mask(&Lattice::empty(), (8, 8), 3).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn horizontal_edge_one_pixel() {
        let lat = Lattice {
            joints: vec![joint(0.0, 5.0, 1.0), joint(10.0, 5.0, 1.0)],
            texel_w: 10.0,
            texel_h: 10.0,
            edges: vec![(0, 1)],
        };
        let m = render_mask(&lat, (12, 8), 1).unwrap();
        assert_eq!(m.count(), 11);
        assert!((0..=10).all(|x| m.get(x, 5)));
    }

    #[test]
    fn bar_width_default() {
        let cfg = DetectorConfig::default();
        assert_eq!(cfg.bar_width_for(12.0), 2);
        assert_eq!(cfg.bar_width_for(20.0), 3);
        assert_eq!(cfg.bar_width_for(40.0), 5);
    }

    #[test]
    fn detection_text_round_trip() {
        let d = vec![joint(1.5, 2.25, 0.75), joint(10.0, 3.0, -0.5)];
        assert_eq!(parse_detections(&format_detections(&d)).unwrap(), d);
    }

    #[test]
    fn bresenham_diagonal() {
        assert_eq!(bresenham(0, 0, 3, 3), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(bresenham(2, 0, 0, 0), vec![(2, 0), (1, 0), (0, 0)]);
    }
}
