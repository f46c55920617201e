//! Frame registration: Harris corners, NCC patch matching, affine least
//! squares with RANSAC, and an exhaustive integer global-shift search.
//!
//! A transform returned by [`register_frames`] maps frame coordinates into
//! reference-frame coordinates, which is what [`crate::imagecore::warp_affine`]
//! expects to resample a frame onto the reference grid.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::{gaussian_kernel, separable_filter, sobel_components, BinaryMask, GrayImage};

/// `Y = A X + B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
}

impl AffineTransform {
    pub fn new(a: [[f64; 2]; 2], b: [f64; 2]) -> Self {
        Self { a, b }
    }

    pub fn identity() -> Self {
        Self::new([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self::new([[1.0, 0.0], [0.0, 1.0]], [dx, dy])
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a[0][0] * x + self.a[0][1] * y + self.b[0],
            self.a[1][0] * x + self.a[1][1] * y + self.b[1],
        )
    }

    pub fn det(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.abs() <= 1e-9 || !det.is_finite() {
            return Err(Error::DegenerateTransform(det.abs()));
        }
        let [[a, b], [c, d]] = self.a;
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let tb = [
            -(inv[0][0] * self.b[0] + inv[0][1] * self.b[1]),
            -(inv[1][0] * self.b[0] + inv[1][1] * self.b[1]),
        ];
        Ok(Self::new(inv, tb))
    }

    /// `next` applied after `self`.
    pub fn then(&self, next: &Self) -> Self {
        let m = |i: usize, j: usize| next.a[i][0] * self.a[0][j] + next.a[i][1] * self.a[1][j];
        let (bx, by) = next.apply(self.b[0], self.b[1]);
        Self::new([[m(0, 0), m(0, 1)], [m(1, 0), m(1, 1)]], [bx, by])
    }
}

/// Six reals `a11 a12 a21 a22 b1 b2`.
impl fmt::Display for AffineTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.a[0][0], self.a[0][1], self.a[1][0], self.a[1][1], self.b[0], self.b[1]
        )
    }
}

impl FromStr for AffineTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parameter(format!("bad transform line {s:?}: {e}")))?;
        if v.len() != 6 {
            return Err(Error::Parameter(format!(
                "transform line needs 6 values, got {}",
                v.len()
            )));
        }
        Ok(Self::new([[v[0], v[1]], [v[2], v[3]]], [v[4], v[5]]))
    }
}

pub fn format_transforms(ts: &[AffineTransform]) -> String {
    ts.iter().map(|t| format!("{t}\n")).collect()
}

pub fn parse_transforms(text: &str) -> Result<Vec<AffineTransform>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p1: (f64, f64),
    pub p2: (f64, f64),
    pub score: f64,
}

const HARRIS_K: f64 = 0.04;
const HARRIS_SIGMA: f64 = 1.5;
/// Responses below this fraction of the strongest are ignored.
const HARRIS_RELATIVE_FLOOR: f64 = 0.01;

pub fn harris_response(img: &GrayImage) -> Vec<f64> {
    let (w, h) = img.dims();
    let (gx, gy) = sobel_components(img);
    let kernel = gaussian_kernel(HARRIS_SIGMA).expect("positive sigma");
    let smooth = |v: Vec<f64>| separable_filter(&GrayImage::from_vec(w, h, v).unwrap(), &kernel);
    let sxx = smooth(gx.iter().map(|g| g * g).collect());
    let syy = smooth(gy.iter().map(|g| g * g).collect());
    let sxy = smooth(gx.iter().zip(&gy).map(|(a, b)| a * b).collect());
    (0..w * h)
        .map(|i| {
            let (a, b, c) = (sxx.data()[i], syy.data()[i], sxy.data()[i]);
            a * b - c * c - HARRIS_K * (a + b) * (a + b)
        })
        .collect()
}

/// Strongest Harris corners at least `min_distance` apart.
pub fn detect_corners(img: &GrayImage, max_count: usize, min_distance: f64) -> Vec<(usize, usize)> {
    let (w, h) = img.dims();
    if w < 7 || h < 7 || max_count == 0 {
        return Vec::new();
    }
    let r = harris_response(img);
    let peak = r.iter().cloned().fold(0.0, f64::max);
    if peak <= 1e-9 {
        return Vec::new();
    }
    let floor = peak * HARRIS_RELATIVE_FLOOR;
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = r[y * w + x];
            if v <= floor {
                continue;
            }
            let is_max = (-1..=1).all(|dy: isize| {
                (-1..=1).all(|dx: isize| {
                    let n = r[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                    n <= v
                })
            });
            if is_max {
                candidates.push((v, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (_, x, y) in candidates {
        let far = kept.iter().all(|&(kx, ky)| {
            let (dx, dy) = (kx as f64 - x as f64, ky as f64 - y as f64);
            (dx * dx + dy * dy).sqrt() >= min_distance
        });
        if far {
            kept.push((x, y));
            if kept.len() == max_count {
                break;
            }
        }
    }
    kept
}

/// Zero-mean normalized cross-correlation of two equally sized pixel lists.
/// `None` when either side has zero variance.
fn ncc(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 1e-12 || sbb <= 1e-12 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

fn patch_at(img: &GrayImage, cx: isize, cy: isize, half: isize) -> Option<Vec<f64>> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    if cx - half < 0 || cy - half < 0 || cx + half >= w || cy + half >= h {
        return None;
    }
    let mut out = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
    for y in cy - half..=cy + half {
        for x in cx - half..=cx + half {
            out.push(img.get(x as usize, y as usize));
        }
    }
    Some(out)
}

/// Vertex offset of the parabola through `(-1, l), (0, c), (1, r)`.
fn parabola_peak(l: f64, c: f64, r: f64) -> f64 {
    let denom = l - 2.0 * c + r;
    if denom >= -1e-12 {
        return 0.0;
    }
    (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
}

pub const MIN_MATCH_NCC: f64 = 0.7;

/// For each point, the best NCC offset of its patch within `search_radius`
/// in `img2`, refined to sub-pixel precision. Points whose patch has no
/// texture, or whose best score is below 0.7, yield nothing.
pub fn match_patches(
    img1: &GrayImage,
    img2: &GrayImage,
    points: &[(usize, usize)],
    patch: usize,
    search_radius: usize,
) -> Result<Vec<Correspondence>> {
    if patch < 5 || patch % 2 == 0 {
        return Err(Error::Parameter(format!("patch size must be odd and >= 5, got {patch}")));
    }
    let half = (patch / 2) as isize;
    let radius = search_radius as isize;
    let matches = points
        .par_iter()
        .filter_map(|&(px, py)| {
            let (px, py) = (px as isize, py as isize);
            let reference = patch_at(img1, px, py, half)?;
            let side = (2 * radius + 1) as usize;
            let mut scores = vec![None; side * side];
            let mut best: Option<(f64, isize, isize)> = None;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let s = patch_at(img2, px + dx, py + dy, half)
                        .and_then(|cand| ncc(&reference, &cand));
                    scores[((dy + radius) * (2 * radius + 1) + dx + radius) as usize] = s;
                    if let Some(s) = s {
                        if best.is_none_or(|(b, _, _)| s > b) {
                            best = Some((s, dx, dy));
                        }
                    }
                }
            }
            let (score, dx, dy) = best?;
            if score < MIN_MATCH_NCC {
                return None;
            }
            let at = |ox: isize, oy: isize| -> Option<f64> {
                if ox.abs() > radius || oy.abs() > radius {
                    return None;
                }
                scores[((oy + radius) * (2 * radius + 1) + ox + radius) as usize]
            };
            // A perfect correlation is an exact integer match; the parabola
            // would only add the bias of an asymmetric NCC surface.
            let exact = score >= 1.0 - 1e-12;
            let sub_x = match (at(dx - 1, dy), at(dx + 1, dy)) {
                _ if exact => 0.0,
                (Some(l), Some(r)) => parabola_peak(l, score, r),
                _ => 0.0,
            };
            let sub_y = match (at(dx, dy - 1), at(dx, dy + 1)) {
                _ if exact => 0.0,
                (Some(u), Some(d)) => parabola_peak(u, score, d),
                _ => 0.0,
            };
            Some(Correspondence {
                p1: (px as f64, py as f64),
                p2: (px as f64 + dx as f64 + sub_x, py as f64 + dy as f64 + sub_y),
                score,
            })
        })
        .collect();
    Ok(matches)
}

/// Least-squares affine fit of `p1 -> p2`, solved in centred coordinates.
pub fn fit_affine_lsq(matches: &[Correspondence]) -> Result<AffineTransform> {
    if matches.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 matches, got {}",
            matches.len()
        )));
    }
    let n = matches.len() as f64;
    let (mut mx, mut my, mut qx, mut qy) = (0.0, 0.0, 0.0, 0.0);
    for m in matches {
        mx += m.p1.0;
        my += m.p1.1;
        qx += m.p2.0;
        qy += m.p2.1;
    }
    let (mx, my, qx, qy) = (mx / n, my / n, qx / n, qy / n);
    // Normal matrix of centred sources, and cross terms with centred targets.
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut ux, mut uy, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
    for m in matches {
        let (x, y) = (m.p1.0 - mx, m.p1.1 - my);
        let (u, v) = (m.p2.0 - qx, m.p2.1 - qy);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        ux += u * x;
        uy += u * y;
        vx += v * x;
        vy += v * y;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx + syy) * (sxx + syy);
    if scale <= 0.0 || det <= 1e-10 * scale {
        return Err(Error::DegenerateFit("source points are collinear".into()));
    }
    let a11 = (ux * syy - uy * sxy) / det;
    let a12 = (uy * sxx - ux * sxy) / det;
    let a21 = (vx * syy - vy * sxy) / det;
    let a22 = (vy * sxx - vx * sxy) / det;
    Ok(AffineTransform::new(
        [[a11, a12], [a21, a22]],
        [qx - a11 * mx - a12 * my, qy - a21 * mx - a22 * my],
    ))
}

pub fn transfer_error(t: &AffineTransform, m: &Correspondence) -> f64 {
    let (x, y) = t.apply(m.p1.0, m.p1.1);
    (x - m.p2.0).hypot(y - m.p2.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub inlier_threshold: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 2.0,
            iterations: 500,
            seed: 0,
        }
    }
}

fn inliers_of(t: &AffineTransform, matches: &[Correspondence], threshold: f64) -> Vec<usize> {
    (0..matches.len())
        .filter(|&i| transfer_error(t, &matches[i]) <= threshold)
        .collect()
}

/// Three-point hypothesize-and-verify, then least-squares refits on the
/// consensus set until it stops changing. Every reported inlier is within
/// `inlier_threshold` of the returned model.
pub fn fit_affine_ransac(
    matches: &[Correspondence],
    cfg: &RansacConfig,
) -> Result<(AffineTransform, Vec<usize>)> {
    if matches.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 matches, got {}",
            matches.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<[usize; 3]> = (0..cfg.iterations)
        .map(|_| {
            let a = rng.random_range(0..matches.len());
            let mut b = rng.random_range(0..matches.len() - 1);
            if b >= a {
                b += 1;
            }
            let mut c = rng.random_range(0..matches.len() - 2);
            for lo in [a.min(b), a.max(b)] {
                if c >= lo {
                    c += 1;
                }
            }
            [a, b, c]
        })
        .collect();
    let scored: Vec<Option<usize>> = samples
        .par_iter()
        .map(|s| {
            let picked: Vec<Correspondence> = s.iter().map(|&i| matches[i]).collect();
            fit_affine_lsq(&picked)
                .ok()
                .map(|t| inliers_of(&t, matches, cfg.inlier_threshold).len())
        })
        .collect();
    // First hypothesis with the largest consensus wins.
    let mut best: Option<(usize, usize)> = None;
    for (k, count) in scored.iter().enumerate() {
        if let Some(c) = *count {
            if best.is_none_or(|(bc, _)| c > bc) {
                best = Some((c, k));
            }
        }
    }
    let (count, k) = best.ok_or_else(|| Error::NoModel("every sample was degenerate".into()))?;
    if count < 3 {
        return Err(Error::NoModel(format!("best consensus has {count} matches")));
    }
    let picked: Vec<Correspondence> = samples[k].iter().map(|&i| matches[i]).collect();
    let mut model = fit_affine_lsq(&picked)?;
    let mut inliers = inliers_of(&model, matches, cfg.inlier_threshold);
    for _ in 0..10 {
        let subset: Vec<Correspondence> = inliers.iter().map(|&i| matches[i]).collect();
        let Ok(refit) = fit_affine_lsq(&subset) else {
            break;
        };
        let next = inliers_of(&refit, matches, cfg.inlier_threshold);
        if next.len() < 3 {
            break;
        }
        let stable = next == inliers;
        model = refit;
        inliers = next;
        if stable {
            break;
        }
    }
    Ok((model, inliers))
}

/// NCC over the overlap for `img2(x + dx, y + dy)` against `img1(x, y)`,
/// skipping pixels flagged in either optional exclusion mask.
fn shift_ncc(
    img1: &GrayImage,
    img2: &GrayImage,
    dx: isize,
    dy: isize,
    exclude: Option<(&BinaryMask, &BinaryMask)>,
) -> Option<f64> {
    let (w, h) = (img1.width() as isize, img1.height() as isize);
    let (x0, x1) = (0.max(-dx), w.min(w - dx));
    let (y0, y1) = (0.max(-dy), h.min(h - dy));
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    let (mut n, mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let (ax, ay) = (x as usize, y as usize);
            let (bx, by) = ((x + dx) as usize, (y + dy) as usize);
            if let Some((m1, m2)) = exclude {
                if m1.get(ax, ay) || m2.get(bx, by) {
                    continue;
                }
            }
            let (a, b) = (img1.get(ax, ay), img2.get(bx, by));
            n += 1.0;
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    if n < 2.0 {
        return None;
    }
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 1e-9 * n || vb <= 1e-9 * n {
        return None;
    }
    Some((sab - sa * sb / n) / (va * vb).sqrt())
}

fn best_shift(
    img1: &GrayImage,
    img2: &GrayImage,
    max_shift: usize,
    exclude: Option<(&BinaryMask, &BinaryMask)>,
) -> Option<(isize, isize)> {
    let r = max_shift as isize;
    let candidates: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .collect();
    let scores: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|&(dx, dy)| shift_ncc(img1, img2, dx, dy, exclude))
        .collect();
    let mut best: Option<(f64, isize, isize)> = None;
    // Candidates are already row-major, so strict comparisons implement the tie rule.
    for (&(dx, dy), s) in candidates.iter().zip(scores) {
        let Some(s) = s else { continue };
        let better = match best {
            None => true,
            Some((bs, bx, by)) => s > bs || (s == bs && dx * dx + dy * dy < bx * bx + by * by),
        };
        if better {
            best = Some((s, dx, dy));
        }
    }
    best.map(|(_, dx, dy)| (dx, dy))
}

/// Integer `(dx, dy)` such that `img2(x + dx, y + dy)` best matches `img1(x, y)`,
/// by exhaustive NCC search. Ties go to the smaller shift, then row-major
/// order; an untextured pair returns `(0, 0)`.
pub fn estimate_global_shift(img1: &GrayImage, img2: &GrayImage, max_shift: usize) -> Result<(isize, isize)> {
    if img1.dims() != img2.dims() {
        return Err(Error::Dimension(format!(
            "{:?} vs {:?}",
            img1.dims(),
            img2.dims()
        )));
    }
    Ok(best_shift(img1, img2, max_shift, None).unwrap_or((0, 0)))
}

/// Replace masked pixels by the median of visible pixels in their 5x5
/// neighbourhood, repeating until every pixel is filled.
pub fn median_fill(img: &GrayImage, mask: &BinaryMask) -> Result<GrayImage> {
    if img.dims() != mask.dims() {
        return Err(Error::Dimension("mask does not match image".into()));
    }
    let (w, h) = img.dims();
    if mask.count() == w * h {
        return Err(Error::DegenerateInput("no visible pixels to fill from".into()));
    }
    let mut out = img.clone();
    let mut known: Vec<bool> = mask.data().iter().map(|&v| v == 0).collect();
    let mut values = Vec::with_capacity(25);
    while known.iter().any(|k| !k) {
        let mut next_known = known.clone();
        let mut updates = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if known[y * w + x] {
                    continue;
                }
                values.clear();
                for ny in y.saturating_sub(2)..(y + 3).min(h) {
                    for nx in x.saturating_sub(2)..(x + 3).min(w) {
                        if known[ny * w + nx] {
                            values.push(out.get(nx, ny));
                        }
                    }
                }
                if values.is_empty() {
                    continue;
                }
                values.sort_by(f64::total_cmp);
                let mid = values.len() / 2;
                let median = if values.len() % 2 == 1 {
                    values[mid]
                } else {
                    0.5 * (values[mid - 1] + values[mid])
                };
                updates.push((x, y, median));
                next_known[y * w + x] = true;
            }
        }
        for (x, y, v) in updates {
            out.set(x, y, v);
        }
        known = next_known;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegistrationMode {
    Global,
    Affine,
}

impl FromStr for RegistrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Self::Global),
            "affine" => Ok(Self::Affine),
            _ => Err(Error::Parameter(format!("unknown registration mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationConfig {
    pub mode: RegistrationMode,
    pub max_shift: usize,
    pub max_corners: usize,
    pub corner_distance: f64,
    pub patch: usize,
    pub search_radius: usize,
    pub ransac: RansacConfig,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            mode: RegistrationMode::Global,
            max_shift: 16,
            max_corners: 200,
            corner_distance: 5.0,
            patch: 11,
            search_radius: 16,
            ransac: RansacConfig::default(),
        }
    }
}

/// Per-frame transforms into reference coordinates. Fence pixels (mask 1)
/// are median-filled before matching and also excluded from the global NCC.
pub fn register_frames(
    frames: &[GrayImage],
    masks: &[BinaryMask],
    reference: usize,
    cfg: &RegistrationConfig,
) -> Result<Vec<AffineTransform>> {
    if frames.len() < 2 {
        return Err(Error::Parameter("registration needs at least 2 frames".into()));
    }
    if masks.len() != frames.len() {
        return Err(Error::Dimension(format!(
            "{} frames but {} masks",
            frames.len(),
            masks.len()
        )));
    }
    if reference >= frames.len() {
        return Err(Error::Parameter(format!(
            "reference index {reference} out of range for {} frames",
            frames.len()
        )));
    }
    let dims = frames[reference].dims();
    for (i, (f, m)) in frames.iter().zip(masks).enumerate() {
        if f.dims() != dims || m.dims() != dims {
            return Err(Error::Registration {
                frame: i,
                reason: "dimensions differ from the reference frame".into(),
            });
        }
    }
    let filled: Vec<GrayImage> = frames
        .iter()
        .zip(masks)
        .enumerate()
        .map(|(i, (f, m))| {
            median_fill(f, m).map_err(|e| Error::Registration {
                frame: i,
                reason: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;

    let reference_corners = match cfg.mode {
        RegistrationMode::Affine => {
            detect_corners(&filled[reference], cfg.max_corners, cfg.corner_distance)
        }
        RegistrationMode::Global => Vec::new(),
    };

    (0..frames.len())
        .map(|i| {
            if i == reference {
                return Ok(AffineTransform::identity());
            }
            let fail = |reason: String| Error::Registration { frame: i, reason };
            match cfg.mode {
                RegistrationMode::Global => {
                    let (dx, dy) = best_shift(
                        &filled[reference],
                        &filled[i],
                        cfg.max_shift,
                        Some((&masks[reference], &masks[i])),
                    )
                    .ok_or_else(|| fail("no textured overlap at any shift".into()))?;
                    Ok(AffineTransform::translation(-dx as f64, -dy as f64))
                }
                RegistrationMode::Affine => {
                    let matches = match_patches(
                        &filled[reference],
                        &filled[i],
                        &reference_corners,
                        cfg.patch,
                        cfg.search_radius,
                    )?;
                    let (to_frame, _) =
                        fit_affine_ransac(&matches, &cfg.ransac).map_err(|e| fail(e.to_string()))?;
                    to_frame.inverse().map_err(|e| fail(e.to_string()))
                }
            }
        })
        .collect()
}
