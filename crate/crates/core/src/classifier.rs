//! Max-margin joint / non-joint classifier over HOG descriptors.
//!
//! The linear model is trained in the primal on the hinge objective
//! `(1/n) sum max(0, 1 - y (w.x + b)) + ||w||^2 / (2 C n)` by epoch-based
//! stochastic sub-gradient descent (Pegasos steps `1 / (lambda t)`). The RBF
//! model solves the C-SVC dual with maximal-violating-pair SMO updates.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hog::{self, HogParams};
use crate::imagecore::{load_gray, GrayImage};

const MODEL_MAGIC: &[u8; 4] = b"DFK1";
const LINEAR_EPOCHS: usize = 20;
const KKT_TOLERANCE: f64 = 1e-3;
const MAX_SMO_PASSES: usize = 10_000;
const GRAM_CACHE_LIMIT: usize = 4096;

pub const DEFAULT_C: f64 = 10.0;
pub const DEFAULT_GAMMA: f64 = 1.0 / hog::DESCRIPTOR_LEN as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Joint,
    NonJoint,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Joint => 1.0,
            Label::NonJoint => -1.0,
        }
    }

    /// Scores of exactly zero map to `Joint`.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Joint
        } else {
            Label::NonJoint
        }
    }
}

/// A labelled 30x30 training patch.
#[derive(Debug, Clone)]
pub struct TexelSample {
    pub patch: GrayImage,
    pub label: Label,
}

/// Feature vector with its label.
pub type Example = (Vec<f64>, Label);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingMeta {
    /// Per-fold validation error rates of the chosen grid point, if a search ran.
    pub fold_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Linear {
        weights: Vec<f64>,
    },
    Rbf {
        /// `alpha_i * y_i`, each within `[-C, C]`.
        coefficients: Vec<f64>,
        support: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    dims: usize,
    body: Body,
    bias: f64,
    c: f64,
    gamma: f64,
    pub meta: TrainingMeta,
}

impl ClassifierModel {
    pub fn linear(weights: Vec<f64>, bias: f64, c: f64) -> Self {
        Self {
            dims: weights.len(),
            body: Body::Linear { weights },
            bias,
            c,
            gamma: 0.0,
            meta: TrainingMeta::default(),
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self.body {
            Body::Linear { .. } => KernelKind::Linear,
            Body::Rbf { .. } => KernelKind::Rbf,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match &self.body {
            Body::Linear { weights } => Some(weights),
            Body::Rbf { .. } => None,
        }
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.body {
            Body::Rbf { coefficients, .. } => Some(coefficients),
            Body::Linear { .. } => None,
        }
    }

    pub fn support_count(&self) -> usize {
        match &self.body {
            Body::Rbf { support, .. } => support.len(),
            Body::Linear { .. } => 0,
        }
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dims {
            return Err(Error::Dimension(format!(
                "model expects {} features, got {}",
                self.dims,
                x.len()
            )));
        }
        Ok(self.decision_unchecked(x))
    }

    fn decision_unchecked(&self, x: &[f64]) -> f64 {
        match &self.body {
            Body::Linear { weights } => dot(weights, x) + self.bias,
            Body::Rbf {
                coefficients,
                support,
            } => {
                coefficients
                    .iter()
                    .zip(support)
                    .map(|(a, s)| a * rbf(s, x, self.gamma))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.push(match self.kind() {
            KernelKind::Linear => 0,
            KernelKind::Rbf => 1,
        });
        out.extend_from_slice(&(self.dims as u32).to_le_bytes());
        for v in [self.c, self.gamma, self.bias] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        match &self.body {
            Body::Linear { weights } => weights
                .iter()
                .for_each(|w| out.extend_from_slice(&w.to_le_bytes())),
            Body::Rbf {
                coefficients,
                support,
            } => {
                out.extend_from_slice(&(support.len() as u32).to_le_bytes());
                for (a, s) in coefficients.iter().zip(support) {
                    out.extend_from_slice(&a.to_le_bytes());
                    s.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
                }
            }
        }
        out.extend_from_slice(&(self.meta.fold_errors.len() as u32).to_le_bytes());
        self.meta
            .fold_errors
            .iter()
            .for_each(|e| out.extend_from_slice(&e.to_le_bytes()));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::ModelFormat("missing DFK1 magic".into()));
        }
        let kind = r.u8()?;
        let dims = r.u32()? as usize;
        let (c, gamma, bias) = (r.f64()?, r.f64()?, r.f64()?);
        let body = match kind {
            0 => Body::Linear {
                weights: r.f64s(dims)?,
            },
            1 => {
                let n = r.u32()? as usize;
                let mut coefficients = Vec::with_capacity(n.min(1 << 16));
                let mut support = Vec::with_capacity(n.min(1 << 16));
                for _ in 0..n {
                    coefficients.push(r.f64()?);
                    support.push(r.f64s(dims)?);
                }
                Body::Rbf {
                    coefficients,
                    support,
                }
            }
            k => return Err(Error::ModelFormat(format!("unknown kind byte {k}"))),
        };
        let folds = r.u32()? as usize;
        let fold_errors = r.f64s(folds)?;
        if !r.is_empty() {
            return Err(Error::ModelFormat("trailing bytes".into()));
        }
        Ok(Self {
            dims,
            body,
            bias,
            c,
            gamma,
            meta: TrainingMeta { fold_errors },
        })
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

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Score and label; score 0 maps to `Joint`.
pub fn predict(model: &ClassifierModel, features: &[f64]) -> Result<(f64, Label)> {
    let score = model.decision(features)?;
    Ok((score, Label::from_score(score)))
}

fn mistakes(model: &ClassifierModel, examples: &[Example]) -> Result<usize> {
    let mut wrong = 0usize;
    for (x, y) in examples {
        if predict(model, x)?.1 != *y {
            wrong += 1;
        }
    }
    Ok(wrong)
}

pub fn accuracy(model: &ClassifierModel, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let wrong = mistakes(model, examples)?;
    Ok((examples.len() - wrong) as f64 / examples.len() as f64)
}

/// Fraction of misclassified examples, computed from the count so equal
/// counts give bit-equal rates.
pub fn error_rate(model: &ClassifierModel, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    Ok(mistakes(model, examples)? as f64 / examples.len() as f64)
}

/// The primal objective the linear trainer minimizes.
pub fn hinge_objective(weights: &[f64], bias: f64, examples: &[Example], c: f64) -> f64 {
    let n = examples.len() as f64;
    let loss: f64 = examples
        .iter()
        .map(|(x, y)| (1.0 - y.sign() * (dot(weights, x) + bias)).max(0.0))
        .sum();
    loss / n + dot(weights, weights) / (2.0 * c * n)
}

fn check_training_set(examples: &[Example]) -> Result<usize> {
    let pos = examples.iter().filter(|(_, y)| *y == Label::Joint).count();
    if pos == 0 || pos == examples.len() {
        return Err(Error::DegenerateTraining(format!(
            "need both labels, got {pos} joints and {} non-joints",
            examples.len() - pos
        )));
    }
    let dims = examples[0].0.len();
    if examples.iter().any(|(x, _)| x.len() != dims) {
        return Err(Error::Dimension("examples have differing lengths".into()));
    }
    Ok(dims)
}

pub fn train(
    examples: &[Example],
    kind: KernelKind,
    c: f64,
    gamma: f64,
    seed: u64,
) -> Result<ClassifierModel> {
    let dims = check_training_set(examples)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Parameter(format!("C must be positive, got {c}")));
    }
    match kind {
        KernelKind::Linear => Ok(train_linear(examples, dims, c, seed)),
        KernelKind::Rbf => {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::Parameter(format!("gamma must be positive, got {gamma}")));
            }
            Ok(train_rbf(examples, dims, c, gamma))
        }
    }
}

/// Pegasos with the bias carried as a constant unit feature. The returned
/// iterate is the epoch end (or the zero model) with the lowest objective.
fn train_linear(examples: &[Example], dims: usize, c: f64, seed: u64) -> ClassifierModel {
    let n = examples.len();
    let lambda = 1.0 / (c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; dims];
    let mut b = 0.0;

    let mut best = (hinge_objective(&w, b, examples, c), w.clone(), b);
    let mut t = 0usize;
    for _ in 0..LINEAR_EPOCHS {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let (x, y) = &examples[i];
            let y = y.sign();
            let margin = y * (dot(&w, x) + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|wj| *wj *= shrink);
            b *= shrink;
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += eta * y * xj;
                }
                b += eta * y;
            }
            let norm = (dot(&w, &w) + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|wj| *wj *= s);
                b *= s;
            }
        }
        let obj = hinge_objective(&w, b, examples, c);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
    }
    ClassifierModel::linear(best.1, best.2, c)
}

enum Gram<'a> {
    Cached(Vec<f64>),
    OnDemand(&'a [Example], f64),
}

impl Gram<'_> {
    #[inline]
    fn get(&self, n: usize, i: usize, j: usize) -> f64 {
        match self {
            Gram::Cached(k) => k[i * n + j],
            Gram::OnDemand(ex, gamma) => rbf(&ex[i].0, &ex[j].0, *gamma),
        }
    }
}

fn train_rbf(examples: &[Example], dims: usize, c: f64, gamma: f64) -> ClassifierModel {
    const TAU: f64 = 1e-12;
    let n = examples.len();
    let y: Vec<f64> = examples.iter().map(|(_, l)| l.sign()).collect();
    let gram = if n <= GRAM_CACHE_LIMIT {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| rbf(&examples[i].0, &examples[j].0, gamma)).collect())
            .collect();
        Gram::Cached(rows.concat())
    } else {
        Gram::OnDemand(examples, gamma)
    };
    let q = |i: usize, j: usize| y[i] * y[j] * gram.get(n, i, j);

    let mut alpha = vec![0.0; n];
    // Gradient of 0.5 a'Qa - e'a.
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi < 0.0 && a < c) || (yi > 0.0 && a > 0.0);

    let max_iter = MAX_SMO_PASSES.saturating_mul(n.max(1));
    for _ in 0..max_iter {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < KKT_TOLERANCE {
            break;
        }
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        if y[i] != y[j] {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Offset from free vectors, falling back to the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut coefficients = Vec::new();
    let mut support = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            coefficients.push(alpha[t] * y[t]);
            support.push(examples[t].0.clone());
        }
    }
    ClassifierModel {
        dims,
        body: Body::Rbf {
            coefficients,
            support,
        },
        bias: -rho,
        c,
        gamma,
        meta: TrainingMeta::default(),
    }
}

/// Fold index per example. Each class is shuffled separately from `seed`
/// (positives first) and dealt round-robin across the folds.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Parameter(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    for class in [Label::Joint, Label::NonJoint] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < folds {
            return Err(Error::Parameter(format!(
                "{} samples of class {class:?}, need at least {folds}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvEntry {
    pub c: f64,
    pub gamma: f64,
    pub fold_errors: Vec<f64>,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_c: f64,
    pub best_gamma: f64,
    pub table: Vec<CvEntry>,
}

impl CvResult {
    pub fn best(&self) -> &CvEntry {
        self.table
            .iter()
            .find(|e| e.c == self.best_c && e.gamma == self.best_gamma)
            .expect("best entry is in the table")
    }
}

/// Validation error of one grid point on every fold.
pub fn fold_errors(
    examples: &[Example],
    assignment: &[usize],
    folds: usize,
    kind: KernelKind,
    c: f64,
    gamma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..folds)
        .map(|k| {
            let train_set: Vec<Example> = examples
                .iter()
                .zip(assignment)
                .filter(|(_, &f)| f != k)
                .map(|(e, _)| e.clone())
                .collect();
            let held: Vec<Example> = examples
                .iter()
                .zip(assignment)
                .filter(|(_, &f)| f == k)
                .map(|(e, _)| e.clone())
                .collect();
            let model = train(&train_set, kind, c, gamma, seed)?;
            error_rate(&model, &held)
        })
        .collect()
}

/// Exhaustive k-fold search; the lowest mean validation error wins, ties go
/// to the smaller C, then the smaller gamma.
pub fn grid_search_cv(
    examples: &[Example],
    kind: KernelKind,
    c_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    check_training_set(examples)?;
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::Parameter("empty search grid".into()));
    }
    let labels: Vec<Label> = examples.iter().map(|(_, l)| *l).collect();
    let assignment = stratified_folds(&labels, folds, seed)?;
    let points: Vec<(f64, f64)> = c_grid
        .iter()
        .flat_map(|&c| gamma_grid.iter().map(move |&g| (c, g)))
        .collect();
    let table = points
        .par_iter()
        .map(|&(c, gamma)| {
            let errs = fold_errors(examples, &assignment, folds, kind, c, gamma, seed)?;
            let mean = errs.iter().sum::<f64>() / folds as f64;
            Ok(CvEntry {
                c,
                gamma,
                fold_errors: errs,
                mean_error: mean,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = table
        .iter()
        .min_by(|a, b| {
            a.mean_error
                .total_cmp(&b.mean_error)
                .then(a.c.total_cmp(&b.c))
                .then(a.gamma.total_cmp(&b.gamma))
        })
        .expect("non-empty grid");
    Ok(CvResult {
        best_c: best.c,
        best_gamma: best.gamma,
        table,
    })
}

/// `count` values spaced evenly in log10 between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// HOG descriptors for every sample, in input order.
pub fn hog_examples(samples: &[TexelSample], params: &HogParams) -> Result<Vec<Example>> {
    samples
        .par_iter()
        .map(|s| Ok((hog::extract(&s.patch, params)?.into_vec(), s.label)))
        .collect()
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"));
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Load labelled patches: `pos_dir` holds joints, `neg_dir` non-joints.
/// Files are read in lexicographic order, positives first.
pub fn load_patch_dirs(
    pos_dir: impl AsRef<Path>,
    neg_dir: impl AsRef<Path>,
    side: usize,
) -> Result<Vec<TexelSample>> {
    let mut samples = Vec::new();
    for (dir, label) in [
        (pos_dir.as_ref(), Label::Joint),
        (neg_dir.as_ref(), Label::NonJoint),
    ] {
        for path in image_files(dir)? {
            let patch = load_gray(&path)?;
            if patch.dims() != (side, side) {
                return Err(Error::PatchSize {
                    path,
                    width: patch.width(),
                    height: patch.height(),
                    expected: side,
                });
            }
            samples.push(TexelSample { patch, label });
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dims: usize, k: usize, scale: f64) -> Vec<f64> {
        let mut v = vec![0.0; dims];
        v[k] = scale;
        v
    }

    #[test]
    fn predict_examples() {
        let m = ClassifierModel::linear(unit(4, 0, 1.0), 0.0, 1.0);
        assert_eq!(predict(&m, &unit(4, 0, 1.0)).unwrap(), (1.0, Label::Joint));
        assert_eq!(predict(&m, &unit(4, 0, -1.0)).unwrap(), (-1.0, Label::NonJoint));
        assert_eq!(predict(&m, &unit(4, 1, 1.0)).unwrap(), (0.0, Label::Joint));
        assert!(matches!(predict(&m, &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn single_class_is_degenerate() {
        let ex: Vec<Example> = (0..5).map(|i| (unit(3, i % 3, 1.0), Label::Joint)).collect();
        assert!(matches!(
            train(&ex, KernelKind::Linear, 1.0, 1.0, 0),
            Err(Error::DegenerateTraining(_))
        ));
    }

    #[test]
    fn separable_directions_train_perfectly() {
        // e1-cluster vs e2-cluster: w = e1 - e2 separates with margin 1.
        let mut ex = Vec::new();
        for i in 0..50 {
            let jitter = 0.01 * (i % 7) as f64;
            let mut a = unit(1296, 0, 1.0);
            a[2] = jitter;
            let mut b = unit(1296, 1, 1.0);
            b[3] = jitter;
            ex.push((a, Label::Joint));
            ex.push((b, Label::NonJoint));
        }
        let m = train(&ex, KernelKind::Linear, DEFAULT_C, 0.0, 3).unwrap();
        assert_eq!(m.weights().unwrap().len(), 1296);
        assert_eq!(accuracy(&m, &ex).unwrap(), 1.0);
        assert!(hinge_objective(m.weights().unwrap(), m.bias(), &ex, DEFAULT_C) <= 1.0);
    }

    #[test]
    fn stratification_arithmetic() {
        let labels: Vec<Label> = (0..20)
            .map(|i| if i < 10 { Label::Joint } else { Label::NonJoint })
            .collect();
        let folds = stratified_folds(&labels, 5, 9).unwrap();
        for k in 0..5 {
            let pos = (0..10).filter(|&i| folds[i] == k).count();
            let neg = (10..20).filter(|&i| folds[i] == k).count();
            assert_eq!((pos, neg), (2, 2));
        }
        assert!(stratified_folds(&labels[..14], 5, 0).is_err());
    }

    #[test]
    fn model_bytes_round_trip() {
        let mut m = ClassifierModel::linear(vec![0.5, -1.25, 3.0], 0.125, 10.0);
        m.meta.fold_errors = vec![0.1, 0.0];
        let back = ClassifierModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(&m.to_bytes()[..4], b"DFK1");
        assert!(ClassifierModel::from_bytes(b"DFK1").is_err());
        assert!(ClassifierModel::from_bytes(b"XXXX").is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.01, 100.0, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[2] - 1.0).abs() < 1e-12);
        assert!((g[4] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn patch_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let (pos, neg) = (dir.path().join("pos"), dir.path().join("neg"));
        fs::create_dir_all(&pos).unwrap();
        fs::create_dir_all(&neg).unwrap();
        let patch = GrayImage::filled(30, 30, 10.0);
        for i in 0..3 {
            crate::imagecore::save_gray(&patch, pos.join(format!("p{i}.pgm"))).unwrap();
            crate::imagecore::save_gray(&patch, neg.join(format!("n{i}.png"))).unwrap();
        }
        let samples = load_patch_dirs(&pos, &neg, 30).unwrap();
        assert_eq!(samples.len(), 6);
        assert_eq!(samples.iter().filter(|s| s.label == Label::Joint).count(), 3);

        crate::imagecore::save_gray(&GrayImage::new(29, 30), neg.join("bad.pgm")).unwrap();
        match load_patch_dirs(&pos, &neg, 30) {
            Err(Error::PatchSize { path, width, .. }) => {
                assert!(path.ends_with("bad.pgm"));
                assert_eq!(width, 29);
            }
            other => panic!("expected size error, got {other:?}"),
        }
    }

    #[test]
    fn empty_positive_dir_fails_at_train_time() {
        let dir = tempfile::tempdir().unwrap();
        let (pos, neg) = (dir.path().join("pos"), dir.path().join("neg"));
        fs::create_dir_all(&pos).unwrap();
        fs::create_dir_all(&neg).unwrap();
        crate::imagecore::save_gray(&GrayImage::new(30, 30), neg.join("n.pgm")).unwrap();
        let samples = load_patch_dirs(&pos, &neg, 30).unwrap();
        let ex = hog_examples(&samples, &HogParams::default()).unwrap();
        assert!(matches!(
            train(&ex, KernelKind::Linear, 1.0, 1.0, 0),
            Err(Error::DegenerateTraining(_))
        ));
    }
}
