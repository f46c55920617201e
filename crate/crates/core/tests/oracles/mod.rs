//! Independent reference implementations shared by the integration tests and
//! the acceptance suite. Everything here is deliberately naive: direct loops,
//! no integral images, no shared code with the library beyond plain types.

#![allow(dead_code)]

use defence_core::cnn::Params;
use defence_core::imagecore::GrayImage;
use rand::Rng;

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random_range(0.0..255.0))
}

fn clamped(img: &GrayImage, x: isize, y: isize) -> f64 {
    let cx = x.clamp(0, img.width() as isize - 1) as usize;
    let cy = y.clamp(0, img.height() as isize - 1) as usize;
    img.data()[cy * img.width() + cx]
}

/// Sobel gx, gy at one pixel with replicate border.
pub fn sobel_at(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let (mut gx, mut gy) = (0.0, 0.0);
    for j in 0..3 {
        for i in 0..3 {
            let v = clamped(img, x as isize + i as isize - 1, y as isize + j as isize - 1);
            gx += KX[j][i] * v;
            // The vertical mask is the transpose.
            gy += KX[i][j] * v;
        }
    }
    (gx, gy)
}

/// 1296-value HOG of the 30x30 window at `(x0, y0)`, gradients taken on the
/// whole image. 7x7 cells of 4 px, 2x2-cell blocks at 1-cell stride, 9 hard
/// bins of 20 degrees, block L2 with 1e-3 inside the root.
pub fn hog_direct(img: &GrayImage, x0: usize, y0: usize) -> Vec<f64> {
    let mut cells = vec![[0.0f64; 9]; 49];
    for cy in 0..7 {
        for cx in 0..7 {
            for py in 0..4 {
                for px in 0..4 {
                    let (x, y) = (x0 + cx * 4 + px, y0 + cy * 4 + py);
                    let (gx, gy) = sobel_at(img, x, y);
                    let mut theta = gy.atan2(gx).to_degrees();
                    while theta < 0.0 {
                        theta += 180.0;
                    }
                    while theta >= 180.0 {
                        theta -= 180.0;
                    }
                    let bin = ((theta / 20.0) as usize).min(8);
                    cells[cy * 7 + cx][bin] += (gx * gx + gy * gy).sqrt();
                }
            }
        }
    }
    let mut out = Vec::with_capacity(1296);
    for by in 0..6 {
        for bx in 0..6 {
            let mut block = Vec::with_capacity(36);
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                block.extend_from_slice(&cells[(by + dy) * 7 + bx + dx]);
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + 1e-3).sqrt();
            out.extend(block.iter().map(|v| v / norm));
        }
    }
    out
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Plain nested-loop forward pass of the 32-28-14-10-5-300-1 network on an
/// input already scaled to [0, 1]. Filters are applied as correlations.
pub fn cnn_forward_naive(p: &Params, input: &GrayImage) -> f64 {
    let x = |r: usize, c: usize| input.data()[r * 32 + c];
    let mut a1 = vec![vec![vec![0.0; 28]; 28]; 6];
    for k in 0..6 {
        for r in 0..28 {
            for c in 0..28 {
                let mut z = p.conv1_b[k];
                for i in 0..5 {
                    for j in 0..5 {
                        z += p.conv1_w[k * 25 + i * 5 + j] * x(r + i, c + j);
                    }
                }
                a1[k][r][c] = sigmoid(z);
            }
        }
    }
    let pool = |a: &Vec<Vec<f64>>, side: usize| -> Vec<Vec<f64>> {
        (0..side / 2)
            .map(|r| {
                (0..side / 2)
                    .map(|c| {
                        a[2 * r][2 * c]
                            .max(a[2 * r][2 * c + 1])
                            .max(a[2 * r + 1][2 * c])
                            .max(a[2 * r + 1][2 * c + 1])
                    })
                    .collect()
            })
            .collect()
    };
    let p1: Vec<_> = a1.iter().map(|m| pool(m, 28)).collect();
    let mut a2 = vec![vec![vec![0.0; 10]; 10]; 12];
    for m in 0..12 {
        for r in 0..10 {
            for c in 0..10 {
                let mut z = p.conv2_b[m];
                for k in 0..6 {
                    for i in 0..5 {
                        for j in 0..5 {
                            z += p.conv2_w[(m * 6 + k) * 25 + i * 5 + j] * p1[k][r + i][c + j];
                        }
                    }
                }
                a2[m][r][c] = sigmoid(z);
            }
        }
    }
    let mut z = p.fc_b[0];
    let mut idx = 0;
    for m in 0..12 {
        let pooled = pool(&a2[m], 10);
        for row in &pooled {
            for v in row {
                z += p.fc_w[idx] * v;
                idx += 1;
            }
        }
    }
    assert_eq!(idx, 300);
    sigmoid(z)
}

/// `min_{fp} lambda |fp - fq| + d(fp) + sum incoming(fp)`, shifted to min 0.
pub fn message_oracle(incoming: &[Vec<f64>], d: &[f64], lambda: f64) -> Vec<f64> {
    let l = d.len();
    let base: Vec<f64> = (0..l)
        .map(|f| d[f] + incoming.iter().map(|m| m[f]).sum::<f64>())
        .collect();
    let mut out: Vec<f64> = (0..l)
        .map(|fq| {
            (0..l)
                .map(|fp| lambda * (fp as f64 - fq as f64).abs() + base[fp])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let m = out.iter().cloned().fold(f64::INFINITY, f64::min);
    out.iter_mut().for_each(|v| *v -= m);
    out
}

/// Grid energy: data cost plus `lambda |fp - fq|` over 4-connected pairs.
pub fn grid_energy(costs: &[Vec<f64>], w: usize, h: usize, labels: &[usize], lambda: f64) -> f64 {
    let mut e: f64 = (0..w * h).map(|p| costs[p][labels[p]]).sum();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                e += lambda * (labels[p] as f64 - labels[p + 1] as f64).abs();
            }
            if y + 1 < h {
                e += lambda * (labels[p] as f64 - labels[p + w] as f64).abs();
            }
        }
    }
    e
}

/// Minimum energy of a chain by Viterbi recursion.
pub fn chain_min_energy(costs: &[Vec<f64>], lambda: f64) -> f64 {
    let l = costs[0].len();
    let mut acc = costs[0].clone();
    for c in &costs[1..] {
        acc = (0..l)
            .map(|f| {
                c[f] + (0..l)
                    .map(|g| acc[g] + lambda * (f as f64 - g as f64).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
    }
    acc.into_iter().fold(f64::INFINITY, f64::min)
}

/// Minimum grid energy over every labeling, by recursion over pixels.
pub fn exhaustive_min_energy(costs: &[Vec<f64>], w: usize, h: usize, lambda: f64) -> f64 {
    let l = costs[0].len();
    let n = w * h;
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    let total = l.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for v in labels.iter_mut() {
            *v = c % l;
            c /= l;
        }
        best = best.min(grid_energy(costs, w, h, &labels, lambda));
    }
    best
}

/// Normalized 11-tap Gaussian, sigma 1.5.
fn gauss11() -> [f64; 11] {
    let mut g = [0.0; 11];
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *v = (-d * d / (2.0 * 1.5 * 1.5)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Mean SSIM over every 11x11 window that fits, computed window by window.
pub fn ssim_direct(a: &GrayImage, b: &GrayImage) -> f64 {
    let g = gauss11();
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let (w, h) = a.dims();
    let mut total = 0.0;
    let mut count = 0;
    for cy in 5..h - 5 {
        for cx in 5..w - 5 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let wt = g[i] * g[j];
                    let va = a.get(cx + i - 5, cy + j - 5);
                    let vb = b.get(cx + i - 5, cy + j - 5);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Greedy suppression restated: repeatedly take the best remaining joint
/// (highest score, then smallest y, then smallest x) and discard everything
/// closer than `radius` to it.
pub fn suppress_oracle(joints: &[(f64, f64, f64)], radius: f64) -> Vec<(f64, f64, f64)> {
    let mut pool: Vec<(f64, f64, f64)> = joints.to_vec();
    let mut kept = Vec::new();
    while !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            let (a, b) = (pool[i], pool[best]);
            let better = a.2 > b.2 || (a.2 == b.2 && (a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)));
            if better {
                best = i;
            }
        }
        let j = pool.remove(best);
        kept.push(j);
        pool.retain(|p| ((p.0 - j.0).powi(2) + (p.1 - j.1).powi(2)).sqrt() >= radius);
    }
    kept
}
