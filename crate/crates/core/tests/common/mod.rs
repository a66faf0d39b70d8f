//! Independent reference implementations and data generators shared by the
//! integration tests. Nothing here calls the library routine it checks.

#![allow(dead_code)]

use fer_core::autoencoder::{AeHyper, AeLayer, Dense};
use fer_core::hog::HogConfig;
use fer_core::imageio::GrayImage;
use fer_core::linalg::{Matrix, Rng};
use nalgebra::DMatrix;

pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = vec![0.0; a.rows() * b.cols()];
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[i * b.cols() + j] = s;
        }
    }
    Matrix::new(a.rows(), b.cols(), out).unwrap()
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

pub fn random_image(rng: &mut Rng, w: usize, h: usize, max: u8) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.below(max as usize + 1) as u8)
}

// ---------------------------------------------------------------- HOG

/// Per-pixel HOG: gradients from explicit neighbour lookups, bin votes from a
/// circular triangular kernel over every bin centre, then block L2 norm.
pub fn naive_hog(img: &GrayImage, cfg: &HogConfig) -> Vec<f64> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let p = |x: i64, y: i64| img.get(x as usize, y as usize) as f64;
    let range = if cfg.signed { 360.0 } else { 180.0 };
    let bw = range / cfg.bins as f64;
    let cs = cfg.cell_size as i64;
    let (ncx, ncy) = ((w / cs) as usize, (h / cs) as usize);
    let mut hist = vec![vec![0.0f64; cfg.bins]; ncx * ncy];
    for y in 0..h {
        for x in 0..w {
            let gx = if x == 0 {
                p(1, y) - p(0, y)
            } else if x == w - 1 {
                p(w - 1, y) - p(w - 2, y)
            } else {
                p(x + 1, y) - p(x - 1, y)
            };
            let gy = if y == 0 {
                p(x, 1) - p(x, 0)
            } else if y == h - 1 {
                p(x, h - 1) - p(x, h - 2)
            } else {
                p(x, y + 1) - p(x, y - 1)
            };
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).to_degrees().rem_euclid(range);
            let cell = &mut hist[(y / cs) as usize * ncx + (x / cs) as usize];
            for (i, slot) in cell.iter_mut().enumerate() {
                let centre = (i as f64 + 0.5) * bw;
                let d = (theta - centre).abs();
                let d = d.min(range - d);
                let wgt = (1.0 - d / bw).max(0.0);
                *slot += mag * wgt;
            }
        }
    }
    let bc = cfg.block_cells;
    let st = cfg.block_stride;
    let mut out = Vec::new();
    let mut by = 0;
    while by + bc <= ncy {
        let mut bx = 0;
        while bx + bc <= ncx {
            let mut block = Vec::new();
            for cy in by..by + bc {
                for cx in bx..bx + bc {
                    block.extend_from_slice(&hist[cy * ncx + cx]);
                }
            }
            let ss: f64 = block.iter().map(|v| v * v).sum();
            let norm = (ss + cfg.norm_epsilon * cfg.norm_epsilon).sqrt();
            out.extend(block.iter().map(|v| v / norm));
            bx += st;
        }
        by += st;
    }
    out
}

// ------------------------------------------------------- autoencoder

pub fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn kl(rho: f64, q: f64) -> f64 {
    let q = q.clamp(1e-10, 1.0 - 1e-10);
    rho * (rho / q).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - q)).ln()
}

/// Per-neuron loop.
pub fn naive_dense(d: &Dense, x: &[f64]) -> Vec<f64> {
    (0..d.w.rows())
        .map(|j| {
            let mut z = d.b[j];
            for (i, xi) in x.iter().enumerate() {
                z += d.w[(j, i)] * xi;
            }
            sig(z)
        })
        .collect()
}

/// Reconstruction, weight decay and sparsity terms written out sample by
/// sample.
pub fn naive_cost(layer: &AeLayer, x: &Matrix, h: &AeHyper) -> (f64, f64, f64, f64) {
    let n = x.rows();
    let hidden = layer.encoder.w.rows();
    let mut recon = 0.0;
    let mut mean_act = vec![0.0; hidden];
    for r in 0..n {
        let a = naive_dense(&layer.encoder, x.row(r));
        let y = naive_dense(&layer.decoder, &a);
        let mut e = 0.0;
        for (yi, xi) in y.iter().zip(x.row(r)) {
            e += (yi - xi) * (yi - xi);
        }
        recon += 0.5 * e;
        for j in 0..hidden {
            mean_act[j] += a[j] / n as f64;
        }
    }
    recon /= n as f64;
    let mut sq = 0.0;
    for w in [&layer.encoder.w, &layer.decoder.w] {
        for v in w.as_slice() {
            sq += v * v;
        }
    }
    let decay = 0.5 * h.lambda * sq;
    let sparsity = h.beta * mean_act.iter().map(|&q| kl(h.rho, q)).sum::<f64>();
    (recon + decay + sparsity, recon, decay, sparsity)
}

pub fn random_layer(rng: &mut Rng, m: usize, n: usize, scale: f64) -> AeLayer {
    let enc = Dense {
        w: Matrix::from_fn(n, m, |_, _| scale * rng.normal()),
        b: (0..n).map(|_| 0.3 * rng.normal()).collect(),
    };
    let dec = Dense {
        w: Matrix::from_fn(m, n, |_, _| scale * rng.normal()),
        b: (0..m).map(|_| 0.3 * rng.normal()).collect(),
    };
    AeLayer::from_parts(enc, dec).unwrap()
}

pub fn unit_batch(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.next_f64())
}

// ----------------------------------------------------------------- PCA

/// Explicit covariance and a full nalgebra eigendecomposition; returns
/// `(eigenvalues desc, components k × d)`.
pub fn brute_pca(x: &Matrix, k: usize) -> (Vec<f64>, Matrix) {
    let (n, d) = x.shape();
    let dm = DMatrix::from_row_slice(n, d, x.as_slice());
    let mean = dm.row_mean();
    let mut xc = dm.clone();
    for mut row in xc.row_iter_mut() {
        row -= &mean;
    }
    let cov = xc.transpose() * &xc / (n as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let comps = Matrix::from_fn(k, d, |r, c| eig.eigenvectors[(c, order[r])]);
    (values, comps)
}

pub fn brute_project(x: &Matrix, comps: &Matrix) -> Matrix {
    let (n, d) = x.shape();
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            mean[c] += x[(r, c)] / n as f64;
        }
    }
    Matrix::from_fn(n, comps.rows(), |r, k| {
        (0..d).map(|c| (x[(r, c)] - mean[c]) * comps[(k, c)]).sum()
    })
}

/// Largest elementwise gap between projections after aligning every column's
/// sign.
pub fn projection_gap_up_to_sign(a: &Matrix, b: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..a.cols() {
        let dot: f64 = (0..a.rows()).map(|r| a[(r, k)] * b[(r, k)]).sum();
        let s = if dot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..a.rows() {
            worst = worst.max((a[(r, k)] - s * b[(r, k)]).abs());
        }
    }
    worst
}

// ----------------------------------------------------------------- SVM

/// Two Gaussian blobs at (−2, −2) and (2, 2), labels −1 / +1.
pub fn blobs(rng: &mut Rng, n: usize) -> (Matrix, Vec<f64>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        rows.push(vec![
            2.0 * s + 0.5 * rng.normal(),
            2.0 * s + 0.5 * rng.normal(),
        ]);
        y.push(s);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

/// Four clusters at (±1, ±1); label is the sign of `x·y`.
pub fn xor(rng: &mut Rng, per_cluster: usize) -> (Matrix, Vec<f64>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (cx, cy) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
        for _ in 0..per_cluster {
            rows.push(vec![cx + 0.15 * rng.normal(), cy + 0.15 * rng.normal()]);
            y.push(if cx * cy > 0.0 { 1.0 } else { -1.0 });
        }
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

/// `k` well-separated Gaussian clusters on a circle of radius 5.
pub fn clusters(rng: &mut Rng, k: usize, per: usize) -> (Matrix, Vec<usize>, Vec<[f64; 2]>) {
    let centres: Vec<[f64; 2]> = (0..k)
        .map(|c| {
            let t = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
            [5.0 * t.cos(), 5.0 * t.sin()]
        })
        .collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (c, ctr) in centres.iter().enumerate() {
        for _ in 0..per {
            rows.push(vec![
                ctr[0] + 0.4 * rng.normal(),
                ctr[1] + 0.4 * rng.normal(),
            ]);
            y.push(c);
        }
    }
    (Matrix::from_rows(&rows).unwrap(), y, centres)
}

/// Largest KKT violation of a dual solution, given decision values
/// `f(xᵢ)`: zero when every condition holds exactly.
pub fn kkt_violation(alpha: &[f64], y: &[f64], f: &[f64], c: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let bound = 1e-12 * c.max(1.0);
    for i in 0..alpha.len() {
        let m = y[i] * f[i];
        let v = if alpha[i] <= bound {
            (1.0 - m).max(0.0)
        } else if alpha[i] >= c - bound {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Σ αᵢyᵢ k(xᵢ, x) + b with an explicit Gaussian kernel.
pub fn naive_decision(x: &Matrix, y: &[f64], alpha: &[f64], b: f64, gamma: f64, q: &[f64]) -> f64 {
    let mut s = b;
    for i in 0..x.rows() {
        if alpha[i] == 0.0 {
            continue;
        }
        let d2: f64 = x.row(i).iter().zip(q).map(|(a, c)| (a - c) * (a - c)).sum();
        s += alpha[i] * y[i] * (-gamma * d2).exp();
    }
    s
}
