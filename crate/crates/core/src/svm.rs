//! Soft-margin kernel SVMs trained with SMO, and one-vs-all multiclass
//! classification.
//!
//! The solver works on the dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  0 ≤ αᵢ ≤ C,  yᵀα = 0,   Qᵢⱼ = yᵢyⱼK(xᵢ, xⱼ)
//! ```
//!
//! updating the maximal KKT-violating pair analytically at each step and
//! stopping once the violation gap drops below `tol`. A gap below `tol`
//! bounds every point's KKT violation (measured on `yᵢ f(xᵢ)`) by `tol`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{derive_seed, FeatureMatrix, Matrix, Rng};

const ETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// Gaussian width; `None` means `1 / feature_dim`, fixed at training.
    pub gamma: Option<f64>,
    /// Box constraint.
    pub c: f64,
    /// KKT tolerance.
    pub tol: f64,
    /// Iteration budget is `max_passes · 1000 · N` pair updates.
    pub max_passes: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kind: KernelKind::Gaussian,
            gamma: None,
            c: 1.0,
            tol: 1e-3,
            max_passes: 10,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::invalid(format!("svm gamma must be > 0, got {g}")));
            }
        }
        if !(self.c > 0.0) || !(self.tol > 0.0) || self.max_passes == 0 {
            return Err(Error::invalid(format!(
                "svm needs c > 0, tol > 0, max_passes >= 1 (got c {}, tol {}, max_passes {})",
                self.c, self.tol, self.max_passes
            )));
        }
        Ok(())
    }

    fn resolved(&self, dim: usize) -> KernelConfig {
        KernelConfig {
            gamma: Some(self.gamma.unwrap_or(1.0 / dim as f64)),
            ..*self
        }
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelKind::Gaussian => {
                let gamma = self.gamma.expect("resolved before evaluation");
                (-gamma * squared_distance(a, b)).exp()
            }
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(−γ‖a − b‖²)`.
pub fn gaussian_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            op: "gaussian_kernel",
            left: (1, a.len()),
            right: (1, b.len()),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
    }
    Ok((-gamma * squared_distance(a, b)).exp())
}

/// Gram matrix of the training rows under a resolved kernel.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    values: Vec<f64>,
    n: usize,
    kernel: KernelConfig,
}

impl KernelMatrix {
    pub fn new(data: &Matrix, cfg: &KernelConfig) -> Result<Self> {
        cfg.validate()?;
        let kernel = cfg.resolved(data.cols());
        let n = data.rows();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = kernel.eval(data.row(i), data.row(j));
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        Ok(KernelMatrix { values, n, kernel })
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Raw dual solution for every training point.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Final maximal violation gap `m(α) − M(α)`.
    pub gap: f64,
}

fn check_labels(labels: &[f64], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::invalid(format!(
            "{} labels for {n} samples",
            labels.len()
        )));
    }
    if n < 2 {
        return Err(Error::invalid("svm training needs at least 2 samples"));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::invalid(format!(
            "binary labels must be ±1, got {bad}"
        )));
    }
    if !labels.contains(&1.0) || !labels.contains(&-1.0) {
        return Err(Error::invalid(
            "svm training needs both classes present (got a single class)",
        ));
    }
    Ok(())
}

/// SMO on a precomputed kernel. `seed` fixes the scan order, which only
/// decides ties between equally violating points.
pub fn smo_solve_kernel(k: &KernelMatrix, labels: &[f64], seed: u64) -> Result<SmoSolution> {
    let n = k.n;
    check_labels(labels, n)?;
    let c = k.kernel.c;
    let tol = k.kernel.tol;
    let y = labels;

    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);

    let mut alpha = vec![0.0; n];
    // Gradient of the dual objective: G = Qα − e.
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let budget = k.kernel.max_passes.saturating_mul(1000).saturating_mul(n);
    let mut iterations = 0;
    let mut gap;
    loop {
        let (mut i, mut up) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut low) = (usize::MAX, f64::INFINITY);
        for &t in &order {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > up {
                up = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < low {
                low = v;
                j = t;
            }
        }
        gap = up - low;
        if i == usize::MAX || j == usize::MAX || gap < tol {
            break;
        }
        if iterations >= budget {
            log::warn!(
                "SMO stopped after {iterations} iterations with KKT gap {gap:.3e} (tol {tol:.1e})"
            );
            break;
        }
        iterations += 1;

        let (ki, kj) = (k.row(i), k.row(j));
        let eta = (ki[i] + kj[j] - 2.0 * ki[j]).max(ETA_FLOOR);
        // Step t moves αᵢ by yᵢt and αⱼ by −yⱼt, preserving yᵀα.
        let cap_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let cap_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let t = (gap / eta).min(cap_i).min(cap_j);

        alpha[i] = if t == cap_i {
            if y[i] > 0.0 {
                c
            } else {
                0.0
            }
        } else {
            alpha[i] + y[i] * t
        };
        alpha[j] = if t == cap_j {
            if y[j] > 0.0 {
                0.0
            } else {
                c
            }
        } else {
            alpha[j] - y[j] * t
        };
        for (g, (&yk, (&kki, &kkj))) in grad.iter_mut().zip(y.iter().zip(ki.iter().zip(kj))) {
            *g += yk * t * (kki - kkj);
        }
    }

    let (mut up, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut free_sum, mut free_n, mut sv_sum, mut sv_n) = (0.0, 0usize, 0.0, 0usize);
    for t in 0..n {
        let v = -y[t] * grad[t];
        if in_up(alpha[t], y[t]) {
            up = up.max(v);
        }
        if in_low(alpha[t], y[t]) {
            low = low.min(v);
        }
        if alpha[t] > 0.0 {
            sv_sum += v;
            sv_n += 1;
            if alpha[t] < c {
                free_sum += v;
                free_n += 1;
            }
        }
    }
    let bias = if free_n > 0 {
        free_sum / free_n as f64
    } else if sv_n > 0 {
        // All support vectors at the bound: their mean, kept inside the
        // feasible interval [M, m] so the KKT bound still holds.
        let b = sv_sum / sv_n as f64;
        if up.is_finite() && low.is_finite() {
            b.clamp(low.min(up), up.max(low))
        } else {
            b
        }
    } else {
        0.5 * (up + low)
    };
    Ok(SmoSolution {
        alpha,
        bias,
        iterations,
        gap,
    })
}

pub fn smo_solve(
    data: &FeatureMatrix,
    labels: &[f64],
    cfg: &KernelConfig,
    seed: u64,
) -> Result<SmoSolution> {
    check_labels(labels, data.rows())?;
    let k = KernelMatrix::new(data, cfg)?;
    smo_solve_kernel(&k, labels, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub support_vectors: FeatureMatrix,
    /// `αᵢ yᵢ` per support vector.
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    /// Resolved kernel (gamma always set).
    pub kernel: KernelConfig,
}

impl BinarySvm {
    fn from_solution(
        data: &Matrix,
        labels: &[f64],
        sol: &SmoSolution,
        kernel: KernelConfig,
    ) -> Result<Self> {
        let idx: Vec<usize> = (0..data.rows()).filter(|&i| sol.alpha[i] > 0.0).collect();
        if idx.is_empty() {
            return Err(Error::NoConvergence(
                "SMO produced no support vectors".into(),
            ));
        }
        Ok(BinarySvm {
            support_vectors: data.select_rows(&idx),
            dual_coeffs: idx.iter().map(|&i| sol.alpha[i] * labels[i]).collect(),
            bias: sol.bias,
            kernel,
        })
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.cols()
    }
}

pub fn smo_train(
    data: &FeatureMatrix,
    labels: &[f64],
    cfg: &KernelConfig,
    seed: u64,
) -> Result<BinarySvm> {
    check_labels(labels, data.rows())?;
    let k = KernelMatrix::new(data, cfg)?;
    let sol = smo_solve_kernel(&k, labels, seed)?;
    BinarySvm::from_solution(data, labels, &sol, k.kernel)
}

/// `Σ αᵢyᵢ K(xᵢ, x) + b`.
pub fn decision_value(m: &BinarySvm, x: &[f64]) -> Result<f64> {
    if x.len() != m.dim() {
        return Err(Error::Shape {
            op: "decision_value",
            left: (1, x.len()),
            right: m.support_vectors.shape(),
        });
    }
    Ok(m.support_vectors
        .row_iter()
        .zip(&m.dual_coeffs)
        .map(|(sv, &c)| c * m.kernel.eval(sv, x))
        .sum::<f64>()
        + m.bias)
}

/// Geometric margin `2/‖w‖`; only defined for the linear kernel.
pub fn margin(m: &BinarySvm) -> Result<f64> {
    if m.kernel.kind != KernelKind::Linear {
        return Err(Error::invalid(
            "margin undefined for implicit feature space",
        ));
    }
    let mut w = vec![0.0; m.dim()];
    for (sv, &c) in m.support_vectors.row_iter().zip(&m.dual_coeffs) {
        w.iter_mut().zip(sv).for_each(|(a, x)| *a += c * x);
    }
    Ok(2.0 / w.iter().map(|v| v * v).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSvm {
    /// Sorted class ids; `machines[i]` separates `classes[i]` from the rest.
    pub classes: Vec<usize>,
    pub machines: Vec<BinarySvm>,
}

/// One-vs-all training. Machine `i` gets seed `derive_seed(seed, [i])`.
pub fn ova_train(
    data: &FeatureMatrix,
    labels: &[usize],
    cfg: &KernelConfig,
    seed: u64,
) -> Result<MulticlassSvm> {
    if labels.len() != data.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} samples",
            labels.len(),
            data.rows()
        )));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid(format!(
            "one-vs-all needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let k = KernelMatrix::new(data, cfg)?;
    let machines = classes
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            let sol = smo_solve_kernel(&k, &y, derive_seed(seed, &[i as u64]))?;
            BinarySvm::from_solution(data, &y, &sol, k.kernel)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MulticlassSvm { classes, machines })
}

pub fn ova_scores(m: &MulticlassSvm, x: &[f64]) -> Result<Vec<f64>> {
    m.machines.iter().map(|b| decision_value(b, x)).collect()
}

/// Index of the largest score; the first wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn ova_predict(m: &MulticlassSvm, x: &[f64]) -> Result<usize> {
    Ok(m.classes[argmax(&ova_scores(m, x)?)])
}
