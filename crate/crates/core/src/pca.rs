//! Principal component analysis by symmetric eigendecomposition.
//!
//! When there are fewer samples than features the `N × N` Gram matrix of the
//! centred data is decomposed instead of the `d × d` covariance, and its
//! eigenvectors are lifted back to feature space with `Xcᵀ u`.

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, FeatureMatrix, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows.
    pub components: Matrix,
    /// Variance along each component, descending.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn new(mean: Vec<f64>, components: Matrix, eigenvalues: Vec<f64>) -> Result<Self> {
        if components.cols() != mean.len() || components.rows() != eigenvalues.len() {
            return Err(Error::invalid(format!(
                "PCA parts disagree: mean {}, components {:?}, eigenvalues {}",
                mean.len(),
                components.shape(),
                eigenvalues.len()
            )));
        }
        Ok(PcaModel {
            mean,
            components,
            eigenvalues,
        })
    }

    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The same model restricted to its leading `k` components.
    pub fn truncate(&self, k: usize) -> Result<PcaModel> {
        if k == 0 || k > self.k() {
            return Err(Error::invalid(format!(
                "cannot keep {k} of {} principal components",
                self.k()
            )));
        }
        let idx: Vec<usize> = (0..k).collect();
        Ok(PcaModel {
            mean: self.mean.clone(),
            components: self.components.select_rows(&idx),
            eigenvalues: self.eigenvalues[..k].to_vec(),
        })
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::Shape {
                op: "pca",
                left: x.shape(),
                right: self.components.shape(),
            });
        }
        Ok(())
    }
}

fn centred(data: &Matrix, mean: &[f64]) -> Matrix {
    let mut xc = data.clone();
    for row in xc.as_mut_slice().chunks_exact_mut(mean.len()) {
        for (v, m) in row.iter_mut().zip(mean) {
            *v -= m;
        }
    }
    xc
}

fn symmetrise(m: &mut Matrix) {
    let n = m.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn normalise(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn orthogonalise(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of classical Gram–Schmidt.
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
    }
}

/// Flip so the largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fits the top `k` principal axes of the rows of `data`.
pub fn pca_fit(data: &FeatureMatrix, k: usize) -> Result<PcaModel> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::invalid(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    let k_max = (n - 1).min(d);
    if k == 0 || k > k_max {
        return Err(Error::invalid(format!(
            "PCA dimension {k} out of range 1..={k_max} for {n} samples of width {d}"
        )));
    }
    let mean = data.col_means();
    let xc = centred(data, &mean);
    let scale = 1.0 / (n - 1) as f64;

    let (eigenvalues, mut axes) = if n < d {
        let mut gram = xc.matmul_nt(&xc)?.map(|v| v * scale);
        symmetrise(&mut gram);
        let eig = sym_eigen(&gram)?;
        // Lift u ↦ Xcᵀu; directions with (numerically) zero variance have no
        // preimage and are completed from the standard basis below.
        let floor = 1e-12 * eig.values[0].abs().max(f64::MIN_POSITIVE);
        let mut axes: Vec<Vec<f64>> = Vec::with_capacity(k);
        for i in 0..k {
            if eig.values[i] <= floor {
                break;
            }
            let mut v = vec![0.0; d];
            for r in 0..n {
                let u = eig.vectors[(r, i)];
                v.iter_mut().zip(xc.row(r)).for_each(|(a, x)| *a += u * x);
            }
            orthogonalise(&mut v, &axes);
            normalise(&mut v);
            axes.push(v);
        }
        (eig.values[..k].to_vec(), axes)
    } else {
        let mut cov = xc.matmul_tn(&xc)?.map(|v| v * scale);
        symmetrise(&mut cov);
        let eig = sym_eigen(&cov)?;
        let axes = (0..k)
            .map(|i| (0..d).map(|r| eig.vectors[(r, i)]).collect())
            .collect();
        (eig.values[..k].to_vec(), axes)
    };

    let mut e = 0;
    while axes.len() < k {
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        e += 1;
        orthogonalise(&mut v, &axes);
        if normalise(&mut v) > 1e-3 {
            axes.push(v);
        }
    }
    for v in &mut axes {
        fix_sign(v);
    }
    let components = Matrix::from_rows(&axes)?;
    PcaModel::new(mean, components, eigenvalues)
}

/// `(x − mean) · componentsᵀ`.
pub fn pca_project(model: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    model.check_width(x)?;
    centred(x, &model.mean).matmul_nt(&model.components)
}

/// Maps projected codes back to feature space: `z · components + mean`.
pub fn pca_reconstruct(model: &PcaModel, z: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut x = z.matmul(&model.components)?;
    for row in x.as_mut_slice().chunks_exact_mut(model.dim()) {
        row.iter_mut().zip(&model.mean).for_each(|(v, m)| *v += m);
    }
    Ok(x)
}

/// Mean over rows of `‖x − reconstruct(project(x))‖²`.
pub fn pca_reconstruction_error(model: &PcaModel, x: &FeatureMatrix) -> Result<f64> {
    let y = pca_reconstruct(model, &pca_project(model, x)?)?;
    Ok(y.as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.rows() as f64)
}
