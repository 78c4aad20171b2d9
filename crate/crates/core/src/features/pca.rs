//! PCA fitting and projection over feature matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};

/// Stabilizer added to eigenvalues before whitening divides by them.
pub const WHITEN_EPSILON: f64 = 1e-5;

/// Fitted PCA basis: feature mean, top-d eigenvectors of the covariance
/// (rows of `components`, unit length, sorted by descending eigenvalue),
/// and the matching eigenvalues (clamped at zero).
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// d×D row-major: row j is the j-th principal direction.
    pub components: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub epsilon: f64,
}

/// Fits PCA on `f` by eigendecomposition of the biased (1/N) covariance,
/// accumulated in f64. Requires `d ≤ min(N, D)`; rejects all-constant
/// features, whose covariance carries no directions to return.
pub fn fit_pca(f: &FeatureMatrix, d: usize) -> Result<PcaModel> {
    let (n, dim) = (f.n, f.d);
    if d == 0 || d > n.min(dim) {
        return Err(Error::Invalid(format!(
            "pca components {d} out of range for {n}×{dim} features"
        )));
    }
    let mut mean = vec![0.0f64; dim];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(f.row(i)) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    // Biased covariance (1/N), lower triangle then mirrored.
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0f64; dim];
    for i in 0..n {
        for (c, (&v, m)) in centered.iter_mut().zip(f.row(i).iter().zip(&mean)) {
            *c = v as f64 - m;
        }
        for r in 0..dim {
            let cr = centered[r];
            for c in 0..=r {
                cov[(r, c)] += cr * centered[c];
            }
        }
    }
    for r in 0..dim {
        for c in 0..=r {
            let v = cov[(r, c)] / n as f64;
            cov[(r, c)] = v;
            cov[(c, r)] = v;
        }
    }
    let total_variance: f64 = (0..dim).map(|i| cov[(i, i)]).sum();
    if total_variance <= 1e-12 {
        return Err(Error::Invalid("pca on constant features is degenerate".into()));
    }
    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b].partial_cmp(&eigen.eigenvalues[a]).expect("finite eigenvalues")
    });
    let mut components = Vec::with_capacity(d * dim);
    let mut eigenvalues = Vec::with_capacity(d);
    for &idx in order.iter().take(d) {
        eigenvalues.push(eigen.eigenvalues[idx].max(0.0));
        let col = eigen.eigenvectors.column(idx);
        // Fix the sign so the largest-magnitude coordinate is positive;
        // eigenvectors are otherwise only defined up to ±1.
        let lead = col
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite eigenvector"))
            .unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        components.extend(col.iter().map(|&v| v * sign));
    }
    Ok(PcaModel { mean, components, eigenvalues, epsilon: WHITEN_EPSILON })
}

impl PcaModel {
    pub fn out_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn in_dim(&self) -> usize {
        self.mean.len()
    }

    /// Projects rows onto the fitted basis: `y = (x − mean)·componentsᵀ`,
    /// accumulated in f64.
    pub fn project(&self, f: &FeatureMatrix) -> Result<FeatureMatrix> {
        if f.d != self.in_dim() {
            return Err(Error::Invalid(format!(
                "pca fitted on {}-d features, got {}-d",
                self.in_dim(),
                f.d
            )));
        }
        let d = self.out_dim();
        let mut data = vec![0.0f32; f.n * d];
        let mut centered = vec![0.0f64; f.d];
        for i in 0..f.n {
            for (c, (&v, m)) in centered.iter_mut().zip(f.row(i).iter().zip(&self.mean)) {
                *c = v as f64 - m;
            }
            for j in 0..d {
                let comp = &self.components[j * f.d..(j + 1) * f.d];
                let mut acc = 0.0f64;
                for (x, w) in centered.iter().zip(comp) {
                    acc += x * w;
                }
                data[i * d + j] = acc as f32;
            }
        }
        FeatureMatrix::new(f.n, d, data, f.source_layer.clone())
    }

    /// Rescales projected coordinates to unit variance:
    /// `y_j /= sqrt(eigenvalue_j + epsilon)`, in place.
    pub fn whiten(&self, f: &mut FeatureMatrix) -> Result<()> {
        if f.d != self.out_dim() {
            return Err(Error::Invalid(format!(
                "whiten expects {}-d projections, got {}-d",
                self.out_dim(),
                f.d
            )));
        }
        let scale: Vec<f64> = self.eigenvalues.iter().map(|&l| 1.0 / (l + self.epsilon).sqrt()).collect();
        for i in 0..f.n {
            for j in 0..f.d {
                f.data[i * f.d + j] = (f.data[i * f.d + j] as f64 * scale[j]) as f32;
            }
        }
        Ok(())
    }
}
