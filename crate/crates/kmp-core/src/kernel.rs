//! Per-view Gram matrices, simplex-weighted fusion, and the explicit
//! feature-map identity used to validate fusion.
//!
//! The RBF convention is `exp(-||x_p - x_q||^2 / (2 sigma^2))`. Every
//! constructed Gram is symmetrized as `(K + K^T)/2` before it reaches an
//! eigensolve.

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{KmpError, Result};
use crate::parallel::map_indexed;

/// Kernel family and hyperparameters for one view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Rbf { sigma: f64 },
    Linear,
}

impl KernelSpec {
    /// Gram matrix of `view` under this kernel.
    pub fn gram(&self, view: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match *self {
            KernelSpec::Rbf { sigma } => rbf_gram(view, sigma),
            KernelSpec::Linear => Ok(linear_gram(view)),
        }
    }

    /// Kernel evaluations of one query against every training row,
    /// as a 1 x N row. Used for out-of-sample embedding.
    pub fn row(&self, query: &[f64], train: &DMatrix<f64>) -> Result<RowDVector<f64>> {
        if query.len() != train.ncols() {
            return Err(KmpError::Dimension(format!(
                "query has {} features, training view has {}",
                query.len(),
                train.ncols()
            )));
        }
        let n = train.nrows();
        match *self {
            KernelSpec::Rbf { sigma } => {
                if sigma <= 0.0 {
                    return Err(KmpError::Argument(format!(
                        "rbf sigma must be positive, got {sigma}"
                    )));
                }
                let denom = 2.0 * sigma * sigma;
                Ok(RowDVector::from_fn(n, |_, q| {
                    let mut d2 = 0.0;
                    for (c, &x) in query.iter().enumerate() {
                        let diff = x - train[(q, c)];
                        d2 += diff * diff;
                    }
                    (-d2 / denom).exp()
                }))
            }
            KernelSpec::Linear => Ok(RowDVector::from_fn(n, |_, q| {
                let mut dot = 0.0;
                for (c, &x) in query.iter().enumerate() {
                    dot += x * train[(q, c)];
                }
                dot
            })),
        }
    }
}

/// Per-view Gram matrices plus the kernel parameters that built them.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub grams: Vec<DMatrix<f64>>,
    pub specs: Vec<KernelSpec>,
}

impl KernelSet {
    /// Computes one Gram per view. `specs` must align with `views`.
    pub fn build(views: &[DMatrix<f64>], specs: &[KernelSpec]) -> Result<Self> {
        if views.len() != specs.len() {
            return Err(KmpError::Dimension(format!(
                "{} views but {} kernel specs",
                views.len(),
                specs.len()
            )));
        }
        let grams = views
            .iter()
            .zip(specs)
            .map(|(v, s)| s.gram(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grams,
            specs: specs.to_vec(),
        })
    }
}

/// Simplex weights for kernel fusion together with the auxiliary weights
/// produced by the relaxed update.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl FusionWeights {
    pub fn new(alpha: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if alpha.len() != gamma.len() {
            return Err(KmpError::Dimension(format!(
                "alpha has {} entries, gamma has {}",
                alpha.len(),
                gamma.len()
            )));
        }
        check_simplex(&alpha, 1e-12)?;
        check_simplex(&gamma, 1e-12)?;
        Ok(Self { alpha, gamma })
    }

    /// Uniform weights over `m` views.
    pub fn uniform(m: usize) -> Self {
        let w = vec![1.0 / m as f64; m];
        Self {
            alpha: w.clone(),
            gamma: w,
        }
    }
}

/// Validates nonnegativity and a unit sum within `tol`.
pub(crate) fn check_simplex(weights: &[f64], tol: f64) -> Result<()> {
    if weights.is_empty() {
        return Err(KmpError::Argument("empty weight vector".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(KmpError::Argument(format!(
            "weights must be nonnegative, got {w}"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(KmpError::Argument(format!(
            "weights must sum to 1 (got {sum})"
        )));
    }
    Ok(())
}

fn square_dist(view: &DMatrix<f64>, p: usize, q: usize) -> f64 {
    let mut d2 = 0.0;
    for c in 0..view.ncols() {
        let diff = view[(p, c)] - view[(q, c)];
        d2 += diff * diff;
    }
    d2
}

/// RBF Gram matrix with entries `exp(-||x_p - x_q||^2 / (2 sigma^2))`.
/// Unit diagonal, symmetric.
pub fn rbf_gram(view: &DMatrix<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(KmpError::Argument(format!(
            "rbf sigma must be positive and finite, got {sigma}"
        )));
    }
    let n = view.nrows();
    let denom = 2.0 * sigma * sigma;
    let rows = map_indexed(n, |p| {
        (0..n)
            .map(|q| {
                if p == q {
                    1.0
                } else {
                    (-square_dist(view, p, q) / denom).exp()
                }
            })
            .collect::<Vec<f64>>()
    });
    let mut k = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    symmetrize(&mut k);
    Ok(k)
}

/// Linear-kernel Gram `X X^T` under the rows-as-samples convention.
pub fn linear_gram(view: &DMatrix<f64>) -> DMatrix<f64> {
    let mut k = view * view.transpose();
    symmetrize(&mut k);
    k
}

/// Replaces `m` by `(m + m^T)/2` to remove floating-point asymmetry.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Median of all N(N-1)/2 pairwise Euclidean distances; the default RBF
/// bandwidth when none is configured.
pub fn median_sigma(view: &DMatrix<f64>) -> Result<f64> {
    let n = view.nrows();
    if n < 2 {
        return Err(KmpError::Argument(format!(
            "median bandwidth needs at least 2 rows, got {n}"
        )));
    }
    let per_row = map_indexed(n, |p| {
        ((p + 1)..n)
            .map(|q| square_dist(view, p, q).sqrt())
            .collect::<Vec<f64>>()
    });
    let mut dists: Vec<f64> = per_row.into_iter().flatten().collect();
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    if median <= 0.0 {
        return Err(KmpError::DegenerateData(
            "median pairwise distance is zero (rows are identical)".into(),
        ));
    }
    Ok(median)
}

/// Weighted sum of same-shape symmetric matrices with simplex weights.
pub fn fuse(matrices: &[DMatrix<f64>], weights: &[f64]) -> Result<DMatrix<f64>> {
    if matrices.is_empty() {
        return Err(KmpError::Argument("nothing to fuse".into()));
    }
    if matrices.len() != weights.len() {
        return Err(KmpError::Dimension(format!(
            "{} matrices but {} weights",
            matrices.len(),
            weights.len()
        )));
    }
    check_simplex(weights, 1e-9)?;
    let shape = matrices[0].shape();
    for (i, m) in matrices.iter().enumerate() {
        if m.shape() != shape {
            return Err(KmpError::Dimension(format!(
                "matrix {} has shape {:?}, matrix 0 has {:?}",
                i,
                m.shape(),
                shape
            )));
        }
    }
    Ok(fuse_unnormalized(matrices, weights))
}

/// Plain linear combination, no simplex validation. Shared by `fuse` and
/// the linearity property tests.
pub(crate) fn fuse_unnormalized(matrices: &[DMatrix<f64>], weights: &[f64]) -> DMatrix<f64> {
    let (r, c) = matrices[0].shape();
    DMatrix::from_fn(r, c, |i, j| {
        matrices
            .iter()
            .zip(weights)
            .map(|(m, &w)| w * m[(i, j)])
            .sum()
    })
}

/// Maximum absolute deviation between the weighted sum of linear-kernel
/// Grams and the Gram of the concatenated, `sqrt(alpha)`-scaled features.
///
/// The two routes agree exactly in exact arithmetic; a small return value
/// certifies that fusing Grams is the same as concatenating feature maps.
pub fn feature_map_identity_check(
    views: &[DMatrix<f64>],
    specs: &[KernelSpec],
    alpha: &[f64],
) -> Result<f64> {
    if views.len() != specs.len() || views.len() != alpha.len() {
        return Err(KmpError::Dimension(format!(
            "{} views, {} specs, {} weights",
            views.len(),
            specs.len(),
            alpha.len()
        )));
    }
    for (i, s) in specs.iter().enumerate() {
        if !matches!(s, KernelSpec::Linear) {
            return Err(KmpError::UnsupportedCheck(format!(
                "feature-map identity requires linear kernels; view {} is {:?}",
                i + 1,
                s
            )));
        }
    }
    check_simplex(alpha, 1e-9)?;
    let n = views[0].nrows();
    for (i, v) in views.iter().enumerate() {
        if v.nrows() != n {
            return Err(KmpError::Dimension(format!(
                "view {} has {} rows, view 0 has {}",
                i + 1,
                v.nrows(),
                n
            )));
        }
    }

    // Route 1: fuse the per-view Grams.
    let grams: Vec<DMatrix<f64>> = views.iter().map(linear_gram).collect();
    let fused = fuse(&grams, alpha)?;

    // Route 2: Gram of the concatenated scaled feature map.
    let total_dim: usize = views.iter().map(|v| v.ncols()).sum();
    let mut phi = DMatrix::zeros(n, total_dim);
    let mut offset = 0;
    for (v, &a) in views.iter().zip(alpha) {
        let scale = a.sqrt();
        for r in 0..n {
            for c in 0..v.ncols() {
                phi[(r, offset + c)] = scale * v[(r, c)];
            }
        }
        offset += v.ncols();
    }
    let direct = &phi * phi.transpose();

    let mut max_dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            max_dev = max_dev.max((fused[(i, j)] - direct[(i, j)]).abs());
        }
    }
    Ok(max_dev)
}
