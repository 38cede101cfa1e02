//! Orthogonal matching pursuit: greedy atom selection by absolute
//! correlation with the residual, least-squares refit on the support each
//! step.

use nalgebra::{DMatrix, DVector};

use crate::error::{KmpError, Result};

/// Sparse least-squares solution over a dictionary.
#[derive(Debug, Clone)]
pub struct SparseCode {
    /// Selected column indices, in selection order. Unique.
    pub support: Vec<usize>,
    /// Coefficients aligned with `support`, in the dictionary's original
    /// column scale.
    pub coefficients: Vec<f64>,
    /// `||target - dictionary * code||_2`, recomputed from the returned
    /// coefficients.
    pub residual_norm: f64,
}

/// Solves `min ||target - D beta||_2` greedily with at most `max_atoms`
/// nonzero coefficients, stopping early once the residual norm drops to
/// `residual_tol`.
///
/// Columns are l2-normalized internally so correlations are comparable;
/// the returned coefficients are un-scaled back to the original columns.
/// Ties in correlation go to the lowest column index.
pub fn omp(
    target: &DVector<f64>,
    dictionary: &DMatrix<f64>,
    max_atoms: usize,
    residual_tol: f64,
) -> Result<SparseCode> {
    let (dim, n_atoms) = dictionary.shape();
    if target.len() != dim {
        return Err(KmpError::Dimension(format!(
            "target has {} entries, dictionary columns have {}",
            target.len(),
            dim
        )));
    }
    if max_atoms == 0 {
        return Err(KmpError::Argument("max_atoms must be positive".into()));
    }
    if max_atoms > n_atoms {
        return Err(KmpError::Argument(format!(
            "max_atoms {max_atoms} exceeds dictionary size {n_atoms}"
        )));
    }
    if residual_tol < 0.0 {
        return Err(KmpError::Argument(format!(
            "residual tolerance must be nonnegative, got {residual_tol}"
        )));
    }

    let mut norms = Vec::with_capacity(n_atoms);
    for j in 0..n_atoms {
        let norm = dictionary.column(j).norm();
        if norm == 0.0 {
            return Err(KmpError::Argument(format!(
                "dictionary column {j} has zero norm"
            )));
        }
        norms.push(norm);
    }
    let normalized = DMatrix::from_fn(dim, n_atoms, |i, j| dictionary[(i, j)] / norms[j]);

    let mut support: Vec<usize> = Vec::new();
    let mut coeff_normalized: Vec<f64> = Vec::new();
    let mut residual = target.clone();
    let mut residual_norm = residual.norm();
    let mut selected = vec![false; n_atoms];
    let mut prev_norm = residual_norm;

    while support.len() < max_atoms && residual_norm > residual_tol {
        let mut best_idx = None;
        let mut best_corr = 0.0;
        for j in 0..n_atoms {
            if selected[j] {
                continue;
            }
            let corr = normalized.column(j).dot(&residual).abs();
            if corr > best_corr {
                best_corr = corr;
                best_idx = Some(j);
            }
        }
        // residual orthogonal to every remaining atom: nothing left to explain
        let Some(j) = best_idx else { break };
        selected[j] = true;
        support.push(j);

        let sub = select_columns(&normalized, &support);
        let svd = sub.clone().svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        let beta = svd
            .solve(target, eps)
            .map_err(|e| KmpError::Numeric(format!("least squares refit failed: {e}")))?;
        coeff_normalized = beta.iter().copied().collect();

        residual = target - sub * &beta;
        residual_norm = residual.norm();
        debug_assert!(
            residual_norm <= prev_norm + 1e-10 * (1.0 + prev_norm),
            "residual norm grew from {prev_norm} to {residual_norm}"
        );
        prev_norm = residual_norm;
    }

    let coefficients: Vec<f64> = support
        .iter()
        .zip(&coeff_normalized)
        .map(|(&j, &b)| b / norms[j])
        .collect();

    // recompute the residual against the original dictionary so the
    // reported norm is exactly consistent with the returned code
    let mut reconstruction = DVector::zeros(dim);
    for (&j, &c) in support.iter().zip(&coefficients) {
        reconstruction += dictionary.column(j) * c;
    }
    let residual_norm = (target - reconstruction).norm();

    Ok(SparseCode {
        support,
        coefficients,
        residual_norm,
    })
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}
