//! Per-view similarity graphs: each sample is sparse-coded over the other
//! samples of its own mixture cluster (dictionary augmented with identity
//! columns to absorb noise), and the coefficient magnitudes become edge
//! weights. Degree and Laplacian matrices follow directly.

mod gmm;
mod omp;

pub use gmm::{fit_gmm, ClusterAssignment};
pub use omp::{omp, SparseCode};

use nalgebra::{DMatrix, DVector};

use crate::error::{KmpError, Result};
use crate::parallel::try_map_indexed;

/// Secondary OMP stop: give up refining once the residual is this small.
const RESIDUAL_TOL: f64 = 1e-7;

/// Symmetric nonnegative similarity matrix with its degree and Laplacian.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    /// Symmetric, nonnegative, zero diagonal.
    pub w: DMatrix<f64>,
    /// Diagonal matrix of row sums of `w`.
    pub degree: DMatrix<f64>,
    /// `degree - w`; positive semidefinite with a zero row-sum.
    pub laplacian: DMatrix<f64>,
}

impl SimilarityGraph {
    /// Builds degree and Laplacian from a symmetric weight matrix.
    pub fn from_weights(w: DMatrix<f64>) -> Result<Self> {
        let (degree, laplacian) = degree_and_laplacian(&w)?;
        Ok(Self {
            w,
            degree,
            laplacian,
        })
    }
}

/// Row-sum degree matrix and Laplacian `D - W` of a symmetric weight
/// matrix. Asymmetry beyond 1e-9 is an argument error.
pub fn degree_and_laplacian(w: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(KmpError::Dimension(format!(
            "weight matrix is {}x{}, expected square",
            n,
            w.ncols()
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (w[(i, j)] - w[(j, i)]).abs() > 1e-9 {
                return Err(KmpError::Argument(format!(
                    "weight matrix asymmetric at ({i}, {j}): {} vs {}",
                    w[(i, j)],
                    w[(j, i)]
                )));
            }
        }
    }
    let mut degree = DMatrix::zeros(n, n);
    for p in 0..n {
        degree[(p, p)] = w.row(p).iter().sum::<f64>();
    }
    let laplacian = &degree - w;
    Ok((degree, laplacian))
}

/// Builds the sparse-coding similarity graph for one view.
///
/// For each sample `p` the dictionary holds the other samples of `p`'s
/// cluster followed by identity columns; only coefficients on the data
/// atoms (as magnitudes) enter row `p`. Identity-atom coefficients absorb
/// noise and are dropped, as are data atoms that are zero vectors (their
/// correlation is identically zero, so they can never be selected). The
/// raw matrix is then symmetrized as `(W + W^T)/2`.
///
/// A sample alone in its cluster gets an all-zero row rather than an error.
pub fn build_l1_graph(
    view: &DMatrix<f64>,
    clusters: &ClusterAssignment,
    max_atoms: usize,
) -> Result<SimilarityGraph> {
    let n = view.nrows();
    let d = view.ncols();
    if clusters.labels.len() != n {
        return Err(KmpError::Dimension(format!(
            "{} cluster labels for {} samples",
            clusters.labels.len(),
            n
        )));
    }
    if max_atoms == 0 {
        return Err(KmpError::Argument("max_atoms must be positive".into()));
    }

    let rows: Vec<Vec<(usize, f64)>> = try_map_indexed(n, |p| -> Result<Vec<(usize, f64)>> {
        let members: Vec<usize> = (0..n)
            .filter(|&q| q != p && clusters.labels[q] == clusters.labels[p])
            .filter(|&q| view.row(q).norm() > 0.0)
            .collect();
        if members.is_empty() {
            return Ok(Vec::new());
        }
        let n_atoms = members.len() + d;
        let dict = DMatrix::from_fn(d, n_atoms, |i, j| {
            if j < members.len() {
                view[(members[j], i)]
            } else if i == j - members.len() {
                1.0
            } else {
                0.0
            }
        });
        let target = DVector::from_fn(d, |i, _| view[(p, i)]);
        let code = omp(&target, &dict, max_atoms.min(n_atoms), RESIDUAL_TOL)?;
        Ok(code
            .support
            .iter()
            .zip(&code.coefficients)
            .filter(|(&j, _)| j < members.len())
            .map(|(&j, &c)| (members[j], c.abs()))
            .collect())
    })?;

    let mut raw = DMatrix::zeros(n, n);
    for (p, entries) in rows.iter().enumerate() {
        for &(q, weight) in entries {
            raw[(p, q)] = weight;
        }
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[(i, j)] = 0.5 * (raw[(i, j)] + raw[(j, i)]);
            }
        }
    }
    SimilarityGraph::from_weights(w)
}
