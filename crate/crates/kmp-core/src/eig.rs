//! Symmetric-definite generalized eigensolver: `A p = lambda B p` reduced
//! to a standard symmetric problem through a Cholesky factorization of the
//! (ridge-regularized) right-hand matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{KmpError, Result};

/// The `d` smallest eigenpairs of a symmetric pencil.
///
/// Eigenvectors are scaled so each column `p_j` satisfies
/// `p_j^T (B + mu I) p_j = 1/d`, i.e. `trace(P^T B P)` is approximately 1.
/// Residuals are `||A p_j - lambda_j (B + mu I) p_j||_2`, measured against
/// the regularized pencil that was actually solved.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// N x d; column `j` pairs with `eigenvalues[j]`. The largest-magnitude
    /// component of each column is positive.
    pub eigenvectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
}

/// Solves `A p = lambda B p` for the `d` smallest eigenpairs.
///
/// `B` is replaced by `B + mu I` with `mu = ridge * trace(B) / N` before
/// the Cholesky reduction; `KDK`-style right-hand sides are generically
/// singular, so some ridge is usually required (default 1e-8 upstream).
pub fn solve_gep(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    d: usize,
    ridge: f64,
) -> Result<EigenSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(KmpError::Dimension(format!(
            "pencil shapes {}x{} and {}x{} must be square and equal",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if d == 0 || d > n {
        return Err(KmpError::Argument(format!(
            "requested {d} eigenpairs from an order-{n} pencil"
        )));
    }
    if ridge < 0.0 {
        return Err(KmpError::Argument(format!(
            "ridge must be nonnegative, got {ridge}"
        )));
    }
    check_symmetric(a, "A")?;
    check_symmetric(b, "B")?;

    let mu = ridge * b.trace() / n as f64;
    let mut b_reg = b.clone();
    for i in 0..n {
        b_reg[(i, i)] += mu;
    }

    let chol = nalgebra::Cholesky::new(b_reg.clone()).ok_or_else(|| {
        KmpError::Numeric(format!(
            "Cholesky factorization of the regularized right-hand matrix failed \
             (ridge {ridge}); increase the ridge"
        ))
    })?;
    let l = chol.l();

    // C = L^-1 A L^-T, symmetric with the same eigenvalues as the pencil
    let z = l
        .solve_lower_triangular(a)
        .ok_or_else(|| KmpError::Numeric("triangular solve failed".into()))?;
    let mut c = l
        .solve_lower_triangular(&z.transpose())
        .ok_or_else(|| KmpError::Numeric("triangular solve failed".into()))?;
    crate::kernel::symmetrize(&mut c);

    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let scale = 1.0 / (d as f64).sqrt();
    let mut eigenvalues = Vec::with_capacity(d);
    let mut eigenvectors = DMatrix::zeros(n, d);
    let mut residuals = Vec::with_capacity(d);
    for (j, &idx) in order.iter().take(d).enumerate() {
        let lambda = eig.eigenvalues[idx];
        let q = eig.eigenvectors.column(idx).into_owned();
        // back-substitute: p = L^-T q, so p^T B_reg p = q^T q = 1
        let mut p = l
            .tr_solve_lower_triangular(&q)
            .ok_or_else(|| KmpError::Numeric("triangular solve failed".into()))?;
        p *= scale;
        fix_sign(&mut p);

        let residual = (a * &p - (&b_reg * &p) * lambda).norm();
        eigenvalues.push(lambda);
        eigenvectors.set_column(j, &p);
        residuals.push(residual);
    }

    Ok(EigenSolution {
        eigenvalues,
        eigenvectors,
        residuals,
    })
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let tol = 1e-9 * m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let diff = (m[(i, j)] - m[(j, i)]).abs();
            if !diff.is_finite() || diff > tol {
                return Err(KmpError::Argument(format!(
                    "{name} is not symmetric at ({i}, {j}): deviation {diff}"
                )));
            }
        }
    }
    Ok(())
}

/// Flips the vector so its largest-magnitude component (lowest index on
/// ties) is positive, making eigenvector signs deterministic.
fn fix_sign(p: &mut DVector<f64>) {
    let mut best = 0;
    let mut best_abs = 0.0;
    for (i, &v) in p.iter().enumerate() {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = i;
        }
    }
    if p[best] < 0.0 {
        *p = -&*p;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &m * m.transpose() + DMatrix::identity(n, n)
    }

    /// Independent oracle: full spectrum of B^{-1/2} A B^{-1/2} computed
    /// through a symmetric eigendecomposition of B (no Cholesky involved).
    fn oracle_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
        let eig_b = SymmetricEigen::new(b.clone());
        let n = b.nrows();
        let mut inv_sqrt = DMatrix::zeros(n, n);
        for k in 0..n {
            let v = eig_b.eigenvectors.column(k);
            let s = 1.0 / eig_b.eigenvalues[k].sqrt();
            inv_sqrt += &v * v.transpose() * s;
        }
        let c = &inv_sqrt * a * &inv_sqrt;
        let mut vals: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        vals
    }

    #[test]
    fn identity_pencil() {
        let i2 = DMatrix::identity(4, 4);
        let sol = solve_gep(&i2, &i2, 2, 0.0).unwrap();
        assert_relative_eq!(sol.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.eigenvalues[1], 1.0, epsilon = 1e-12);
        for j in 0..2 {
            // column B-norm^2 = 1/d with B = I means vector norm 1/sqrt(2)
            assert_relative_eq!(
                sol.eigenvectors.column(j).norm(),
                std::f64::consts::FRAC_1_SQRT_2,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn diagonal_pencil_picks_smallest() {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[3.0, 1.0, 2.0]));
        let b = DMatrix::identity(3, 3);
        let sol = solve_gep(&a, &b, 1, 0.0).unwrap();
        assert_relative_eq!(sol.eigenvalues[0], 1.0, epsilon = 1e-12);
        let p = sol.eigenvectors.column(0);
        assert!(p[1] > 0.0, "sign convention must make e2 positive");
        assert_relative_eq!(p[1], 1.0, epsilon = 1e-10);
        assert!(p[0].abs() < 1e-10 && p[2].abs() < 1e-10);
    }

    #[test]
    fn matches_oracle_and_meets_residual_bounds() {
        for seed in 0..10u64 {
            let n = 6 + (seed as usize % 5);
            let a = random_spd(n, 2 * seed);
            let b = random_spd(n, 2 * seed + 1);
            let d = 3.min(n);
            let sol = solve_gep(&a, &b, d, 0.0).unwrap();
            let oracle = oracle_eigenvalues(&a, &b);
            let scale_a = a.norm();
            let scale_b = b.norm();
            for j in 0..d {
                assert!(
                    (sol.eigenvalues[j] - oracle[j]).abs() <= 1e-8,
                    "seed {seed}: eigenvalue {j} {} vs oracle {}",
                    sol.eigenvalues[j],
                    oracle[j]
                );
                let bound = 1e-8 * (scale_a + sol.eigenvalues[j].abs() * scale_b);
                assert!(
                    sol.residuals[j] <= bound,
                    "seed {seed}: residual {} > {bound}",
                    sol.residuals[j]
                );
            }
            // B-orthogonality of distinct columns
            for j in 0..d {
                for k in 0..d {
                    if j != k {
                        let pj = sol.eigenvectors.column(j);
                        let pk = sol.eigenvectors.column(k);
                        let cross = (pj.transpose() * &b * pk)[(0, 0)];
                        assert!(cross.abs() <= 1e-8, "seed {seed}: B-cross {cross}");
                    }
                }
            }
        }
    }

    #[test]
    fn shift_consistency() {
        let a = random_spd(7, 31);
        let b = random_spd(7, 32);
        let c = 2.5;
        let shifted = &a + &b * c;
        let base = solve_gep(&a, &b, 3, 0.0).unwrap();
        let moved = solve_gep(&shifted, &b, 3, 0.0).unwrap();
        for j in 0..3 {
            assert!(
                (moved.eigenvalues[j] - base.eigenvalues[j] - c).abs() <= 1e-8,
                "eigenvalue {j} shifted by {}",
                moved.eigenvalues[j] - base.eigenvalues[j]
            );
            let diff = (moved.eigenvectors.column(j) - base.eigenvectors.column(j)).norm();
            let sum = (moved.eigenvectors.column(j) + base.eigenvectors.column(j)).norm();
            assert!(diff.min(sum) <= 1e-8, "eigenvector {j} changed");
        }
    }

    #[test]
    fn monotone_truncation() {
        let a = random_spd(8, 41);
        let b = random_spd(8, 42);
        let small = solve_gep(&a, &b, 3, 1e-8).unwrap();
        let large = solve_gep(&a, &b, 4, 1e-8).unwrap();
        for j in 0..3 {
            assert_relative_eq!(small.eigenvalues[j], large.eigenvalues[j], epsilon = 1e-12);
            let diff = (small.eigenvectors.column(j) - large.eigenvectors.column(j)).norm();
            assert!(diff <= 1e-10);
        }
    }

    #[test]
    fn argument_and_numeric_errors() {
        let a = DMatrix::identity(3, 3);
        assert!(matches!(
            solve_gep(&a, &a, 4, 0.0),
            Err(KmpError::Argument(_))
        ));
        assert!(matches!(
            solve_gep(&a, &a, 0, 0.0),
            Err(KmpError::Argument(_))
        ));
        let zero = DMatrix::zeros(3, 3);
        assert!(matches!(
            solve_gep(&a, &zero, 1, 0.0),
            Err(KmpError::Numeric(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        assert!(matches!(
            solve_gep(&asym, &DMatrix::identity(2, 2), 1, 0.0),
            Err(KmpError::Argument(_))
        ));
    }

    #[test]
    fn singular_b_needs_ridge() {
        // rank-1 B: plain Cholesky fails, ridge rescues it
        let v = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let b = &v * v.transpose();
        let a = DMatrix::identity(3, 3);
        assert!(solve_gep(&a, &b, 2, 0.0).is_err());
        let sol = solve_gep(&a, &b, 2, 1e-8).unwrap();
        assert_eq!(sol.eigenvalues.len(), 2);
        assert!(sol.eigenvalues.iter().all(|v| v.is_finite()));
    }
}
