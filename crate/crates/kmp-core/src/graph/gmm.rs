//! Diagonal-covariance Gaussian mixture fitting by EM, used to restrict
//! each sample's sparse-coding dictionary to its own cluster.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KmpError, Result};
use crate::parallel::map_indexed;

const MAX_EM_ITERS: usize = 100;
const LOG_LIKELIHOOD_TOL: f64 = 1e-6;
const VARIANCE_FLOOR: f64 = 1e-6;

/// Hard cluster assignment plus the fitted mixture parameters.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    /// Per-sample cluster label in `[0, g)`, the argmax responsibility.
    pub labels: Vec<usize>,
    /// Number of mixture components.
    pub g: usize,
    /// Component means, `g x d`.
    pub means: DMatrix<f64>,
    /// Per-dimension variances (diagonal covariances), `g x d`.
    pub variances: DMatrix<f64>,
    /// Mixing weights on the simplex.
    pub weights: Vec<f64>,
}

impl ClusterAssignment {
    /// Indices of the samples labelled `k`, ascending.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == k)
            .map(|(p, _)| p)
            .collect()
    }
}

/// Fits a `g`-component diagonal-covariance Gaussian mixture with EM,
/// k-means++ initialization from `seed`, at most 100 iterations or a
/// log-likelihood change below 1e-6. Deterministic for a fixed seed.
pub fn fit_gmm(view: &DMatrix<f64>, g: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = view.nrows();
    let d = view.ncols();
    if g == 0 {
        return Err(KmpError::Argument("cluster count must be positive".into()));
    }
    if g > n {
        return Err(KmpError::Argument(format!(
            "cluster count {g} exceeds sample count {n}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = kmeans_pp_init(view, g, &mut rng);
    let global_var = column_variances(view);
    let mut variances = DMatrix::from_fn(g, d, |_, j| global_var[j].max(VARIANCE_FLOOR));
    let mut weights = vec![1.0 / g as f64; g];

    let mut responsibilities = DMatrix::zeros(n, g);
    let mut prev_ll = f64::NEG_INFINITY;

    for _ in 0..MAX_EM_ITERS {
        // E-step: responsibilities and per-point log-likelihood
        let point_results = e_step(view, &means, &variances, &weights);
        let ll: f64 = point_results.iter().map(|(_, ll)| ll).sum();
        if !ll.is_finite() {
            return Err(KmpError::Numeric(
                "mixture log-likelihood became non-finite".into(),
            ));
        }
        for (p, (resp, _)) in point_results.iter().enumerate() {
            for k in 0..g {
                responsibilities[(p, k)] = resp[k];
            }
        }

        // components no point claims get re-seeded at the worst-explained
        // points, then the next E-step starts over
        let hard = hard_labels(&responsibilities);
        let empty: Vec<usize> = (0..g).filter(|&k| !hard.contains(&k)).collect();
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| point_results[a].1.total_cmp(&point_results[b].1));
            for (slot, &k) in empty.iter().enumerate() {
                let p = order[slot % n];
                for j in 0..d {
                    means[(k, j)] = view[(p, j)];
                    variances[(k, j)] = global_var[j].max(VARIANCE_FLOOR);
                }
                weights[k] = 1.0 / n as f64;
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            prev_ll = f64::NEG_INFINITY;
            continue;
        }

        if (ll - prev_ll).abs() < LOG_LIKELIHOOD_TOL {
            break;
        }
        prev_ll = ll;

        // M-step
        for k in 0..g {
            let nk: f64 = (0..n).map(|p| responsibilities[(p, k)]).sum();
            let nk_safe = nk.max(1e-300);
            weights[k] = nk / n as f64;
            for j in 0..d {
                let mean = (0..n)
                    .map(|p| responsibilities[(p, k)] * view[(p, j)])
                    .sum::<f64>()
                    / nk_safe;
                means[(k, j)] = mean;
                let var = (0..n)
                    .map(|p| {
                        let diff = view[(p, j)] - mean;
                        responsibilities[(p, k)] * diff * diff
                    })
                    .sum::<f64>()
                    / nk_safe;
                variances[(k, j)] = var.max(VARIANCE_FLOOR);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }

    let labels = hard_labels(&responsibilities);
    Ok(ClusterAssignment {
        labels,
        g,
        means,
        variances,
        weights,
    })
}

/// One (responsibility row, point log-likelihood) per sample.
fn e_step(
    view: &DMatrix<f64>,
    means: &DMatrix<f64>,
    variances: &DMatrix<f64>,
    weights: &[f64],
) -> Vec<(Vec<f64>, f64)> {
    let g = weights.len();
    let log_weights: Vec<f64> = weights.iter().map(|w| w.max(1e-300).ln()).collect();
    map_indexed(view.nrows(), |p| {
        let mut log_terms = vec![0.0; g];
        for k in 0..g {
            log_terms[k] = log_weights[k] + log_gaussian_diag(view, p, means, variances, k);
        }
        let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = log_terms.iter().map(|t| (t - max).exp()).sum();
        let log_norm = max + sum_exp.ln();
        let resp: Vec<f64> = log_terms.iter().map(|t| (t - log_norm).exp()).collect();
        (resp, log_norm)
    })
}

fn log_gaussian_diag(
    view: &DMatrix<f64>,
    p: usize,
    means: &DMatrix<f64>,
    variances: &DMatrix<f64>,
    k: usize,
) -> f64 {
    let d = view.ncols();
    let mut acc = 0.0;
    for j in 0..d {
        let var = variances[(k, j)];
        let diff = view[(p, j)] - means[(k, j)];
        acc += (2.0 * std::f64::consts::PI * var).ln() + diff * diff / var;
    }
    -0.5 * acc
}

fn hard_labels(responsibilities: &DMatrix<f64>) -> Vec<usize> {
    (0..responsibilities.nrows())
        .map(|p| {
            let mut best = 0;
            let mut best_val = responsibilities[(p, 0)];
            for k in 1..responsibilities.ncols() {
                if responsibilities[(p, k)] > best_val {
                    best_val = responsibilities[(p, k)];
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn column_variances(view: &DMatrix<f64>) -> Vec<f64> {
    let n = view.nrows() as f64;
    (0..view.ncols())
        .map(|j| {
            let mean: f64 = (0..view.nrows()).map(|p| view[(p, j)]).sum::<f64>() / n;
            (0..view.nrows())
                .map(|p| {
                    let d = view[(p, j)] - mean;
                    d * d
                })
                .sum::<f64>()
                / n
        })
        .collect()
}

/// k-means++ seeding: first center uniform, subsequent centers sampled
/// proportionally to squared distance from the nearest chosen center.
fn kmeans_pp_init(view: &DMatrix<f64>, g: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = view.nrows();
    let d = view.ncols();
    let mut chosen: Vec<usize> = Vec::with_capacity(g);
    chosen.push(rng.random_range(0..n));
    let mut dist2: Vec<f64> = (0..n).map(|p| row_dist2(view, p, chosen[0])).collect();
    while chosen.len() < g {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (p, &w) in dist2.iter().enumerate() {
                if u < w {
                    pick = p;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            // duplicate-heavy data: fall back to the first unchosen index
            (0..n).find(|p| !chosen.contains(p)).unwrap_or(0)
        };
        chosen.push(next);
        for p in 0..n {
            dist2[p] = dist2[p].min(row_dist2(view, p, next));
        }
    }
    DMatrix::from_fn(g, d, |k, j| view[(chosen[k], j)])
}

fn row_dist2(view: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..view.ncols() {
        let diff = view[(a, j)] - view[(b, j)];
        acc += diff * diff;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::Distribution;

    #[test]
    fn single_component_recovers_column_means() {
        let view = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let fit = fit_gmm(&view, 1, 0).unwrap();
        assert!(fit.labels.iter().all(|&l| l == 0));
        assert_relative_eq!(fit.means[(0, 0)], 3.0, max_relative = 1e-12);
        assert_relative_eq!(fit.means[(0, 1)], 4.0, max_relative = 1e-12);
        assert_eq!(fit.weights, vec![1.0]);
    }

    #[test]
    fn two_separated_blobs_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let normal = rand_distr::Normal::new(0.0, 0.1).unwrap();
        let mut rows = Vec::new();
        for _ in 0..20 {
            rows.push(normal.sample(&mut rng));
        }
        for _ in 0..20 {
            rows.push(100.0 + normal.sample(&mut rng));
        }
        let view = DMatrix::from_column_slice(40, 1, &rows);
        let fit = fit_gmm(&view, 2, 7).unwrap();
        // same label within each blob, different across blobs
        let first = fit.labels[0];
        assert!(fit.labels[..20].iter().all(|&l| l == first));
        assert!(fit.labels[20..].iter().all(|&l| l == 1 - first));
    }

    #[test]
    fn g_equal_n_gives_distinct_labels() {
        let view = DMatrix::from_column_slice(6, 1, &[0.0, 3.1, 7.4, 12.0, 20.5, 31.0]);
        let fit = fit_gmm(&view, 6, 3).unwrap();
        let mut labels = fit.labels.clone();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 6, "labels {:?}", fit.labels);
    }

    #[test]
    fn invalid_cluster_counts_are_rejected() {
        let view = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(
            fit_gmm(&view, 4, 0),
            Err(KmpError::Argument(_))
        ));
        assert!(matches!(
            fit_gmm(&view, 0, 0),
            Err(KmpError::Argument(_))
        ));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let view = DMatrix::from_fn(30, 3, |_, _| rng.random_range(-1.0..1.0));
        let a = fit_gmm(&view, 4, 42).unwrap();
        let b = fit_gmm(&view, 4, 42).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.means, b.means);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn mixing_weights_stay_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let view = DMatrix::from_fn(25, 2, |_, _| rng.random_range(-1.0..1.0));
        let fit = fit_gmm(&view, 3, 1).unwrap();
        let sum: f64 = fit.weights.iter().sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
        assert!(fit.weights.iter().all(|&w| w >= 0.0));
        // every referenced cluster is non-empty by construction
        for &l in &fit.labels {
            assert!(!fit.members(l).is_empty());
        }
    }
}
