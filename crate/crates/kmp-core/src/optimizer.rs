//! Alternate optimization of the projection and the view weights.
//!
//! Each iteration fuses the per-view Grams, Laplacians and degree matrices
//! under the current weights, solves the generalized eigenproblem
//! `KLK p = lambda KDK p` for the projection, then refreshes the weights
//! through the closed-form auxiliary update: per-view trace ratios give
//! `gamma`, and `alpha_i^3 * L_iii` is held proportional to `gamma_i^r`.
//! The trace ratio F1 is monitored and the best iterate is returned, since
//! the weight step is a relaxation and may oscillate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MultiviewDataset;
use crate::eig::{solve_gep, EigenSolution};
use crate::error::{KmpError, Result};
use crate::graph::{build_l1_graph, fit_gmm, SimilarityGraph};
use crate::kernel::{self, check_simplex, fuse, KernelSpec};
use crate::model::ProjectionModel;
use crate::parallel::try_map_indexed;
use crate::seed::{derive_seed, stream};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Embedding dimension d.
    pub dim: usize,
    /// Weight-update exponent; must exceed 1.
    pub r: f64,
    /// Mixture components per view for dictionary restriction.
    pub clusters: usize,
    /// Sparse-coding atom budget per sample.
    pub max_atoms: usize,
    /// Per-view RBF bandwidth overrides; the median pairwise distance is
    /// used where absent.
    pub sigmas: Option<Vec<f64>>,
    /// Multiplier on the median-heuristic bandwidths (ignored when
    /// `sigmas` is given).
    pub sigma_scale: f64,
    /// Relative ridge added to the right-hand pencil matrix.
    pub ridge: f64,
    pub max_iters: usize,
    /// Relative F1-change stopping tolerance.
    pub tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            r: 5.0,
            clusters: 10,
            max_atoms: 5,
            sigmas: None,
            sigma_scale: 1.0,
            ridge: 1e-8,
            max_iters: 50,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, n_samples: usize, n_views: usize) -> Result<()> {
        if self.dim == 0 || self.dim > n_samples {
            return Err(KmpError::Argument(format!(
                "embedding dimension {} must lie in [1, {n_samples}]",
                self.dim
            )));
        }
        if !(self.r > 1.0) {
            return Err(KmpError::Argument(format!(
                "r must exceed 1, got {}",
                self.r
            )));
        }
        if self.clusters == 0 || self.clusters > n_samples {
            return Err(KmpError::Argument(format!(
                "cluster count {} must lie in [1, {n_samples}]",
                self.clusters
            )));
        }
        if self.max_atoms == 0 {
            return Err(KmpError::Argument("max_atoms must be positive".into()));
        }
        if self.ridge < 0.0 || self.tol < 0.0 {
            return Err(KmpError::Argument(
                "ridge and tol must be nonnegative".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(KmpError::Argument("max_iters must be positive".into()));
        }
        if !(self.sigma_scale > 0.0) {
            return Err(KmpError::Argument(format!(
                "sigma scale must be positive, got {}",
                self.sigma_scale
            )));
        }
        if let Some(ref s) = self.sigmas {
            if s.len() != n_views {
                return Err(KmpError::Dimension(format!(
                    "{} sigma overrides for {} views",
                    s.len(),
                    n_views
                )));
            }
            if let Some(bad) = s.iter().find(|v| !(**v > 0.0)) {
                return Err(KmpError::Argument(format!(
                    "sigma overrides must be positive, got {bad}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-view diagonal trace values `L_iii = tr(P^T K_i L_i K_i P)` and
/// `D_iii = tr(P^T K_i D_i K_i P)`.
#[derive(Debug, Clone)]
pub struct TraceTable {
    pub l_diag: Vec<f64>,
    pub d_diag: Vec<f64>,
}

impl TraceTable {
    pub fn compute(
        p: &DMatrix<f64>,
        grams: &[DMatrix<f64>],
        laplacians: &[DMatrix<f64>],
        degrees: &[DMatrix<f64>],
    ) -> Self {
        let l_diag = grams
            .iter()
            .zip(laplacians)
            .map(|(k, l)| trace_form(p, k, l, k))
            .collect();
        let d_diag = grams
            .iter()
            .zip(degrees)
            .map(|(k, d)| trace_form(p, k, d, k))
            .collect();
        Self { l_diag, d_diag }
    }

    pub fn n_views(&self) -> usize {
        self.l_diag.len()
    }
}

/// General trace form `tr(P^T K_i M K_j P)`; the middle matrix is the
/// Laplacian or degree matrix. Symmetric in the two outer kernels.
pub fn trace_form(
    p: &DMatrix<f64>,
    ki: &DMatrix<f64>,
    mid: &DMatrix<f64>,
    kj: &DMatrix<f64>,
) -> f64 {
    let u = ki * p;
    let v = mid * (kj * p);
    u.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// Trace-ratio objective `tr(P^T KLK P) / tr(P^T KDK P)` with the fused
/// K, L, D under `alpha`.
pub fn objective_f1(
    p: &DMatrix<f64>,
    grams: &[DMatrix<f64>],
    laplacians: &[DMatrix<f64>],
    degrees: &[DMatrix<f64>],
    alpha: &[f64],
) -> Result<f64> {
    let k = fuse(grams, alpha)?;
    let l = fuse(laplacians, alpha)?;
    let d = fuse(degrees, alpha)?;
    ratio_objective(p, &k, &l, &d)
}

fn ratio_objective(
    p: &DMatrix<f64>,
    k: &DMatrix<f64>,
    l: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<f64> {
    let num = trace_form(p, k, l, k);
    let den = trace_form(p, k, d, k);
    if den <= 1e-14 {
        return Err(KmpError::DegenerateObjective(format!(
            "denominator trace {den} is not positive"
        )));
    }
    Ok(num / den)
}

/// Weighted sum of per-view trace ratios `sum_i w_i * L_iii / D_iii`.
pub fn objective_f3(table: &TraceTable, weights: &[f64]) -> Result<f64> {
    if weights.len() != table.n_views() {
        return Err(KmpError::Dimension(format!(
            "{} weights for {} views",
            weights.len(),
            table.n_views()
        )));
    }
    check_simplex(weights, 1e-9)?;
    let mut acc = 0.0;
    for i in 0..table.n_views() {
        if table.d_diag[i] <= 0.0 {
            return Err(KmpError::DegenerateObjective(format!(
                "D_iii for view {} is {}, not positive",
                i + 1,
                table.d_diag[i]
            )));
        }
        acc += weights[i] * table.l_diag[i] / table.d_diag[i];
    }
    Ok(acc)
}

fn check_traces(table: &TraceTable) -> Result<()> {
    for i in 0..table.n_views() {
        if table.l_diag[i] <= 1e-14 {
            return Err(KmpError::DegenerateTrace(format!(
                "L_iii for view {} is {}; the embedding annihilates this view's Laplacian",
                i + 1,
                table.l_diag[i]
            )));
        }
        if table.d_diag[i] <= 0.0 {
            return Err(KmpError::DegenerateTrace(format!(
                "D_iii for view {} is {}, not positive",
                i + 1,
                table.d_diag[i]
            )));
        }
    }
    Ok(())
}

/// Closed-form minimizer of `sum_i gamma_i^r L_iii/D_iii` on the simplex:
/// `gamma_i` proportional to `(D_iii/L_iii)^(1/(r-1))`.
pub fn update_gamma(table: &TraceTable, r: f64) -> Result<Vec<f64>> {
    if !(r > 1.0) {
        return Err(KmpError::Argument(format!("r must exceed 1, got {r}")));
    }
    check_traces(table)?;
    let exponent = 1.0 / (r - 1.0);
    let raw: Vec<f64> = table
        .d_diag
        .iter()
        .zip(&table.l_diag)
        .map(|(&d, &l)| (d / l).powf(exponent))
        .collect();
    normalize_simplex(raw, "gamma")
}

/// Transforms `gamma` into fusion weights: `alpha_i` proportional to
/// `(gamma_i^r / L_iii)^(1/3)`, so `alpha_i^3 L_iii` tracks `gamma_i^r`.
pub fn update_alpha(gamma: &[f64], table: &TraceTable, r: f64) -> Result<Vec<f64>> {
    if !(r > 1.0) {
        return Err(KmpError::Argument(format!("r must exceed 1, got {r}")));
    }
    if gamma.len() != table.n_views() {
        return Err(KmpError::Dimension(format!(
            "{} gamma entries for {} views",
            gamma.len(),
            table.n_views()
        )));
    }
    check_simplex(gamma, 1e-9)?;
    check_traces(table)?;
    let raw: Vec<f64> = gamma
        .iter()
        .zip(&table.l_diag)
        .map(|(&g, &l)| (g.powf(r) / l).cbrt())
        .collect();
    normalize_simplex(raw, "alpha")
}

fn normalize_simplex(raw: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    let sum: f64 = raw.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        return Err(KmpError::Numeric(format!(
            "{what} update produced a non-normalizable vector (sum {sum})"
        )));
    }
    Ok(raw.into_iter().map(|v| v / sum).collect())
}

/// One iteration record: F1 before and after the projection update, the
/// diagnostic F3 after the weight update, and the weights that produced
/// this iteration's projection.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub iteration: usize,
    /// F1 under this iteration's weights with the previous projection;
    /// absent on the first iteration.
    pub f1_pre: Option<f64>,
    /// F1 right after the projection update.
    pub f1: f64,
    /// Relaxed per-view objective under the freshly updated auxiliary
    /// weights (gamma^r, renormalized).
    pub f3: f64,
    pub alpha: Vec<f64>,
}

/// Iteration history of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub history: Vec<FitRecord>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl FitReport {
    /// Line-oriented log: `iter,F1,F3,alpha_1,...,alpha_M`.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for rec in &self.history {
            out.push_str(&format!("{},{},{}", rec.iteration, rec.f1, rec.f3));
            for a in &rec.alpha {
                out.push_str(&format!(",{a}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-view quantities computed once before the alternate loop.
pub(crate) struct PreparedViews {
    pub specs: Vec<KernelSpec>,
    pub grams: Vec<DMatrix<f64>>,
    pub graphs: Vec<SimilarityGraph>,
}

impl PreparedViews {
    pub fn laplacians(&self) -> Vec<DMatrix<f64>> {
        self.graphs.iter().map(|g| g.laplacian.clone()).collect()
    }

    pub fn degrees(&self) -> Vec<DMatrix<f64>> {
        self.graphs.iter().map(|g| g.degree.clone()).collect()
    }
}

/// Builds bandwidths, Grams, mixture clusterings, and similarity graphs
/// for every view. Views are processed in parallel; the shared GMM seed is
/// derived once from the run seed so identical views get identical graphs.
pub(crate) fn prepare_views(
    dataset: &MultiviewDataset,
    config: &FitConfig,
) -> Result<PreparedViews> {
    let gmm_seed = derive_seed(config.seed, stream::GMM);
    let per_view = try_map_indexed(dataset.n_views(), |i| -> Result<_> {
        let view = dataset.view(i);
        let sigma = match config.sigmas {
            Some(ref s) => s[i],
            None => kernel::median_sigma(view)? * config.sigma_scale,
        };
        let spec = KernelSpec::Rbf { sigma };
        let gram = spec.gram(view)?;
        let clusters = fit_gmm(view, config.clusters, gmm_seed)?;
        let graph = build_l1_graph(view, &clusters, config.max_atoms)?;
        Ok((spec, gram, graph))
    })?;
    let mut specs = Vec::new();
    let mut grams = Vec::new();
    let mut graphs = Vec::new();
    for (spec, gram, graph) in per_view {
        specs.push(spec);
        grams.push(gram);
        graphs.push(graph);
    }
    Ok(PreparedViews {
        specs,
        grams,
        graphs,
    })
}

/// Forms the symmetrized pencil `(KLK, KDK)` and returns its `dim`
/// smallest eigenpairs.
pub(crate) fn pencil_projection(
    k: &DMatrix<f64>,
    l: &DMatrix<f64>,
    d: &DMatrix<f64>,
    dim: usize,
    ridge: f64,
) -> Result<EigenSolution> {
    let mut klk = k * l * k;
    let mut kdk = k * d * k;
    kernel::symmetrize(&mut klk);
    kernel::symmetrize(&mut kdk);
    solve_gep(&klk, &kdk, dim, ridge)
}

/// Trains a projection model by alternate optimization.
///
/// Per-view graphs and Grams are computed once; the loop then alternates
/// the eigensolve for the projection with the closed-form weight update
/// until the relative F1 change drops below `tol` or `max_iters` is hit.
/// The best-F1 iterate is returned (the weight sequence itself need not
/// settle).
pub fn fit(dataset: &MultiviewDataset, config: &FitConfig) -> Result<(ProjectionModel, FitReport)> {
    let n = dataset.n_samples();
    let m = dataset.n_views();
    config.validate(n, m)?;

    let prepared = prepare_views(dataset, config)?;
    let laplacians = prepared.laplacians();
    let degrees = prepared.degrees();

    let mut alpha = vec![1.0 / m as f64; m];
    let mut history: Vec<FitRecord> = Vec::new();
    let mut converged = false;
    let mut prev_p: Option<DMatrix<f64>> = None;
    let mut prev_f1: Option<f64> = None;
    let mut best: Option<(f64, DMatrix<f64>, Vec<f64>)> = None;

    for iteration in 1..=config.max_iters {
        let k = fuse(&prepared.grams, &alpha)?;
        let l = fuse(&laplacians, &alpha)?;
        let dg = fuse(&degrees, &alpha)?;

        let mut klk = &k * &l * &k;
        let mut kdk = &k * &dg * &k;
        kernel::symmetrize(&mut klk);
        kernel::symmetrize(&mut kdk);

        let f1_pre = match prev_p {
            Some(ref p) => Some(ratio_pencil(p, &klk, &kdk)?),
            None => None,
        };

        let sol = solve_gep(&klk, &kdk, config.dim, config.ridge)?;
        let p = sol.eigenvectors;
        let f1 = ratio_pencil(&p, &klk, &kdk)?;
        if !f1.is_finite() {
            return Err(KmpError::Numeric(format!(
                "objective became non-finite at iteration {iteration}"
            )));
        }

        let table = TraceTable::compute(&p, &prepared.grams, &laplacians, &degrees);
        let gamma = update_gamma(&table, config.r)?;
        let mut next_alpha = update_alpha(&gamma, &table, config.r)?;
        let total: f64 = next_alpha.iter().sum();
        next_alpha.iter_mut().for_each(|a| *a /= total);

        let gamma_r = normalize_simplex(
            gamma.iter().map(|g| g.powf(config.r)).collect(),
            "gamma^r",
        )?;
        let f3 = objective_f3(&table, &gamma_r)?;

        history.push(FitRecord {
            iteration,
            f1_pre,
            f1,
            f3,
            alpha: alpha.clone(),
        });

        if best.as_ref().map_or(true, |(bf, _, _)| f1 < *bf) {
            best = Some((f1, p.clone(), alpha.clone()));
        }

        if let Some(pf) = prev_f1 {
            if (f1 - pf).abs() < config.tol * pf.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        prev_f1 = Some(f1);
        prev_p = Some(p);
        alpha = next_alpha;
    }

    let (_, best_p, best_alpha) = best.expect("at least one iteration ran");
    let report = FitReport {
        iterations_used: history.len(),
        history,
        converged,
    };
    let model = ProjectionModel::new(
        best_p,
        best_alpha,
        prepared.specs,
        dataset.views().to_vec(),
        config.clone(),
    )?;
    Ok((model, report))
}

fn ratio_pencil(p: &DMatrix<f64>, klk: &DMatrix<f64>, kdk: &DMatrix<f64>) -> Result<f64> {
    let num = (p.transpose() * klk * p).trace();
    let den = (p.transpose() * kdk * p).trace();
    if den <= 1e-14 {
        return Err(KmpError::DegenerateObjective(format!(
            "denominator trace {den} is not positive"
        )));
    }
    Ok(num / den)
}
