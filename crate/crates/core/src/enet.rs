//! Elastic-net least squares by cyclic coordinate descent.
//!
//! Minimizes over (β₀, β):
//!
//! ```text
//! (1/2n)‖y − β₀ − Xβ‖² + λα‖β‖₁ + ½λ(1−α)‖β‖²
//! ```
//!
//! Columns of `X` are standardized internally (mean 0, variance 1 with
//! denominator n) and `y` is centered; coefficients are mapped back to the
//! original scale on output. Each λ on a descending log-spaced grid is
//! warm-started from the previous solution. Within one λ, full sweeps
//! alternate with sweeps over the current active set until a full sweep
//! changes no coefficient by more than the tolerance. Per-feature gradients
//! are updated through Gram columns, computed only for features that move.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{make_folds, rmse, CvTarget};

pub const DEFAULT_ALPHA_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const DEFAULT_GAMMA: f64 = 5e-3;
pub const DEFAULT_PATH_LENGTH: usize = 100;
pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnetConfig {
    pub alpha_grid: Vec<f64>,
    /// λ_min / λ_max.
    pub gamma: f64,
    pub path_length: usize,
    /// Convergence threshold on the max absolute coefficient change
    /// (standardized scale) over a full sweep.
    pub tolerance: f64,
    /// Sweep budget per λ.
    pub max_iters: usize,
}

impl Default for EnetConfig {
    fn default() -> Self {
        EnetConfig {
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            gamma: DEFAULT_GAMMA,
            path_length: DEFAULT_PATH_LENGTH,
            tolerance: DEFAULT_TOLERANCE,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

impl EnetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::InvalidArgument("alpha grid entries must lie in (0, 1]".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.path_length == 0 || self.max_iters == 0 || self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidArgument(
                "path length, max iterations and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnetPath {
    pub alpha: f64,
    /// Descending.
    pub lambdas: Vec<f64>,
    /// p × L, original scale.
    pub coefficients: DMatrix<f64>,
    pub intercepts: Vec<f64>,
    pub active_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnetModel {
    pub alpha: f64,
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub active_set: Vec<String>,
    pub cv_rmse: f64,
    pub cv_fold_rmse: Vec<f64>,
}

impl EnetModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        linear_predict(&self.coefficients, self.intercept, x)
    }
}

pub(crate) fn linear_predict(coef: &[f64], intercept: f64, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != coef.len() {
        return Err(Error::Shape(format!(
            "model has {} coefficients, input has {} columns",
            coef.len(),
            x.ncols()
        )));
    }
    Ok((0..x.nrows())
        .map(|i| coef.iter().enumerate().fold(intercept, |acc, (j, b)| acc + b * x[(i, j)]))
        .collect())
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Centered/scaled copy of a design and response.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub x: DMatrix<f64>,
    pub means: Vec<f64>,
    /// Population standard deviations; 0 marks a constant column.
    pub sds: Vec<f64>,
    pub y: Vec<f64>,
    pub y_mean: f64,
}

impl Standardized {
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InsufficientData("empty design matrix".into()));
        }
        if y.len() != n {
            return Err(Error::Shape(format!("{} targets for {n} rows", y.len())));
        }
        let nf = n as f64;
        let mut xs = x.clone();
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        for j in 0..p {
            let mut col = xs.column_mut(j);
            let m = col.iter().sum::<f64>() / nf;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                col.apply(|v| *v = (*v - m) / sd);
                sds.push(sd);
            } else {
                col.fill(0.0);
                sds.push(0.0);
            }
            means.push(m);
        }
        let y_mean = y.iter().sum::<f64>() / nf;
        Ok(Standardized {
            x: xs,
            means,
            sds,
            y: y.iter().map(|v| v - y_mean).collect(),
            y_mean,
        })
    }

    fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Original-scale coefficients and intercept.
    fn back_transform(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        let coef: Vec<f64> = beta
            .iter()
            .zip(&self.sds)
            .map(|(b, &sd)| if sd > 0.0 { b / sd } else { 0.0 })
            .collect();
        let intercept = self.y_mean - coef.iter().zip(&self.means).map(|(c, m)| c * m).sum::<f64>();
        (coef, intercept)
    }

    fn dot(&self, j: usize, v: &[f64]) -> f64 {
        self.x.column(j).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// `max_j |x_jᵀy| / (nα)` for a standardized design and centered response.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::Unbounded);
    }
    let n = x.nrows() as f64;
    Ok((0..x.ncols())
        .map(|j| x.column(j).iter().zip(y).map(|(a, b)| a * b).sum::<f64>().abs())
        .fold(0.0, f64::max)
        / (n * alpha))
}

/// Log-spaced grid from `lmax` down to `gamma · lmax`.
pub fn lambda_grid(lmax: f64, gamma: f64, len: usize) -> Vec<f64> {
    if lmax <= 0.0 {
        return vec![0.0];
    }
    if len == 1 {
        return vec![lmax];
    }
    let step = gamma.ln() / (len - 1) as f64;
    (0..len).map(|k| lmax * (step * k as f64).exp()).collect()
}

/// Coordinate descent with covariance updates: the gradient
/// `(1/n)x_jᵀr` is kept for every feature, and Gram columns are computed
/// the first time their feature moves.
struct Solver<'a> {
    data: &'a Standardized,
    alpha: f64,
    beta: Vec<f64>,
    grad: Vec<f64>,
    gram: Vec<Option<Vec<f64>>>,
}

impl<'a> Solver<'a> {
    fn new(data: &'a Standardized, alpha: f64) -> Self {
        let p = data.x.ncols();
        let n = data.n() as f64;
        Solver {
            data,
            alpha,
            beta: vec![0.0; p],
            grad: (0..p).map(|j| data.dot(j, &data.y) / n).collect(),
            gram: vec![None; p],
        }
    }

    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        if self.data.sds[j] == 0.0 {
            return 0.0;
        }
        let old = self.beta[j];
        let z = self.grad[j] + old;
        let t = lambda * self.alpha;
        // λ_max·α and (1/n)x_jᵀy can differ in the last ulp
        let new = if z.abs() <= t * (1.0 + 1e-12) {
            0.0
        } else {
            soft_threshold(z, t) / (1.0 + lambda * (1.0 - self.alpha))
        };
        let delta = new - old;
        if delta != 0.0 {
            self.beta[j] = new;
            let data = self.data;
            let col = self.gram[j].get_or_insert_with(|| {
                let n = data.n() as f64;
                let xj = data.x.column(j);
                data.x.column_iter().map(|xk| xk.dot(&xj) / n).collect()
            });
            for (g, c) in self.grad.iter_mut().zip(col.iter()) {
                *g -= delta * c;
            }
        }
        delta.abs()
    }

    fn sweep(&mut self, lambda: f64, cols: &[usize]) -> f64 {
        let mut max_change: f64 = 0.0;
        for &j in cols {
            max_change = max_change.max(self.update(j, lambda));
        }
        max_change
    }

    fn objective(&self, lambda: f64) -> f64 {
        let n = self.data.n() as f64;
        let mut resid = self.data.y.clone();
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                for (r, x) in resid.iter_mut().zip(self.data.x.column(j).iter()) {
                    *r -= b * x;
                }
            }
        }
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        let l1: f64 = self.beta.iter().map(|b| b.abs()).sum();
        let l2: f64 = self.beta.iter().map(|b| b * b).sum();
        rss / (2.0 * n) + lambda * self.alpha * l1 + 0.5 * lambda * (1.0 - self.alpha) * l2
    }

    /// Runs sweeps at one λ until a full sweep moves no coefficient by
    /// `tol` or more. `on_sweep` sees the solver after every sweep.
    fn solve(
        &mut self,
        lambda: f64,
        lambda_index: usize,
        tol: f64,
        max_iters: usize,
        mut on_sweep: impl FnMut(&Self),
    ) -> Result<()> {
        let all: Vec<usize> = (0..self.beta.len()).collect();
        let mut sweeps = 0;
        loop {
            let change = self.sweep(lambda, &all);
            sweeps += 1;
            on_sweep(self);
            if change < tol {
                return Ok(());
            }
            if sweeps >= max_iters {
                return Err(Error::Convergence { lambda_index, max_change: change });
            }
            let active: Vec<usize> = all.iter().copied().filter(|&j| self.beta[j] != 0.0).collect();
            loop {
                let change = self.sweep(lambda, &active);
                sweeps += 1;
                on_sweep(self);
                if change < tol {
                    break;
                }
                if sweeps >= max_iters {
                    return Err(Error::Convergence { lambda_index, max_change: change });
                }
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha == 0.0 {
        Err(Error::Unbounded)
    } else if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1]")))
    }
}

fn path_on(data: &Standardized, config: &EnetConfig, alpha: f64, lambdas: &[f64]) -> Result<EnetPath> {
    let p = data.x.ncols();
    let mut solver = Solver::new(data, alpha);
    let mut coefficients = DMatrix::zeros(p, lambdas.len());
    let mut intercepts = Vec::with_capacity(lambdas.len());
    let mut active_counts = Vec::with_capacity(lambdas.len());
    for (k, &lambda) in lambdas.iter().enumerate() {
        solver.solve(lambda, k, config.tolerance, config.max_iters, |_| {})?;
        let (coef, intercept) = data.back_transform(&solver.beta);
        active_counts.push(coef.iter().filter(|&&c| c != 0.0).count());
        coefficients.column_mut(k).copy_from_slice(&coef);
        intercepts.push(intercept);
    }
    Ok(EnetPath {
        alpha,
        lambdas: lambdas.to_vec(),
        coefficients,
        intercepts,
        active_counts,
    })
}

/// Regularization path from λ_max down to γ·λ_max.
pub fn fit_path(x: &DMatrix<f64>, y: &[f64], config: &EnetConfig, alpha: f64) -> Result<EnetPath> {
    check_alpha(alpha)?;
    let data = Standardized::new(x, y)?;
    let lmax = lambda_max(&data.x, &data.y, alpha)?;
    path_on(&data, config, alpha, &lambda_grid(lmax, config.gamma, config.path_length))
}

/// Path over caller-supplied descending λ values.
pub fn fit_path_with_lambdas(
    x: &DMatrix<f64>,
    y: &[f64],
    config: &EnetConfig,
    alpha: f64,
    lambdas: &[f64],
) -> Result<EnetPath> {
    check_alpha(alpha)?;
    if lambdas.windows(2).any(|w| w[1] > w[0]) || lambdas.iter().any(|&l| l < 0.0) {
        return Err(Error::InvalidArgument("lambdas must be non-negative and descending".into()));
    }
    let data = Standardized::new(x, y)?;
    path_on(&data, config, alpha, lambdas)
}

/// Objective value after every coordinate-descent sweep at a single λ,
/// starting from β = 0.
pub fn objective_trace(x: &DMatrix<f64>, y: &[f64], config: &EnetConfig, alpha: f64, lambda: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let data = Standardized::new(x, y)?;
    let mut solver = Solver::new(&data, alpha);
    let mut trace = vec![solver.objective(lambda)];
    solver.solve(lambda, 0, config.tolerance, config.max_iters, |s| trace.push(s.objective(lambda)))?;
    Ok(trace)
}

/// Max violation of the elastic-net optimality conditions at the model's
/// (α, λ), evaluated on the standardized problem built from `(x, y)`.
///
/// For active j the stationarity residual
/// `(1/n)x_jᵀr − λ(1−α)β_j − λα·sign(β_j)` must vanish; for inactive j,
/// `|(1/n)x_jᵀr|` may not exceed `λα`.
pub fn kkt_check(x: &DMatrix<f64>, y: &[f64], model: &EnetModel) -> Result<f64> {
    let data = Standardized::new(x, y)?;
    if model.coefficients.len() != data.x.ncols() {
        return Err(Error::Shape(format!(
            "model has {} coefficients, design has {} columns",
            model.coefficients.len(),
            data.x.ncols()
        )));
    }
    let n = data.n() as f64;
    let beta: Vec<f64> = model
        .coefficients
        .iter()
        .zip(&data.sds)
        .map(|(c, sd)| c * sd)
        .collect();
    let mut resid = data.y.clone();
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (r, v) in resid.iter_mut().zip(data.x.column(j).iter()) {
                *r -= b * v;
            }
        }
    }
    let (alpha, lambda) = (model.alpha, model.lambda);
    let mut worst: f64 = 0.0;
    for (j, &b) in beta.iter().enumerate() {
        if data.sds[j] == 0.0 {
            continue;
        }
        let g = data.dot(j, &resid) / n;
        let v = if b != 0.0 {
            (g - lambda * (1.0 - alpha) * b - lambda * alpha * b.signum()).abs()
        } else {
            (g.abs() - lambda * alpha).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

fn active_names(coef: &[f64], names: &[String]) -> Vec<String> {
    coef.iter()
        .zip(names)
        .filter(|(c, _)| **c != 0.0)
        .map(|(_, n)| n.clone())
        .collect()
}

/// Fits at one (α, λ): a warm-started path from the data's own λ_max down
/// to `lambda` over `config.path_length` points.
pub fn fit_at(x: &DMatrix<f64>, y: &[f64], config: &EnetConfig, alpha: f64, lambda: f64, names: &[String]) -> Result<EnetModel> {
    check_alpha(alpha)?;
    let data = Standardized::new(x, y)?;
    let lmax = lambda_max(&data.x, &data.y, alpha)?;
    let lambdas = if lambda >= lmax || config.path_length == 1 {
        vec![lambda]
    } else {
        lambda_grid(lmax, lambda / lmax, config.path_length)
    };
    let path = path_on(&data, config, alpha, &lambdas)?;
    let last = lambdas.len() - 1;
    let coefficients: Vec<f64> = path.coefficients.column(last).iter().copied().collect();
    Ok(EnetModel {
        alpha,
        lambda,
        active_set: active_names(&coefficients, names),
        coefficients,
        intercept: path.intercepts[last],
        cv_rmse: f64::NAN,
        cv_fold_rmse: Vec::new(),
    })
}

/// Cross-validated choice of (α, λ).
///
/// Each fold fits its own path on its training rows, over the grid
/// `λ_max,fold · γ^(k/(L−1))`; grid position `k` is scored by the mean
/// held-out RMSE on the target's output scale. The winning (α, k) is refit
/// on all rows at the full-data λ for position `k`. Ties prefer larger λ,
/// then smaller α.
pub fn tune(
    x: &DMatrix<f64>,
    target: &CvTarget,
    config: &EnetConfig,
    folds: usize,
    seed: u64,
    names: &[String],
) -> Result<EnetModel> {
    config.validate()?;
    if names.len() != x.ncols() {
        return Err(Error::Shape(format!("{} names for {} columns", names.len(), x.ncols())));
    }
    let n = x.nrows();
    if target.len() != n {
        return Err(Error::Shape(format!("{} targets for {n} rows", target.len())));
    }
    let assignment = make_folds(n, folds, seed)?;
    let jobs: Vec<(usize, usize)> = (0..config.alpha_grid.len())
        .flat_map(|a| (0..folds).map(move |f| (a, f)))
        .collect();

    // errors[a][f][k]
    let per_job: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(a, f)| {
            let alpha = config.alpha_grid[a];
            let (train, test) = assignment.split(f);
            let xt = x.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| target.fit[i]).collect();
            let path = fit_path(&xt, &yt, config, alpha).map_err(|e| Error::InFold { fold: f, source: Box::new(e) })?;
            let xv = x.select_rows(&test);
            let actual: Vec<f64> = test.iter().map(|&i| target.actual[i]).collect();
            let mut errs = vec![f64::NAN; config.path_length];
            for (k, err) in errs.iter_mut().enumerate() {
                // a degenerate one-point path repeats its only solution
                let col = k.min(path.lambdas.len() - 1);
                let coef: Vec<f64> = path.coefficients.column(col).iter().copied().collect();
                let pred = linear_predict(&coef, path.intercepts[col], &xv)?;
                *err = rmse(&target.to_output(&pred), &actual)?;
            }
            Ok(errs)
        })
        .collect();
    let mut errors = vec![vec![Vec::new(); folds]; config.alpha_grid.len()];
    for ((a, f), res) in jobs.iter().zip(per_job) {
        errors[*a][*f] = res?;
    }

    let full = Standardized::new(x, &target.fit)?;
    let mut best: Option<(f64, f64, f64, usize, usize)> = None; // (rmse, lambda, alpha, a, k)
    for (a, &alpha) in config.alpha_grid.iter().enumerate() {
        let lmax = lambda_max(&full.x, &full.y, alpha)?;
        let grid = lambda_grid(lmax, config.gamma, config.path_length);
        for k in 0..config.path_length {
            let mean = errors[a].iter().map(|e| e[k]).sum::<f64>() / folds as f64;
            let lambda = grid[k.min(grid.len() - 1)];
            let better = match best {
                None => true,
                Some((bm, bl, ba, _, _)) => {
                    mean < bm || (mean == bm && (lambda > bl || (lambda == bl && alpha < ba)))
                }
            };
            if better {
                best = Some((mean, lambda, alpha, a, k));
            }
        }
    }
    let (cv_rmse, _, alpha, a, k) = best.expect("non-empty grid");
    let lmax = lambda_max(&full.x, &full.y, alpha)?;
    let grid = lambda_grid(lmax, config.gamma, config.path_length);
    let upto = &grid[..=k.min(grid.len() - 1)];
    let path = path_on(&full, config, alpha, upto)?;
    let last = upto.len() - 1;
    let coefficients: Vec<f64> = path.coefficients.column(last).iter().copied().collect();
    Ok(EnetModel {
        alpha,
        lambda: upto[last],
        active_set: active_names(&coefficients, names),
        coefficients,
        intercept: path.intercepts[last],
        cv_rmse,
        cv_fold_rmse: errors[a].iter().map(|e| e[k]).collect(),
    })
}
