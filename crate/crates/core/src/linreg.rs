//! Least squares on the log-odds of the repayment rate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Relative size of a QR diagonal below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedTarget {
    pub raw_rates: Vec<f64>,
    /// log(p'/(1−p')) with p' clamped into [ε, 1−ε].
    pub transformed: Vec<f64>,
    pub epsilon: f64,
}

pub fn logit_transform(p: &[f64], epsilon: f64) -> Result<TransformedTarget> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside (0, 0.5)")));
    }
    let transformed = p
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain { index, value: v });
            }
            let c = v.clamp(epsilon, 1.0 - epsilon);
            Ok((c / (1.0 - c)).ln())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransformedTarget {
        raw_rates: p.to_vec(),
        transformed,
        epsilon,
    })
}

/// exp(y)/(1+exp(y)) without overflow.
pub fn inverse_logit_scalar(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

pub fn inverse_logit(y: &[f64]) -> Vec<f64> {
    y.iter().map(|&v| inverse_logit_scalar(v)).collect()
}

/// OLS fit with an intercept. Vectors indexed over parameters put the
/// intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub residual_variance: f64,
    pub n_obs: usize,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }
}

pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearModel> {
    let names: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    fit_ols_named(x, y, &names)
}

/// Householder-QR least squares. `names` label the columns of `x` in errors
/// and in the returned model.
pub fn fit_ols_named(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<LinearModel> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::Shape(format!("{} targets for {n} rows", y.len())));
    }
    if names.len() != d {
        return Err(Error::Shape(format!("{} names for {d} columns", names.len())));
    }
    if n <= d + 1 {
        return Err(Error::InsufficientData(format!(
            "need more than {} rows for {d} features, got {n}",
            d + 1
        )));
    }
    let mut design = DMatrix::from_element(n, d + 1, 1.0);
    design.columns_mut(1, d).copy_from(x);
    let col_norms: Vec<f64> = (0..=d).map(|j| design.column(j).norm()).collect();

    let qr = design.clone().qr();
    let r = qr.r();
    for j in 0..=d {
        if col_norms[j] == 0.0 || r[(j, j)].abs() <= RANK_TOL * col_norms[j] {
            let name = if j == 0 { "intercept".to_string() } else { names[j - 1].clone() };
            return Err(Error::Rank { index: j, name });
        }
    }
    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, d + 1).into_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Rank { index: d, name: "singular R".into() })?;

    let fitted = &design * &beta;
    let yv = DVector::from_column_slice(y);
    let resid = &yv - &fitted;
    let ssr = resid.norm_squared();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else if ssr == 0.0 { 1.0 } else { 0.0 };
    let df = (n - d - 1) as f64;
    let residual_variance = ssr / df;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(d + 1, d + 1))
        .ok_or_else(|| Error::Rank { index: d, name: "singular R".into() })?;
    // diag((RᵀR)⁻¹) = squared row norms of R⁻¹
    let std_errors: Vec<f64> = (0..=d)
        .map(|j| (residual_variance * r_inv.row(j).norm_squared()).sqrt())
        .collect();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut t_stats = Vec::with_capacity(d + 1);
    let mut p_values = Vec::with_capacity(d + 1);
    for j in 0..=d {
        let t = if std_errors[j] > 0.0 {
            beta[j] / std_errors[j]
        } else if beta[j] == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(beta[j])
        };
        let p = if t.is_finite() {
            (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
        } else {
            0.0
        };
        t_stats.push(t);
        p_values.push(p);
    }
    Ok(LinearModel {
        names: names.to_vec(),
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        std_errors,
        t_stats,
        p_values,
        r_squared,
        residual_variance,
        n_obs: n,
    })
}

/// Predictions on the linear (log-odds) scale.
pub fn predict_linear(model: &LinearModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.n_features() {
        return Err(Error::Shape(format!(
            "model has {} features, input has {} columns",
            model.n_features(),
            x.ncols()
        )));
    }
    Ok((0..x.nrows())
        .map(|i| {
            model
                .coefficients
                .iter()
                .enumerate()
                .fold(model.intercept, |acc, (j, b)| acc + b * x[(i, j)])
        })
        .collect())
}

pub fn predict_rates(model: &LinearModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(inverse_logit(&predict_linear(model, x)?))
}
