//! Target selection, variance and correlation screens, and the descriptive
//! summaries (rate quantiles, top-correlation heatmap).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::table::{Category, FeatureTable, RowKey};

pub const DEFAULT_VARIANCE_DROP: f64 = 0.10;
pub const DEFAULT_TOP_COUNT: usize = 500;
pub const DEFAULT_HEATMAP_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    /// Fraction of lowest-variance features to drop.
    pub variance_drop_fraction: f64,
    /// Number of features kept by the correlation screen.
    pub top_count: usize,
    pub target_name: String,
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.variance_drop_fraction) {
            return Err(Error::InvalidArgument(format!(
                "variance drop fraction {} outside [0, 1)",
                self.variance_drop_fraction
            )));
        }
        if self.top_count == 0 {
            return Err(Error::InvalidArgument("top count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Prediction target: one Repayment column with its missing rows removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    pub values: Vec<f64>,
    pub row_keys: Vec<RowKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub dropped_by_variance: Vec<(String, f64)>,
    /// (name, |correlation|), descending.
    pub selected: Vec<(String, f64)>,
    pub target_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summary of one rate variable; `stats` is `None` when every
/// cell is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSummary {
    pub name: String,
    pub stats: Option<FiveNumber>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
}

/// Splits off the target column and removes every Repayment column from the
/// predictors. Rows where the target is missing are dropped from both.
pub fn select_target(table: &FeatureTable, name: &str) -> Result<(Target, FeatureTable)> {
    let j = table
        .column_index(name)
        .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
    let meta = &table.metas()[j];
    if meta.category != Category::Repayment {
        return Err(Error::LeakageGuard {
            name: name.to_string(),
            category: meta.category.to_string(),
        });
    }
    let rows: Vec<usize> = (0..table.n_rows())
        .filter(|&i| !table.missing()[(i, j)])
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyTable(format!("target `{name}` is missing in every row")));
    }
    let mut values = Vec::with_capacity(rows.len());
    for &i in &rows {
        let v = table.values()[(i, j)];
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain { index: i, value: v });
        }
        values.push(v);
    }
    let keep: Vec<usize> = table
        .metas()
        .iter()
        .enumerate()
        .filter(|(_, m)| m.category != Category::Repayment)
        .map(|(k, _)| k)
        .collect();
    let predictors = table.select_columns(&keep)?.select_rows(&rows)?;
    let target = Target {
        name: name.to_string(),
        values,
        row_keys: predictors.row_keys().to_vec(),
    };
    Ok((target, predictors))
}

fn column_vec(table: &FeatureTable, j: usize) -> Vec<f64> {
    table.values().column(j).iter().copied().collect()
}

fn drop_count(a: f64, p: usize) -> usize {
    // guard against products like 0.3 * 10 = 2.9999999999999996
    ((a * p as f64) + 1e-9).floor() as usize
}

/// Drops the `floor(a·p)` lowest-variance features (ties by ascending name).
pub fn variance_screen(table: &FeatureTable, a: f64) -> Result<(FeatureTable, Vec<(String, f64)>)> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::InvalidArgument(format!("variance drop fraction {a} outside [0, 1)")));
    }
    let p = table.n_cols();
    let variances: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|j| stats::sample_variance(&column_vec(table, j)))
        .collect();
    let names = table.names();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| variances[x].total_cmp(&variances[y]).then_with(|| names[x].cmp(names[y])));
    let k = drop_count(a, p).min(p);
    let mut dropped_idx: Vec<usize> = order[..k].to_vec();
    let dropped = dropped_idx
        .iter()
        .map(|&j| (names[j].to_string(), variances[j]))
        .collect();
    dropped_idx.sort_unstable();
    let keep: Vec<usize> = (0..p).filter(|j| dropped_idx.binary_search(j).is_err()).collect();
    Ok((table.select_columns(&keep)?, dropped))
}

/// Absolute Pearson correlation of every feature with the target; constant
/// features score 0.
fn abs_correlations(table: &FeatureTable, target: &[f64]) -> Result<Vec<f64>> {
    if target.len() != table.n_rows() {
        return Err(Error::Shape(format!(
            "target has {} entries, table has {} rows",
            target.len(),
            table.n_rows()
        )));
    }
    if stats::sample_variance(target) <= 0.0 {
        return Err(Error::DegenerateTarget);
    }
    Ok((0..table.n_cols())
        .into_par_iter()
        .map(|j| stats::pearson(&column_vec(table, j), target).map_or(0.0, f64::abs))
        .collect())
}

fn rank_by_correlation(names: &[&str], corr: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..corr.len()).collect();
    order.sort_by(|&x, &y| corr[y].total_cmp(&corr[x]).then_with(|| names[x].cmp(names[y])));
    order
}

/// Keeps the `min(b, p)` features most correlated (in absolute value) with
/// the target. Survivors keep their original column order; the report lists
/// them by rank.
pub fn correlation_screen(table: &FeatureTable, target: &Target, b: usize) -> Result<(FeatureTable, ScreenReport)> {
    if b == 0 {
        return Err(Error::InvalidArgument("top count must be at least 1".into()));
    }
    let corr = abs_correlations(table, &target.values)?;
    let names = table.names();
    let order = rank_by_correlation(&names, &corr);
    let top = &order[..b.min(order.len())];
    let selected = top.iter().map(|&j| (names[j].to_string(), corr[j])).collect();
    let mut keep = top.to_vec();
    keep.sort_unstable();
    Ok((
        table.select_columns(&keep)?,
        ScreenReport {
            dropped_by_variance: Vec::new(),
            selected,
            target_name: target.name.clone(),
        },
    ))
}

/// Result of the full screening stage.
#[derive(Debug, Clone)]
pub struct Screened {
    pub target: Target,
    pub predictors: FeatureTable,
    pub report: ScreenReport,
}

/// Target selection, then the variance screen, then the correlation screen.
pub fn screen(table: &FeatureTable, config: &ScreeningConfig) -> Result<Screened> {
    config.validate()?;
    let (target, predictors) = select_target(table, &config.target_name)?;
    let (predictors, dropped) = variance_screen(&predictors, config.variance_drop_fraction)?;
    let (predictors, mut report) = correlation_screen(&predictors, &target, config.top_count)?;
    report.dropped_by_variance = dropped;
    Ok(Screened {
        target,
        predictors,
        report,
    })
}

/// Five-number summaries over non-missing cells.
pub fn summarize_rates(table: &FeatureTable, names: &[&str]) -> Result<Vec<QuantileSummary>> {
    names
        .iter()
        .map(|&name| {
            let j = table
                .column_index(name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
            let mut cells = Vec::new();
            for i in 0..table.n_rows() {
                if table.missing()[(i, j)] {
                    continue;
                }
                let v = table.values()[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain { index: i, value: v });
                }
                cells.push(v);
            }
            if cells.is_empty() {
                return Ok(QuantileSummary {
                    name: name.to_string(),
                    stats: None,
                });
            }
            cells.sort_by(f64::total_cmp);
            Ok(QuantileSummary {
                name: name.to_string(),
                stats: Some(FiveNumber {
                    min: cells[0],
                    q1: stats::quantile_sorted(&cells, 0.25),
                    median: stats::quantile_sorted(&cells, 0.5),
                    q3: stats::quantile_sorted(&cells, 0.75),
                    max: cells[cells.len() - 1],
                }),
            })
        })
        .collect()
}

/// Pairwise correlations among the `k` features most correlated with the
/// target.
pub fn correlation_heatmap(table: &FeatureTable, target: &Target, k: usize) -> Result<Heatmap> {
    if k == 0 || k > table.n_cols() {
        return Err(Error::InvalidArgument(format!(
            "heatmap size {k} must be in 1..={}",
            table.n_cols()
        )));
    }
    let corr = abs_correlations(table, &target.values)?;
    let names = table.names();
    let top: Vec<usize> = rank_by_correlation(&names, &corr)[..k].to_vec();
    let cols: Vec<Vec<f64>> = top.iter().map(|&j| column_vec(table, j)).collect();
    let mut m = DMatrix::identity(k, k);
    for a in 0..k {
        for b in (a + 1)..k {
            let r = stats::pearson(&cols[a], &cols[b]).unwrap_or(0.0);
            m[(a, b)] = r;
            m[(b, a)] = r;
        }
    }
    Ok(Heatmap {
        names: top.iter().map(|&j| names[j].to_string()).collect(),
        matrix: m,
    })
}
