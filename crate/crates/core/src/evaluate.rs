//! K-fold cross-validation shared by every model, plus the PCA validation
//! curve and the model comparison table.
//!
//! Every statistic a recipe learns (standardization, PCA loadings, λ_max,
//! tree splits) is computed from the training rows of a fold only.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enet::{self, EnetConfig, EnetModel};
use crate::error::{Error, Result};
use crate::forest::{self, Forest, ForestConfig};
use crate::linreg::{self, LinearModel, TransformedTarget};
use crate::pca::{GroupedPcaFit, GroupedPcaModel};
use crate::stats;
use crate::table::FeatureTable;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_SEED: u64 = 42;

/// Cutoffs swept by the validation curve when none are given.
pub const DEFAULT_CURVE_CUTOFFS: [f64; 12] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
}

impl FoldAssignment {
    /// (training rows, held-out rows) for fold `f`, both ascending.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..self.labels.len()).partition(|&i| self.labels[i] == f);
        (train, test)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Shuffles `0..n` with a seeded generator and deals indices round-robin.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Fold(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Fold(format!("{k} folds for {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % k;
    }
    Ok(FoldAssignment { k, labels })
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} actuals",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Shape("rmse of empty vectors".into()));
    }
    let ss: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((ss / predicted.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetScale {
    /// Models fit and are scored on the same scale.
    Identity,
    /// Models fit log-odds; predictions are inverse-logit mapped before scoring.
    Logit,
}

/// Response as models see it (`fit`) and as errors are measured (`actual`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTarget {
    pub fit: Vec<f64>,
    pub actual: Vec<f64>,
    pub scale: TargetScale,
}

impl CvTarget {
    pub fn identity(y: Vec<f64>) -> Self {
        CvTarget {
            actual: y.clone(),
            fit: y,
            scale: TargetScale::Identity,
        }
    }

    pub fn len(&self) -> usize {
        self.fit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fit.is_empty()
    }

    pub fn to_output(&self, linear: &[f64]) -> Vec<f64> {
        match self.scale {
            TargetScale::Identity => linear.to_vec(),
            TargetScale::Logit => linreg::inverse_logit(linear),
        }
    }

    fn subset(&self, rows: &[usize]) -> CvTarget {
        CvTarget {
            fit: rows.iter().map(|&i| self.fit[i]).collect(),
            actual: rows.iter().map(|&i| self.actual[i]).collect(),
            scale: self.scale,
        }
    }
}

impl From<&TransformedTarget> for CvTarget {
    fn from(t: &TransformedTarget) -> Self {
        CvTarget {
            fit: t.transformed.clone(),
            actual: t.raw_rates.clone(),
            scale: TargetScale::Logit,
        }
    }
}

/// A model recipe refit from scratch inside every fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Recipe {
    /// Predicts the mean training response.
    TrainingMean,
    PcaOls { cutoff: f64 },
    Enet { config: EnetConfig, alpha: f64, lambda: f64 },
    Forest { config: ForestConfig },
}

impl Recipe {
    pub fn tag(&self) -> &'static str {
        match self {
            Recipe::TrainingMean => "mean",
            Recipe::PcaOls { .. } => "pca-ols",
            Recipe::Enet { .. } => "enet",
            Recipe::Forest { .. } => "rf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedRecipe {
    TrainingMean(f64),
    PcaOls { pca: GroupedPcaModel, ols: LinearModel },
    Enet(EnetModel),
    Forest(Forest),
}

pub fn fit_recipe(recipe: &Recipe, table: &FeatureTable, y: &[f64]) -> Result<FittedRecipe> {
    if y.len() != table.n_rows() {
        return Err(Error::Shape(format!("{} targets for {} rows", y.len(), table.n_rows())));
    }
    Ok(match recipe {
        Recipe::TrainingMean => FittedRecipe::TrainingMean(stats::mean(y)),
        Recipe::PcaOls { cutoff } => {
            let pca = GroupedPcaFit::new(table)?.model(*cutoff)?;
            let comps = pca.transform(table)?;
            let ols = linreg::fit_ols_named(&comps, y, &pca.component_names)?;
            FittedRecipe::PcaOls { pca, ols }
        }
        Recipe::Enet { config, alpha, lambda } => {
            let names: Vec<String> = table.names().iter().map(|s| s.to_string()).collect();
            FittedRecipe::Enet(enet::fit_at(table.values(), y, config, *alpha, *lambda, &names)?)
        }
        Recipe::Forest { config } => FittedRecipe::Forest(forest::fit_forest(table.values(), y, config)?),
    })
}

impl FittedRecipe {
    /// Predictions on the fitting scale.
    pub fn predict(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        match self {
            FittedRecipe::TrainingMean(m) => Ok(vec![*m; table.n_rows()]),
            FittedRecipe::PcaOls { pca, ols } => linreg::predict_linear(ols, &pca.transform(table)?),
            FittedRecipe::Enet(m) => m.predict(table.values()),
            FittedRecipe::Forest(f) => forest::predict(f, table.values()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model_tag: String,
    pub per_fold_rmse: Vec<f64>,
    pub per_fold_train_rmse: Vec<f64>,
    pub mean_rmse: f64,
    /// Sample standard deviation across folds.
    pub std_rmse: f64,
}

impl CvReport {
    pub fn from_folds(model_tag: &str, per_fold_rmse: Vec<f64>, per_fold_train_rmse: Vec<f64>) -> Self {
        CvReport {
            model_tag: model_tag.to_string(),
            mean_rmse: stats::mean(&per_fold_rmse),
            std_rmse: stats::sample_variance(&per_fold_rmse).sqrt(),
            per_fold_rmse,
            per_fold_train_rmse,
        }
    }
}

struct FoldOutcome {
    fitted: FittedRecipe,
    train_rmse: f64,
    test_rmse: f64,
}

fn run_fold(recipe: &Recipe, table: &FeatureTable, target: &CvTarget, folds: &FoldAssignment, f: usize) -> Result<FoldOutcome> {
    let (train, test) = folds.split(f);
    let t_train = table.select_rows(&train)?;
    let t_test = table.select_rows(&test)?;
    let y_train = target.subset(&train);
    let y_test = target.subset(&test);
    let fitted = fit_recipe(recipe, &t_train, &y_train.fit)?;
    let train_rmse = rmse(&target.to_output(&fitted.predict(&t_train)?), &y_train.actual)?;
    let test_rmse = rmse(&target.to_output(&fitted.predict(&t_test)?), &y_test.actual)?;
    Ok(FoldOutcome {
        fitted,
        train_rmse,
        test_rmse,
    })
}

fn run_folds(recipe: &Recipe, table: &FeatureTable, target: &CvTarget, k: usize, seed: u64) -> Result<Vec<FoldOutcome>> {
    if target.len() != table.n_rows() {
        return Err(Error::Shape(format!("{} targets for {} rows", target.len(), table.n_rows())));
    }
    let folds = make_folds(table.n_rows(), k, seed)?;
    (0..k)
        .into_par_iter()
        .map(|f| run_fold(recipe, table, target, &folds, f).map_err(|e| Error::InFold { fold: f, source: Box::new(e) }))
        .collect()
}

/// Held-out RMSE (output scale) of `recipe` over `k` seeded folds.
pub fn cross_validate(recipe: &Recipe, table: &FeatureTable, target: &CvTarget, k: usize, seed: u64) -> Result<CvReport> {
    let outcomes = run_folds(recipe, table, target, k, seed)?;
    Ok(CvReport::from_folds(
        recipe.tag(),
        outcomes.iter().map(|o| o.test_rmse).collect(),
        outcomes.iter().map(|o| o.train_rmse).collect(),
    ))
}

/// The per-fold fitted models `cross_validate` would produce.
pub fn fold_fits(recipe: &Recipe, table: &FeatureTable, target: &CvTarget, k: usize, seed: u64) -> Result<Vec<FittedRecipe>> {
    Ok(run_folds(recipe, table, target, k, seed)?.into_iter().map(|o| o.fitted).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCurve {
    pub cutoffs: Vec<f64>,
    pub train_rmse: Vec<f64>,
    pub val_rmse: Vec<f64>,
    /// Width of a full-data PCA fit at each cutoff.
    pub component_counts: Vec<usize>,
}

/// PCA + OLS cross-validated at each cutoff. Each fold's decomposition is
/// computed once and truncated per cutoff.
pub fn validation_curve(table: &FeatureTable, target: &CvTarget, cutoffs: &[f64], k: usize, seed: u64) -> Result<ValidationCurve> {
    if cutoffs.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
        return Err(Error::InvalidArgument("cutoffs must lie in (0, 1]".into()));
    }
    if target.len() != table.n_rows() {
        return Err(Error::Shape(format!("{} targets for {} rows", target.len(), table.n_rows())));
    }
    let folds = make_folds(table.n_rows(), k, seed)?;
    let per_fold: Vec<Result<Vec<(f64, f64)>>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let inner = || -> Result<Vec<(f64, f64)>> {
                let (train, test) = folds.split(f);
                let t_train = table.select_rows(&train)?;
                let t_test = table.select_rows(&test)?;
                let y_train = target.subset(&train);
                let y_test = target.subset(&test);
                let fit = GroupedPcaFit::new(&t_train)?;
                cutoffs
                    .iter()
                    .map(|&c| {
                        let pca = fit.model(c)?;
                        let ctrain = pca.transform(&t_train)?;
                        let ols = linreg::fit_ols_named(&ctrain, &y_train.fit, &pca.component_names)?;
                        let tr = rmse(&target.to_output(&linreg::predict_linear(&ols, &ctrain)?), &y_train.actual)?;
                        let ctest = pca.transform(&t_test)?;
                        let va = rmse(&target.to_output(&linreg::predict_linear(&ols, &ctest)?), &y_test.actual)?;
                        Ok((tr, va))
                    })
                    .collect()
            };
            inner().map_err(|e| Error::InFold { fold: f, source: Box::new(e) })
        })
        .collect();
    let per_fold: Vec<Vec<(f64, f64)>> = per_fold.into_iter().collect::<Result<_>>()?;

    let full = GroupedPcaFit::new(table)?;
    let mut curve = ValidationCurve {
        cutoffs: cutoffs.to_vec(),
        train_rmse: Vec::with_capacity(cutoffs.len()),
        val_rmse: Vec::with_capacity(cutoffs.len()),
        component_counts: Vec::with_capacity(cutoffs.len()),
    };
    for (ci, &c) in cutoffs.iter().enumerate() {
        curve.train_rmse.push(per_fold.iter().map(|v| v[ci].0).sum::<f64>() / k as f64);
        curve.val_rmse.push(per_fold.iter().map(|v| v[ci].1).sum::<f64>() / k as f64);
        curve.component_counts.push(full.model(c)?.width());
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_tag: String,
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

/// Reports ordered by ascending mean RMSE, ties by tag.
pub fn compare_models(reports: &[CvReport]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            model_tag: r.model_tag.clone(),
            mean_rmse: r.mean_rmse,
            std_rmse: r.std_rmse,
        })
        .collect();
    rows.sort_by(|a, b| a.mean_rmse.total_cmp(&b.mean_rmse).then_with(|| a.model_tag.cmp(&b.model_tag)));
    rows
}
