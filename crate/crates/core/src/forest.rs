//! Bootstrap ensembles of variance-reduction regression trees.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TREES: usize = 20;
pub const DEFAULT_MIN_LEAF: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per split; `None` means ⌈p/3⌉.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: DEFAULT_TREES,
            mtry: None,
            min_leaf: DEFAULT_MIN_LEAF,
            max_depth: None,
            bootstrap: true,
            seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| p.div_ceil(3))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Node variance minus the size-weighted child variances.
        impurity_decrease: f64,
        n_samples: usize,
    },
    Leaf {
        value: f64,
        n_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<TreeNode>,
    pub n_samples: usize,
}

impl Tree {
    pub fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Internal { feature, threshold, left, right, .. } => {
                    at = if row(*feature) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Impurity decrease per feature, weighted by node sample fraction.
    fn raw_importance(&self, p: usize) -> Vec<f64> {
        let mut imp = vec![0.0; p];
        let total = self.n_samples as f64;
        for node in &self.nodes {
            if let TreeNode::Internal { feature, impurity_decrease, n_samples, .. } = node {
                imp[*feature] += *n_samples as f64 / total * impurity_decrease;
            }
        }
        imp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub mean_importance: Vec<f64>,
    pub std_importance: Vec<f64>,
    /// 1-based rank per feature by descending mean.
    pub rank: Vec<usize>,
    /// No tree split at all.
    pub degenerate: bool,
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    mtry: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    nodes: Vec<TreeNode>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let value = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        TreeNode::Leaf { value, n_samples: rows.len() }
    }

    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<Split> {
        let m = rows.len();
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / m as f64;
        let sse: f64 = rows.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let mut features = index::sample(rng, self.x.ncols(), self.mtry).into_vec();
        features.sort_unstable();

        let mut best: Option<Split> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
        for f in features {
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (self.x[(i, f)], self.y[i] - mean)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = pairs.iter().map(|p| p.1).sum();
            let mut left_sum = 0.0;
            for pos in 0..m - 1 {
                left_sum += pairs[pos].1;
                let n_left = pos + 1;
                let n_right = m - n_left;
                if n_left < self.min_leaf {
                    continue;
                }
                if n_right < self.min_leaf {
                    break;
                }
                let (lo, hi) = (pairs[pos].0, pairs[pos + 1].0);
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64
                    - total * total / m as f64;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Split { feature: f, threshold, gain });
                }
            }
        }
        best.filter(|s| s.gain > 1e-12 * sse && s.gain > 0.0)
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let m = rows.len();
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(self.y[i]), hi.max(self.y[i]))
        });
        let stop = m < 2 * self.min_leaf || self.max_depth.is_some_and(|d| depth >= d) || lo == hi;
        let split = if stop { None } else { self.best_split(&rows, rng) };
        let Some(split) = split else {
            let leaf = self.leaf(&rows);
            self.nodes.push(leaf);
            return id;
        };
        // placeholder, patched once children exist
        self.nodes.push(TreeNode::Leaf { value: 0.0, n_samples: m });
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.x[(i, split.feature)] <= split.threshold);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[id] = TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            impurity_decrease: split.gain / m as f64,
            n_samples: m,
        };
        id
    }
}

/// RNG stream for tree `t`; independent of thread scheduling.
fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

pub fn fit_forest(x: &DMatrix<f64>, y: &[f64], config: &ForestConfig) -> Result<Forest> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Shape(format!("{} targets for {n} rows", y.len())));
    }
    if config.n_trees == 0 || config.min_leaf == 0 || p == 0 {
        return Err(Error::InvalidArgument("need at least one tree, one feature and min_leaf >= 1".into()));
    }
    let mtry = config.resolved_mtry(p);
    if mtry == 0 || mtry > p {
        return Err(Error::InvalidArgument(format!("mtry {mtry} outside 1..={p}")));
    }
    if n < 2 * config.min_leaf {
        return Err(Error::InsufficientData(format!(
            "{n} rows is fewer than 2 x min_leaf = {}",
            2 * config.min_leaf
        )));
    }
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(config.seed, t);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                x,
                y,
                mtry,
                min_leaf: config.min_leaf,
                max_depth: config.max_depth,
                nodes: Vec::new(),
            };
            b.grow(rows, 0, &mut rng);
            Tree { nodes: b.nodes, n_samples: n }
        })
        .collect();
    Ok(Forest {
        config: config.clone(),
        n_features: p,
        trees,
    })
}

/// Per-row average of the trees' leaf values.
pub fn predict(forest: &Forest, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != forest.n_features {
        return Err(Error::Shape(format!(
            "forest has {} features, input has {} columns",
            forest.n_features,
            x.ncols()
        )));
    }
    let t = forest.trees.len() as f64;
    Ok((0..x.nrows())
        .into_par_iter()
        .map(|i| forest.trees.iter().map(|tree| tree.predict_row(|j| x[(i, j)])).sum::<f64>() / t)
        .collect())
}

/// Mean decrease in impurity, normalized per tree, averaged over the trees
/// that split at least once.
pub fn importance(forest: &Forest) -> ImportanceReport {
    let p = forest.n_features;
    let per_tree: Vec<Vec<f64>> = forest
        .trees
        .iter()
        .filter_map(|t| {
            let raw = t.raw_importance(p);
            let total: f64 = raw.iter().sum();
            (total > 0.0).then(|| raw.iter().map(|v| v / total).collect())
        })
        .collect();
    if per_tree.is_empty() {
        return ImportanceReport {
            mean_importance: vec![0.0; p],
            std_importance: vec![0.0; p],
            rank: (1..=p).collect(),
            degenerate: true,
        };
    }
    let t = per_tree.len() as f64;
    let mean: Vec<f64> = (0..p).map(|j| per_tree.iter().map(|v| v[j]).sum::<f64>() / t).collect();
    let std: Vec<f64> = (0..p)
        .map(|j| {
            if per_tree.len() < 2 {
                return 0.0;
            }
            let ss: f64 = per_tree.iter().map(|v| (v[j] - mean[j]).powi(2)).sum();
            (ss / (t - 1.0)).sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
    let mut rank = vec![0; p];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r + 1;
    }
    ImportanceReport {
        mean_importance: mean,
        std_importance: std,
        rank,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_gives_single_leaves() {
        let x = DMatrix::from_fn(12, 2, |i, j| (i * (j + 1)) as f64);
        let y = vec![0.3; 12];
        let f = fit_forest(&x, &y, &ForestConfig { n_trees: 3, ..Default::default() }).unwrap();
        for t in &f.trees {
            assert_eq!(t.nodes.len(), 1);
            assert!(matches!(t.nodes[0], TreeNode::Leaf { value, .. } if (value - 0.3).abs() < 1e-15));
        }
        assert!(predict(&f, &x).unwrap().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let imp = importance(&f);
        assert!(imp.degenerate);
        assert!(imp.mean_importance.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_inputs_rejected() {
        let x = DMatrix::from_element(9, 1, 1.0);
        assert!(matches!(fit_forest(&x, &[0.0; 9], &ForestConfig::default()), Err(Error::InsufficientData(_))));
        let x = DMatrix::from_element(20, 2, 1.0);
        let cfg = ForestConfig { mtry: Some(3), ..Default::default() };
        assert!(fit_forest(&x, &[0.0; 20], &cfg).is_err());
    }

    #[test]
    fn default_mtry_is_a_third_rounded_up() {
        let c = ForestConfig::default();
        assert_eq!(c.resolved_mtry(500), 167);
        assert_eq!(c.resolved_mtry(3), 1);
        assert_eq!(c.resolved_mtry(1), 1);
    }

    #[test]
    fn shape_mismatch_on_predict() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i + j) as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let f = fit_forest(&x, &y, &ForestConfig { n_trees: 1, min_leaf: 1, ..Default::default() }).unwrap();
        assert!(matches!(predict(&f, &DMatrix::zeros(1, 3)), Err(Error::Shape(_))));
    }
}
