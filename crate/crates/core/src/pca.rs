//! Principal component analysis fitted separately inside each feature
//! category, with a shared explained-variance cutoff.
//!
//! Columns are standardized (sample standard deviation) before the
//! decomposition, so each category's spectrum is that of its correlation
//! matrix. The decomposition is a thin SVD of the standardized block; the
//! explained-variance ratio of component `i` is `s_i² / Σ s²`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Category, FeatureTable};

pub const DEFAULT_CUTOFF: f64 = 0.8;

/// Standard deviations at or below this are treated as constant columns.
pub const SCALE_FLOOR: f64 = 1e-12;

/// Slack when comparing a cumulative ratio with the cutoff.
const CUTOFF_SLACK: f64 = 1e-12;

/// Order in which category blocks are concatenated.
pub const CATEGORY_ORDER: [Category; 9] = [
    Category::School,
    Category::Admission,
    Category::Academics,
    Category::Student,
    Category::Cost,
    Category::Aid,
    Category::Completion,
    Category::Earnings,
    Category::Repayment,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryPca {
    pub category: Category,
    /// Column positions of this category's features in the training table.
    pub feature_indices: Vec<usize>,
    pub means: Vec<f64>,
    /// Sample standard deviations, floored at [`SCALE_FLOOR`].
    pub scales: Vec<f64>,
    /// p_k × m_k, orthonormal columns.
    pub loadings: DMatrix<f64>,
    pub explained_ratio: Vec<f64>,
}

impl CategoryPca {
    pub fn n_components(&self) -> usize {
        self.loadings.ncols()
    }

    fn standardize(&self, values: &DMatrix<f64>) -> DMatrix<f64> {
        let n = values.nrows();
        DMatrix::from_fn(n, self.feature_indices.len(), |i, k| {
            let s = self.scales[k];
            if s <= SCALE_FLOOR {
                0.0
            } else {
                (values[(i, self.feature_indices[k])] - self.means[k]) / s
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedPcaModel {
    pub cutoff: f64,
    /// Training schema; [`GroupedPcaModel::transform`] requires an exact match.
    pub feature_names: Vec<String>,
    pub parts: Vec<CategoryPca>,
    pub component_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeRow {
    pub index: usize,
    pub ratio: f64,
    pub cumulative: f64,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScree {
    pub category: Category,
    pub rows: Vec<ScreeRow>,
}

/// Full explained-variance spectrum per category, independent of the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeData {
    pub categories: Vec<CategoryScree>,
}

/// A category's complete decomposition before truncation.
#[derive(Debug, Clone)]
struct Spectrum {
    category: Category,
    feature_indices: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
    loadings: DMatrix<f64>,
    ratios: Vec<f64>,
}

impl Spectrum {
    fn fit(category: Category, feature_indices: Vec<usize>, values: &DMatrix<f64>) -> Self {
        let n = values.nrows();
        let pk = feature_indices.len();
        let mut means = Vec::with_capacity(pk);
        let mut scales = Vec::with_capacity(pk);
        for &j in &feature_indices {
            let col = values.column(j);
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
            means.push(m);
            scales.push(var.sqrt().max(SCALE_FLOOR));
        }
        let mut part = CategoryPca {
            category,
            feature_indices,
            means,
            scales,
            loadings: DMatrix::zeros(pk, 0),
            explained_ratio: Vec::new(),
        };
        let z = part.standardize(values);
        let svd = z.svd(false, true);
        let vt = svd.v_t.expect("v_t requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

        let energy: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
        let total: f64 = energy.iter().sum();
        let ratios = if total > 0.0 {
            energy.iter().map(|e| e / total).collect()
        } else {
            vec![0.0; energy.len()]
        };

        let mut loadings = DMatrix::zeros(pk, order.len());
        for (c, &i) in order.iter().enumerate() {
            let row = vt.row(i);
            let mut pivot = 0;
            for k in 1..pk {
                if row[k].abs() > row[pivot].abs() {
                    pivot = k;
                }
            }
            let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
            for k in 0..pk {
                loadings[(k, c)] = sign * row[k];
            }
        }
        part.loadings = loadings;
        Spectrum {
            category: part.category,
            feature_indices: part.feature_indices,
            means: part.means,
            scales: part.scales,
            loadings: part.loadings,
            ratios,
        }
    }

    fn cumulative(&self) -> Vec<f64> {
        self.ratios
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }

    /// Smallest count whose cumulative ratio reaches the cutoff.
    fn retained(&self, cutoff: f64) -> usize {
        if self.ratios.iter().all(|&r| r == 0.0) {
            return 0;
        }
        let cum = self.cumulative();
        cum.iter()
            .position(|&c| c >= cutoff - CUTOFF_SLACK)
            .map_or(cum.len(), |i| i + 1)
    }

    fn truncated(&self, cutoff: f64) -> CategoryPca {
        let m = self.retained(cutoff);
        CategoryPca {
            category: self.category,
            feature_indices: self.feature_indices.clone(),
            means: self.means.clone(),
            scales: self.scales.clone(),
            loadings: self.loadings.columns(0, m).into_owned(),
            explained_ratio: self.ratios[..m].to_vec(),
        }
    }
}

/// Full per-category decompositions of one training table. Truncating at
/// several cutoffs reuses the same decomposition.
#[derive(Debug, Clone)]
pub struct GroupedPcaFit {
    feature_names: Vec<String>,
    spectra: Vec<Spectrum>,
}

impl GroupedPcaFit {
    pub fn new(table: &FeatureTable) -> Result<Self> {
        if table.n_rows() < 2 {
            return Err(Error::InsufficientData(format!(
                "PCA needs at least 2 rows, got {}",
                table.n_rows()
            )));
        }
        let groups: Vec<(Category, Vec<usize>)> = CATEGORY_ORDER
            .iter()
            .map(|&c| {
                let idx = table
                    .metas()
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m.category == c)
                    .map(|(j, _)| j)
                    .collect::<Vec<_>>();
                (c, idx)
            })
            .filter(|(_, idx)| !idx.is_empty())
            .collect();
        let spectra = groups
            .into_par_iter()
            .map(|(c, idx)| Spectrum::fit(c, idx, table.values()))
            .collect();
        Ok(GroupedPcaFit {
            feature_names: table.names().iter().map(|s| s.to_string()).collect(),
            spectra,
        })
    }

    pub fn model(&self, cutoff: f64) -> Result<GroupedPcaModel> {
        check_cutoff(cutoff)?;
        let parts: Vec<CategoryPca> = self.spectra.iter().map(|s| s.truncated(cutoff)).collect();
        let component_names = parts
            .iter()
            .flat_map(|p| (1..=p.n_components()).map(move |i| format!("{}_PC{i}", p.category)))
            .collect();
        Ok(GroupedPcaModel {
            cutoff,
            feature_names: self.feature_names.clone(),
            parts,
            component_names,
        })
    }

    pub fn scree(&self, cutoff: f64) -> ScreeData {
        ScreeData {
            categories: self
                .spectra
                .iter()
                .map(|s| {
                    let m = s.retained(cutoff);
                    CategoryScree {
                        category: s.category,
                        rows: s
                            .ratios
                            .iter()
                            .zip(s.cumulative())
                            .enumerate()
                            .map(|(i, (&ratio, cumulative))| ScreeRow {
                                index: i + 1,
                                ratio,
                                cumulative,
                                retained: i < m,
                            })
                            .collect(),
                    }
                })
                .collect(),
        }
    }
}

fn check_cutoff(c: f64) -> Result<()> {
    if c > 0.0 && c <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("PCA cutoff {c} outside (0, 1]")))
    }
}

/// Fits per-category PCA and truncates each category at cutoff `c`.
pub fn fit_grouped_pca(table: &FeatureTable, c: f64) -> Result<(GroupedPcaModel, ScreeData)> {
    check_cutoff(c)?;
    let fit = GroupedPcaFit::new(table)?;
    Ok((fit.model(c)?, fit.scree(c)))
}

impl GroupedPcaModel {
    pub fn width(&self) -> usize {
        self.component_names.len()
    }

    fn check_schema(&self, table: &FeatureTable) -> Result<()> {
        let names = table.names();
        for (k, expected) in self.feature_names.iter().enumerate() {
            match names.get(k) {
                Some(&got) if got == expected => {}
                Some(&got) => {
                    return Err(Error::Schema(format!(
                        "feature {k}: expected `{expected}`, found `{got}`"
                    )))
                }
                None => return Err(Error::Schema(format!("missing feature `{expected}`"))),
            }
        }
        if names.len() > self.feature_names.len() {
            return Err(Error::Schema(format!(
                "unexpected feature `{}`",
                names[self.feature_names.len()]
            )));
        }
        Ok(())
    }

    /// Standardized blocks, one per part.
    pub fn standardize(&self, table: &FeatureTable) -> Result<Vec<DMatrix<f64>>> {
        self.check_schema(table)?;
        Ok(self.parts.iter().map(|p| p.standardize(table.values())).collect())
    }

    /// Projects a table onto the retained components (n × Σm_k).
    pub fn transform(&self, table: &FeatureTable) -> Result<DMatrix<f64>> {
        let blocks = self.standardize(table)?;
        let mut out = DMatrix::zeros(table.n_rows(), self.width());
        let mut offset = 0;
        for (part, z) in self.parts.iter().zip(&blocks) {
            let m = part.n_components();
            out.columns_mut(offset, m).copy_from(&(z * &part.loadings));
            offset += m;
        }
        Ok(out)
    }

    /// Maps component scores back to standardized blocks.
    pub fn reconstruct(&self, components: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        if components.ncols() != self.width() {
            return Err(Error::Shape(format!(
                "expected {} component columns, got {}",
                self.width(),
                components.ncols()
            )));
        }
        let mut offset = 0;
        Ok(self
            .parts
            .iter()
            .map(|p| {
                let m = p.n_components();
                let block = components.columns(offset, m) * p.loadings.transpose();
                offset += m;
                block
            })
            .collect())
    }
}

/// CSV rows `(category, index, ratio, cumulative, retained)`.
pub fn scree_export(data: &ScreeData) -> Vec<Vec<String>> {
    data.categories
        .iter()
        .flat_map(|c| {
            c.rows.iter().map(move |r| {
                vec![
                    c.category.to_string(),
                    r.index.to_string(),
                    crate::io::fmt_f64(r.ratio),
                    crate::io::fmt_f64(r.cumulative),
                    r.retained.to_string(),
                ]
            })
        })
        .collect()
}

pub const SCREE_HEADER: [&str; 5] = ["category", "index", "ratio", "cumulative", "retained"];
