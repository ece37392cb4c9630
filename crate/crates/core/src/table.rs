//! The feature table passed between pipeline stages, plus its on-disk form.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Closed set of variable categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Repayment,
    School,
    Academics,
    Admission,
    Cost,
    Student,
    Completion,
    Aid,
    Earnings,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Repayment,
        Category::School,
        Category::Academics,
        Category::Admission,
        Category::Cost,
        Category::Student,
        Category::Completion,
        Category::Aid,
        Category::Earnings,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Repayment => "Repayment",
            Category::School => "School",
            Category::Academics => "Academics",
            Category::Admission => "Admission",
            Category::Cost => "Cost",
            Category::Student => "Student",
            Category::Completion => "Completion",
            Category::Aid => "Aid",
            Category::Earnings => "Earnings",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let trimmed = s.trim();
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.label().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| format!("unknown category label `{trimmed}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Numeric,
    Categorical,
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::Numeric => "numeric",
            Dtype::Categorical => "categorical",
        })
    }
}

impl FromStr for Dtype {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "numeric" => Ok(Dtype::Numeric),
            "categorical" => Ok(Dtype::Categorical),
            other => Err(format!("unknown dtype `{other}`")),
        }
    }
}

/// Per-column metadata. `encoding` is `Some` exactly when the column is
/// categorical; it lists level strings in code order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub category: Category,
    pub dtype: Dtype,
    pub encoding: Option<Vec<String>>,
}

impl FeatureMeta {
    pub fn numeric(name: impl Into<String>, category: Category) -> Self {
        FeatureMeta {
            name: name.into(),
            category,
            dtype: Dtype::Numeric,
            encoding: None,
        }
    }

    pub fn categorical(name: impl Into<String>, category: Category, levels: Vec<String>) -> Self {
        FeatureMeta {
            name: name.into(),
            category,
            dtype: Dtype::Categorical,
            encoding: Some(levels),
        }
    }

    /// Decode an integer code back to its level string.
    pub fn decode(&self, code: f64) -> Option<&str> {
        let levels = self.encoding.as_ref()?;
        if code < 0.0 || code.fract() != 0.0 {
            return None;
        }
        levels.get(code as usize).map(String::as_str)
    }
}

/// (institution id, year) identifying one panel row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub id: String,
    pub year: i32,
}

impl RowKey {
    pub fn new(id: impl Into<String>, year: i32) -> Self {
        RowKey {
            id: id.into(),
            year,
        }
    }
}

/// Dense n×p numeric matrix with a missing mask, column metadata and row keys.
///
/// Missing cells always hold `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    values: DMatrix<f64>,
    missing: DMatrix<bool>,
    metas: Vec<FeatureMeta>,
    row_keys: Vec<RowKey>,
}

impl FeatureTable {
    /// Builds a table, zero-filling every missing cell.
    pub fn new(
        mut values: DMatrix<f64>,
        missing: DMatrix<bool>,
        metas: Vec<FeatureMeta>,
        row_keys: Vec<RowKey>,
    ) -> Result<Self> {
        if values.shape() != missing.shape() {
            return Err(Error::Shape(format!(
                "values are {:?} but missing mask is {:?}",
                values.shape(),
                missing.shape()
            )));
        }
        if metas.len() != values.ncols() {
            return Err(Error::Shape(format!(
                "{} metas for {} columns",
                metas.len(),
                values.ncols()
            )));
        }
        if row_keys.len() != values.nrows() {
            return Err(Error::Shape(format!(
                "{} row keys for {} rows",
                row_keys.len(),
                values.nrows()
            )));
        }
        let mut names = HashSet::with_capacity(metas.len());
        for m in &metas {
            if !names.insert(m.name.as_str()) {
                return Err(Error::Duplicate(m.name.clone()));
            }
            if m.encoding.is_some() != (m.dtype == Dtype::Categorical) {
                return Err(Error::Schema(format!(
                    "`{}`: encoding must be present iff dtype is categorical",
                    m.name
                )));
            }
        }
        let mut keys = HashSet::with_capacity(row_keys.len());
        for k in &row_keys {
            if !keys.insert(k) {
                return Err(Error::Schema(format!(
                    "duplicate row key ({}, {})",
                    k.id, k.year
                )));
            }
        }
        for (v, &m) in values.iter_mut().zip(missing.iter()) {
            if m {
                *v = 0.0;
            }
        }
        Ok(FeatureTable {
            values,
            missing,
            metas,
            row_keys,
        })
    }

    /// A table with no missing cells.
    pub fn from_dense(values: DMatrix<f64>, metas: Vec<FeatureMeta>, row_keys: Vec<RowKey>) -> Result<Self> {
        let missing = DMatrix::from_element(values.nrows(), values.ncols(), false);
        Self::new(values, missing, metas, row_keys)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn missing(&self) -> &DMatrix<bool> {
        &self.missing
    }

    pub fn metas(&self) -> &[FeatureMeta] {
        &self.metas
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.row_keys
    }

    pub fn names(&self) -> Vec<&str> {
        self.metas.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.metas.iter().position(|m| m.name == name)
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let values = self.values.select_columns(cols);
        let missing = self.missing.select_columns(cols);
        let metas = cols.iter().map(|&j| self.metas[j].clone()).collect();
        Self::new(values, missing, metas, self.row_keys.clone())
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select_rows(rows);
        let missing = self.missing.select_rows(rows);
        let keys = rows.iter().map(|&i| self.row_keys[i].clone()).collect();
        Self::new(values, missing, self.metas.clone(), keys)
    }

    /// Rows reordered by ascending row key.
    pub fn sorted_by_key(&self) -> Self {
        let mut order: Vec<usize> = (0..self.n_rows()).collect();
        order.sort_by(|&a, &b| self.row_keys[a].cmp(&self.row_keys[b]));
        self.select_rows(&order)
            .expect("row permutation preserves invariants")
    }

    /// Writes the matrix as CSV (`institution_id,year,<features...>`, missing
    /// cells empty) and the metadata sidecar (`name,category,dtype,encoding`).
    pub fn write_csv(&self, matrix_path: &Path, meta_path: &Path) -> Result<()> {
        let mut w = io::csv_writer(matrix_path)?;
        let mut header = vec!["institution_id".to_string(), "year".to_string()];
        header.extend(self.metas.iter().map(|m| m.name.clone()));
        io::write_record(&mut w, matrix_path, &header)?;
        for (i, key) in self.row_keys.iter().enumerate() {
            let mut rec = Vec::with_capacity(self.n_cols() + 2);
            rec.push(key.id.clone());
            rec.push(key.year.to_string());
            for j in 0..self.n_cols() {
                if self.missing[(i, j)] {
                    rec.push(String::new());
                } else {
                    rec.push(io::fmt_f64(self.values[(i, j)]));
                }
            }
            io::write_record(&mut w, matrix_path, &rec)?;
        }
        io::flush(w, matrix_path)?;

        let mut w = io::csv_writer(meta_path)?;
        io::write_record(&mut w, meta_path, ["name", "category", "dtype", "encoding"])?;
        for m in &self.metas {
            let enc = m.encoding.as_ref().map(|e| e.join("|")).unwrap_or_default();
            io::write_record(
                &mut w,
                meta_path,
                &[m.name.clone(), m.category.to_string(), m.dtype.to_string(), enc],
            )?;
        }
        io::flush(w, meta_path)
    }

    /// Reads a table previously written by [`FeatureTable::write_csv`].
    pub fn read_csv(matrix_path: &Path, meta_path: &Path) -> Result<Self> {
        let mut metas = Vec::new();
        let mut rdr = io::csv_reader(meta_path)?;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| io::csv_err(meta_path, e))?;
            let get = |i: usize| rec.get(i).unwrap_or("").to_string();
            let category: Category = get(1)
                .parse()
                .map_err(|message| Error::Dictionary { row, message })?;
            let dtype: Dtype = get(2)
                .parse()
                .map_err(|message| Error::Dictionary { row, message })?;
            let encoding = match dtype {
                Dtype::Numeric => None,
                Dtype::Categorical => {
                    let raw = get(3);
                    Some(if raw.is_empty() {
                        Vec::new()
                    } else {
                        raw.split('|').map(str::to_string).collect()
                    })
                }
            };
            metas.push(FeatureMeta {
                name: get(0),
                category,
                dtype,
                encoding,
            });
        }

        let mut rdr = io::csv_reader(matrix_path)?;
        let header = rdr.headers().map_err(|e| io::csv_err(matrix_path, e))?.clone();
        let names: Vec<&str> = header.iter().skip(2).collect();
        if names.len() != metas.len() || names.iter().zip(&metas).any(|(a, m)| *a != m.name) {
            return Err(Error::Schema(format!(
                "{} header does not match {}",
                matrix_path.display(),
                meta_path.display()
            )));
        }
        let p = metas.len();
        let mut data = Vec::new();
        let mut miss = Vec::new();
        let mut keys = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| io::csv_err(matrix_path, e))?;
            if rec.len() != p + 2 {
                return Err(Error::RaggedRow {
                    path: matrix_path.into(),
                    row,
                    expected: p + 2,
                    found: rec.len(),
                });
            }
            let year = rec[1]
                .parse()
                .map_err(|_| Error::Schema(format!("row {row}: bad year `{}`", &rec[1])))?;
            keys.push(RowKey::new(&rec[0], year));
            for cell in rec.iter().skip(2) {
                if cell.is_empty() {
                    data.push(0.0);
                    miss.push(true);
                } else {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::Schema(format!("row {row}: bad number `{cell}`"))
                    })?;
                    data.push(v);
                    miss.push(false);
                }
            }
        }
        let n = keys.len();
        let values = DMatrix::from_row_slice(n, p, &data);
        let missing = DMatrix::from_row_slice(n, p, &miss);
        Self::new(values, missing, metas, keys)
    }
}
