//! Synthetic panels with a planted sparse logit-linear repayment model.
//!
//! Used by the end-to-end tests and for the bundled fixture; the generator
//! records its own ground truth.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, fmt_f64};
use crate::linreg::inverse_logit_scalar;
use crate::table::{Category, FeatureMeta, FeatureTable, RowKey};

pub const TARGET_NAME: &str = "RPY_1YR_RT";

/// The eight predictor categories, in generation order.
pub const PREDICTOR_CATEGORIES: [Category; 8] = [
    Category::School,
    Category::Admission,
    Category::Academics,
    Category::Student,
    Category::Cost,
    Category::Aid,
    Category::Completion,
    Category::Earnings,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub n_features: usize,
    pub n_true: usize,
    /// Standard deviation of the log-odds noise.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_rows: 2000,
            n_features: 120,
            n_true: 10,
            noise_sd: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    /// Predictors plus the target column (category Repayment), no missing cells.
    pub table: FeatureTable,
    pub true_features: Vec<String>,
    pub true_coefficients: Vec<f64>,
    pub intercept: f64,
}

fn feature_name(j: usize) -> String {
    let cat = PREDICTOR_CATEGORIES[j % PREDICTOR_CATEGORIES.len()];
    format!("{}_{j:03}", cat.label().to_uppercase())
}

/// Features share a per-category latent factor; true features have a larger
/// scale than most nuisance ones so the variance screen keeps them.
pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    let (n, p) = (spec.n_rows, spec.n_features);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = index::sample(&mut rng, p, spec.n_true.min(p)).into_vec();
    truth.sort_unstable();
    let coefs: Vec<f64> = truth
        .iter()
        .map(|_| {
            let m = rng.random_range(0.15..0.30);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    let scales: Vec<f64> = (0..p)
        .map(|j| if truth.contains(&j) { 1.5 } else { rng.random_range(0.5..2.0) })
        .collect();
    let intercept = 0.4;

    let mut values = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        let factors: Vec<f64> = (0..PREDICTOR_CATEGORIES.len()).map(|_| rng.sample(StandardNormal)).collect();
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            values[(i, j)] = scales[j] * (0.6 * factors[j % factors.len()] + 0.8 * z);
        }
        let noise: f64 = rng.sample(StandardNormal);
        let eta = intercept + truth.iter().zip(&coefs).map(|(&j, b)| b * values[(i, j)]).sum::<f64>() + spec.noise_sd * noise;
        values[(i, p)] = inverse_logit_scalar(eta);
    }
    let mut metas: Vec<FeatureMeta> = (0..p)
        .map(|j| FeatureMeta::numeric(feature_name(j), PREDICTOR_CATEGORIES[j % PREDICTOR_CATEGORIES.len()]))
        .collect();
    metas.push(FeatureMeta::numeric(TARGET_NAME, Category::Repayment));
    let keys = (0..n).map(|i| RowKey::new(format!("{}", 100_000 + i), 2010)).collect();
    Ok(Synthetic {
        table: FeatureTable::from_dense(values, metas, keys)?,
        true_features: truth.iter().map(|&j| feature_name(j)).collect(),
        true_coefficients: coefs,
        intercept,
    })
}

/// Expected stage counts for a fixture written by [`write_fixture`] and run
/// with default settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub years: Vec<i32>,
    pub dictionary_entries: usize,
    pub ingested_rows: usize,
    /// Includes the target column.
    pub ingested_features: usize,
    pub screened_rows: usize,
    pub variance_survivors: usize,
    pub screened_features: usize,
    pub true_features: Vec<String>,
}

const SPARSE_COLUMNS: usize = 3;
const YEARS: [i32; 2] = [2012, 2013];

/// Writes a raw-panel fixture to `dir`: `dictionary.csv`, one
/// `MERGED<year>.csv` per year and `truth.json`.
///
/// On top of the generated panel it plants a categorical column, a text
/// column, columns that are 90% suppressed and rows whose target is `NULL`.
pub fn write_fixture(dir: &Path, spec: &SynthSpec, top_count: usize, variance_drop: f64) -> Result<FixtureTruth> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let synth = generate(spec)?;
    let (n, p) = (spec.n_rows, spec.n_features);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);

    let mut dict = vec![
        vec!["INSTNM".to_string(), "School".into(), "numeric".into()],
        vec!["CONTROL".to_string(), "School".into(), "categorical".into()],
    ];
    for m in synth.table.metas() {
        dict.push(vec![m.name.clone(), m.category.label().to_string(), "numeric".into()]);
    }
    for s in 0..SPARSE_COLUMNS {
        dict.push(vec![format!("SPARSE_{s}"), "Aid".into(), "numeric".into()]);
    }
    io::write_rows(&dir.join("dictionary.csv"), &["name", "category", "dtype"], &dict)?;

    let mut header = vec!["UNITID".to_string(), "INSTNM".into(), "CONTROL".into()];
    header.extend(synth.table.names().iter().map(|s| s.to_string()));
    header.extend((0..SPARSE_COLUMNS).map(|s| format!("SPARSE_{s}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();

    let null_target = n / 50;
    let mut per_year: Vec<Vec<Vec<String>>> = vec![Vec::new(); YEARS.len()];
    for i in 0..n {
        let y = i % YEARS.len();
        let mut row = vec![
            format!("{}", 100_000 + i / YEARS.len()),
            format!("College {i}"),
            if rng.random_bool(0.6) { "Public" } else { "Private" }.to_string(),
        ];
        for j in 0..p {
            row.push(fmt_f64(synth.table.values()[(i, j)]));
        }
        row.push(if i < null_target { "NULL".into() } else { fmt_f64(synth.table.values()[(i, p)]) });
        for _ in 0..SPARSE_COLUMNS {
            row.push(if rng.random_bool(0.9) { "PrivacySuppressed".into() } else { fmt_f64(rng.random()) });
        }
        per_year[y].push(row);
    }
    for (y, rows) in YEARS.iter().zip(&per_year) {
        io::write_rows(&dir.join(format!("MERGED{y}.csv")), &header_refs, rows)?;
    }

    // CONTROL plus p numeric predictors reach the screen
    let predictors = p + 1;
    let variance_survivors = predictors - (variance_drop * predictors as f64 + 1e-9).floor() as usize;
    let truth = FixtureTruth {
        years: YEARS.to_vec(),
        dictionary_entries: dict.len(),
        ingested_rows: n,
        ingested_features: p + 2,
        screened_rows: n - null_target,
        variance_survivors,
        screened_features: variance_survivors.min(top_count),
        true_features: synth.true_features,
    };
    io::write_json(&dir.join("truth.json"), &truth)?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic_and_bounded() {
        let spec = SynthSpec { n_rows: 50, n_features: 16, n_true: 4, ..Default::default() };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.table.values(), b.table.values());
        assert_eq!(a.true_features.len(), 4);
        let target = a.table.values().column(16);
        assert!(target.iter().all(|&r| r > 0.0 && r < 1.0));
        assert_eq!(a.table.n_cols(), 17);
    }

    #[test]
    fn names_carry_category() {
        assert_eq!(feature_name(0), "SCHOOL_000");
        assert_eq!(feature_name(12), "COST_012");
    }
}
