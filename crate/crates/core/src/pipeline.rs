//! Run configuration, per-stage artifact writers and the end-to-end run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::enet::{self, EnetConfig, EnetModel};
use crate::error::{Error, Result};
use crate::evaluate::{self, CvReport, CvTarget, Recipe};
use crate::forest::{self, Forest, ForestConfig, ImportanceReport};
use crate::io::{self, fmt_f64};
use crate::linreg::{self, LinearModel, TransformedTarget};
use crate::pca::{self, GroupedPcaModel};
use crate::screening::{self, Screened, ScreeningConfig};
use crate::table::{Category, FeatureTable};
use crate::ingest;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Keys accepted in a config file.
pub const CONFIG_KEYS: [&str; 23] = [
    "inputs",
    "dictionary",
    "id_column",
    "target_name",
    "missing_threshold",
    "variance_drop",
    "top_count",
    "pca_cutoff",
    "alpha_grid",
    "gamma",
    "path_length",
    "enet_tolerance",
    "enet_max_iters",
    "trees",
    "mtry",
    "min_leaf",
    "max_depth",
    "folds",
    "seed",
    "epsilon",
    "curve_cutoffs",
    "heatmap_k",
    "summaries",
];

/// Everything that determines a run, given fixed input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// `YEAR:PATH` entries, one per yearly CSV.
    pub inputs: Vec<String>,
    pub dictionary: Option<PathBuf>,
    pub id_column: String,
    pub target_name: String,
    pub missing_threshold: f64,
    pub variance_drop: f64,
    pub top_count: usize,
    pub pca_cutoff: f64,
    pub alpha_grid: Vec<f64>,
    pub gamma: f64,
    pub path_length: usize,
    pub enet_tolerance: f64,
    pub enet_max_iters: usize,
    pub trees: usize,
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub folds: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub curve_cutoffs: Vec<f64>,
    pub heatmap_k: usize,
    /// Variables for the quantile summaries; empty means every Repayment column.
    pub summaries: Vec<String>,
    /// Not read from the config file; set by `--out`.
    #[serde(skip_deserializing)]
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            dictionary: None,
            id_column: ingest::DEFAULT_ID_COLUMN.into(),
            target_name: "RPY_1YR_RT".into(),
            missing_threshold: ingest::DEFAULT_MISSING_THRESHOLD,
            variance_drop: screening::DEFAULT_VARIANCE_DROP,
            top_count: screening::DEFAULT_TOP_COUNT,
            pca_cutoff: pca::DEFAULT_CUTOFF,
            alpha_grid: enet::DEFAULT_ALPHA_GRID.to_vec(),
            gamma: enet::DEFAULT_GAMMA,
            path_length: enet::DEFAULT_PATH_LENGTH,
            enet_tolerance: enet::DEFAULT_TOLERANCE,
            enet_max_iters: enet::DEFAULT_MAX_ITERS,
            trees: forest::DEFAULT_TREES,
            mtry: None,
            min_leaf: forest::DEFAULT_MIN_LEAF,
            max_depth: None,
            folds: evaluate::DEFAULT_FOLDS,
            seed: evaluate::DEFAULT_SEED,
            epsilon: linreg::DEFAULT_EPSILON,
            curve_cutoffs: evaluate::DEFAULT_CURVE_CUTOFFS.to_vec(),
            heatmap_k: screening::DEFAULT_HEATMAP_K,
            summaries: Vec::new(),
            out_dir: PathBuf::from("repayfactor-out"),
        }
    }
}

fn unit_open(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

impl RunConfig {
    /// Every bound violation, each prefixed with its key.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |ok: bool, key: &str, msg: String| {
            if !ok {
                v.push(format!("{key}: {msg}"));
            }
        };
        for s in &self.inputs {
            check(parse_input(s).is_ok(), "inputs", format!("`{s}` is not YEAR:PATH"));
        }
        check(!self.id_column.is_empty(), "id_column", "must not be empty".into());
        check(!self.target_name.is_empty(), "target_name", "must not be empty".into());
        check(
            (0.0..=1.0).contains(&self.missing_threshold),
            "missing_threshold",
            format!("{} outside [0, 1]", self.missing_threshold),
        );
        check(
            (0.0..1.0).contains(&self.variance_drop),
            "variance_drop",
            format!("{} outside [0, 1)", self.variance_drop),
        );
        check(self.top_count >= 1, "top_count", "must be at least 1".into());
        check(
            self.pca_cutoff > 0.0 && self.pca_cutoff <= 1.0,
            "pca_cutoff",
            format!("{} outside (0, 1]", self.pca_cutoff),
        );
        check(
            !self.alpha_grid.is_empty() && self.alpha_grid.iter().all(|&a| a > 0.0 && a <= 1.0),
            "alpha_grid",
            "needs at least one value, each in (0, 1]".into(),
        );
        check(unit_open(self.gamma), "gamma", format!("{} outside (0, 1)", self.gamma));
        check(self.path_length >= 1, "path_length", "must be at least 1".into());
        check(self.enet_tolerance > 0.0, "enet_tolerance", "must be positive".into());
        check(self.enet_max_iters >= 1, "enet_max_iters", "must be at least 1".into());
        check(self.trees >= 1, "trees", "must be at least 1".into());
        check(self.mtry.is_none_or(|m| m >= 1), "mtry", "must be at least 1".into());
        check(self.min_leaf >= 1, "min_leaf", "must be at least 1".into());
        check(self.max_depth.is_none_or(|d| d >= 1), "max_depth", "must be at least 1".into());
        check(self.folds >= 2, "folds", format!("{} is fewer than 2", self.folds));
        check(
            self.epsilon > 0.0 && self.epsilon < 0.5,
            "epsilon",
            format!("{} outside (0, 0.5)", self.epsilon),
        );
        check(
            self.curve_cutoffs.iter().all(|&c| c > 0.0 && c <= 1.0),
            "curve_cutoffs",
            "each value must lie in (0, 1]".into(),
        );
        check(self.heatmap_k >= 1, "heatmap_k", "must be at least 1".into());
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() { Ok(()) } else { Err(Error::ConfigInvalid(v)) }
    }

    pub fn parsed_inputs(&self) -> Result<Vec<(i32, PathBuf)>> {
        self.inputs.iter().map(|s| parse_input(s)).collect()
    }

    pub fn screening(&self) -> ScreeningConfig {
        ScreeningConfig {
            variance_drop_fraction: self.variance_drop,
            top_count: self.top_count,
            target_name: self.target_name.clone(),
        }
    }

    pub fn enet(&self) -> EnetConfig {
        EnetConfig {
            alpha_grid: self.alpha_grid.clone(),
            gamma: self.gamma,
            path_length: self.path_length,
            tolerance: self.enet_tolerance,
            max_iters: self.enet_max_iters,
        }
    }

    pub fn forest(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.trees,
            mtry: self.mtry,
            min_leaf: self.min_leaf,
            max_depth: self.max_depth,
            bootstrap: true,
            seed: derive_seed(self.seed, "forest"),
        }
    }
}

/// Splits `YEAR:PATH`.
pub fn parse_input(s: &str) -> Result<(i32, PathBuf)> {
    let (year, path) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("`{s}` is not YEAR:PATH")))?;
    let year: i32 = year
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad year in `{s}`")))?;
    if path.is_empty() {
        return Err(Error::InvalidArgument(format!("empty path in `{s}`")));
    }
    Ok((year, PathBuf::from(path)))
}

/// Seed for a named stage, fixed by the global seed.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Parses flat TOML config text. Absent keys take defaults; unknown keys and
/// out-of-range values are all reported together.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
    let mut violations: Vec<String> = table
        .keys()
        .filter(|k| !CONFIG_KEYS.contains(&k.as_str()))
        .map(|k| format!("{k}: unknown key"))
        .collect();
    table.retain(|k, _| CONFIG_KEYS.contains(&k));
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
    violations.extend(cfg.violations());
    if violations.is_empty() { Ok(cfg) } else { Err(Error::ConfigInvalid(violations)) }
}

/// Reads and validates a config file. Relative input and dictionary paths
/// are resolved against the file's directory.
pub fn validate_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    cfg.inputs = cfg
        .parsed_inputs()?
        .into_iter()
        .map(|(y, p)| format!("{y}:{}", base.join(p).display()))
        .collect();
    cfg.dictionary = cfg.dictionary.map(|d| base.join(d));
    Ok(cfg)
}

/// Collects the files a stage writes.
#[derive(Debug)]
pub struct Sink {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Paths relative to the output directory, in write order.
    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn record(&mut self, name: &str) -> PathBuf {
        let rel = PathBuf::from(name);
        if !self.written.contains(&rel) {
            self.written.push(rel);
        }
        self.dir.join(name)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.record(name);
        io::write_rows(&path, header, rows)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.record(name);
        io::write_json(&path, value)
    }

    pub fn table(&mut self, stem: &str, table: &FeatureTable) -> Result<()> {
        let matrix = self.record(&format!("{stem}.csv"));
        let meta = self.record(&format!("{stem}_meta.csv"));
        table.write_csv(&matrix, &meta)
    }
}

/// Dictionary, yearly CSVs, merge, missingness filter.
pub fn ingest(cfg: &RunConfig) -> Result<FeatureTable> {
    let dict_path = cfg
        .dictionary
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("no dictionary configured".into()))?;
    let inputs = cfg.parsed_inputs()?;
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("no input CSVs configured".into()));
    }
    let dictionary = ingest::load_dictionary(dict_path)?;
    let raw = ingest::load_many(&inputs)?;
    let merged = ingest::merge_years(&raw, &dictionary, &cfg.id_column)?;
    ingest::filter_missing(&merged, cfg.missing_threshold)
}

/// Screened predictors with the logit-transformed target.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub screened: Screened,
    pub target: TransformedTarget,
}

impl Prepared {
    pub fn predictors(&self) -> &FeatureTable {
        &self.screened.predictors
    }

    pub fn cv_target(&self) -> CvTarget {
        CvTarget::from(&self.target)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.predictors().names().iter().map(|s| s.to_string()).collect()
    }
}

pub fn prepare(cfg: &RunConfig, table: &FeatureTable) -> Result<Prepared> {
    let screened = screening::screen(table, &cfg.screening())?;
    let target = linreg::logit_transform(&screened.target.values, cfg.epsilon)?;
    Ok(Prepared { screened, target })
}

fn category_of(table: &FeatureTable, name: &str) -> String {
    table
        .column_index(name)
        .map(|j| table.metas()[j].category.label().to_string())
        .unwrap_or_default()
}

pub fn emit_ingest(sink: &mut Sink, table: &FeatureTable) -> Result<()> {
    sink.table("table", table)
}

/// Screen report, quantile summaries, heatmap and the screened table.
pub fn emit_screen(sink: &mut Sink, cfg: &RunConfig, ingested: &FeatureTable, prep: &Prepared) -> Result<()> {
    sink.json("screen_report.json", &prep.screened.report)?;

    let names: Vec<String> = if cfg.summaries.is_empty() {
        ingested
            .metas()
            .iter()
            .filter(|m| m.category == Category::Repayment)
            .map(|m| m.name.clone())
            .collect()
    } else {
        cfg.summaries.clone()
    };
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let summaries = screening::summarize_rates(ingested, &refs)?;
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            let mut row = vec![s.name.clone()];
            match &s.stats {
                Some(f) => row.extend([f.min, f.q1, f.median, f.q3, f.max].map(fmt_f64)),
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
            row
        })
        .collect();
    sink.csv("summaries.csv", &["name", "min", "q1", "median", "q3", "max"], &rows)?;

    let predictors = prep.predictors();
    let k = cfg.heatmap_k.min(predictors.n_cols());
    let heat = screening::correlation_heatmap(predictors, &prep.screened.target, k)?;
    let mut header = vec!["feature"];
    header.extend(heat.names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = heat
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut row = vec![n.clone()];
            row.extend((0..heat.names.len()).map(|j| fmt_f64(heat.matrix[(i, j)])));
            row
        })
        .collect();
    sink.csv("heatmap.csv", &header, &rows)?;

    let t = &prep.screened.target;
    let rows: Vec<Vec<String>> = t
        .row_keys
        .iter()
        .zip(&t.values)
        .zip(&prep.target.transformed)
        .map(|((k, v), l)| vec![k.id.clone(), k.year.to_string(), fmt_f64(*v), fmt_f64(*l)])
        .collect();
    sink.csv("target.csv", &["institution_id", "year", "rate", "logit"], &rows)?;
    sink.table("screened", predictors)
}

/// Scree data, component scores and the fitted decomposition.
pub fn emit_pca(sink: &mut Sink, cfg: &RunConfig, prep: &Prepared) -> Result<(GroupedPcaModel, DMatrix<f64>)> {
    let (model, scree) = pca::fit_grouped_pca(prep.predictors(), cfg.pca_cutoff)?;
    sink.csv("scree.csv", &pca::SCREE_HEADER, &pca::scree_export(&scree))?;
    let comps = model.transform(prep.predictors())?;
    let mut header = vec!["institution_id", "year"];
    header.extend(model.component_names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = prep
        .predictors()
        .row_keys()
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let mut row = vec![k.id.clone(), k.year.to_string()];
            row.extend(comps.row(i).iter().map(|&v| fmt_f64(v)));
            row
        })
        .collect();
    sink.csv("components.csv", &header, &rows)?;
    sink.json("pca_model.json", &model)?;
    Ok((model, comps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsMetrics {
    pub n_obs: usize,
    pub n_components: usize,
    pub r_squared: f64,
    /// In-sample, rate scale.
    pub rmse_train: f64,
    pub rmse_cv: f64,
}

pub fn emit_ols(sink: &mut Sink, cfg: &RunConfig, prep: &Prepared, pca: &GroupedPcaModel, comps: &DMatrix<f64>) -> Result<(LinearModel, CvReport)> {
    let ols = linreg::fit_ols_named(comps, &prep.target.transformed, &pca.component_names)?;
    let mut rows = Vec::with_capacity(ols.names.len() + 1);
    let names = std::iter::once("intercept").chain(ols.names.iter().map(String::as_str));
    let estimates = std::iter::once(ols.intercept).chain(ols.coefficients.iter().copied());
    for (j, (name, est)) in names.zip(estimates).enumerate() {
        rows.push(vec![
            name.to_string(),
            fmt_f64(est),
            fmt_f64(ols.std_errors[j]),
            fmt_f64(ols.t_stats[j]),
            fmt_f64(ols.p_values[j]),
        ]);
    }
    sink.csv("ols_coefficients.csv", &["name", "estimate", "std_error", "t", "p"], &rows)?;

    let report = evaluate::cross_validate(
        &Recipe::PcaOls { cutoff: cfg.pca_cutoff },
        prep.predictors(),
        &prep.cv_target(),
        cfg.folds,
        cfg.seed,
    )?;
    let fitted = linreg::predict_rates(&ols, comps)?;
    let metrics = OlsMetrics {
        n_obs: ols.n_obs,
        n_components: ols.n_features(),
        r_squared: ols.r_squared,
        rmse_train: evaluate::rmse(&fitted, &prep.target.raw_rates)?,
        rmse_cv: report.mean_rmse,
    };
    sink.json("ols_metrics.json", &metrics)?;
    Ok((ols, report))
}

/// Tuned model, its solution path, the active-set table and a CV report at
/// the selected (α, λ).
pub fn emit_enet(sink: &mut Sink, cfg: &RunConfig, prep: &Prepared) -> Result<(EnetModel, CvReport)> {
    let x = prep.predictors().values();
    let names = prep.feature_names();
    let target = prep.cv_target();
    let config = cfg.enet();
    let model = enet::tune(x, &target, &config, cfg.folds, cfg.seed, &names)?;

    let path = enet::fit_path(x, &prep.target.transformed, &config, model.alpha)?;
    let mut rows = Vec::with_capacity(path.lambdas.len() * names.len());
    for (k, &l) in path.lambdas.iter().enumerate() {
        for (j, name) in names.iter().enumerate() {
            rows.push(vec![fmt_f64(l), name.clone(), fmt_f64(path.coefficients[(j, k)])]);
        }
    }
    sink.csv("enet_path.csv", &["lambda", "feature", "coefficient"], &rows)?;
    sink.json("enet_model.json", &model)?;

    let rows: Vec<Vec<String>> = names
        .iter()
        .zip(&model.coefficients)
        .filter(|(_, &c)| c != 0.0)
        .map(|(n, &c)| vec![n.clone(), category_of(prep.predictors(), n), fmt_f64(c)])
        .collect();
    sink.csv("enet_active.csv", &["feature", "category", "coefficient"], &rows)?;

    let recipe = Recipe::Enet {
        config,
        alpha: model.alpha,
        lambda: model.lambda,
    };
    let report = evaluate::cross_validate(&recipe, prep.predictors(), &target, cfg.folds, cfg.seed)?;
    Ok((model, report))
}

pub fn emit_forest(sink: &mut Sink, cfg: &RunConfig, prep: &Prepared) -> Result<(Forest, ImportanceReport, CvReport)> {
    let config = cfg.forest();
    let forest = forest::fit_forest(prep.predictors().values(), &prep.target.transformed, &config)?;
    let imp = forest::importance(&forest);
    let names = prep.feature_names();
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by_key(|&j| imp.rank[j]);
    let rows: Vec<Vec<String>> = order
        .iter()
        .map(|&j| {
            vec![
                names[j].clone(),
                category_of(prep.predictors(), &names[j]),
                fmt_f64(imp.mean_importance[j]),
                fmt_f64(imp.std_importance[j]),
                imp.rank[j].to_string(),
            ]
        })
        .collect();
    sink.csv("rf_importance.csv", &["feature", "category", "mean", "std", "rank"], &rows)?;
    let report = evaluate::cross_validate(&Recipe::Forest { config }, prep.predictors(), &prep.cv_target(), cfg.folds, cfg.seed)?;
    Ok((forest, imp, report))
}

/// Cross-validated report for one model tag (`pca-ols`, `enet`, `rf`). The
/// elastic net is tuned first and then scored at its selected (α, λ).
pub fn cv_report(cfg: &RunConfig, prep: &Prepared, tag: &str) -> Result<CvReport> {
    let recipe = match tag {
        "pca-ols" => Recipe::PcaOls { cutoff: cfg.pca_cutoff },
        "enet" => {
            let config = cfg.enet();
            let model = enet::tune(prep.predictors().values(), &prep.cv_target(), &config, cfg.folds, cfg.seed, &prep.feature_names())?;
            Recipe::Enet {
                config,
                alpha: model.alpha,
                lambda: model.lambda,
            }
        }
        "rf" => Recipe::Forest { config: cfg.forest() },
        other => return Err(Error::InvalidArgument(format!("unknown model `{other}`"))),
    };
    evaluate::cross_validate(&recipe, prep.predictors(), &prep.cv_target(), cfg.folds, cfg.seed)
}

/// CV reports, the comparison table and (optionally) the validation curve.
pub fn emit_evaluate(sink: &mut Sink, cfg: &RunConfig, prep: &Prepared, reports: &[CvReport], curve: bool) -> Result<()> {
    sink.json("cv_reports.json", &reports)?;
    let rows: Vec<Vec<String>> = evaluate::compare_models(reports)
        .into_iter()
        .map(|r| vec![r.model_tag, fmt_f64(r.mean_rmse), fmt_f64(r.std_rmse)])
        .collect();
    sink.csv("comparison.csv", &["model_tag", "mean_rmse", "std_rmse"], &rows)?;
    if curve {
        let c = evaluate::validation_curve(prep.predictors(), &prep.cv_target(), &cfg.curve_cutoffs, cfg.folds, cfg.seed)?;
        let rows: Vec<Vec<String>> = (0..c.cutoffs.len())
            .map(|i| {
                vec![
                    fmt_f64(c.cutoffs[i]),
                    c.component_counts[i].to_string(),
                    fmt_f64(c.train_rmse[i]),
                    fmt_f64(c.val_rmse[i]),
                ]
            })
            .collect();
        sink.csv("validation_curve.csv", &["cutoff", "components", "train_rmse", "val_rmse"], &rows)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub wall_seconds: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub status: RunStatus,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub stages: Vec<StageRecord>,
    /// Relative to the output directory.
    pub artifacts: Vec<FileDigest>,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// The manifest with every wall-clock field zeroed.
    pub fn without_timings(&self) -> Self {
        let mut m = self.clone();
        for s in &mut m.stages {
            s.wall_seconds = 0.0;
        }
        m
    }
}

fn digest(path: &Path, label: String) -> Result<FileDigest> {
    Ok(FileDigest {
        path: label,
        sha256: io::sha256_file(path)?,
    })
}

struct Run<'a> {
    manifest: RunManifest,
    sink: &'a mut Sink,
}

impl Run<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Sink) -> Result<(T, Option<(usize, usize)>)>) -> Result<T> {
        let start = Instant::now();
        let out = f(self.sink);
        let (ok, shape) = match &out {
            Ok((_, shape)) => (true, *shape),
            Err(_) => (false, None),
        };
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            rows: shape.map(|s| s.0),
            cols: shape.map(|s| s.1),
            wall_seconds: start.elapsed().as_secs_f64(),
            ok,
        });
        if !ok {
            self.manifest.failed_stage = Some(name.to_string());
        }
        out.map(|(v, _)| v)
    }
}

fn run_stages(cfg: &RunConfig, run: &mut Run<'_>) -> Result<()> {
    let table = run.stage("ingest", |sink| {
        let mut inputs = Vec::new();
        if let Some(d) = &cfg.dictionary {
            inputs.push(digest(d, d.display().to_string())?);
        }
        for (_, p) in cfg.parsed_inputs()? {
            inputs.push(digest(&p, p.display().to_string())?);
        }
        let t = ingest(cfg)?;
        emit_ingest(sink, &t)?;
        let shape = (t.n_rows(), t.n_cols());
        Ok(((t, inputs), Some(shape)))
    });
    let (table, inputs) = table?;
    run.manifest.inputs = inputs;

    let prep = run.stage("screen", |sink| {
        let prep = prepare(cfg, &table)?;
        emit_screen(sink, cfg, &table, &prep)?;
        let shape = (prep.predictors().n_rows(), prep.predictors().n_cols());
        Ok((prep, Some(shape)))
    })?;
    let (pca, comps) = run.stage("pca", |sink| {
        let out = emit_pca(sink, cfg, &prep)?;
        let shape = out.1.shape();
        Ok((out, Some(shape)))
    })?;
    let ols = run.stage("ols", |sink| {
        let (model, report) = emit_ols(sink, cfg, &prep, &pca, &comps)?;
        Ok((report, Some((model.n_obs, model.n_features()))))
    })?;
    let en = run.stage("enet", |sink| {
        let (model, report) = emit_enet(sink, cfg, &prep)?;
        Ok((report, Some((prep.predictors().n_rows(), model.active_set.len()))))
    })?;
    let rf = run.stage("forest", |sink| {
        let (_, _, report) = emit_forest(sink, cfg, &prep)?;
        Ok((report, Some(prep.predictors().values().shape())))
    })?;
    run.stage("evaluate", |sink| {
        let reports = [ols, en, rf];
        emit_evaluate(sink, cfg, &prep, &reports, !cfg.curve_cutoffs.is_empty())?;
        Ok(((), Some((prep.predictors().n_rows(), reports.len()))))
    })
}

/// Ingest, screen, PCA + OLS, elastic net, forest, evaluation. Writes every
/// artifact under `cfg.out_dir` and the manifest last. A stage failure stops
/// the run and is recorded in the returned manifest.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let mut sink = Sink::new(&cfg.out_dir)?;
    let mut run = Run {
        manifest: RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: RunStatus::Complete,
            failed_stage: None,
            error: None,
            config: cfg.clone(),
            inputs: Vec::new(),
            stages: Vec::new(),
            artifacts: Vec::new(),
        },
        sink: &mut sink,
    };
    if let Err(e) = run_stages(cfg, &mut run) {
        run.manifest.status = RunStatus::Failed;
        run.manifest.error = Some(e.to_string());
    }
    let mut manifest = run.manifest;
    manifest.artifacts = sink
        .written()
        .iter()
        .filter(|p| sink.dir().join(p).exists())
        .map(|p| digest(&sink.dir().join(p), p.display().to_string()))
        .collect::<Result<_>>()?;
    io::write_json(&cfg.out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
