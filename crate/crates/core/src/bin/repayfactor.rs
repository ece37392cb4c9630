use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use repayfactor::pipeline::{self, Prepared, RunConfig, RunStatus, Sink};
use repayfactor::{Error, FeatureTable, Result};

#[derive(Parser, Debug)]
#[command(name = "repayfactor", version, about = "Repayment-rate factor analysis over institution panels")]
struct Cli {
    /// Flat TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "REPAYFACTOR_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Yearly CSV as YEAR:PATH; repeatable.
    #[arg(long = "input")]
    inputs: Vec<String>,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    id_column: Option<String>,
    #[arg(long)]
    missing_threshold: Option<f64>,
    /// Previously ingested table (`table.csv` next to `table_meta.csv`);
    /// skips ingestion.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ScreenArgs {
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    var_drop: Option<f64>,
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct EnetArgs {
    /// Comma-separated mixing weights.
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    path_length: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ForestArgs {
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum RecipeArg {
    PcaOls,
    Enet,
    Rf,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, merge and filter the yearly CSVs.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Target selection, variance and correlation screens, summaries.
    Screen {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        screen: ScreenArgs,
        /// Comma-separated variables for quantile summaries.
        #[arg(long, value_delimiter = ',')]
        summaries: Option<Vec<String>>,
        #[arg(long)]
        heatmap_k: Option<usize>,
    },
    /// Per-category PCA.
    Pca {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        screen: ScreenArgs,
        #[arg(long)]
        cutoff: Option<f64>,
    },
    /// Least squares on the PCA components.
    FitOls {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        screen: ScreenArgs,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Elastic-net path and cross-validated tuning.
    FitEnet {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        screen: ScreenArgs,
        #[command(flatten)]
        enet: EnetArgs,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Random forest and impurity importance.
    FitRf {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        screen: ScreenArgs,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Cross-validated comparison and the PCA validation curve.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        screen: ScreenArgs,
        #[arg(long, value_enum, default_value = "all")]
        recipe: RecipeArg,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[command(flatten)]
        enet: EnetArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// Also write the validation curve.
        #[arg(long)]
        curve: bool,
    },
    /// Every stage end to end, with a manifest.
    Run {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Parse and check a config file, printing the resolved configuration.
    ValidateConfig {
        path: Option<PathBuf>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if !self.inputs.is_empty() {
            cfg.inputs = self.inputs.clone();
        }
        if self.dictionary.is_some() {
            cfg.dictionary = self.dictionary.clone();
        }
        set(&mut cfg.id_column, self.id_column.clone());
        set(&mut cfg.missing_threshold, self.missing_threshold);
    }
}

impl ScreenArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.target_name, self.target.clone());
        set(&mut cfg.variance_drop, self.var_drop);
        set(&mut cfg.top_count, self.top);
    }
}

impl EnetArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.alpha_grid, self.alpha_grid.clone());
        set(&mut cfg.gamma, self.gamma);
        set(&mut cfg.path_length, self.path_length);
    }
}

impl ForestArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.trees, self.trees);
        if self.mtry.is_some() {
            cfg.mtry = self.mtry;
        }
        set(&mut cfg.min_leaf, self.min_leaf);
    }
}

fn meta_path(table: &Path) -> PathBuf {
    let stem = table.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
    table.with_file_name(format!("{stem}_meta.csv"))
}

fn load_table(cfg: &RunConfig, data: &DataArgs) -> Result<FeatureTable> {
    match &data.table {
        Some(t) => FeatureTable::read_csv(t, &meta_path(t)),
        None => pipeline::ingest(cfg),
    }
}

fn prepared(cfg: &RunConfig, data: &DataArgs) -> Result<Prepared> {
    pipeline::prepare(cfg, &load_table(cfg, data)?)
}

fn report(sink: &Sink) {
    for p in sink.written() {
        println!("{}", sink.dir().join(p).display());
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => pipeline::validate_config(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.out_dir, cli.out.clone());
    set(&mut cfg.seed, cli.seed);
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    if let Command::ValidateConfig { path } = &cli.command {
        let path = path
            .as_ref()
            .or(cli.config.as_ref())
            .ok_or_else(|| Error::InvalidArgument("no config file given".into()))?;
        let cfg = pipeline::validate_config(path)?;
        println!("{}", toml::to_string(&cfg).map_err(|e| Error::ConfigParse(e.to_string()))?);
        return Ok(ExitCode::SUCCESS);
    }

    let mut cfg = base_config(&cli)?;
    match &cli.command {
        Command::Ingest { data } => {
            data.apply(&mut cfg);
            cfg.validate()?;
            let table = pipeline::ingest(&cfg)?;
            let mut sink = Sink::new(&cfg.out_dir)?;
            pipeline::emit_ingest(&mut sink, &table)?;
            eprintln!("{} rows x {} features", table.n_rows(), table.n_cols());
            report(&sink);
        }
        Command::Screen { data, screen, summaries, heatmap_k } => {
            data.apply(&mut cfg);
            screen.apply(&mut cfg);
            set(&mut cfg.summaries, summaries.clone());
            set(&mut cfg.heatmap_k, *heatmap_k);
            cfg.validate()?;
            let table = load_table(&cfg, data)?;
            let prep = pipeline::prepare(&cfg, &table)?;
            let mut sink = Sink::new(&cfg.out_dir)?;
            pipeline::emit_screen(&mut sink, &cfg, &table, &prep)?;
            report(&sink);
        }
        Command::Pca { data, screen, cutoff } => {
            data.apply(&mut cfg);
            screen.apply(&mut cfg);
            set(&mut cfg.pca_cutoff, *cutoff);
            cfg.validate()?;
            let prep = prepared(&cfg, data)?;
            let mut sink = Sink::new(&cfg.out_dir)?;
            let (model, _) = pipeline::emit_pca(&mut sink, &cfg, &prep)?;
            eprintln!("{} components", model.width());
            report(&sink);
        }
        Command::FitOls { data, screen, cutoff, folds } => {
            data.apply(&mut cfg);
            screen.apply(&mut cfg);
            set(&mut cfg.pca_cutoff, *cutoff);
            set(&mut cfg.folds, *folds);
            cfg.validate()?;
            let prep = prepared(&cfg, data)?;
            let (pca, _) = repayfactor::pca::fit_grouped_pca(prep.predictors(), cfg.pca_cutoff)?;
            let comps = pca.transform(prep.predictors())?;
            let mut sink = Sink::new(&cfg.out_dir)?;
            pipeline::emit_ols(&mut sink, &cfg, &prep, &pca, &comps)?;
            report(&sink);
        }
        Command::FitEnet { data, screen, enet, folds } => {
            data.apply(&mut cfg);
            screen.apply(&mut cfg);
            enet.apply(&mut cfg);
            set(&mut cfg.folds, *folds);
            cfg.validate()?;
            let prep = prepared(&cfg, data)?;
            let mut sink = Sink::new(&cfg.out_dir)?;
            let (model, _) = pipeline::emit_enet(&mut sink, &cfg, &prep)?;
            eprintln!(
                "alpha {} lambda {:.6e}, {} active, cv rmse {:.6}",
                model.alpha,
                model.lambda,
                model.active_set.len(),
                model.cv_rmse
            );
            report(&sink);
        }
        Command::FitRf { data, screen, forest, folds } => {
            data.apply(&mut cfg);
            screen.apply(&mut cfg);
            forest.apply(&mut cfg);
            set(&mut cfg.folds, *folds);
            cfg.validate()?;
            let prep = prepared(&cfg, data)?;
            let mut sink = Sink::new(&cfg.out_dir)?;
            pipeline::emit_forest(&mut sink, &cfg, &prep)?;
            report(&sink);
        }
        Command::Evaluate { data, screen, recipe, folds, cutoff, enet, forest, curve } => {
            data.apply(&mut cfg);
            screen.apply(&mut cfg);
            enet.apply(&mut cfg);
            forest.apply(&mut cfg);
            set(&mut cfg.folds, *folds);
            set(&mut cfg.pca_cutoff, *cutoff);
            cfg.validate()?;
            let prep = prepared(&cfg, data)?;
            let tags: &[&str] = match recipe {
                RecipeArg::PcaOls => &["pca-ols"],
                RecipeArg::Enet => &["enet"],
                RecipeArg::Rf => &["rf"],
                RecipeArg::All => &["pca-ols", "enet", "rf"],
            };
            let reports = tags
                .iter()
                .map(|t| pipeline::cv_report(&cfg, &prep, t))
                .collect::<Result<Vec<_>>>()?;
            let mut sink = Sink::new(&cfg.out_dir)?;
            pipeline::emit_evaluate(&mut sink, &cfg, &prep, &reports, *curve)?;
            for r in &reports {
                eprintln!("{}: rmse {:.6} +/- {:.6}", r.model_tag, r.mean_rmse, r.std_rmse);
            }
            report(&sink);
        }
        Command::Run { data } => {
            data.apply(&mut cfg);
            let manifest = pipeline::run_pipeline(&cfg)?;
            println!("{}", cfg.out_dir.join(pipeline::MANIFEST_FILE).display());
            if manifest.status != RunStatus::Complete {
                eprintln!(
                    "error: stage `{}` failed: {}",
                    manifest.failed_stage.as_deref().unwrap_or("?"),
                    manifest.error.as_deref().unwrap_or("")
                );
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::ValidateConfig { .. } => unreachable!("handled above"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(Error::ConfigInvalid(violations)) => {
            eprintln!("error: invalid configuration");
            for v in violations {
                eprintln!("  {v}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
