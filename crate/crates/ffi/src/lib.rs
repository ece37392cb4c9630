//! C ABI over the `repayfactor` library.
//!
//! Every fallible function returns an [`RfStatus`]; on failure the message is
//! available from [`rf_last_error`] on the same thread. Matrices are dense
//! row-major `double` arrays. Handles are opaque and must be released with
//! their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nalgebra::DMatrix;

use repayfactor::enet::{self, EnetConfig, EnetPath};
use repayfactor::forest::{self, Forest, ForestConfig};
use repayfactor::linreg::{self, LinearModel};
use repayfactor::pca::{GroupedPcaFit, GroupedPcaModel};
use repayfactor::pipeline::{self, RunStatus};
use repayfactor::{evaluate, Category, Error, FeatureMeta, FeatureTable, RowKey};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Domain = 4,
    Rank = 5,
    Convergence = 6,
    InsufficientData = 7,
    Io = 8,
    Parse = 9,
    Config = 10,
    Data = 11,
    RunFailed = 12,
    Panic = 13,
}

/// Category codes accepted by [`rf_pca_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfCategory {
    Repayment = 0,
    School = 1,
    Academics = 2,
    Admission = 3,
    Cost = 4,
    Student = 5,
    Completion = 6,
    Aid = 7,
    Earnings = 8,
}

pub struct RfOls(LinearModel);
pub struct RfEnetPath(EnetPath);
pub struct RfForest(Forest);
pub struct RfPca(GroupedPcaModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RfStatus {
    match e {
        Error::InvalidArgument(_) | Error::Unbounded | Error::Fold(_) => RfStatus::InvalidArgument,
        Error::Shape(_) => RfStatus::Shape,
        Error::Domain { .. } => RfStatus::Domain,
        Error::Rank { .. } => RfStatus::Rank,
        Error::Convergence { .. } => RfStatus::Convergence,
        Error::InsufficientData(_) => RfStatus::InsufficientData,
        Error::Io { .. } => RfStatus::Io,
        Error::Csv { .. } | Error::RaggedRow { .. } | Error::Json(_) | Error::ConfigParse(_) => RfStatus::Parse,
        Error::ConfigInvalid(_) => RfStatus::Config,
        Error::InFold { source, .. } => status_of(source),
        _ => RfStatus::Data,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RfStatus::Panic
        }
    }
}

struct Failure(RfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn matrix(x: *const f64, rows: usize, cols: usize) -> Result<DMatrix<f64>, Failure> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(RfStatus::Shape, "matrix size overflows".into()))?;
    Ok(DMatrix::from_row_slice(rows, cols, slice(x, len, "x")?))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RfStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(h: *const T) -> Result<&'a T, Failure> {
    h.as_ref().ok_or_else(|| null("handle"))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got == want {
        Ok(())
    } else {
        Err(Failure(RfStatus::Shape, format!("{what} has length {got}, expected {want}")))
    }
}

/// Message for the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn rf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Clamped log-odds of `n` rates into `out`.
///
/// # Safety
/// `p` and `out` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_logit(p: *const f64, n: usize, epsilon: f64, out: *mut f64) -> RfStatus {
    guard(|| {
        let t = linreg::logit_transform(slice(p, n, "p")?, epsilon)?;
        slice_mut(out, n, "out")?.copy_from_slice(&t.transformed);
        Ok(())
    })
}

/// # Safety
/// `y` and `out` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_inverse_logit(y: *const f64, n: usize, out: *mut f64) -> RfStatus {
    guard(|| {
        let v = linreg::inverse_logit(slice(y, n, "y")?);
        slice_mut(out, n, "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// # Safety
/// `predicted` and `actual` must each point to `n` doubles; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn rf_rmse(predicted: *const f64, actual: *const f64, n: usize, out: *mut f64) -> RfStatus {
    guard(|| {
        let r = evaluate::rmse(slice(predicted, n, "predicted")?, slice(actual, n, "actual")?)?;
        *slice_mut(out, 1, "out")?.first_mut().expect("len 1") = r;
        Ok(())
    })
}

/// Least squares with an intercept on an `n`×`d` design.
///
/// # Safety
/// `x` must hold `n*d` doubles, `y` `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_ols_fit(x: *const f64, n: usize, d: usize, y: *const f64, out: *mut *mut RfOls) -> RfStatus {
    guard(|| {
        let m = linreg::fit_ols(&matrix(x, n, d)?, slice(y, n, "y")?)?;
        put(out, RfOls(m))
    })
}

/// Number of parameters including the intercept, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rf_ols_n_params(h: *const RfOls) -> usize {
    h.as_ref().map_or(0, |m| m.0.n_features() + 1)
}

/// Copies intercept then coefficients, standard errors, t statistics and
/// p-values, each array `len = rf_ols_n_params(h)` long. Any output may be
/// null to skip it.
///
/// # Safety
/// `h` must be live; non-null outputs must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_ols_estimates(
    h: *const RfOls,
    estimates: *mut f64,
    std_errors: *mut f64,
    t_stats: *mut f64,
    p_values: *mut f64,
    len: usize,
) -> RfStatus {
    guard(|| {
        let m = &handle(h)?.0;
        check_len(len, m.n_features() + 1, "output")?;
        let est: Vec<f64> = std::iter::once(m.intercept).chain(m.coefficients.iter().copied()).collect();
        for (dst, src) in [(estimates, &est), (std_errors, &m.std_errors), (t_stats, &m.t_stats), (p_values, &m.p_values)] {
            if !dst.is_null() {
                slice_mut(dst, len, "output")?.copy_from_slice(src);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `h` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rf_ols_r_squared(h: *const RfOls, out: *mut f64) -> RfStatus {
    guard(|| {
        let m = handle(h)?;
        *slice_mut(out, 1, "out")?.first_mut().expect("len 1") = m.0.r_squared;
        Ok(())
    })
}

/// Linear-scale predictions for `n` rows.
///
/// # Safety
/// `x` must hold `n*d` doubles and `out` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_ols_predict(h: *const RfOls, x: *const f64, n: usize, d: usize, out: *mut f64) -> RfStatus {
    guard(|| {
        let p = linreg::predict_linear(&handle(h)?.0, &matrix(x, n, d)?)?;
        slice_mut(out, n, "out")?.copy_from_slice(&p);
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`rf_ols_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rf_ols_free(h: *mut RfOls) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Elastic-net path at mixing weight `alpha` on a log grid from λ_max down to
/// `gamma`·λ_max with `path_length` points.
///
/// # Safety
/// `x` must hold `n*p` doubles, `y` `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_enet_path_fit(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    alpha: f64,
    gamma: f64,
    path_length: usize,
    out: *mut *mut RfEnetPath,
) -> RfStatus {
    guard(|| {
        let config = EnetConfig {
            gamma,
            path_length,
            ..EnetConfig::default()
        };
        config.validate()?;
        let path = enet::fit_path(&matrix(x, n, p)?, slice(y, n, "y")?, &config, alpha)?;
        put(out, RfEnetPath(path))
    })
}

/// Number of λ values on the path, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn rf_enet_path_len(h: *const RfEnetPath) -> usize {
    h.as_ref().map_or(0, |p| p.0.lambdas.len())
}

/// # Safety
/// `h` must be live; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_enet_path_lambdas(h: *const RfEnetPath, out: *mut f64, len: usize) -> RfStatus {
    guard(|| {
        let path = &handle(h)?.0;
        check_len(len, path.lambdas.len(), "out")?;
        slice_mut(out, len, "out")?.copy_from_slice(&path.lambdas);
        Ok(())
    })
}

/// Original-scale coefficients (`p` of them) and intercept at path index `k`.
///
/// # Safety
/// `h` must be live; `coefficients` must hold `p` doubles and `intercept` one.
#[no_mangle]
pub unsafe extern "C" fn rf_enet_path_solution(
    h: *const RfEnetPath,
    k: usize,
    coefficients: *mut f64,
    p: usize,
    intercept: *mut f64,
) -> RfStatus {
    guard(|| {
        let path = &handle(h)?.0;
        if k >= path.lambdas.len() {
            return Err(Failure(RfStatus::InvalidArgument, format!("path index {k} out of range")));
        }
        check_len(p, path.coefficients.nrows(), "coefficients")?;
        let out = slice_mut(coefficients, p, "coefficients")?;
        for (j, o) in out.iter_mut().enumerate() {
            *o = path.coefficients[(j, k)];
        }
        *slice_mut(intercept, 1, "intercept")?.first_mut().expect("len 1") = path.intercepts[k];
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`rf_enet_path_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rf_enet_path_free(h: *mut RfEnetPath) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Bootstrap regression forest. `mtry = 0` selects ⌈p/3⌉.
///
/// # Safety
/// `x` must hold `n*p` doubles, `y` `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_forest_fit(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    n_trees: usize,
    mtry: usize,
    min_leaf: usize,
    seed: u64,
    out: *mut *mut RfForest,
) -> RfStatus {
    guard(|| {
        let config = ForestConfig {
            n_trees,
            mtry: (mtry > 0).then_some(mtry),
            min_leaf,
            seed,
            ..ForestConfig::default()
        };
        let f = forest::fit_forest(&matrix(x, n, p)?, slice(y, n, "y")?, &config)?;
        put(out, RfForest(f))
    })
}

/// # Safety
/// `x` must hold `n*p` doubles and `out` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_forest_predict(h: *const RfForest, x: *const f64, n: usize, p: usize, out: *mut f64) -> RfStatus {
    guard(|| {
        let pred = forest::predict(&handle(h)?.0, &matrix(x, n, p)?)?;
        slice_mut(out, n, "out")?.copy_from_slice(&pred);
        Ok(())
    })
}

/// Mean normalized impurity importance per feature.
///
/// # Safety
/// `h` must be live; `out` must hold `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_forest_importance(h: *const RfForest, out: *mut f64, p: usize) -> RfStatus {
    guard(|| {
        let f = &handle(h)?.0;
        check_len(p, f.n_features, "out")?;
        let imp = forest::importance(f);
        slice_mut(out, p, "out")?.copy_from_slice(&imp.mean_importance);
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`rf_forest_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rf_forest_free(h: *mut RfForest) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

fn dense_table(x: DMatrix<f64>, categories: &[u32]) -> Result<FeatureTable, Failure> {
    let metas = categories
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let cat = *Category::ALL
                .get(c as usize)
                .ok_or_else(|| Failure(RfStatus::InvalidArgument, format!("category code {c} for column {j}")))?;
            Ok(FeatureMeta::numeric(format!("f{j}"), cat))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let keys = (0..x.nrows()).map(|i| RowKey::new(i.to_string(), 0)).collect();
    Ok(FeatureTable::from_dense(x, metas, keys)?)
}

/// Per-category PCA. `categories[j]` is the [`RfCategory`] code of column `j`.
///
/// # Safety
/// `x` must hold `n*p` doubles and `categories` `p` codes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rf_pca_fit(
    x: *const f64,
    n: usize,
    p: usize,
    categories: *const u32,
    cutoff: f64,
    out: *mut *mut RfPca,
) -> RfStatus {
    guard(|| {
        if p > 0 && categories.is_null() {
            return Err(null("categories"));
        }
        let cats = if p == 0 { &[][..] } else { std::slice::from_raw_parts(categories, p) };
        let table = dense_table(matrix(x, n, p)?, cats)?;
        let model = GroupedPcaFit::new(&table)?.model(cutoff)?;
        put(out, RfPca(model))
    })
}

/// Total retained components, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn rf_pca_n_components(h: *const RfPca) -> usize {
    h.as_ref().map_or(0, |m| m.0.width())
}

/// Component scores (`n` × [`rf_pca_n_components`], row-major) for data with
/// the training column layout.
///
/// # Safety
/// `x` must hold `n*p` doubles and `out` `n*m` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_pca_transform(h: *const RfPca, x: *const f64, n: usize, p: usize, out: *mut f64) -> RfStatus {
    guard(|| {
        let model = &handle(h)?.0;
        check_len(p, model.feature_names.len(), "columns")?;
        let cats: Vec<u32> = {
            let mut c = vec![0u32; p];
            for part in &model.parts {
                let code = Category::ALL.iter().position(|&k| k == part.category).expect("known category") as u32;
                for &j in &part.feature_indices {
                    c[j] = code;
                }
            }
            c
        };
        let table = dense_table(matrix(x, n, p)?, &cats)?;
        let scores = model.transform(&table)?;
        let m = scores.ncols();
        let dst = slice_mut(out, n * m, "out")?;
        for i in 0..n {
            for k in 0..m {
                dst[i * m + k] = scores[(i, k)];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`rf_pca_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rf_pca_free(h: *mut RfPca) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Runs the whole pipeline from a config file, writing artifacts and the
/// manifest to `out_dir`. Returns [`RfStatus::RunFailed`] if a stage failed
/// (the manifest still records it).
///
/// # Safety
/// Both arguments must be null-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn rf_run_config(config_path: *const c_char, out_dir: *const c_char) -> RfStatus {
    guard(|| {
        let mut cfg = pipeline::validate_config(&path_arg(config_path, "config_path")?)?;
        cfg.out_dir = path_arg(out_dir, "out_dir")?;
        let m = pipeline::run_pipeline(&cfg)?;
        if m.status == RunStatus::Complete {
            Ok(())
        } else {
            Err(Failure(
                RfStatus::RunFailed,
                format!("stage {}: {}", m.failed_stage.unwrap_or_default(), m.error.unwrap_or_default()),
            ))
        }
    })
}
