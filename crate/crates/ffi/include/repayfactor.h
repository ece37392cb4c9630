#ifndef REPAYFACTOR_H
#define REPAYFACTOR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_POINTER = 1,
  RF_STATUS_INVALID_ARGUMENT = 2,
  RF_STATUS_SHAPE = 3,
  RF_STATUS_DOMAIN = 4,
  RF_STATUS_RANK = 5,
  RF_STATUS_CONVERGENCE = 6,
  RF_STATUS_INSUFFICIENT_DATA = 7,
  RF_STATUS_IO = 8,
  RF_STATUS_PARSE = 9,
  RF_STATUS_CONFIG = 10,
  RF_STATUS_DATA = 11,
  RF_STATUS_RUN_FAILED = 12,
  RF_STATUS_PANIC = 13,
} RfStatus;

/*
 Category codes accepted by [`rf_pca_fit`].
 */
typedef enum RfCategory {
  RF_CATEGORY_REPAYMENT = 0,
  RF_CATEGORY_SCHOOL = 1,
  RF_CATEGORY_ACADEMICS = 2,
  RF_CATEGORY_ADMISSION = 3,
  RF_CATEGORY_COST = 4,
  RF_CATEGORY_STUDENT = 5,
  RF_CATEGORY_COMPLETION = 6,
  RF_CATEGORY_AID = 7,
  RF_CATEGORY_EARNINGS = 8,
} RfCategory;

typedef struct RfEnetPath RfEnetPath;

typedef struct RfForest RfForest;

typedef struct RfOls RfOls;

typedef struct RfPca RfPca;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty if none. Valid
 until the next failing call on the same thread.
 */
const char *rf_last_error(void);

/*
 Library version, static storage.
 */
const char *rf_version(void);

/*
 Clamped log-odds of `n` rates into `out`.

 # Safety
 `p` and `out` must each point to `n` doubles.
 */
enum RfStatus rf_logit(const double *p, size_t n, double epsilon, double *out);

/*
 # Safety
 `y` and `out` must each point to `n` doubles.
 */
enum RfStatus rf_inverse_logit(const double *y, size_t n, double *out);

/*
 # Safety
 `predicted` and `actual` must each point to `n` doubles; `out` to one.
 */
enum RfStatus rf_rmse(const double *predicted, const double *actual, size_t n, double *out);

/*
 Least squares with an intercept on an `n`×`d` design.

 # Safety
 `x` must hold `n*d` doubles, `y` `n` doubles; `out` must be writable.
 */
enum RfStatus rf_ols_fit(const double *x, size_t n, size_t d, const double *y, struct RfOls **out);

/*
 Number of parameters including the intercept, or 0 for a null handle.

 # Safety
 `h` must be null or a live handle.
 */
size_t rf_ols_n_params(const struct RfOls *h);

/*
 Copies intercept then coefficients, standard errors, t statistics and
 p-values, each array `len = rf_ols_n_params(h)` long. Any output may be
 null to skip it.

 # Safety
 `h` must be live; non-null outputs must hold `len` doubles.
 */
enum RfStatus rf_ols_estimates(const struct RfOls *h,
                               double *estimates,
                               double *std_errors,
                               double *t_stats,
                               double *p_values,
                               size_t len);

/*
 # Safety
 `h` must be live and `out` writable.
 */
enum RfStatus rf_ols_r_squared(const struct RfOls *h, double *out);

/*
 Linear-scale predictions for `n` rows.

 # Safety
 `x` must hold `n*d` doubles and `out` `n` doubles.
 */
enum RfStatus rf_ols_predict(const struct RfOls *h,
                             const double *x,
                             size_t n,
                             size_t d,
                             double *out);

/*
 # Safety
 `h` must be null or a handle from [`rf_ols_fit`] not yet freed.
 */
void rf_ols_free(struct RfOls *h);

/*
 Elastic-net path at mixing weight `alpha` on a log grid from λ_max down to
 `gamma`·λ_max with `path_length` points.

 # Safety
 `x` must hold `n*p` doubles, `y` `n` doubles; `out` must be writable.
 */
enum RfStatus rf_enet_path_fit(const double *x,
                               size_t n,
                               size_t p,
                               const double *y,
                               double alpha,
                               double gamma,
                               size_t path_length,
                               struct RfEnetPath **out);

/*
 Number of λ values on the path, or 0 for a null handle.

 # Safety
 `h` must be null or live.
 */
size_t rf_enet_path_len(const struct RfEnetPath *h);

/*
 # Safety
 `h` must be live; `out` must hold `len` doubles.
 */
enum RfStatus rf_enet_path_lambdas(const struct RfEnetPath *h, double *out, size_t len);

/*
 Original-scale coefficients (`p` of them) and intercept at path index `k`.

 # Safety
 `h` must be live; `coefficients` must hold `p` doubles and `intercept` one.
 */
enum RfStatus rf_enet_path_solution(const struct RfEnetPath *h,
                                    size_t k,
                                    double *coefficients,
                                    size_t p,
                                    double *intercept);

/*
 # Safety
 `h` must be null or a handle from [`rf_enet_path_fit`] not yet freed.
 */
void rf_enet_path_free(struct RfEnetPath *h);

/*
 Bootstrap regression forest. `mtry = 0` selects ⌈p/3⌉.

 # Safety
 `x` must hold `n*p` doubles, `y` `n` doubles; `out` must be writable.
 */
enum RfStatus rf_forest_fit(const double *x,
                            size_t n,
                            size_t p,
                            const double *y,
                            size_t n_trees,
                            size_t mtry,
                            size_t min_leaf,
                            uint64_t seed,
                            struct RfForest **out);

/*
 # Safety
 `x` must hold `n*p` doubles and `out` `n` doubles.
 */
enum RfStatus rf_forest_predict(const struct RfForest *h,
                                const double *x,
                                size_t n,
                                size_t p,
                                double *out);

/*
 Mean normalized impurity importance per feature.

 # Safety
 `h` must be live; `out` must hold `p` doubles.
 */
enum RfStatus rf_forest_importance(const struct RfForest *h, double *out, size_t p);

/*
 # Safety
 `h` must be null or a handle from [`rf_forest_fit`] not yet freed.
 */
void rf_forest_free(struct RfForest *h);

/*
 Per-category PCA. `categories[j]` is the [`RfCategory`] code of column `j`.

 # Safety
 `x` must hold `n*p` doubles and `categories` `p` codes; `out` writable.
 */
enum RfStatus rf_pca_fit(const double *x,
                         size_t n,
                         size_t p,
                         const uint32_t *categories,
                         double cutoff,
                         struct RfPca **out);

/*
 Total retained components, or 0 for a null handle.

 # Safety
 `h` must be null or live.
 */
size_t rf_pca_n_components(const struct RfPca *h);

/*
 Component scores (`n` × [`rf_pca_n_components`], row-major) for data with
 the training column layout.

 # Safety
 `x` must hold `n*p` doubles and `out` `n*m` doubles.
 */
enum RfStatus rf_pca_transform(const struct RfPca *h,
                               const double *x,
                               size_t n,
                               size_t p,
                               double *out);

/*
 # Safety
 `h` must be null or a handle from [`rf_pca_fit`] not yet freed.
 */
void rf_pca_free(struct RfPca *h);

/*
 Runs the whole pipeline from a config file, writing artifacts and the
 manifest to `out_dir`. Returns [`RfStatus::RunFailed`] if a stage failed
 (the manifest still records it).

 # Safety
 Both arguments must be null-terminated strings.
 */
enum RfStatus rf_run_config(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REPAYFACTOR_H */
