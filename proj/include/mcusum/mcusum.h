#ifndef MCUSUM_MCUSUM_H
#define MCUSUM_MCUSUM_H

/*
 * C interface to the multivariate CUSUM change-point library.
 *
 * Every object is an opaque handle released by its *_free function (NULL is
 * accepted). Functions that can fail return an mcusum_status; on failure the
 * message of the last error on the calling thread is available through
 * mcusum_last_error(). Matrices cross the boundary as row-major double arrays.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MCUSUM_BUILDING_LIBRARY)
#    define MCUSUM_API __declspec(dllexport)
#  else
#    define MCUSUM_API __declspec(dllimport)
#  endif
#else
#  define MCUSUM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mcusum_status {
    MCUSUM_OK = 0,
    MCUSUM_E_MISSING_COLUMN = 1,
    MCUSUM_E_NON_NUMERIC_CELL = 2,
    MCUSUM_E_TOO_SHORT = 3,
    MCUSUM_E_NON_FINITE = 4,
    MCUSUM_E_DOMAIN = 5,
    MCUSUM_E_BANDWIDTH_TOO_LARGE = 6,
    MCUSUM_E_DEGENERATE_SPECTRUM = 7,
    MCUSUM_E_DIMENSION_MISMATCH = 8,
    MCUSUM_E_MISSING_CRITICAL_VALUE = 9,
    MCUSUM_E_NOT_POSITIVE_DEFINITE = 10,
    MCUSUM_E_PARSE = 11,
    MCUSUM_E_IO = 12,
    MCUSUM_E_INVALID_ARGUMENT = 13,
    MCUSUM_E_INTERNAL = 14
} mcusum_status;

typedef struct mcusum_series mcusum_series;
typedef struct mcusum_cv_table mcusum_cv_table;
typedef struct mcusum_result mcusum_result;
typedef struct mcusum_scan mcusum_scan;
typedef struct mcusum_sim_spec mcusum_sim_spec;
typedef struct mcusum_grid_report mcusum_grid_report;

MCUSUM_API const char* mcusum_version(void);

/* Stable category name, e.g. "DegenerateSpectrum". */
MCUSUM_API const char* mcusum_status_name(mcusum_status status);

/* Message of the most recent failure on this thread ("" if none). */
MCUSUM_API const char* mcusum_last_error(void);

/* ---- series ---------------------------------------------------------- */

/* values: length x dim, row-major. */
MCUSUM_API mcusum_status mcusum_series_from_data(const double* values, size_t length, size_t dim,
                                                 mcusum_series** out);

/* columns may be NULL (ncolumns 0): every header field except date_column.
 * date_column may be NULL. skip_rows lines are dropped before the header. */
MCUSUM_API mcusum_status mcusum_series_load_csv(const char* path, const char* const* columns,
                                                size_t ncolumns, const char* date_column,
                                                size_t skip_rows, mcusum_series** out);

MCUSUM_API mcusum_status mcusum_series_write_csv(const mcusum_series* series, const char* path);

/* transform: "none", "center", "log" or "diff". */
MCUSUM_API mcusum_status mcusum_series_transform(const mcusum_series* series, const char* transform,
                                                 mcusum_series** out);

MCUSUM_API size_t mcusum_series_length(const mcusum_series* series);
MCUSUM_API size_t mcusum_series_dim(const mcusum_series* series);

/* Copies length*dim values, row-major. */
MCUSUM_API mcusum_status mcusum_series_values(const mcusum_series* series, double* out);

/* Adds delta (dim entries) to every row after the first `after` rows. */
MCUSUM_API mcusum_status mcusum_series_shift(const mcusum_series* series, size_t after,
                                             const double* delta, mcusum_series** out);

MCUSUM_API void mcusum_series_free(mcusum_series* series);

/* ---- spectral -------------------------------------------------------- */

/* floor(T^{1/4}). */
MCUSUM_API mcusum_status mcusum_default_bandwidth(size_t length, int* out);

/* 2*pi*Re f(0) after ridge flooring; bandwidth <= 0 selects the default.
 * sigma receives dim*dim entries. bandwidth_used and ridge may be NULL. */
MCUSUM_API mcusum_status mcusum_long_run_covariance(const mcusum_series* series, int bandwidth,
                                                    double* sigma, int* bandwidth_used,
                                                    double* ridge);

MCUSUM_API mcusum_status mcusum_write_spectrum_csv(const mcusum_series* series, int bandwidth,
                                                   const char* path);

/* ---- critical values ------------------------------------------------- */

typedef struct mcusum_cv_entry {
    int d;
    double alpha;
    double value;
    uint64_t paths;
    uint64_t grid;
    uint64_t seed;
    double stderr_estimate;
} mcusum_cv_entry;

typedef struct mcusum_mc_budget {
    uint64_t paths;
    uint64_t grid;
    uint64_t seed;
    unsigned threads;
} mcusum_mc_budget;

MCUSUM_API mcusum_mc_budget mcusum_mc_budget_default(void);

MCUSUM_API mcusum_status mcusum_cv_table_new(mcusum_cv_table** out);

/* Copy of the table compiled into the library. */
MCUSUM_API mcusum_status mcusum_cv_table_shipped(mcusum_cv_table** out);
MCUSUM_API mcusum_status mcusum_cv_table_load(const char* path, mcusum_cv_table** out);
MCUSUM_API mcusum_status mcusum_cv_table_save(const mcusum_cv_table* table, const char* path);

/* MCUSUM_E_MISSING_CRITICAL_VALUE when (d, alpha) is absent. */
MCUSUM_API mcusum_status mcusum_cv_table_lookup(const mcusum_cv_table* table, int d, double alpha,
                                                mcusum_cv_entry* out);

MCUSUM_API size_t mcusum_cv_table_size(const mcusum_cv_table* table);
MCUSUM_API mcusum_status mcusum_cv_table_entry(const mcusum_cv_table* table, size_t index,
                                               mcusum_cv_entry* out);

/* Simulates the sup law for dimension d once and inserts one entry per
 * level. budget may be NULL for the default. */
MCUSUM_API mcusum_status mcusum_cv_table_compute(mcusum_cv_table* table, int d, const double* alphas,
                                                 size_t nalphas, const mcusum_mc_budget* budget);

MCUSUM_API void mcusum_cv_table_free(mcusum_cv_table* table);

/* Closed-form d = 1 quantile. */
MCUSUM_API mcusum_status mcusum_kolmogorov_quantile(double alpha, double* out);

/* ---- test, estimation, scan ------------------------------------------ */

typedef struct mcusum_test_options {
    double alpha;
    int bandwidth; /* <= 0: default */
    int two_pass;
} mcusum_test_options;

MCUSUM_API mcusum_test_options mcusum_test_options_default(void);

/* options may be NULL for the defaults. */
MCUSUM_API mcusum_status mcusum_test(const mcusum_series* series, const mcusum_cv_table* table,
                                     const mcusum_test_options* options, mcusum_result** out);

/* Long-run covariance and CUSUM curve only: no critical value is looked up,
 * the result reports reject = 0 and a NaN critical value. */
MCUSUM_API mcusum_status mcusum_analyze(const mcusum_series* series, int bandwidth,
                                        mcusum_result** out);

MCUSUM_API double mcusum_result_statistic(const mcusum_result* result);
MCUSUM_API double mcusum_result_critical_value(const mcusum_result* result);
MCUSUM_API int mcusum_result_reject(const mcusum_result* result);
MCUSUM_API size_t mcusum_result_argmax(const mcusum_result* result);
MCUSUM_API int mcusum_result_bandwidth(const mcusum_result* result);
MCUSUM_API size_t mcusum_result_dim(const mcusum_result* result);

/* dim*dim entries. */
MCUSUM_API mcusum_status mcusum_result_sigma(const mcusum_result* result, double* out);

/* key=value report; owned by the result. */
MCUSUM_API const char* mcusum_result_report(const mcusum_result* result);

/* Columns k, t, q, q_over_n, s_1..s_d. */
MCUSUM_API mcusum_status mcusum_result_write_curve(const mcusum_result* result, const char* path);

typedef struct mcusum_estimate {
    double k_hat;
    size_t t_hat;
    double curve_value;
} mcusum_estimate;

/* method: "quadform_argmax" or "norm_argmax"; trim in [0, 0.5). */
MCUSUM_API mcusum_status mcusum_result_estimate(const mcusum_result* result, const char* method,
                                                double trim, mcusum_estimate* out);

/* smoothing_window <= 0: default; min_prominence < 0: 10% of the range. */
MCUSUM_API mcusum_status mcusum_result_scan(const mcusum_result* result, int smoothing_window,
                                            double min_prominence, mcusum_scan** out);

typedef struct mcusum_extremum {
    size_t index;
    double value;
    int is_max;
    double prominence;
} mcusum_extremum;

/* Like mcusum_result_scan, then re-estimates the long-run covariance from
 * residuals around the scanned maxima of `series` and rescans, at most
 * max_rounds times (stops early once the maxima repeat). bandwidth <= 0
 * selects the default. */
MCUSUM_API mcusum_status mcusum_result_scan_refined(const mcusum_result* result, const mcusum_series* series,
                                                    int smoothing_window, double min_prominence,
                                                    int bandwidth, int max_rounds, mcusum_scan** out);

MCUSUM_API size_t mcusum_scan_count(const mcusum_scan* scan);
MCUSUM_API mcusum_status mcusum_scan_extremum(const mcusum_scan* scan, size_t i, mcusum_extremum* out);
MCUSUM_API int mcusum_scan_window(const mcusum_scan* scan);
MCUSUM_API double mcusum_scan_min_prominence(const mcusum_scan* scan);
/* Re-estimation rounds performed (0 for a plain scan). */
MCUSUM_API int mcusum_scan_rounds(const mcusum_scan* scan);

/* Columns k, t, q_smoothed. */
MCUSUM_API mcusum_status mcusum_scan_write_smoothed(const mcusum_scan* scan, const char* path);

MCUSUM_API void mcusum_scan_free(mcusum_scan* scan);
MCUSUM_API void mcusum_result_free(mcusum_result* result);

/* ---- simulation ------------------------------------------------------ */

MCUSUM_API mcusum_status mcusum_sim_spec_default(int d, mcusum_sim_spec** out);
MCUSUM_API mcusum_status mcusum_sim_spec_load(const char* path, mcusum_sim_spec** out);
MCUSUM_API mcusum_status mcusum_sim_spec_parse(const char* text, mcusum_sim_spec** out);

/* Overrides one config key (d, T, m, rho, base, innovation_cov, delta,
 * k_star, location, seed) and re-validates the spec. */
MCUSUM_API mcusum_status mcusum_sim_spec_set(mcusum_sim_spec* spec, const char* key, const char* value);

/* key = value text of the full spec; owned by the spec until it changes. */
MCUSUM_API const char* mcusum_sim_spec_format(mcusum_sim_spec* spec);

/* change_index receives floor(k_star*T), or -1 without a change. */
MCUSUM_API mcusum_status mcusum_simulate(const mcusum_sim_spec* spec, mcusum_series** out,
                                         int64_t* change_index);

MCUSUM_API void mcusum_sim_spec_free(mcusum_sim_spec* spec);

/* ---- experiment grids ------------------------------------------------ */

typedef struct mcusum_grid_overrides {
    uint64_t reps;      /* 0: keep the file's value */
    int64_t base_seed;  /* < 0: keep */
    int always_estimate; /* < 0: keep */
    unsigned threads;   /* 0: 1 */
} mcusum_grid_overrides;

MCUSUM_API mcusum_grid_overrides mcusum_grid_overrides_default(void);

/* Runs every cell of a grid file. out_dir may be NULL (no artifacts).
 * Per-cell failures are recorded in the report, not returned. */
MCUSUM_API mcusum_status mcusum_run_grid_file(const char* path, const mcusum_cv_table* table,
                                              const mcusum_grid_overrides* overrides,
                                              const char* out_dir, mcusum_grid_report** out);

typedef struct mcusum_metrics_row {
    const char* cell_id;
    double deviation;
    double abs_deviation;
    double rms_deviation;
    double msq_deviation;
    size_t estimates;
    size_t reject_count;
    size_t replications;
    size_t failed_reps;
    const char* first_error; /* "" when every replication completed */
} mcusum_metrics_row;

MCUSUM_API const char* mcusum_grid_report_name(const mcusum_grid_report* report);
MCUSUM_API size_t mcusum_grid_report_rows(const mcusum_grid_report* report);
MCUSUM_API mcusum_status mcusum_grid_report_row(const mcusum_grid_report* report, size_t i,
                                                mcusum_metrics_row* out);
MCUSUM_API void mcusum_grid_report_free(mcusum_grid_report* report);

#ifdef __cplusplus
}
#endif

#endif
