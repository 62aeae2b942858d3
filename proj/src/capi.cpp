#include "mcusum/mcusum.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "mcusum/critical_values.hpp"
#include "mcusum/cusum.hpp"
#include "mcusum/error.hpp"
#include "mcusum/experiments.hpp"
#include "mcusum/series.hpp"
#include "mcusum/simulator.hpp"
#include "mcusum/spectral.hpp"

struct mcusum_series {
    mcusum::MultivariateSeries value;
};

struct mcusum_cv_table {
    mcusum::CriticalValueTable value;
};

struct mcusum_result {
    mcusum::TestResult value;
    std::string report;
};

struct mcusum_scan {
    mcusum::ExtremaScan value;
    Eigen::Index length = 0;
    int rounds = 0;
};

struct mcusum_sim_spec {
    mcusum::ConfigKeys keys;
    std::string origin;
    mcusum::SimulationSpec value;
    std::string text;
};

struct mcusum_grid_report {
    std::string name;
    std::vector<mcusum::MetricsRow> rows;
    std::vector<std::string> first_errors;
};

namespace {

thread_local std::string last_error;

mcusum_status status_of(mcusum::ErrorCategory category) {
    using C = mcusum::ErrorCategory;
    switch (category) {
        case C::MissingColumn: return MCUSUM_E_MISSING_COLUMN;
        case C::NonNumericCell: return MCUSUM_E_NON_NUMERIC_CELL;
        case C::TooShort: return MCUSUM_E_TOO_SHORT;
        case C::NonFinite: return MCUSUM_E_NON_FINITE;
        case C::DomainError: return MCUSUM_E_DOMAIN;
        case C::BandwidthTooLarge: return MCUSUM_E_BANDWIDTH_TOO_LARGE;
        case C::DegenerateSpectrum: return MCUSUM_E_DEGENERATE_SPECTRUM;
        case C::DimensionMismatch: return MCUSUM_E_DIMENSION_MISMATCH;
        case C::MissingCriticalValue: return MCUSUM_E_MISSING_CRITICAL_VALUE;
        case C::NotPositiveDefinite: return MCUSUM_E_NOT_POSITIVE_DEFINITE;
        case C::ParseError: return MCUSUM_E_PARSE;
        case C::IoError: return MCUSUM_E_IO;
        case C::Internal: return MCUSUM_E_INTERNAL;
    }
    return MCUSUM_E_INTERNAL;
}

mcusum_status fail(mcusum_status status, const std::string& message) {
    last_error = message;
    return status;
}

template <class F>
mcusum_status guarded(F&& body) {
    try {
        last_error.clear();
        return body();
    } catch (const mcusum::Error& e) {
        return fail(status_of(e.category()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(MCUSUM_E_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(MCUSUM_E_INTERNAL, e.what());
    } catch (...) {
        return fail(MCUSUM_E_INTERNAL, "unknown failure");
    }
}

#define REQUIRE_ARG(cond)                                                   \
    do {                                                                    \
        if (!(cond)) return fail(MCUSUM_E_INVALID_ARGUMENT, "invalid argument: " #cond); \
    } while (0)

std::optional<int> bandwidth_arg(int bandwidth) {
    if (bandwidth <= 0) return std::nullopt;
    return bandwidth;
}

void copy_matrix(const Eigen::MatrixXd& m, double* out) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) *out++ = m(i, j);
    }
}

mcusum_cv_entry to_c(const mcusum::CriticalValueEntry& e) {
    return {e.d, e.alpha, e.value, e.paths, e.grid, e.seed, e.stderr_estimate};
}

}  // namespace

extern "C" {

const char* mcusum_version(void) { return "1.0.0"; }

const char* mcusum_status_name(mcusum_status status) {
    switch (status) {
        case MCUSUM_OK: return "Ok";
        case MCUSUM_E_MISSING_COLUMN: return "MissingColumn";
        case MCUSUM_E_NON_NUMERIC_CELL: return "NonNumericCell";
        case MCUSUM_E_TOO_SHORT: return "TooShort";
        case MCUSUM_E_NON_FINITE: return "NonFinite";
        case MCUSUM_E_DOMAIN: return "DomainError";
        case MCUSUM_E_BANDWIDTH_TOO_LARGE: return "BandwidthTooLarge";
        case MCUSUM_E_DEGENERATE_SPECTRUM: return "DegenerateSpectrum";
        case MCUSUM_E_DIMENSION_MISMATCH: return "DimensionMismatch";
        case MCUSUM_E_MISSING_CRITICAL_VALUE: return "MissingCriticalValue";
        case MCUSUM_E_NOT_POSITIVE_DEFINITE: return "NotPositiveDefinite";
        case MCUSUM_E_PARSE: return "ParseError";
        case MCUSUM_E_IO: return "IoError";
        case MCUSUM_E_INVALID_ARGUMENT: return "InvalidArgument";
        case MCUSUM_E_INTERNAL: return "Internal";
    }
    return "Unknown";
}

const char* mcusum_last_error(void) { return last_error.c_str(); }

// ---- series

mcusum_status mcusum_series_from_data(const double* values, size_t length, size_t dim,
                                      mcusum_series** out) {
    REQUIRE_ARG(out);
    REQUIRE_ARG(values || length * dim == 0);
    return guarded([&] {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(dim));
        for (size_t t = 0; t < length; ++t) {
            for (size_t j = 0; j < dim; ++j) {
                m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = values[t * dim + j];
            }
        }
        *out = new mcusum_series{mcusum::MultivariateSeries(std::move(m))};
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_series_load_csv(const char* path, const char* const* columns, size_t ncolumns,
                                     const char* date_column, size_t skip_rows, mcusum_series** out) {
    REQUIRE_ARG(path && out);
    REQUIRE_ARG(columns || ncolumns == 0);
    return guarded([&] {
        mcusum::IngestConfig config;
        config.skip_rows = skip_rows;
        if (date_column) config.date_column = date_column;
        for (size_t i = 0; i < ncolumns; ++i) config.columns.emplace_back(columns[i]);
        if (config.columns.empty()) {
            for (auto& name : mcusum::read_csv_header(path, skip_rows)) {
                if (!date_column || name != date_column) config.columns.push_back(std::move(name));
            }
        }
        *out = new mcusum_series{mcusum::load_csv(path, config)};
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_series_write_csv(const mcusum_series* series, const char* path) {
    REQUIRE_ARG(series && path);
    return guarded([&] {
        mcusum::write_csv(series->value, path);
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_series_transform(const mcusum_series* series, const char* transform,
                                      mcusum_series** out) {
    REQUIRE_ARG(series && transform && out);
    return guarded([&] {
        const auto kind = mcusum::parse_transform(transform);
        *out = new mcusum_series{mcusum::apply_transform(series->value, kind)};
        return MCUSUM_OK;
    });
}

size_t mcusum_series_length(const mcusum_series* series) {
    return series ? static_cast<size_t>(series->value.length()) : 0;
}

size_t mcusum_series_dim(const mcusum_series* series) {
    return series ? static_cast<size_t>(series->value.dim()) : 0;
}

mcusum_status mcusum_series_values(const mcusum_series* series, double* out) {
    REQUIRE_ARG(series && out);
    copy_matrix(series->value.values(), out);
    return MCUSUM_OK;
}

mcusum_status mcusum_series_shift(const mcusum_series* series, size_t after, const double* delta,
                                  mcusum_series** out) {
    REQUIRE_ARG(series && delta && out);
    return guarded([&] {
        const Eigen::VectorXd shift = Eigen::Map<const Eigen::VectorXd>(delta, series->value.dim());
        *out = new mcusum_series{
            mcusum::inject_shift(series->value, static_cast<Eigen::Index>(after), shift)};
        return MCUSUM_OK;
    });
}

void mcusum_series_free(mcusum_series* series) { delete series; }

// ---- spectral

mcusum_status mcusum_default_bandwidth(size_t length, int* out) {
    REQUIRE_ARG(out);
    return guarded([&] {
        *out = mcusum::default_bandwidth(static_cast<Eigen::Index>(length));
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_long_run_covariance(const mcusum_series* series, int bandwidth, double* sigma,
                                         int* bandwidth_used, double* ridge) {
    REQUIRE_ARG(series && sigma);
    return guarded([&] {
        const auto lrc = mcusum::long_run_covariance(series->value, bandwidth_arg(bandwidth));
        copy_matrix(lrc.sigma, sigma);
        if (bandwidth_used) *bandwidth_used = lrc.bandwidth;
        if (ridge) *ridge = lrc.ridge_applied;
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_write_spectrum_csv(const mcusum_series* series, int bandwidth, const char* path) {
    REQUIRE_ARG(series && path);
    return guarded([&] {
        mcusum::write_spectrum_csv(series->value, bandwidth_arg(bandwidth), path);
        return MCUSUM_OK;
    });
}

// ---- critical values

mcusum_mc_budget mcusum_mc_budget_default(void) {
    const mcusum::McBudget b;
    return {b.paths, b.grid, b.seed, b.threads};
}

mcusum_status mcusum_cv_table_new(mcusum_cv_table** out) {
    REQUIRE_ARG(out);
    return guarded([&] {
        *out = new mcusum_cv_table{};
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_cv_table_shipped(mcusum_cv_table** out) {
    REQUIRE_ARG(out);
    return guarded([&] {
        *out = new mcusum_cv_table{mcusum::CriticalValueTable::shipped()};
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_cv_table_load(const char* path, mcusum_cv_table** out) {
    REQUIRE_ARG(path && out);
    return guarded([&] {
        *out = new mcusum_cv_table{mcusum::CriticalValueTable::load_csv(path)};
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_cv_table_save(const mcusum_cv_table* table, const char* path) {
    REQUIRE_ARG(table && path);
    return guarded([&] {
        table->value.save_csv(path);
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_cv_table_lookup(const mcusum_cv_table* table, int d, double alpha,
                                     mcusum_cv_entry* out) {
    REQUIRE_ARG(table && out);
    const auto entry = table->value.find(d, alpha);
    if (!entry) {
        return fail(MCUSUM_E_MISSING_CRITICAL_VALUE,
                    "no critical value for d=" + std::to_string(d) + ", alpha=" + std::to_string(alpha));
    }
    *out = to_c(*entry);
    return MCUSUM_OK;
}

size_t mcusum_cv_table_size(const mcusum_cv_table* table) {
    return table ? table->value.entries().size() : 0;
}

mcusum_status mcusum_cv_table_entry(const mcusum_cv_table* table, size_t index, mcusum_cv_entry* out) {
    REQUIRE_ARG(table && out);
    const auto entries = table->value.entries();
    REQUIRE_ARG(index < entries.size());
    *out = to_c(entries[index]);
    return MCUSUM_OK;
}

mcusum_status mcusum_cv_table_compute(mcusum_cv_table* table, int d, const double* alphas,
                                      size_t nalphas, const mcusum_mc_budget* budget) {
    REQUIRE_ARG(table && alphas && nalphas > 0);
    return guarded([&] {
        mcusum::McBudget b;
        if (budget) {
            b.paths = budget->paths;
            b.grid = budget->grid;
            b.seed = budget->seed;
            b.threads = std::max(1u, budget->threads);
        }
        const std::vector<double> levels(alphas, alphas + nalphas);
        for (const auto& entry : mcusum::compute_critical_values(d, levels, b)) table->value.insert(entry);
        return MCUSUM_OK;
    });
}

void mcusum_cv_table_free(mcusum_cv_table* table) { delete table; }

mcusum_status mcusum_kolmogorov_quantile(double alpha, double* out) {
    REQUIRE_ARG(out);
    return guarded([&] {
        *out = mcusum::kolmogorov_quantile(alpha);
        return MCUSUM_OK;
    });
}

// ---- test, estimation, scan

mcusum_test_options mcusum_test_options_default(void) { return {0.05, 0, 0}; }

mcusum_status mcusum_test(const mcusum_series* series, const mcusum_cv_table* table,
                          const mcusum_test_options* options, mcusum_result** out) {
    REQUIRE_ARG(series && table && out);
    return guarded([&] {
        const auto c_options = options ? *options : mcusum_test_options_default();
        mcusum::TestOptions o;
        o.alpha = c_options.alpha;
        o.bandwidth = bandwidth_arg(c_options.bandwidth);
        o.two_pass = c_options.two_pass != 0;
        auto result = mcusum::run_test(series->value, table->value, o);
        auto report = mcusum::format_test_result(result);
        *out = new mcusum_result{std::move(result), std::move(report)};
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_analyze(const mcusum_series* series, int bandwidth, mcusum_result** out) {
    REQUIRE_ARG(series && out);
    return guarded([&] {
        mcusum::TestResult result;
        result.d = static_cast<int>(series->value.dim());
        result.critical_value = std::nan("");
        result.alpha = std::nan("");
        result.sigma = mcusum::long_run_covariance(series->value, bandwidth_arg(bandwidth));
        result.curve = mcusum::quadform(mcusum::cusum(series->value), result.sigma);
        const auto& q = result.curve.q;
        Eigen::Index best = 0;
        result.statistic = q.maxCoeff(&best);
        result.argmax = best;
        auto report = mcusum::format_test_result(result);
        *out = new mcusum_result{std::move(result), std::move(report)};
        return MCUSUM_OK;
    });
}

double mcusum_result_statistic(const mcusum_result* result) {
    return result ? result->value.statistic : std::nan("");
}

double mcusum_result_critical_value(const mcusum_result* result) {
    return result ? result->value.critical_value : std::nan("");
}

int mcusum_result_reject(const mcusum_result* result) { return result && result->value.reject ? 1 : 0; }

size_t mcusum_result_argmax(const mcusum_result* result) {
    return result ? static_cast<size_t>(result->value.argmax) : 0;
}

int mcusum_result_bandwidth(const mcusum_result* result) {
    return result ? result->value.sigma.bandwidth : 0;
}

size_t mcusum_result_dim(const mcusum_result* result) {
    return result ? static_cast<size_t>(result->value.d) : 0;
}

mcusum_status mcusum_result_sigma(const mcusum_result* result, double* out) {
    REQUIRE_ARG(result && out);
    copy_matrix(result->value.sigma.sigma, out);
    return MCUSUM_OK;
}

const char* mcusum_result_report(const mcusum_result* result) {
    return result ? result->report.c_str() : "";
}

mcusum_status mcusum_result_write_curve(const mcusum_result* result, const char* path) {
    REQUIRE_ARG(result && path);
    return guarded([&] {
        mcusum::write_curve_csv(result->value.curve, path);
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_result_estimate(const mcusum_result* result, const char* method, double trim,
                                     mcusum_estimate* out) {
    REQUIRE_ARG(result && method && out);
    return guarded([&] {
        const auto est =
            mcusum::estimate_changepoint(result->value.curve, mcusum::parse_method(method), trim);
        *out = {est.k_hat, static_cast<size_t>(est.t_hat), est.curve_value};
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_result_scan(const mcusum_result* result, int smoothing_window,
                                 double min_prominence, mcusum_scan** out) {
    REQUIRE_ARG(result && out);
    return guarded([&] {
        const auto& curve = result->value.curve;
        const int window =
            smoothing_window > 0 ? smoothing_window : mcusum::default_smoothing_window(curve.length);
        std::optional<double> prominence;
        if (min_prominence >= 0.0) prominence = min_prominence;
        *out = new mcusum_scan{mcusum::scan_extrema(curve, window, prominence), curve.length};
        return MCUSUM_OK;
    });
}

mcusum_status mcusum_result_scan_refined(const mcusum_result* result, const mcusum_series* series,
                                         int smoothing_window, double min_prominence, int bandwidth,
                                         int max_rounds, mcusum_scan** out) {
    REQUIRE_ARG(result && series && out);
    REQUIRE_ARG(static_cast<Eigen::Index>(series->value.length()) == result->value.curve.length);
    return guarded([&] {
        const auto& curve = result->value.curve;
        const int window =
            smoothing_window > 0 ? smoothing_window : mcusum::default_smoothing_window(curve.length);
        std::optional<double> prominence;
        if (min_prominence >= 0.0) prominence = min_prominence;
        auto refined = mcusum::refine_scan(series->value, curve, window, prominence, bandwidth_arg(bandwidth),
                                           max_rounds);
        *out = new mcusum_scan{std::move(refined.scan), curve.length, refined.rounds};
        return MCUSUM_OK;
    });
}

size_t mcusum_scan_count(const mcusum_scan* scan) { return scan ? scan->value.extrema.size() : 0; }

mcusum_status mcusum_scan_extremum(const mcusum_scan* scan, size_t i, mcusum_extremum* out) {
    REQUIRE_ARG(scan && out);
    REQUIRE_ARG(i < scan->value.extrema.size());
    const auto& e = scan->value.extrema[i];
    *out = {static_cast<size_t>(e.index), e.value, e.kind == mcusum::ExtremumKind::Max ? 1 : 0,
            e.prominence};
    return MCUSUM_OK;
}

int mcusum_scan_window(const mcusum_scan* scan) { return scan ? scan->value.smoothing_window : 0; }

int mcusum_scan_rounds(const mcusum_scan* scan) { return scan ? scan->rounds : 0; }

double mcusum_scan_min_prominence(const mcusum_scan* scan) {
    return scan ? scan->value.min_prominence : std::nan("");
}

mcusum_status mcusum_scan_write_smoothed(const mcusum_scan* scan, const char* path) {
    REQUIRE_ARG(scan && path);
    return guarded([&] {
        std::ofstream out(path);
        if (!out) throw mcusum::Error(mcusum::ErrorCategory::IoError, std::string("cannot write '") + path + "'");
        out.precision(17);
        out << "k,t,q_smoothed\n";
        const auto& y = scan->value.smoothed;
        const double n = static_cast<double>(scan->length);
        for (Eigen::Index k = 0; k < y.size(); ++k) {
            out << k << ',' << static_cast<double>(k) / n << ',' << y(k) << '\n';
        }
        if (!out) throw mcusum::Error(mcusum::ErrorCategory::IoError, std::string("write to '") + path + "' failed");
        return MCUSUM_OK;
    });
}

void mcusum_scan_free(mcusum_scan* scan) { delete scan; }
void mcusum_result_free(mcusum_result* result) { delete result; }

// ---- simulation

namespace {

mcusum_status make_spec(mcusum::ConfigKeys keys, std::string origin, mcusum_sim_spec** out) {
    auto spec = mcusum::spec_from_keys(keys, origin);
    *out = new mcusum_sim_spec{std::move(keys), std::move(origin), std::move(spec), {}};
    return MCUSUM_OK;
}

}  // namespace

mcusum_status mcusum_sim_spec_default(int d, mcusum_sim_spec** out) {
    REQUIRE_ARG(out);
    return guarded([&] {
        mcusum::ConfigKeys keys;
        keys["d"] = {std::to_string(d), 0};
        return make_spec(std::move(keys), "<default>", out);
    });
}

mcusum_status mcusum_sim_spec_load(const char* path, mcusum_sim_spec** out) {
    REQUIRE_ARG(path && out);
    return guarded([&] {
        std::ifstream in(path);
        if (!in) throw mcusum::Error(mcusum::ErrorCategory::IoError, std::string("cannot open '") + path + "'");
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return make_spec(mcusum::parse_spec_keys(text, path), path, out);
    });
}

mcusum_status mcusum_sim_spec_parse(const char* text, mcusum_sim_spec** out) {
    REQUIRE_ARG(text && out);
    return guarded([&] { return make_spec(mcusum::parse_spec_keys(text, "<spec>"), "<spec>", out); });
}

mcusum_status mcusum_sim_spec_set(mcusum_sim_spec* spec, const char* key, const char* value) {
    REQUIRE_ARG(spec && key && value);
    return guarded([&] {
        if (!mcusum::is_spec_key(key)) {
            throw mcusum::Error(mcusum::ErrorCategory::ParseError, std::string("unknown key '") + key + "'");
        }
        auto keys = spec->keys;
        keys[key] = {value, 0};
        spec->value = mcusum::spec_from_keys(keys, spec->origin);
        spec->keys = std::move(keys);
        spec->text.clear();
        return MCUSUM_OK;
    });
}

const char* mcusum_sim_spec_format(mcusum_sim_spec* spec) {
    if (!spec) return "";
    spec->text = mcusum::format_simulation_spec(spec->value);
    return spec->text.c_str();
}

mcusum_status mcusum_simulate(const mcusum_sim_spec* spec, mcusum_series** out, int64_t* change_index) {
    REQUIRE_ARG(spec && out);
    return guarded([&] {
        auto simulated = mcusum::gen_series(spec->value);
        if (change_index) *change_index = simulated.change_index ? *simulated.change_index : -1;
        *out = new mcusum_series{std::move(simulated.series)};
        return MCUSUM_OK;
    });
}

void mcusum_sim_spec_free(mcusum_sim_spec* spec) { delete spec; }

// ---- experiment grids

mcusum_grid_overrides mcusum_grid_overrides_default(void) { return {0, -1, -1, 1}; }

mcusum_status mcusum_run_grid_file(const char* path, const mcusum_cv_table* table,
                                   const mcusum_grid_overrides* overrides, const char* out_dir,
                                   mcusum_grid_report** out) {
    REQUIRE_ARG(path && table && out);
    return guarded([&] {
        auto grid = mcusum::load_grid(path);
        const auto o = overrides ? *overrides : mcusum_grid_overrides_default();
        if (o.reps > 0) grid.reps = o.reps;
        if (o.base_seed >= 0) grid.options.base_seed = static_cast<std::uint64_t>(o.base_seed);
        if (o.always_estimate >= 0) grid.options.always_estimate = o.always_estimate != 0;
        grid.options.threads = std::max(1u, o.threads);

        std::optional<std::string> dir;
        if (out_dir) dir = out_dir;
        auto report = std::make_unique<mcusum_grid_report>();
        report->name = grid.name;
        report->rows = mcusum::run_grid(grid, table->value, dir);
        for (const auto& row : report->rows) {
            std::string first;
            for (const auto& run : row.runs) {
                if (run.failed) {
                    first = run.error;
                    break;
                }
            }
            report->first_errors.push_back(std::move(first));
        }
        *out = report.release();
        return MCUSUM_OK;
    });
}

const char* mcusum_grid_report_name(const mcusum_grid_report* report) {
    return report ? report->name.c_str() : "";
}

size_t mcusum_grid_report_rows(const mcusum_grid_report* report) {
    return report ? report->rows.size() : 0;
}

mcusum_status mcusum_grid_report_row(const mcusum_grid_report* report, size_t i, mcusum_metrics_row* out) {
    REQUIRE_ARG(report && out);
    REQUIRE_ARG(i < report->rows.size());
    const auto& r = report->rows[i];
    *out = {r.cell_id.c_str(), r.deviation,    r.abs_deviation, r.rms_deviation,
            r.msq_deviation,   r.estimates,    r.reject_count,  r.replications,
            r.failed_reps,     report->first_errors[i].c_str()};
    return MCUSUM_OK;
}

void mcusum_grid_report_free(mcusum_grid_report* report) { delete report; }

}  // extern "C"
