#include <mcusum/mcusum.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct Failure {
    mcusum_status status;
    std::string message;
};

void check(mcusum_status status) {
    if (status != MCUSUM_OK) throw Failure{status, mcusum_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using Series = std::unique_ptr<mcusum_series, Deleter<mcusum_series, mcusum_series_free>>;
using Table = std::unique_ptr<mcusum_cv_table, Deleter<mcusum_cv_table, mcusum_cv_table_free>>;
using Result = std::unique_ptr<mcusum_result, Deleter<mcusum_result, mcusum_result_free>>;
using Scan = std::unique_ptr<mcusum_scan, Deleter<mcusum_scan, mcusum_scan_free>>;
using Spec = std::unique_ptr<mcusum_sim_spec, Deleter<mcusum_sim_spec, mcusum_sim_spec_free>>;
using Report = std::unique_ptr<mcusum_grid_report, Deleter<mcusum_grid_report, mcusum_grid_report_free>>;

struct Globals {
    long long seed = -1;
    unsigned threads = 1;
    std::string output_dir = ".";
};

struct Input {
    std::string path;
    std::vector<std::string> columns;
    std::string date_column;
    std::size_t skip_rows = 0;
    std::string transform = "none";
};

struct Analysis {
    double alpha = 0.05;
    int bandwidth = 0;
    std::string method = "quadform_argmax";
    bool two_pass = false;
    double trim = 0.0;
    std::string cv_table;
};

struct ScanFlags {
    bool enabled = false;
    int window = 0;
    double min_prominence = -1.0;
};

std::string out_path(const Globals& g, const std::string& name) {
    fs::create_directories(g.output_dir);
    return (fs::path(g.output_dir) / name).string();
}

void add_input(CLI::App* cmd, Input& in) {
    cmd->add_option("input", in.path, "Input CSV with a header row")->required()->check(CLI::ExistingFile);
    cmd->add_option("--columns", in.columns,
                    "Columns to analyse, in order (default: every column except --date-column)")
        ->delimiter(',');
    cmd->add_option("--date-column", in.date_column, "Column holding time labels (default: none)");
    cmd->add_option("--skip-rows", in.skip_rows, "Lines to skip before the header")->capture_default_str();
    cmd->add_option("--transform", in.transform, "Preprocessing applied before analysis")
        ->check(CLI::IsMember({"none", "center", "log", "diff"}))
        ->capture_default_str();
}

void add_bandwidth(CLI::App* cmd, Analysis& a) {
    cmd->add_option("--bandwidth", a.bandwidth,
                    "Spectral smoothing half-width h (default: floor(T^{1/4}))")
        ->check(CLI::PositiveNumber);
}

void add_estimator(CLI::App* cmd, Analysis& a) {
    cmd->add_option("--method", a.method, "Change-point estimator")
        ->check(CLI::IsMember({"quadform_argmax", "norm_argmax"}))
        ->capture_default_str();
    cmd->add_option("--trim", a.trim, "Exclude the first and last trim*T indices from the argmax")
        ->check(CLI::Range(0.0, 0.4999))
        ->capture_default_str();
}

void add_scan(CLI::App* cmd, ScanFlags& s) {
    cmd->add_option("--smoothing-window", s.window,
                    "Odd moving-average window for the scan (default: 2*floor(T^{1/4})+1)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--min-prominence", s.min_prominence,
                    "Minimum extremum prominence (default: 10% of the smoothed curve's range)")
        ->check(CLI::NonNegativeNumber);
}

Series load_input(const Input& in) {
    std::vector<const char*> names;
    for (const auto& c : in.columns) names.push_back(c.c_str());
    mcusum_series* raw = nullptr;
    check(mcusum_series_load_csv(in.path.c_str(), names.empty() ? nullptr : names.data(), names.size(),
                                 in.date_column.empty() ? nullptr : in.date_column.c_str(), in.skip_rows,
                                 &raw));
    Series series(raw);
    if (in.transform == "none") return series;
    mcusum_series* transformed = nullptr;
    check(mcusum_series_transform(series.get(), in.transform.c_str(), &transformed));
    return Series(transformed);
}

Table load_table(const std::string& path) {
    mcusum_cv_table* raw = nullptr;
    check(path.empty() ? mcusum_cv_table_shipped(&raw) : mcusum_cv_table_load(path.c_str(), &raw));
    return Table(raw);
}

void print_estimate(const mcusum_result* result, const Analysis& a) {
    mcusum_estimate est{};
    check(mcusum_result_estimate(result, a.method.c_str(), a.trim, &est));
    std::printf("method=%s\nt_hat=%zu\nk_hat=%.10g\ncurve_value=%.10g\n", a.method.c_str(), est.t_hat,
                est.k_hat, est.curve_value);
}

void run_scan(const mcusum_result* result, const mcusum_series* series, const Analysis& a, const ScanFlags& s,
              const Globals& g) {
    mcusum_scan* raw = nullptr;
    if (a.two_pass) {
        check(mcusum_result_scan_refined(result, series, s.window, s.min_prominence, a.bandwidth, 5, &raw));
    } else {
        check(mcusum_result_scan(result, s.window, s.min_prominence, &raw));
    }
    Scan scan(raw);
    const auto extrema_path = out_path(g, "extrema.csv");
    std::ofstream out(extrema_path);
    if (!out) throw Failure{MCUSUM_E_IO, "cannot write '" + extrema_path + "'"};
    out.precision(12);
    out << "index,kind,value,prominence\n";
    const auto count = mcusum_scan_count(scan.get());
    std::printf("scan_window=%d\nscan_min_prominence=%.10g\nscan_rounds=%d\nextrema=%zu\n",
                mcusum_scan_window(scan.get()), mcusum_scan_min_prominence(scan.get()),
                mcusum_scan_rounds(scan.get()), count);
    for (std::size_t i = 0; i < count; ++i) {
        mcusum_extremum e{};
        check(mcusum_scan_extremum(scan.get(), i, &e));
        const char* kind = e.is_max ? "max" : "min";
        out << e.index << ',' << kind << ',' << e.value << ',' << e.prominence << '\n';
        std::printf("extremum=%s index=%zu value=%.10g prominence=%.10g\n", kind, e.index, e.value,
                    e.prominence);
    }
    check(mcusum_scan_write_smoothed(scan.get(), out_path(g, "smoothed.csv").c_str()));
}

int cmd_simulate(const Globals& g, const std::string& config, const std::vector<std::string>& sets,
                 const std::string& output) {
    mcusum_sim_spec* raw = nullptr;
    check(config.empty() ? mcusum_sim_spec_default(2, &raw) : mcusum_sim_spec_load(config.c_str(), &raw));
    Spec spec(raw);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Failure{MCUSUM_E_PARSE, "--set expects key=value, got '" + kv + "'"};
        check(mcusum_sim_spec_set(spec.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    if (g.seed >= 0) check(mcusum_sim_spec_set(spec.get(), "seed", std::to_string(g.seed).c_str()));

    mcusum_series* series_raw = nullptr;
    std::int64_t change = -1;
    check(mcusum_simulate(spec.get(), &series_raw, &change));
    Series series(series_raw);
    const auto path = out_path(g, output);
    check(mcusum_series_write_csv(series.get(), path.c_str()));
    std::ofstream meta(path + ".meta");
    if (!meta) throw Failure{MCUSUM_E_IO, "cannot write '" + path + ".meta'"};
    meta << mcusum_sim_spec_format(spec.get());
    meta << "change_index = " << (change >= 0 ? std::to_string(change) : "none") << '\n';
    std::printf("series=%s\nmetadata=%s.meta\nT=%zu\nd=%zu\nchange_index=%s\n", path.c_str(), path.c_str(),
                mcusum_series_length(series.get()), mcusum_series_dim(series.get()),
                change >= 0 ? std::to_string(change).c_str() : "none");
    return kExitOk;
}

int cmd_spectrum(const Globals& g, const Input& in, const Analysis& a, const std::string& output) {
    const auto series = load_input(in);
    const auto path = out_path(g, output);
    check(mcusum_write_spectrum_csv(series.get(), a.bandwidth, path.c_str()));
    const auto d = mcusum_series_dim(series.get());
    std::vector<double> sigma(d * d);
    int used = 0;
    double ridge = 0.0;
    check(mcusum_long_run_covariance(series.get(), a.bandwidth, sigma.data(), &used, &ridge));
    std::printf("spectrum=%s\nbandwidth=%d\nridge_applied=%.10g\n", path.c_str(), used, ridge);
    for (std::size_t i = 0; i < d; ++i) {
        std::printf("sigma_row%zu=", i + 1);
        for (std::size_t j = 0; j < d; ++j) std::printf(j ? ";%.10g" : "%.10g", sigma[i * d + j]);
        std::printf("\n");
    }
    return kExitOk;
}

int cmd_detect(const Globals& g, const Input& in, const Analysis& a, const ScanFlags& s,
               const std::string& emit_curve, bool always_estimate) {
    const auto series = load_input(in);
    const auto table = load_table(a.cv_table);
    mcusum_test_options options = mcusum_test_options_default();
    options.alpha = a.alpha;
    options.bandwidth = a.bandwidth;
    options.two_pass = a.two_pass ? 1 : 0;
    mcusum_result* raw = nullptr;
    check(mcusum_test(series.get(), table.get(), &options, &raw));
    Result result(raw);
    std::fputs(mcusum_result_report(result.get()), stdout);
    if (mcusum_result_reject(result.get()) || always_estimate) print_estimate(result.get(), a);
    if (!emit_curve.empty()) {
        const auto path = out_path(g, emit_curve);
        check(mcusum_result_write_curve(result.get(), path.c_str()));
        std::printf("curve=%s\n", path.c_str());
    }
    if (s.enabled) run_scan(result.get(), series.get(), a, s, g);
    return kExitOk;
}

Result analyze(const mcusum_series* series, const Analysis& a) {
    mcusum_result* raw = nullptr;
    check(mcusum_analyze(series, a.bandwidth, &raw));
    return Result(raw);
}

int cmd_estimate(const Input& in, const Analysis& a) {
    const auto series = load_input(in);
    const auto result = analyze(series.get(), a);
    print_estimate(result.get(), a);
    return kExitOk;
}

int cmd_scan(const Globals& g, const Input& in, const Analysis& a, const ScanFlags& s,
             const std::string& emit_curve) {
    const auto series = load_input(in);
    const auto result = analyze(series.get(), a);
    const auto path = out_path(g, emit_curve);
    check(mcusum_result_write_curve(result.get(), path.c_str()));
    std::printf("curve=%s\n", path.c_str());
    run_scan(result.get(), series.get(), a, s, g);
    return kExitOk;
}

int cmd_critval(const Globals& g, const std::vector<int>& dims, const std::vector<double>& alphas,
                mcusum_mc_budget budget, const std::string& output, bool shipped) {
    if (g.seed >= 0) budget.seed = static_cast<std::uint64_t>(g.seed);
    budget.threads = g.threads;
    Table table;
    if (shipped) {
        table = load_table("");
    } else {
        mcusum_cv_table* raw = nullptr;
        check(mcusum_cv_table_new(&raw));
        table.reset(raw);
        for (const int d : dims) {
            check(mcusum_cv_table_compute(table.get(), d, alphas.data(), alphas.size(), &budget));
        }
    }
    std::printf("d,alpha,value,paths,grid,seed,stderr\n");
    for (std::size_t i = 0; i < mcusum_cv_table_size(table.get()); ++i) {
        mcusum_cv_entry e{};
        check(mcusum_cv_table_entry(table.get(), i, &e));
        std::printf("%d,%.4g,%.6f,%llu,%llu,%llu,%.6f\n", e.d, e.alpha, e.value,
                    static_cast<unsigned long long>(e.paths), static_cast<unsigned long long>(e.grid),
                    static_cast<unsigned long long>(e.seed), e.stderr_estimate);
    }
    if (!shipped) {
        for (const double alpha : alphas) {
            for (const int d : dims) {
                if (d != 1) continue;
                double exact = 0.0;
                check(mcusum_kolmogorov_quantile(alpha, &exact));
                std::printf("# d=1 alpha=%.4g closed form %.6f\n", alpha, exact);
            }
        }
    }
    if (!output.empty()) {
        const auto path = out_path(g, output);
        check(mcusum_cv_table_save(table.get(), path.c_str()));
    }
    return kExitOk;
}

int cmd_bench(const Globals& g, const std::vector<std::string>& grids, const std::string& cv_table,
              std::uint64_t reps, bool keep_going, bool always_estimate) {
    const auto table = load_table(cv_table);
    auto overrides = mcusum_grid_overrides_default();
    overrides.reps = reps;
    overrides.threads = g.threads;
    if (g.seed >= 0) overrides.base_seed = g.seed;
    if (always_estimate) overrides.always_estimate = 1;
    fs::create_directories(g.output_dir);
    bool any_failed = false;
    for (const auto& grid : grids) {
        mcusum_grid_report* raw = nullptr;
        check(mcusum_run_grid_file(grid.c_str(), table.get(), &overrides, g.output_dir.c_str(), &raw));
        Report report(raw);
        const std::string name = mcusum_grid_report_name(report.get());
        std::printf("grid=%s rows=%zu output=%s\n", name.c_str(), mcusum_grid_report_rows(report.get()),
                    (fs::path(g.output_dir) / (name + ".csv")).string().c_str());
        for (std::size_t i = 0; i < mcusum_grid_report_rows(report.get()); ++i) {
            mcusum_metrics_row row{};
            check(mcusum_grid_report_row(report.get(), i, &row));
            std::printf("  %s reject=%zu/%zu deviation=%.4g abs=%.4g rms=%.4g\n", row.cell_id,
                        row.reject_count, row.replications, row.deviation, row.abs_deviation,
                        row.rms_deviation);
            if (row.failed_reps > 0) {
                any_failed = true;
                std::fprintf(stderr, "warning: cell %s: %zu failed replications (%s)\n", row.cell_id,
                             row.failed_reps, row.first_error);
            }
        }
    }
    if (any_failed && !keep_going) {
        throw Failure{MCUSUM_E_INTERNAL, "one or more cells failed; rerun with --keep-going to accept"};
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multivariate CUSUM change-point detection with spectral long-run covariance"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(mcusum_version()));

    Globals g;
    app.add_option("--seed", g.seed, "RNG seed override for simulate, critval and bench (default: keep each command's own)");
    app.add_option("--threads", g.threads, "Worker threads for critval and bench")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--output-dir", g.output_dir, "Directory for every file a command writes")
        ->capture_default_str();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a series from the linear-process model");
    std::string sim_config;
    std::vector<std::string> sim_sets;
    std::string sim_output = "series.csv";
    sim->add_option("--config", sim_config,
                    "key = value spec file (default: d=2, T=8000, m=10, rho=0.5, base=(1-rho)I, "
                    "innovation_cov unit diagonal / 0.5 off-diagonal, no change)")
        ->check(CLI::ExistingFile);
    sim->add_option("--set", sim_sets, "Override one spec key, e.g. --set T=16000 --set delta=0.5,1.2");
    sim->add_option("-o,--output", sim_output, "Series CSV name; metadata goes to <name>.meta")
        ->capture_default_str();

    // spectrum
    auto* spec = app.add_subcommand("spectrum", "Smoothed spectral density and long-run covariance");
    Input spec_in;
    Analysis spec_a;
    std::string spec_output = "spectrum.csv";
    add_input(spec, spec_in);
    add_bandwidth(spec, spec_a);
    spec->add_option("-o,--output", spec_output, "Spectrum CSV name")->capture_default_str();

    // detect
    auto* detect = app.add_subcommand("detect", "Test for a mean change and estimate its location");
    Input det_in;
    Analysis det_a;
    ScanFlags det_scan;
    std::string det_curve;
    bool det_always = false;
    add_input(detect, det_in);
    detect->add_option("--alpha", det_a.alpha, "Significance level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    add_bandwidth(detect, det_a);
    add_estimator(detect, det_a);
    detect->add_flag("--two-pass", det_a.two_pass,
                     "Re-estimate the long-run covariance after demeaning at a first-pass estimate; with --scan, "
                     "around the scanned maxima until they settle (default: off)");
    detect->add_option("--cv-table", det_a.cv_table, "Critical-value CSV (default: built-in table)")
        ->check(CLI::ExistingFile);
    detect->add_option("--emit-curve", det_curve, "Write the CUSUM/quadratic-form curve to this CSV name (default: not written)");
    detect->add_flag("--scan", det_scan.enabled, "List prominent local extrema of the smoothed curve (default: off)");
    add_scan(detect, det_scan);
    detect->add_flag("--always-estimate", det_always, "Estimate the change point even without rejection (default: off)");

    // estimate
    auto* estimate = app.add_subcommand("estimate", "Estimate the change point without testing");
    Input est_in;
    Analysis est_a;
    add_input(estimate, est_in);
    add_bandwidth(estimate, est_a);
    add_estimator(estimate, est_a);

    // scan
    auto* scan = app.add_subcommand("scan", "Multiple change-point candidates from curve extrema");
    Input scan_in;
    Analysis scan_a;
    ScanFlags scan_flags;
    scan_flags.enabled = true;
    std::string scan_curve = "curve.csv";
    add_input(scan, scan_in);
    add_bandwidth(scan, scan_a);
    add_scan(scan, scan_flags);
    scan->add_flag("--two-pass", scan_a.two_pass,
                   "Re-estimate the long-run covariance around the scanned maxima and rescan until they settle "
                   "(default: off)");
    scan->add_option("--emit-curve", scan_curve, "Curve CSV name")->capture_default_str();

    // critval
    auto* critval = app.add_subcommand("critval", "Monte Carlo critical values of sup sum of squared bridges");
    std::vector<int> cv_dims{1};
    std::vector<double> cv_alphas{0.10, 0.05, 0.01};
    auto budget = mcusum_mc_budget_default();
    std::string cv_output;
    bool cv_shipped = false;
    critval->add_option("--d", cv_dims, "Dimensions")->delimiter(',')->check(CLI::Range(1, 64))->capture_default_str();
    critval->add_option("--alpha", cv_alphas, "Levels")->delimiter(',')->check(CLI::Range(0.0, 1.0))->capture_default_str();
    critval->add_option("--paths", budget.paths, "Monte Carlo paths")->check(CLI::PositiveNumber)->capture_default_str();
    critval->add_option("--grid", budget.grid, "Grid points per path")->check(CLI::PositiveNumber)->capture_default_str();
    critval->add_option("-o,--output", cv_output, "Write the table to this CSV name (default: stdout only)");
    critval->add_flag("--shipped", cv_shipped, "Print the built-in table instead of simulating");
    critval->footer("The Monte Carlo seed defaults to " + std::to_string(budget.seed) + "; set it with the global --seed.");

    // bench
    auto* bench = app.add_subcommand("bench", "Run experiment grids and write table and histogram CSVs");
    std::vector<std::string> bench_grids;
    std::string bench_cv;
    std::uint64_t bench_reps = 0;
    bool bench_keep = false;
    bool bench_always = false;
    bench->add_option("grids", bench_grids, "Grid config files")->required()->check(CLI::ExistingFile);
    bench->add_option("--reps", bench_reps, "Replications per cell (default: the grid's reps, 30 if unset)");
    bench->add_flag("--keep-going", bench_keep, "Exit 0 even when some cells fail (default: off)");
    bench->add_flag("--always-estimate", bench_always,
                    "Estimate on every replication, not only rejecting ones (default: off)");
    bench->add_option("--cv-table", bench_cv, "Critical-value CSV (default: built-in table)")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitData;
    }

    try {
        if (*sim) return cmd_simulate(g, sim_config, sim_sets, sim_output);
        if (*spec) return cmd_spectrum(g, spec_in, spec_a, spec_output);
        if (*detect) return cmd_detect(g, det_in, det_a, det_scan, det_curve, det_always);
        if (*estimate) return cmd_estimate(est_in, est_a);
        if (*scan) return cmd_scan(g, scan_in, scan_a, scan_flags, scan_curve);
        if (*critval) return cmd_critval(g, cv_dims, cv_alphas, budget, cv_output, cv_shipped);
        if (*bench) return cmd_bench(g, bench_grids, bench_cv, bench_reps, bench_keep, bench_always);
    } catch (const Failure& f) {
        std::fprintf(stderr, "error: category=%s message=%s\n", mcusum_status_name(f.status), f.message.c_str());
        return f.status == MCUSUM_E_INTERNAL ? kExitInternal : kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: category=Internal message=%s\n", e.what());
        return kExitInternal;
    }
    return kExitData;
}
