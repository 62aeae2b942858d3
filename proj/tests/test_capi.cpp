#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "mcusum/mcusum.h"

using Catch::Matchers::ContainsSubstring;

namespace {

std::vector<double> step_data(std::size_t n, std::size_t change) {
    std::vector<double> values(n * 2);
    std::uint64_t state = 12345;
    auto uniform = [&] {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5;
    };
    for (std::size_t t = 0; t < n; ++t) {
        values[2 * t] = uniform() + (t >= change ? 1.0 : 0.0);
        values[2 * t + 1] = uniform();
    }
    return values;
}

}  // namespace

TEST_CASE("status names and errors", "[capi]") {
    CHECK(std::string(mcusum_status_name(MCUSUM_OK)) == "Ok");
    CHECK(std::string(mcusum_version()).size() > 0);

    mcusum_series* series = nullptr;
    const double values[] = {1.0, 2.0};
    CHECK(mcusum_series_from_data(values, 1, 2, &series) == MCUSUM_E_TOO_SHORT);
    CHECK(series == nullptr);
    CHECK(std::string(mcusum_last_error()).size() > 0);
    CHECK(mcusum_series_from_data(nullptr, 2, 1, &series) == MCUSUM_E_INVALID_ARGUMENT);

    const double bad[] = {1.0, NAN, 3.0, 4.0};
    CHECK(mcusum_series_from_data(bad, 4, 1, &series) == MCUSUM_E_NON_FINITE);

    mcusum_series* loaded = nullptr;
    CHECK(mcusum_series_load_csv("/nonexistent/file.csv", nullptr, 0, nullptr, 0, &loaded) == MCUSUM_E_IO);

    double q = 0.0;
    REQUIRE(mcusum_kolmogorov_quantile(0.05, &q) == MCUSUM_OK);
    CHECK(q == Catch::Approx(1.844432).margin(1e-5));
    CHECK(mcusum_kolmogorov_quantile(1.5, &q) == MCUSUM_E_DOMAIN);

    mcusum_series_free(nullptr);
    mcusum_result_free(nullptr);
}

TEST_CASE("series, test and estimate", "[capi]") {
    const auto data = step_data(800, 400);
    mcusum_series* series = nullptr;
    REQUIRE(mcusum_series_from_data(data.data(), 800, 2, &series) == MCUSUM_OK);
    CHECK(mcusum_series_length(series) == 800);
    CHECK(mcusum_series_dim(series) == 2);

    std::vector<double> back(1600);
    REQUIRE(mcusum_series_values(series, back.data()) == MCUSUM_OK);
    CHECK(back == data);

    int h = 0;
    REQUIRE(mcusum_default_bandwidth(800, &h) == MCUSUM_OK);
    CHECK(h == 5);
    double sigma[4];
    int used = 0;
    REQUIRE(mcusum_long_run_covariance(series, 0, sigma, &used, nullptr) == MCUSUM_OK);
    CHECK(used == 5);
    CHECK(sigma[1] == sigma[2]);
    CHECK(mcusum_long_run_covariance(series, 500, sigma, nullptr, nullptr) == MCUSUM_E_BANDWIDTH_TOO_LARGE);

    mcusum_cv_table* table = nullptr;
    REQUIRE(mcusum_cv_table_new(&table) == MCUSUM_OK);
    mcusum_result* result = nullptr;
    CHECK(mcusum_test(series, table, nullptr, &result) == MCUSUM_E_MISSING_CRITICAL_VALUE);

    const double alphas[] = {0.05};
    mcusum_mc_budget budget = mcusum_mc_budget_default();
    CHECK(budget.paths == 200000);
    budget.paths = 2000;
    budget.grid = 1000;
    REQUIRE(mcusum_cv_table_compute(table, 2, alphas, 1, &budget) == MCUSUM_OK);
    CHECK(mcusum_cv_table_size(table) == 1);
    mcusum_cv_entry entry{};
    REQUIRE(mcusum_cv_table_lookup(table, 2, 0.05, &entry) == MCUSUM_OK);
    CHECK(entry.paths == 2000);

    REQUIRE(mcusum_test(series, table, nullptr, &result) == MCUSUM_OK);
    CHECK(mcusum_result_reject(result) == 1);
    CHECK(mcusum_result_critical_value(result) == entry.value);
    CHECK(mcusum_result_dim(result) == 2);
    CHECK_THAT(mcusum_result_report(result), ContainsSubstring("reject="));

    mcusum_estimate est{};
    REQUIRE(mcusum_result_estimate(result, "quadform_argmax", 0.0, &est) == MCUSUM_OK);
    CHECK(est.t_hat > 380);
    CHECK(est.t_hat < 420);
    CHECK(est.k_hat == Catch::Approx(est.t_hat / 800.0));
    CHECK(mcusum_result_estimate(result, "median", 0.0, &est) == MCUSUM_E_DOMAIN);

    mcusum_scan* scan = nullptr;
    REQUIRE(mcusum_result_scan(result, 0, -1.0, &scan) == MCUSUM_OK);
    REQUIRE(mcusum_scan_count(scan) >= 1);
    mcusum_extremum ex{};
    bool near = false;
    for (std::size_t i = 0; i < mcusum_scan_count(scan); ++i) {
        REQUIRE(mcusum_scan_extremum(scan, i, &ex) == MCUSUM_OK);
        if (ex.is_max && ex.index > 370 && ex.index < 430) near = true;
    }
    CHECK(near);
    CHECK(mcusum_scan_extremum(scan, 1000, &ex) == MCUSUM_E_INVALID_ARGUMENT);
    CHECK(mcusum_scan_rounds(scan) == 0);
    mcusum_scan_free(scan);

    mcusum_scan* refined = nullptr;
    REQUIRE(mcusum_result_scan_refined(result, series, 0, -1.0, 0, 3, &refined) == MCUSUM_OK);
    CHECK(mcusum_scan_rounds(refined) >= 1);
    CHECK(mcusum_scan_rounds(refined) <= 3);
    mcusum_scan_free(refined);
    mcusum_series* other = nullptr;
    REQUIRE(mcusum_series_from_data(data.data(), 400, 2, &other) == MCUSUM_OK);
    CHECK(mcusum_result_scan_refined(result, other, 0, -1.0, 0, 3, &refined) == MCUSUM_E_INVALID_ARGUMENT);
    mcusum_series_free(other);

    mcusum_result* curve_only = nullptr;
    REQUIRE(mcusum_analyze(series, 0, &curve_only) == MCUSUM_OK);
    CHECK(std::isnan(mcusum_result_critical_value(curve_only)));
    CHECK(mcusum_result_reject(curve_only) == 0);
    CHECK(mcusum_result_argmax(curve_only) == mcusum_result_argmax(result));

    mcusum_result_free(curve_only);
    mcusum_result_free(result);
    mcusum_cv_table_free(table);
    mcusum_series_free(series);
}

TEST_CASE("simulation handles", "[capi]") {
    mcusum_sim_spec* spec = nullptr;
    REQUIRE(mcusum_sim_spec_default(2, &spec) == MCUSUM_OK);
    REQUIRE(mcusum_sim_spec_set(spec, "T", "1000") == MCUSUM_OK);
    REQUIRE(mcusum_sim_spec_set(spec, "delta", "1,0") == MCUSUM_OK);
    REQUIRE(mcusum_sim_spec_set(spec, "location", "T/5") == MCUSUM_OK);
    CHECK(mcusum_sim_spec_set(spec, "m", "minus") == MCUSUM_E_PARSE);
    CHECK(mcusum_sim_spec_set(spec, "innovation_cov", "1,2;2,1") == MCUSUM_E_NOT_POSITIVE_DEFINITE);
    CHECK_THAT(mcusum_sim_spec_format(spec), ContainsSubstring("T = 1000"));

    mcusum_series* a = nullptr;
    mcusum_series* b = nullptr;
    std::int64_t change = 0;
    REQUIRE(mcusum_simulate(spec, &a, &change) == MCUSUM_OK);
    CHECK(change == 200);
    REQUIRE(mcusum_simulate(spec, &b, nullptr) == MCUSUM_OK);
    std::vector<double> va(2000), vb(2000);
    mcusum_series_values(a, va.data());
    mcusum_series_values(b, vb.data());
    CHECK(va == vb);

    mcusum_sim_spec* parsed = nullptr;
    REQUIRE(mcusum_sim_spec_parse(mcusum_sim_spec_format(spec), &parsed) == MCUSUM_OK);
    mcusum_series* c = nullptr;
    REQUIRE(mcusum_simulate(parsed, &c, &change) == MCUSUM_OK);
    std::vector<double> vc(2000);
    mcusum_series_values(c, vc.data());
    CHECK(vc == va);

    mcusum_sim_spec* broken = nullptr;
    CHECK(mcusum_sim_spec_parse("d = 2\nrho = abc\n", &broken) == MCUSUM_E_PARSE);
    CHECK_THAT(mcusum_last_error(), ContainsSubstring(":2"));

    mcusum_series_free(a);
    mcusum_series_free(b);
    mcusum_series_free(c);
    mcusum_sim_spec_free(parsed);
    mcusum_sim_spec_free(spec);
}

TEST_CASE("csv and grid files", "[capi]") {
    const auto dir = std::filesystem::temp_directory_path() / "mcusum_capi";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto data = step_data(300, 150);

    mcusum_series* series = nullptr;
    REQUIRE(mcusum_series_from_data(data.data(), 300, 2, &series) == MCUSUM_OK);
    const auto csv = (dir / "x.csv").string();
    REQUIRE(mcusum_series_write_csv(series, csv.c_str()) == MCUSUM_OK);
    mcusum_series* loaded = nullptr;
    REQUIRE(mcusum_series_load_csv(csv.c_str(), nullptr, 0, nullptr, 0, &loaded) == MCUSUM_OK);
    CHECK(mcusum_series_dim(loaded) == 2);
    const char* missing[] = {"nope"};
    mcusum_series* none = nullptr;
    CHECK(mcusum_series_load_csv(csv.c_str(), missing, 1, nullptr, 0, &none) == MCUSUM_E_MISSING_COLUMN);

    const double delta[] = {2.0, -1.0};
    mcusum_series* shifted = nullptr;
    REQUIRE(mcusum_series_shift(series, 100, delta, &shifted) == MCUSUM_OK);
    std::vector<double> vs(600);
    mcusum_series_values(shifted, vs.data());
    CHECK(vs[2 * 99] == data[2 * 99]);
    CHECK(vs[2 * 100] == Catch::Approx(data[2 * 100] + 2.0));

    mcusum_series* centered = nullptr;
    REQUIRE(mcusum_series_transform(series, "center", &centered) == MCUSUM_OK);
    CHECK(mcusum_series_transform(series, "cube", &centered) == MCUSUM_E_DOMAIN);

    const auto grid = (dir / "g.grid").string();
    std::FILE* f = std::fopen(grid.c_str(), "w");
    std::fputs("name = probe\nreps = 4\nd = 2\nT = 400\nm = 1\n[cell]\nid = c1\ndelta = 1,1\nlocation = T/2\n", f);
    std::fclose(f);

    mcusum_cv_table* table = nullptr;
    REQUIRE(mcusum_cv_table_new(&table) == MCUSUM_OK);
    const double alphas[] = {0.05};
    mcusum_mc_budget budget = mcusum_mc_budget_default();
    budget.paths = 1000;
    budget.grid = 500;
    REQUIRE(mcusum_cv_table_compute(table, 2, alphas, 1, &budget) == MCUSUM_OK);

    mcusum_grid_overrides overrides = mcusum_grid_overrides_default();
    overrides.reps = 3;
    mcusum_grid_report* report = nullptr;
    REQUIRE(mcusum_run_grid_file(grid.c_str(), table, &overrides, dir.string().c_str(), &report) == MCUSUM_OK);
    CHECK(std::string(mcusum_grid_report_name(report)) == "probe");
    REQUIRE(mcusum_grid_report_rows(report) == 1);
    mcusum_metrics_row row{};
    REQUIRE(mcusum_grid_report_row(report, 0, &row) == MCUSUM_OK);
    CHECK(std::string(row.cell_id) == "c1");
    CHECK(row.replications == 3);
    CHECK(row.failed_reps == 0);
    CHECK(std::string(row.first_error).empty());
    CHECK(std::filesystem::exists(dir / "probe.csv"));

    mcusum_grid_report* bad = nullptr;
    CHECK(mcusum_run_grid_file((dir / "missing.grid").string().c_str(), table, nullptr, nullptr, &bad) ==
          MCUSUM_E_IO);

    mcusum_grid_report_free(report);
    mcusum_cv_table_free(table);
    mcusum_series_free(centered);
    mcusum_series_free(shifted);
    mcusum_series_free(loaded);
    mcusum_series_free(series);
    std::filesystem::remove_all(dir);
}
