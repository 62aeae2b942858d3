#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcusum/critical_values.hpp"
#include "mcusum/cusum.hpp"
#include "mcusum/simulator.hpp"

namespace mcusum {

struct RunOptions {
    double alpha = 0.05;
    EstimatorMethod method = EstimatorMethod::QuadformArgmax;
    std::optional<int> bandwidth;
    bool two_pass = false;
    // Estimate on every replication, not only the rejecting ones.
    bool always_estimate = false;
    double trim = 0.0;
    std::uint64_t base_seed = 1;
    unsigned threads = 1;
};

struct CellTemplate {
    std::string id;
    SimulationSpec spec;
    // Location as written in the config ("T/2"); empty means k_star is shown.
    std::string location_label;
};

struct ExperimentGrid {
    std::string name = "grid";
    std::vector<CellTemplate> cells;
    std::size_t reps = 30;
    RunOptions options;
};

struct Replication {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    bool reject = false;
    double statistic = 0.0;
    std::optional<Eigen::Index> t_hat;
};

/// Deviations are T* - T_hat over the replications that produced an
/// estimate; with no estimates the three moments are NaN.
struct MetricsRow {
    std::string cell_id;
    std::string change;
    int m = 0;
    std::string location;
    Eigen::Index length = 0;
    int d = 0;
    std::optional<Eigen::Index> change_index;
    double deviation = 0.0;
    double abs_deviation = 0.0;
    double rms_deviation = 0.0;
    double msq_deviation = 0.0;
    std::size_t estimates = 0;
    std::size_t reject_count = 0;
    std::size_t replications = 0;
    std::size_t failed_reps = 0;
    std::vector<Replication> runs;

    bool completed() const noexcept { return failed_reps == 0; }
};

/// Simulates `reps` series (seed = base_seed + rep), tests each, and estimates
/// the change point for rejecting replications.
MetricsRow run_cell(const CellTemplate& cell, std::size_t reps, const CriticalValueTable& table,
                    const RunOptions& options);

/// Runs every cell in order. With an output directory, writes <name>.csv,
/// one histogram file per cell and summary.txt there.
std::vector<MetricsRow> run_grid(const ExperimentGrid& grid, const CriticalValueTable& table,
                                 const std::optional<std::string>& output_dir = std::nullopt);

/// Grid file: top-level key = value lines (grid options, or simulation keys
/// used as defaults for every cell) followed by [cell] blocks of simulation
/// keys plus an optional id. Errors name the offending line.
ExperimentGrid parse_grid(const std::string& text, const std::string& origin = "<grid>");
ExperimentGrid load_grid(const std::string& path);

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);

}  // namespace mcusum
