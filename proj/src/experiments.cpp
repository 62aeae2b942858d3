#include "mcusum/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "mcusum/error.hpp"

namespace mcusum {

namespace {

std::string describe_change(const Eigen::VectorXd& delta) {
    std::ostringstream os;
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
        if (i) os << ' ';
        os << delta(i);
    }
    return os.str();
}

std::string describe_location(const CellTemplate& cell) {
    if (!cell.location_label.empty()) return cell.location_label;
    if (!cell.spec.k_star) return "none";
    std::ostringstream os;
    os << *cell.spec.k_star;
    return os.str();
}

Replication run_replication(const SimulationSpec& base, std::uint64_t seed,
                            const CriticalValueTable& table, const RunOptions& options) {
    Replication rep;
    rep.seed = seed;
    try {
        auto spec = base;
        spec.seed = seed;
        const auto simulated = gen_series(spec);
        TestOptions test_options;
        test_options.alpha = options.alpha;
        test_options.bandwidth = options.bandwidth;
        test_options.two_pass = options.two_pass;
        const auto result = run_test(simulated.series, table, test_options);
        rep.reject = result.reject;
        rep.statistic = result.statistic;
        if (result.reject || options.always_estimate) {
            rep.t_hat = estimate_changepoint(result.curve, options.method, options.trim).t_hat;
        }
    } catch (const std::exception& e) {
        rep.failed = true;
        rep.error = e.what();
    }
    return rep;
}

void write_histogram(const MetricsRow& row, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCategory::IoError, "cannot write '" + path + "'");
    out << "rep,seed,reject,statistic,t_hat,deviation\n";
    out.precision(10);
    for (std::size_t r = 0; r < row.runs.size(); ++r) {
        const auto& run = row.runs[r];
        out << r << ',' << run.seed << ',' << (run.reject ? 1 : 0) << ',' << run.statistic << ',';
        if (run.t_hat) out << *run.t_hat;
        out << ',';
        if (run.t_hat && row.change_index) out << *row.change_index - *run.t_hat;
        out << '\n';
    }
}

std::string histogram_name(const std::string& grid_name, const std::string& cell_id) {
    if (grid_name.rfind("table", 0) == 0 && grid_name.size() > 5) {
        return "hist" + grid_name.substr(5) + "_" + cell_id + ".csv";
    }
    return "hist_" + grid_name + "_" + cell_id + ".csv";
}

}  // namespace

MetricsRow run_cell(const CellTemplate& cell, std::size_t reps, const CriticalValueTable& table,
                    const RunOptions& options) {
    if (reps < 1) throw Error(ErrorCategory::DomainError, "replication count must be >= 1");
    cell.spec.validate();

    MetricsRow row;
    row.cell_id = cell.id;
    row.change = describe_change(cell.spec.delta);
    row.m = cell.spec.m;
    row.location = describe_location(cell);
    row.length = cell.spec.length;
    row.d = cell.spec.d;
    row.change_index = cell.spec.change_index();
    row.replications = reps;
    row.runs.resize(reps);

    const unsigned workers = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(reps)));
    auto work = [&](unsigned w) {
        for (std::size_t r = w; r < reps; r += workers) {
            row.runs[r] = run_replication(cell.spec, options.base_seed + r, table, options);
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }

    const auto truth = row.change_index;
    double sum = 0.0;
    double sum_abs = 0.0;
    double sum_sq = 0.0;
    for (const auto& run : row.runs) {
        if (run.failed) {
            ++row.failed_reps;
            continue;
        }
        if (run.reject) ++row.reject_count;
        if (run.t_hat && truth) {
            const double dev = static_cast<double>(*truth - *run.t_hat);
            sum += dev;
            sum_abs += std::abs(dev);
            sum_sq += dev * dev;
            ++row.estimates;
        }
    }
    if (row.estimates == 0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.deviation = row.abs_deviation = row.rms_deviation = row.msq_deviation = nan;
    } else {
        const auto count = static_cast<double>(row.estimates);
        row.deviation = sum / count;
        row.abs_deviation = sum_abs / count;
        row.msq_deviation = sum_sq / count;
        row.rms_deviation = std::sqrt(row.msq_deviation);
    }
    return row;
}

std::vector<MetricsRow> run_grid(const ExperimentGrid& grid, const CriticalValueTable& table,
                                 const std::optional<std::string>& output_dir) {
    std::vector<MetricsRow> rows;
    rows.reserve(grid.cells.size());
    for (const auto& cell : grid.cells) {
        try {
            rows.push_back(run_cell(cell, grid.reps, table, grid.options));
        } catch (const std::exception& e) {
            MetricsRow failed;
            failed.cell_id = cell.id;
            failed.replications = grid.reps;
            failed.failed_reps = grid.reps;
            failed.deviation = failed.abs_deviation = failed.rms_deviation = failed.msq_deviation =
                std::numeric_limits<double>::quiet_NaN();
            Replication marker;
            marker.failed = true;
            marker.error = e.what();
            failed.runs.push_back(marker);
            rows.push_back(std::move(failed));
        }
    }
    if (!output_dir) return rows;

    const std::filesystem::path dir(*output_dir);
    std::filesystem::create_directories(dir);
    write_metrics_csv(rows, (dir / (grid.name + ".csv")).string());
    for (const auto& row : rows) {
        write_histogram(row, (dir / histogram_name(grid.name, row.cell_id)).string());
    }
    std::ofstream summary(dir / "summary.txt");
    if (!summary) throw Error(ErrorCategory::IoError, "cannot write summary in '" + *output_dir + "'");
    summary.precision(6);
    summary << "grid " << grid.name << ": " << rows.size() << " cells, " << grid.reps
            << " replications each, alpha " << grid.options.alpha << ", estimator "
            << method_name(grid.options.method) << '\n';
    for (const auto& row : rows) {
        summary << row.cell_id << " [" << row.change << " | m=" << row.m << " | " << row.location
                << " | T=" << row.length << "] reject " << row.reject_count << '/'
                << row.replications << ", abs deviation " << row.abs_deviation;
        if (!row.completed()) {
            summary << ", FAILED " << row.failed_reps << " reps";
            for (const auto& run : row.runs) {
                if (run.failed) {
                    summary << " (" << run.error << ')';
                    break;
                }
            }
        }
        summary << '\n';
    }
    return rows;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCategory::IoError, "cannot write '" + path + "'");
    out << "cell,change,m,location,T,d,deviation,abs_deviation,rms_deviation,msq_deviation,"
           "estimates,reject_count,replications,failed_reps\n";
    out.precision(10);
    for (const auto& row : rows) {
        out << row.cell_id << ",\"" << row.change << "\"," << row.m << ',' << row.location << ','
            << row.length << ',' << row.d << ',' << row.deviation << ',' << row.abs_deviation << ','
            << row.rms_deviation << ',' << row.msq_deviation << ',' << row.estimates << ','
            << row.reject_count << ',' << row.replications << ',' << row.failed_reps << '\n';
    }
    if (!out) throw Error(ErrorCategory::IoError, "write to '" + path + "' failed");
}

ExperimentGrid parse_grid(const std::string& text, const std::string& origin) {
    ExperimentGrid grid;
    ConfigKeys defaults;
    std::vector<std::pair<std::size_t, ConfigKeys>> blocks;  // header line, keys
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& message) {
        throw Error(ErrorCategory::ParseError, origin + ":" + std::to_string(line_no) + ": " + message);
    };
    auto number = [&](const std::string& value) {
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) fail("expected a number, got '" + value + "'");
            return v;
        } catch (const std::logic_error&) {
            fail("expected a number, got '" + value + "'");
        }
        return 0.0;
    };
    auto flag = [&](const std::string& value) {
        if (value == "true" || value == "1" || value == "yes") return true;
        if (value == "false" || value == "0" || value == "no") return false;
        fail("expected true/false, got '" + value + "'");
        return false;
    };

    while (std::getline(in, line)) {
        ++line_no;
        auto body = line.substr(0, line.find('#'));
        const auto first = body.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        body = body.substr(first);
        body = body.substr(0, body.find_last_not_of(" \t\r") + 1);
        if (body.front() == '[') {
            if (body != "[cell]") fail("unknown section '" + body + "'");
            blocks.push_back({line_no, {}});
            continue;
        }
        std::string key;
        std::string value;
        split_key_value(body, key, value, origin, line_no);
        if (!blocks.empty()) {
            if (key != "id" && !is_spec_key(key)) fail("unknown cell key '" + key + "'");
            blocks.back().second[key] = {value, line_no};
            continue;
        }
        if (key == "name") {
            grid.name = value;
        } else if (key == "reps") {
            const double v = number(value);
            if (v < 1 || v != std::floor(v)) fail("reps must be a positive integer");
            grid.reps = static_cast<std::size_t>(v);
        } else if (key == "alpha") {
            grid.options.alpha = number(value);
            if (!(grid.options.alpha > 0.0 && grid.options.alpha < 1.0)) fail("alpha must lie in (0, 1)");
        } else if (key == "base_seed") {
            const double v = number(value);
            if (v < 0 || v != std::floor(v)) fail("base_seed must be a nonnegative integer");
            grid.options.base_seed = static_cast<std::uint64_t>(v);
        } else if (key == "method") {
            try {
                grid.options.method = parse_method(value);
            } catch (const Error& e) {
                fail(e.what());
            }
        } else if (key == "bandwidth") {
            const double v = number(value);
            if (v < 1 || v != std::floor(v)) fail("bandwidth must be a positive integer");
            grid.options.bandwidth = static_cast<int>(v);
        } else if (key == "two_pass") {
            grid.options.two_pass = flag(value);
        } else if (key == "always_estimate") {
            grid.options.always_estimate = flag(value);
        } else if (key == "trim") {
            grid.options.trim = number(value);
        } else if (is_spec_key(key)) {
            defaults[key] = {value, line_no};
        } else {
            fail("unknown key '" + key + "'");
        }
    }

    for (std::size_t b = 0; b < blocks.size(); ++b) {
        ConfigKeys merged = defaults;
        std::string id = "cell" + std::to_string(b + 1);
        for (const auto& [key, value] : blocks[b].second) {
            if (key == "id") {
                id = value.text;
            } else {
                merged[key] = value;
            }
        }
        CellTemplate cell;
        cell.id = id;
        cell.spec = spec_from_keys(merged, origin);
        if (const auto it = merged.find("location"); it != merged.end()) {
            cell.location_label = it->second.text;
        } else if (const auto it2 = merged.find("k_star"); it2 != merged.end()) {
            cell.location_label = it2->second.text;
        }
        grid.cells.push_back(std::move(cell));
    }
    return grid;
}

ExperimentGrid load_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::IoError, "cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto grid = parse_grid(buffer.str(), path);
    return grid;
}

}  // namespace mcusum
