#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcusum/error.hpp"

namespace mcusum {

/// A T x d block of real observations, optionally labelled by column and by
/// time. Construction enforces T >= 2, d >= 1, finite entries, and matching
/// label/timestamp counts; the object is immutable afterwards.
class MultivariateSeries {
public:
    explicit MultivariateSeries(Eigen::MatrixXd values,
                                std::vector<std::string> labels = {},
                                std::vector<std::string> timestamps = {});

    const Eigen::MatrixXd& values() const noexcept { return values_; }
    Eigen::Index length() const noexcept { return values_.rows(); }
    Eigen::Index dim() const noexcept { return values_.cols(); }

    /// Empty when the series carries no column names.
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    /// Empty when the series carries no time labels.
    const std::vector<std::string>& timestamps() const noexcept { return timestamps_; }

    /// Column name for output; falls back to x1..xd.
    std::string label(Eigen::Index column) const;

private:
    Eigen::MatrixXd values_;
    std::vector<std::string> labels_;
    std::vector<std::string> timestamps_;
};

/// Series with its full-sample column means removed.
struct CenteredSeries {
    Eigen::MatrixXd values;
    Eigen::VectorXd mean;
};

struct ValidationFinding {
    ErrorCategory category;
    // -1 when the finding is not tied to a cell.
    Eigen::Index row = -1;
    Eigen::Index column = -1;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationFinding> findings;
    bool ok() const noexcept { return findings.empty(); }
};

/// Checks raw data against the MultivariateSeries invariants without throwing.
ValidationReport validate(const Eigen::MatrixXd& values,
                          const std::vector<std::string>& labels = {},
                          const std::vector<std::string>& timestamps = {});

struct IngestConfig {
    std::vector<std::string> columns;
    std::optional<std::string> date_column;
    // Lines dropped before the header row.
    std::size_t skip_rows = 0;
};

/// Field names of the header row after skip_rows lines.
std::vector<std::string> read_csv_header(const std::string& path, std::size_t skip_rows = 0);

/// Reads a comma-separated file with a header row. Selected columns come back
/// in config order, rows in file order.
MultivariateSeries load_csv(const std::string& path, const IngestConfig& config);

/// Writes the header (date column first when timestamps exist) and one row
/// per observation at round-trip precision.
void write_csv(const MultivariateSeries& series, const std::string& path);

CenteredSeries center(const MultivariateSeries& series);

enum class Transform { None, Center, Log, Diff };

Transform parse_transform(const std::string& name);

/// Optional preprocessing for the detection pipeline. Log needs strictly
/// positive data; Diff drops the first observation.
MultivariateSeries apply_transform(const MultivariateSeries& series, Transform transform);

}  // namespace mcusum
