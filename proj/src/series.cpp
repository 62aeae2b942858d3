#include "mcusum/series.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "mcusum/error.hpp"

namespace mcusum {

namespace {

std::string trim(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(first, last - first + 1));
}

// Splits one CSV record. Handles double-quoted fields with "" escapes; a
// quoted field may not span lines.
std::vector<std::string> split_record(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(trim(current));
    return fields;
}

bool parse_double(const std::string& text, double& out) {
    if (text.empty()) return false;
    const char* begin = text.data();
    const char* end = begin + text.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::string cell_ref(std::size_t row, const std::string& column) {
    std::ostringstream os;
    os << "row " << row << ", column '" << column << "'";
    return os.str();
}

}  // namespace

ValidationReport validate(const Eigen::MatrixXd& values,
                          const std::vector<std::string>& labels,
                          const std::vector<std::string>& timestamps) {
    ValidationReport report;
    if (values.rows() < 2) {
        report.findings.push_back({ErrorCategory::TooShort, -1, -1,
                                   "series needs at least 2 observations, got " +
                                       std::to_string(values.rows())});
    }
    if (values.cols() < 1) {
        report.findings.push_back(
            {ErrorCategory::DimensionMismatch, -1, -1, "series needs at least 1 column"});
    }
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
        for (Eigen::Index t = 0; t < values.rows(); ++t) {
            if (!std::isfinite(values(t, j))) {
                std::ostringstream os;
                os << "non-finite value at row " << t << ", column " << j;
                report.findings.push_back({ErrorCategory::NonFinite, t, j, os.str()});
            }
        }
    }
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != values.cols()) {
        report.findings.push_back({ErrorCategory::DimensionMismatch, -1, -1,
                                   "label count " + std::to_string(labels.size()) +
                                       " does not match dimension " +
                                       std::to_string(values.cols())});
    }
    if (!timestamps.empty() && static_cast<Eigen::Index>(timestamps.size()) != values.rows()) {
        report.findings.push_back({ErrorCategory::DimensionMismatch, -1, -1,
                                   "timestamp count " + std::to_string(timestamps.size()) +
                                       " does not match length " +
                                       std::to_string(values.rows())});
    }
    return report;
}

MultivariateSeries::MultivariateSeries(Eigen::MatrixXd values,
                                       std::vector<std::string> labels,
                                       std::vector<std::string> timestamps)
    : values_(std::move(values)),
      labels_(std::move(labels)),
      timestamps_(std::move(timestamps)) {
    const auto report = validate(values_, labels_, timestamps_);
    if (!report.ok()) {
        const auto& first = report.findings.front();
        throw Error(first.category, first.message);
    }
}

std::string MultivariateSeries::label(Eigen::Index column) const {
    if (!labels_.empty()) return labels_[static_cast<std::size_t>(column)];
    return "x" + std::to_string(column + 1);
}

std::vector<std::string> read_csv_header(const std::string& path, std::size_t skip_rows) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::IoError, "cannot open '" + path + "'");
    std::string line;
    for (std::size_t i = 0; i <= skip_rows; ++i) {
        if (!std::getline(in, line)) throw Error(ErrorCategory::TooShort, "'" + path + "' has no header");
    }
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    return split_record(line);
}

MultivariateSeries load_csv(const std::string& path, const IngestConfig& config) {
    if (config.columns.empty()) {
        throw Error(ErrorCategory::MissingColumn, "no columns selected for ingestion");
    }
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::IoError, "cannot open '" + path + "'");

    std::string line;
    std::size_t line_no = 0;
    for (std::size_t i = 0; i < config.skip_rows; ++i) {
        if (!std::getline(in, line)) {
            throw Error(ErrorCategory::TooShort, "file ended while skipping rows");
        }
        ++line_no;
    }
    if (!std::getline(in, line)) throw Error(ErrorCategory::TooShort, "'" + path + "' has no header");
    ++line_no;
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    const auto header = split_record(line);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);

    auto locate = [&](const std::string& name) {
        const auto it = index.find(name);
        if (it == index.end()) {
            throw Error(ErrorCategory::MissingColumn, "column '" + name + "' not found in header");
        }
        return it->second;
    };
    std::vector<std::size_t> picks;
    for (const auto& name : config.columns) picks.push_back(locate(name));
    std::optional<std::size_t> date_pick;
    if (config.date_column) date_pick = locate(*config.date_column);

    std::vector<double> flat;
    std::vector<std::string> stamps;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_record(line);
        for (std::size_t c = 0; c < picks.size(); ++c) {
            const auto pick = picks[c];
            if (pick >= fields.size()) {
                throw Error(ErrorCategory::NonNumericCell,
                            "missing value at " + cell_ref(line_no, config.columns[c]));
            }
            double value = 0.0;
            if (!parse_double(fields[pick], value)) {
                throw Error(ErrorCategory::NonNumericCell,
                            "non-numeric value '" + fields[pick] + "' at " +
                                cell_ref(line_no, config.columns[c]));
            }
            if (!std::isfinite(value)) {
                throw Error(ErrorCategory::NonFinite,
                            "non-finite value at " + cell_ref(line_no, config.columns[c]));
            }
            flat.push_back(value);
        }
        if (date_pick) stamps.push_back(*date_pick < fields.size() ? fields[*date_pick] : "");
        ++rows;
    }
    if (rows < 2) {
        throw Error(ErrorCategory::TooShort,
                    "'" + path + "' has " + std::to_string(rows) + " data rows, need at least 2");
    }

    const auto d = static_cast<Eigen::Index>(picks.size());
    Eigen::MatrixXd values(static_cast<Eigen::Index>(rows), d);
    for (std::size_t t = 0; t < rows; ++t) {
        for (Eigen::Index j = 0; j < d; ++j) {
            values(static_cast<Eigen::Index>(t), j) = flat[t * static_cast<std::size_t>(d) + j];
        }
    }
    return MultivariateSeries(std::move(values), config.columns, std::move(stamps));
}

void write_csv(const MultivariateSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCategory::IoError, "cannot write '" + path + "'");
    const bool dated = !series.timestamps().empty();
    if (dated) out << "date,";
    for (Eigen::Index j = 0; j < series.dim(); ++j) {
        if (j) out << ',';
        out << series.label(j);
    }
    out << '\n';
    char buf[32];
    for (Eigen::Index t = 0; t < series.length(); ++t) {
        if (dated) out << series.timestamps()[static_cast<std::size_t>(t)] << ',';
        for (Eigen::Index j = 0; j < series.dim(); ++j) {
            if (j) out << ',';
            const auto res = std::to_chars(buf, buf + sizeof(buf), series.values()(t, j));
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
    if (!out) throw Error(ErrorCategory::IoError, "write to '" + path + "' failed");
}

CenteredSeries center(const MultivariateSeries& series) {
    const auto& x = series.values();
    CenteredSeries out;
    out.mean.resize(x.cols());
    out.values.resize(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        long double acc = 0.0L;
        for (Eigen::Index t = 0; t < x.rows(); ++t) acc += x(t, j);
        const double mean = static_cast<double>(acc / static_cast<long double>(x.rows()));
        out.mean(j) = mean;
        out.values.col(j) = x.col(j).array() - mean;
    }
    return out;
}

Transform parse_transform(const std::string& name) {
    if (name == "none") return Transform::None;
    if (name == "center") return Transform::Center;
    if (name == "log") return Transform::Log;
    if (name == "diff") return Transform::Diff;
    throw Error(ErrorCategory::DomainError, "unknown transform '" + name + "'");
}

MultivariateSeries apply_transform(const MultivariateSeries& series, Transform transform) {
    switch (transform) {
        case Transform::None:
            return series;
        case Transform::Center:
            return MultivariateSeries(center(series).values, series.labels(), series.timestamps());
        case Transform::Log: {
            if ((series.values().array() <= 0.0).any()) {
                throw Error(ErrorCategory::DomainError, "log transform needs strictly positive data");
            }
            return MultivariateSeries(series.values().array().log().matrix(), series.labels(),
                                      series.timestamps());
        }
        case Transform::Diff: {
            const auto n = series.length();
            if (n < 3) throw Error(ErrorCategory::TooShort, "diff transform needs at least 3 observations");
            Eigen::MatrixXd diffed =
                series.values().bottomRows(n - 1) - series.values().topRows(n - 1);
            std::vector<std::string> stamps;
            if (!series.timestamps().empty()) {
                stamps.assign(series.timestamps().begin() + 1, series.timestamps().end());
            }
            return MultivariateSeries(std::move(diffed), series.labels(), std::move(stamps));
        }
    }
    throw Error(ErrorCategory::Internal, "unhandled transform");
}

}  // namespace mcusum
