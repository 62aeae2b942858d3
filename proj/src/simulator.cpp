#include "mcusum/simulator.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/random/normal_distribution.hpp>

#include "mcusum/error.hpp"
#include "rng.hpp"

namespace mcusum {

namespace {

std::string trim(const std::string& text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return text.substr(first, last - first + 1);
}

double to_double(const std::string& raw) {
    const auto text = trim(raw);
    double out = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    if (begin != end && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, out);
    if (text.empty() || ec != std::errc() || ptr != end) {
        throw Error(ErrorCategory::ParseError, "expected a number, got '" + text + "'");
    }
    return out;
}

long long to_integer(const std::string& raw) {
    const auto text = trim(raw);
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorCategory::ParseError, "expected an integer, got '" + text + "'");
    }
    return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string current;
    std::istringstream in(text);
    while (std::getline(in, current, sep)) parts.push_back(trim(current));
    if (!text.empty() && text.back() == sep) parts.emplace_back();
    return parts;
}

std::optional<double> parse_location(const std::string& raw) {
    const auto text = trim(raw);
    if (text == "none") return std::nullopt;
    if (text.size() > 2 && (text[0] == 'T' || text[0] == 't') && text[1] == '/') {
        const double denom = to_double(text.substr(2));
        if (!(denom > 1.0)) throw Error(ErrorCategory::ParseError, "location 'T/x' needs x > 1");
        return 1.0 / denom;
    }
    return to_double(text);
}

Eigen::MatrixXd equicorrelated(int d, double rho) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(d, d, rho);
    m.diagonal().setOnes();
    return m;
}

}  // namespace

CoefficientScheme CoefficientScheme::geometric(double rho, Eigen::MatrixXd base) {
    if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorCategory::DomainError, "rho must lie in [0, 1)");
    if (base.rows() != base.cols()) throw Error(ErrorCategory::DimensionMismatch, "base must be square");
    CoefficientScheme scheme;
    scheme.rho = rho;
    scheme.base = std::move(base);
    if (rho == 0.0) {
        scheme.k_max = 0;
        return scheme;
    }
    auto tail = [rho](int k) { return std::pow(rho, k + 1) / (1.0 - rho); };
    int k = std::max(0, static_cast<int>(std::ceil(std::log(1e-12 * (1.0 - rho)) / std::log(rho))) - 1);
    while (k > 0 && tail(k - 1) < 1e-12) --k;
    while (tail(k) >= 1e-12) ++k;
    scheme.k_max = k;
    return scheme;
}

Eigen::MatrixXd CoefficientScheme::coefficient(int k) const {
    if (k < 0 || k > k_max) return Eigen::MatrixXd::Zero(base.rows(), base.cols());
    return std::pow(rho, k) * base;
}

SimulationSpec SimulationSpec::defaults(int d) {
    if (d < 1) throw Error(ErrorCategory::DomainError, "dimension must be >= 1");
    SimulationSpec spec;
    spec.d = d;
    spec.coeff = CoefficientScheme::geometric(0.5, 0.5 * Eigen::MatrixXd::Identity(d, d));
    spec.innovation_cov = equicorrelated(d, 0.5);
    spec.delta = Eigen::VectorXd::Zero(d);
    return spec;
}

std::optional<Eigen::Index> SimulationSpec::change_index() const {
    if (!k_star) return std::nullopt;
    return static_cast<Eigen::Index>(std::floor(*k_star * static_cast<double>(length)));
}

void SimulationSpec::validate() const {
    if (d < 1) throw Error(ErrorCategory::DomainError, "dimension must be >= 1");
    if (length < 2) throw Error(ErrorCategory::TooShort, "series length must be >= 2");
    if (m < 0) throw Error(ErrorCategory::DomainError, "dependence parameter m must be >= 0");
    if (coeff.base.rows() != d || coeff.base.cols() != d) {
        throw Error(ErrorCategory::DimensionMismatch, "coefficient base must be d x d");
    }
    if (innovation_cov.rows() != d || innovation_cov.cols() != d) {
        throw Error(ErrorCategory::DimensionMismatch, "innovation covariance must be d x d");
    }
    if ((innovation_cov - innovation_cov.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw Error(ErrorCategory::NotPositiveDefinite, "innovation covariance must be symmetric");
    }
    if (Eigen::LLT<Eigen::MatrixXd>(innovation_cov).info() != Eigen::Success) {
        throw Error(ErrorCategory::NotPositiveDefinite, "innovation covariance must be positive definite");
    }
    if (delta.size() != d) throw Error(ErrorCategory::DimensionMismatch, "delta must have d entries");
    if (k_star && !(*k_star > 0.0 && *k_star < 1.0)) {
        throw Error(ErrorCategory::DomainError, "k_star must lie in (0, 1)");
    }
}

Eigen::MatrixXd gen_innovations(const SimulationSpec& spec) {
    spec.validate();
    const Eigen::Index d = spec.d;
    const Eigen::Index m = spec.m;
    const Eigen::Index k_max = spec.coeff.k_max;
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(spec.innovation_cov).matrixL();

    // Z(t) for t = 1 - k_max - 2m .. T + 2m, keyed on (seed, t).
    const Eigen::Index z_first = 1 - k_max - 2 * m;
    const Eigen::Index z_rows = spec.length + k_max + 4 * m;
    Eigen::MatrixXd z(z_rows, d);
    Eigen::VectorXd standard(d);
    boost::random::normal_distribution<double> normal;
    for (Eigen::Index r = 0; r < z_rows; ++r) {
        const auto t = static_cast<std::int64_t>(z_first + r);
        detail::SplitMix64 engine(detail::derive_seed(spec.seed, static_cast<std::uint64_t>(t)));
        for (Eigen::Index c = 0; c < d; ++c) standard(c) = normal(engine);
        z.row(r) = (chol * standard).transpose();
    }

    const Eigen::Index xi_rows = spec.length + k_max + 2 * m;
    const double scale = 1.0 / std::sqrt(static_cast<double>(2 * m + 1));
    Eigen::MatrixXd xi(xi_rows, d);
    for (Eigen::Index r = 0; r < xi_rows; ++r) {
        // xi row r is time 1 - k_max - m + r; its window starts at z row r.
        xi.row(r) = scale * z.middleRows(r, 2 * m + 1).colwise().sum();
    }
    return xi;
}

SimulatedSeries gen_series(const SimulationSpec& spec) {
    const Eigen::MatrixXd xi = gen_innovations(spec);
    const Eigen::Index n = spec.length;
    const int k_max = spec.coeff.k_max;
    // xi row for time t is t - 1 + k_max + m.
    const Eigen::Index offset = k_max + spec.m;

    Eigen::MatrixXd filtered = Eigen::MatrixXd::Zero(n, spec.d);
    for (int k = 0; k <= k_max; ++k) {
        const double weight = std::pow(spec.coeff.rho, k);
        filtered += weight * xi.middleRows(offset - k, n);
    }
    Eigen::MatrixXd values = filtered * spec.coeff.base.transpose();

    const auto change = spec.change_index();
    if (change && *change < n) {
        values.bottomRows(n - *change).rowwise() += spec.delta.transpose();
    }
    return {MultivariateSeries(std::move(values)), change};
}

MultivariateSeries inject_shift(const MultivariateSeries& series, Eigen::Index after,
                                const Eigen::VectorXd& delta) {
    if (delta.size() != series.dim()) throw Error(ErrorCategory::DimensionMismatch, "shift must have d entries");
    if (after < 0 || after > series.length()) throw Error(ErrorCategory::DomainError, "shift position out of range");
    Eigen::MatrixXd values = series.values();
    values.bottomRows(series.length() - after).rowwise() += delta.transpose();
    return MultivariateSeries(std::move(values), series.labels(), series.timestamps());
}

Eigen::MatrixXd parse_matrix(const std::string& raw, int d) {
    const auto text = trim(raw);
    if (text == "identity" || text == "I") return Eigen::MatrixXd::Identity(d, d);
    const auto rows = split(text, ';');
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto cells = split(rows[r], ',');
        if (cells.size() != rows.size()) {
            throw Error(ErrorCategory::ParseError, "matrix '" + text + "' is not square");
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = to_double(cells[c]);
        }
    }
    return out;
}

Eigen::VectorXd parse_vector(const std::string& raw) {
    const auto cells = split(trim(raw), ',');
    Eigen::VectorXd out(static_cast<Eigen::Index>(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) out(static_cast<Eigen::Index>(i)) = to_double(cells[i]);
    return out;
}

std::string format_matrix(const Eigen::MatrixXd& m) {
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (r) os << ';';
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) os << ',';
            os << m(r, c);
        }
    }
    return os.str();
}

std::string format_vector(const Eigen::VectorXd& v) {
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        os << v(i);
    }
    return os.str();
}

bool split_key_value(const std::string& line, std::string& key, std::string& value,
                     const std::string& origin, std::size_t line_no) {
    auto body = line.substr(0, line.find('#'));
    body = trim(body);
    if (body.empty()) return false;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
        throw Error(ErrorCategory::ParseError,
                    origin + ":" + std::to_string(line_no) + ": expected key = value, got '" + body + "'");
    }
    key = trim(body.substr(0, eq));
    value = trim(body.substr(eq + 1));
    if (key.empty()) {
        throw Error(ErrorCategory::ParseError, origin + ":" + std::to_string(line_no) + ": empty key");
    }
    return true;
}

bool is_spec_key(const std::string& key) {
    static const char* const keys[] = {"d", "T", "m", "rho", "base", "innovation_cov",
                                       "delta", "k_star", "location", "seed"};
    for (const auto* k : keys) {
        if (key == k) return true;
    }
    return false;
}

SimulationSpec spec_from_keys(const ConfigKeys& keys, const std::string& origin) {
    auto where = [&](const std::string& key) {
        const auto it = keys.find(key);
        return origin + ":" + std::to_string(it == keys.end() ? 0 : it->second.line);
    };
    auto get = [&](const std::string& key) -> const std::string* {
        const auto it = keys.find(key);
        return it == keys.end() ? nullptr : &it->second.text;
    };
    std::string current = "d";
    try {
        const int d = get("d") ? static_cast<int>(to_integer(*get("d"))) : 2;
        if (d < 1) throw Error(ErrorCategory::DomainError, "d must be >= 1");
        auto spec = SimulationSpec::defaults(d);

        // Each key is applied to an otherwise valid spec, so the first
        // failing validation names the key responsible.
        auto apply = [&](const std::string& key, auto&& assign) {
            current = key;
            if (const auto* v = get(key)) {
                assign(*v);
                spec.validate();
            }
        };
        apply("T", [&](const std::string& v) { spec.length = static_cast<Eigen::Index>(to_integer(v)); });
        apply("m", [&](const std::string& v) { spec.m = static_cast<int>(to_integer(v)); });
        apply("seed", [&](const std::string& v) { spec.seed = static_cast<std::uint64_t>(to_integer(v)); });
        double rho = spec.coeff.rho;
        Eigen::MatrixXd base = (1.0 - rho) * Eigen::MatrixXd::Identity(d, d);
        apply("rho", [&](const std::string& v) {
            rho = to_double(v);
            base = (1.0 - rho) * Eigen::MatrixXd::Identity(d, d);
            spec.coeff = CoefficientScheme::geometric(rho, base);
        });
        apply("base", [&](const std::string& v) {
            base = parse_matrix(v, d);
            spec.coeff = CoefficientScheme::geometric(rho, base);
        });
        apply("innovation_cov", [&](const std::string& v) { spec.innovation_cov = parse_matrix(v, d); });
        apply("delta", [&](const std::string& v) { spec.delta = parse_vector(v); });
        apply("k_star", [&](const std::string& v) { spec.k_star = parse_location(v); });
        apply("location", [&](const std::string& v) { spec.k_star = parse_location(v); });
        return spec;
    } catch (const Error& e) {
        throw Error(e.category(), where(current) + ": " + current + ": " + e.what());
    }
}

ConfigKeys parse_spec_keys(const std::string& text, const std::string& origin) {
    ConfigKeys keys;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string key;
        std::string value;
        if (!split_key_value(line, key, value, origin, line_no)) continue;
        if (!is_spec_key(key)) {
            throw Error(ErrorCategory::ParseError,
                        origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        keys[key] = {value, line_no};
    }
    return keys;
}

SimulationSpec parse_simulation_spec(const std::string& text, const std::string& origin) {
    return spec_from_keys(parse_spec_keys(text, origin), origin);
}

SimulationSpec load_simulation_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::IoError, "cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_simulation_spec(buffer.str(), path);
}

std::string format_simulation_spec(const SimulationSpec& spec) {
    std::ostringstream os;
    os.precision(17);
    os << "d = " << spec.d << '\n'
       << "T = " << spec.length << '\n'
       << "m = " << spec.m << '\n'
       << "rho = " << spec.coeff.rho << '\n'
       << "base = " << format_matrix(spec.coeff.base) << '\n'
       << "innovation_cov = " << format_matrix(spec.innovation_cov) << '\n'
       << "delta = " << format_vector(spec.delta) << '\n'
       << "k_star = ";
    if (spec.k_star) {
        os << *spec.k_star;
    } else {
        os << "none";
    }
    os << '\n' << "seed = " << spec.seed << '\n';
    return os.str();
}

}  // namespace mcusum
