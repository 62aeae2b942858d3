#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "mcusum/series.hpp"

namespace mcusum {

/// Geometric coefficient matrices C_k = rho^k * base for k = 0..k_max.
///
/// k_max is the smallest index whose neglected tail
/// sum_{k > k_max} ||C_k|| = rho^{k_max+1} ||base|| / (1 - rho)
/// falls below 1e-12 ||C_0||; rho = 0 gives a single term.
struct CoefficientScheme {
    double rho = 0.5;
    Eigen::MatrixXd base;
    int k_max = 0;

    static CoefficientScheme geometric(double rho, Eigen::MatrixXd base);
    Eigen::MatrixXd coefficient(int k) const;
};

/// Generative model: X_t = sum_k C_k xi(t-k) with
/// xi(t) = (2m+1)^{-1/2} sum_{j=-m}^{m} Z(t+j), Z iid N(0, innovation_cov),
/// plus an optional mean shift delta on every t > floor(k_star * T).
struct SimulationSpec {
    int d = 2;
    Eigen::Index length = 8000;
    int m = 10;
    CoefficientScheme coeff;
    Eigen::MatrixXd innovation_cov;
    Eigen::VectorXd delta;
    std::optional<double> k_star;
    std::uint64_t seed = 1;

    /// Defaults for dimension d: unit diagonal with 0.5 off-diagonal
    /// innovation covariance, rho = 0.5, base = (1 - rho) I so that
    /// sum_k C_k = I, no shift.
    static SimulationSpec defaults(int d);

    /// floor(k_star * T), or nullopt under the null.
    std::optional<Eigen::Index> change_index() const;

    /// Throws DomainError / NotPositiveDefinite on a broken spec.
    void validate() const;
};

/// xi(t) for t = 1 - k_max - m .. T + m (T + k_max + 2m rows). Z(t) is a pure
/// function of (seed, t), so specs that differ only in m, k_max or T share
/// the same underlying draws.
Eigen::MatrixXd gen_innovations(const SimulationSpec& spec);

struct SimulatedSeries {
    MultivariateSeries series;
    std::optional<Eigen::Index> change_index;
};

SimulatedSeries gen_series(const SimulationSpec& spec);

/// Adds delta to every observation after the first `after` rows.
MultivariateSeries inject_shift(const MultivariateSeries& series, Eigen::Index after,
                                const Eigen::VectorXd& delta);

/// A key=value setting with the config line it came from.
struct ConfigValue {
    std::string text;
    std::size_t line = 0;
};
using ConfigKeys = std::map<std::string, ConfigValue>;

bool is_spec_key(const std::string& key);

/// Builds a spec from d, T, m, rho, base, innovation_cov, delta, k_star,
/// seed. Missing keys take SimulationSpec::defaults(d), except that base
/// follows rho as (1 - rho) I. Matrices are written
/// "a,b;c,d" or "identity"; k_star accepts a fraction, "T/5" or "none".
/// Unreadable values raise ParseError and invalid ones keep their own
/// category; both name origin and line.
SimulationSpec spec_from_keys(const ConfigKeys& keys, const std::string& origin);

/// Flat key=value file; '#' starts a comment.
ConfigKeys parse_spec_keys(const std::string& text, const std::string& origin = "<spec>");
SimulationSpec parse_simulation_spec(const std::string& text, const std::string& origin = "<spec>");
SimulationSpec load_simulation_spec(const std::string& path);
std::string format_simulation_spec(const SimulationSpec& spec);

Eigen::MatrixXd parse_matrix(const std::string& text, int d);
Eigen::VectorXd parse_vector(const std::string& text);
std::string format_matrix(const Eigen::MatrixXd& m);
std::string format_vector(const Eigen::VectorXd& v);

/// Splits "key = value" (comments stripped). Returns false for blank lines;
/// throws ParseError for lines without '='.
bool split_key_value(const std::string& line, std::string& key, std::string& value,
                     const std::string& origin, std::size_t line_no);

}  // namespace mcusum
