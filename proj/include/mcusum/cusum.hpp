#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcusum/critical_values.hpp"
#include "mcusum/series.hpp"
#include "mcusum/spectral.hpp"

namespace mcusum {

/// CUSUM process on the grid t_k = k/N, k = 0..N.
///
/// Row k of s_tilde is N^{-1/2}(P_k - (k/N) P_N), P_k the k-th prefix sum.
/// Rows 0 and N are exactly zero. q holds the quadratic form against the
/// inverse long-run covariance once quadform() has run; it is empty before.
struct CusumCurve {
    Eigen::MatrixXd s_tilde;
    Eigen::VectorXd q;
    Eigen::Index length = 0;

    bool has_quadform() const noexcept { return q.size() == length + 1; }
};

CusumCurve cusum(const MultivariateSeries& series);

/// Fills q[k] = s_k' Sigma^{-1} s_k, evaluated through the Cholesky factor so
/// every value is nonnegative.
CusumCurve quadform(CusumCurve curve, const LongRunCovariance& sigma);

struct TestOptions {
    double alpha = 0.05;
    std::optional<int> bandwidth;
    // Re-estimate the long-run covariance after demeaning both sides of a
    // first-pass change-point estimate.
    bool two_pass = false;
};

struct TestResult {
    double statistic = 0.0;
    double critical_value = 0.0;
    double alpha = 0.0;
    bool reject = false;
    int d = 0;
    Eigen::Index argmax = 0;
    LongRunCovariance sigma;
    CusumCurve curve;
};

/// sup_k q[k] against the (d, alpha) entry of the table. Throws
/// MissingCriticalValue when the table has no such entry.
TestResult run_test(const MultivariateSeries& series, const CriticalValueTable& table,
                    const TestOptions& options = {});

enum class EstimatorMethod { NormArgmax, QuadformArgmax };

std::string method_name(EstimatorMethod method);
EstimatorMethod parse_method(const std::string& name);

struct ChangePointEstimate {
    double k_hat = 0.0;
    Eigen::Index t_hat = 0;
    EstimatorMethod method = EstimatorMethod::QuadformArgmax;
    double curve_value = 0.0;
};

/// First-index argmax over k in {1..N-1}, optionally trimmed to
/// [trim*N, (1-trim)*N]. QuadformArgmax needs curve.q.
ChangePointEstimate estimate_changepoint(const CusumCurve& curve, EstimatorMethod method,
                                         double trim = 0.0);

/// Convenience wrapper: builds the curve and, for QuadformArgmax, estimates
/// sigma when none is given.
ChangePointEstimate estimate_changepoint(const MultivariateSeries& series, EstimatorMethod method,
                                         const std::optional<LongRunCovariance>& sigma = std::nullopt,
                                         std::optional<int> bandwidth = std::nullopt,
                                         double trim = 0.0);

enum class ExtremumKind { Max, Min };

struct Extremum {
    Eigen::Index index = 0;
    double value = 0.0;
    ExtremumKind kind = ExtremumKind::Max;
    double prominence = 0.0;
};

struct ExtremaScan {
    std::vector<Extremum> extrema;
    int smoothing_window = 1;
    double min_prominence = 0.0;
    Eigen::VectorXd smoothed;
};

/// 2*floor(N^{1/4}) + 1.
int default_smoothing_window(Eigen::Index length);

/// Moving-average smooths q, then reports interior local maxima and minima
/// whose topographic prominence is at least min_prominence. Without an
/// explicit threshold, 10% of the smoothed curve's range is used.
ExtremaScan scan_extrema(const CusumCurve& curve, int smoothing_window,
                         std::optional<double> min_prominence = std::nullopt);

/// Scan whose long-run covariance is re-estimated from residuals around the
/// scanned maxima, then rescanned, until the maxima stop moving or
/// max_rounds is reached. Starts from a curve that already carries q.
struct RefinedScan {
    ExtremaScan scan;
    LongRunCovariance sigma;
    CusumCurve curve;
    int rounds = 0;
};

RefinedScan refine_scan(const MultivariateSeries& series, CusumCurve curve, int smoothing_window,
                        std::optional<double> min_prominence = std::nullopt,
                        std::optional<int> bandwidth = std::nullopt, int max_rounds = 5);

/// Columns k, t, q, q_over_n, s_1..s_d.
void write_curve_csv(const CusumCurve& curve, const std::string& path);

/// key=value lines, one field per line.
std::string format_test_result(const TestResult& result);

}  // namespace mcusum
