#include "mcusum/cusum.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mcusum/error.hpp"

namespace mcusum {

CusumCurve cusum(const MultivariateSeries& series) {
    const auto& x = series.values();
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    const double root_n = std::sqrt(static_cast<double>(n));

    CusumCurve curve;
    curve.length = n;
    curve.s_tilde = Eigen::MatrixXd::Zero(n + 1, d);
    // Partial sums are taken relative to the first observation. The CUSUM is
    // unchanged by any constant offset, and this keeps a constant series at
    // exactly zero.
    for (Eigen::Index j = 0; j < d; ++j) {
        const double reference = x(0, j);
        std::vector<long double> prefix(static_cast<std::size_t>(n + 1), 0.0L);
        for (Eigen::Index t = 0; t < n; ++t) {
            prefix[static_cast<std::size_t>(t + 1)] =
                prefix[static_cast<std::size_t>(t)] + static_cast<long double>(x(t, j) - reference);
        }
        const long double total = prefix.back();
        for (Eigen::Index k = 1; k < n; ++k) {
            const long double frac = static_cast<long double>(k) / static_cast<long double>(n);
            curve.s_tilde(k, j) =
                static_cast<double>(prefix[static_cast<std::size_t>(k)] - frac * total) / root_n;
        }
    }
    return curve;
}

CusumCurve quadform(CusumCurve curve, const LongRunCovariance& sigma) {
    const Eigen::Index d = curve.s_tilde.cols();
    if (sigma.dim() != d) {
        throw Error(ErrorCategory::DimensionMismatch,
                    "covariance is " + std::to_string(sigma.dim()) + "x" +
                        std::to_string(sigma.dim()) + " but the curve has dimension " +
                        std::to_string(d));
    }
    const Eigen::MatrixXd regularised =
        sigma.sigma + sigma.ridge_applied * Eigen::MatrixXd::Identity(d, d);
    const Eigen::LLT<Eigen::MatrixXd> llt(regularised);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCategory::NotPositiveDefinite, "long-run covariance is not positive definite");
    }
    // Whitened rows: L^{-1} s_k for every k at once.
    const Eigen::MatrixXd white =
        llt.matrixL().solve(curve.s_tilde.transpose());
    curve.q = white.colwise().squaredNorm().transpose();
    curve.q(0) = 0.0;
    curve.q(curve.length) = 0.0;
    return curve;
}

TestResult run_test(const MultivariateSeries& series, const CriticalValueTable& table,
                    const TestOptions& options) {
    const int d = static_cast<int>(series.dim());
    const auto entry = table.find(d, options.alpha);
    if (!entry) {
        std::ostringstream os;
        os << "no critical value for d=" << d << ", alpha=" << options.alpha;
        throw Error(ErrorCategory::MissingCriticalValue, os.str());
    }

    TestResult result;
    result.alpha = options.alpha;
    result.d = d;
    result.critical_value = entry->value;
    result.sigma = long_run_covariance(series, options.bandwidth);
    result.curve = quadform(cusum(series), result.sigma);
    if (options.two_pass && series.length() >= 3) {
        const auto first = estimate_changepoint(result.curve, EstimatorMethod::QuadformArgmax);
        result.sigma = long_run_covariance_segmented(series, {first.t_hat}, options.bandwidth);
        result.curve = quadform(std::move(result.curve), result.sigma);
    }
    const auto& q = result.curve.q;
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < q.size(); ++k) {
        if (q(k) > q(best)) best = k;
    }
    result.argmax = best;
    result.statistic = q(best);
    result.reject = result.statistic > result.critical_value;
    return result;
}

std::string method_name(EstimatorMethod method) {
    return method == EstimatorMethod::NormArgmax ? "norm_argmax" : "quadform_argmax";
}

EstimatorMethod parse_method(const std::string& name) {
    if (name == "norm_argmax" || name == "norm") return EstimatorMethod::NormArgmax;
    if (name == "quadform_argmax" || name == "quadform") return EstimatorMethod::QuadformArgmax;
    throw Error(ErrorCategory::DomainError, "unknown estimator '" + name + "'");
}

ChangePointEstimate estimate_changepoint(const CusumCurve& curve, EstimatorMethod method,
                                         double trim) {
    const Eigen::Index n = curve.length;
    if (n < 3) throw Error(ErrorCategory::TooShort, "change-point estimation needs T >= 3");
    if (!(trim >= 0.0 && trim < 0.5)) throw Error(ErrorCategory::DomainError, "trim must lie in [0, 0.5)");
    if (method == EstimatorMethod::QuadformArgmax && !curve.has_quadform()) {
        throw Error(ErrorCategory::DomainError, "quadform estimator needs a long-run covariance");
    }

    const auto lo = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(trim * static_cast<double>(n))));
    const auto hi = std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(std::floor((1.0 - trim) * static_cast<double>(n))));
    if (lo > hi) throw Error(ErrorCategory::DomainError, "trim leaves no admissible index");

    auto value_at = [&](Eigen::Index k) {
        return method == EstimatorMethod::QuadformArgmax ? curve.q(k) : curve.s_tilde.row(k).norm();
    };
    Eigen::Index best = lo;
    double best_value = value_at(lo);
    for (Eigen::Index k = lo + 1; k <= hi; ++k) {
        const double v = value_at(k);
        if (v > best_value) {
            best = k;
            best_value = v;
        }
    }
    ChangePointEstimate out;
    out.t_hat = best;
    out.k_hat = static_cast<double>(best) / static_cast<double>(n);
    out.method = method;
    out.curve_value = best_value;
    return out;
}

ChangePointEstimate estimate_changepoint(const MultivariateSeries& series, EstimatorMethod method,
                                         const std::optional<LongRunCovariance>& sigma,
                                         std::optional<int> bandwidth, double trim) {
    auto curve = cusum(series);
    if (method == EstimatorMethod::QuadformArgmax) {
        curve = quadform(std::move(curve), sigma ? *sigma : long_run_covariance(series, bandwidth));
    }
    return estimate_changepoint(curve, method, trim);
}

int default_smoothing_window(Eigen::Index length) {
    auto h = static_cast<Eigen::Index>(std::floor(std::pow(static_cast<double>(std::max<Eigen::Index>(length, 1)), 0.25)));
    while ((h + 1) * (h + 1) * (h + 1) * (h + 1) <= length) ++h;
    while (h > 0 && h * h * h * h > length) --h;
    return static_cast<int>(2 * h + 1);
}

namespace {

// Topographic prominence of a peak at i in y: walk outwards on each side until
// a strictly higher sample (or the boundary), take the lowest point on each
// walk, and measure the peak against the higher of the two.
double peak_prominence(const Eigen::VectorXd& y, Eigen::Index i, Eigen::Index lo, Eigen::Index hi) {
    const double peak = y(i);
    double left_min = peak;
    for (Eigen::Index k = i - 1; k >= lo; --k) {
        if (y(k) > peak) break;
        left_min = std::min(left_min, y(k));
    }
    double right_min = peak;
    for (Eigen::Index k = i + 1; k <= hi; ++k) {
        if (y(k) > peak) break;
        right_min = std::min(right_min, y(k));
    }
    return peak - std::max(left_min, right_min);
}

// Plateau-aware local maxima strictly inside [lo, hi]: each flat top is
// reported once, at its left edge.
std::vector<Eigen::Index> local_maxima(const Eigen::VectorXd& y, Eigen::Index lo, Eigen::Index hi) {
    std::vector<Eigen::Index> peaks;
    Eigen::Index i = lo + 1;
    while (i < hi) {
        if (y(i) > y(i - 1)) {
            Eigen::Index j = i;
            while (j + 1 < hi && y(j + 1) == y(i)) ++j;
            if (y(j + 1) < y(i)) peaks.push_back(i);
            i = j + 1;
        } else {
            ++i;
        }
    }
    return peaks;
}

}  // namespace

ExtremaScan scan_extrema(const CusumCurve& curve, int smoothing_window,
                         std::optional<double> min_prominence) {
    if (!curve.has_quadform()) throw Error(ErrorCategory::DomainError, "scan needs the quadratic-form curve");
    if (smoothing_window < 1 || smoothing_window % 2 == 0) {
        throw Error(ErrorCategory::DomainError, "smoothing window must be odd and >= 1");
    }
    if (min_prominence && !(*min_prominence >= 0.0)) {
        throw Error(ErrorCategory::DomainError, "minimum prominence must be >= 0");
    }

    const Eigen::Index size = curve.q.size();
    const Eigen::Index half = smoothing_window / 2;
    ExtremaScan scan;
    scan.smoothing_window = smoothing_window;
    scan.smoothed.resize(size);
    // Centred moving average; the window shrinks symmetrically near the ends.
    for (Eigen::Index k = 0; k < size; ++k) {
        const Eigen::Index reach = std::min({half, k, size - 1 - k});
        scan.smoothed(k) = curve.q.segment(k - reach, 2 * reach + 1).mean();
    }
    const auto& y = scan.smoothed;
    const double range = y.maxCoeff() - y.minCoeff();
    scan.min_prominence = min_prominence ? *min_prominence : 0.1 * range;

    // Neighbours of interior indices 1..N-1 include the endpoints 0 and N.
    const Eigen::Index lo = 0;
    const Eigen::Index hi = size - 1;
    for (const auto i : local_maxima(y, lo, hi)) {
        const double prom = peak_prominence(y, i, lo, hi);
        if (prom >= scan.min_prominence && prom > 0.0) {
            scan.extrema.push_back({i, y(i), ExtremumKind::Max, prom});
        }
    }
    const Eigen::VectorXd flipped = -y;
    for (const auto i : local_maxima(flipped, lo, hi)) {
        const double prom = peak_prominence(flipped, i, lo, hi);
        if (prom >= scan.min_prominence && prom > 0.0) {
            scan.extrema.push_back({i, y(i), ExtremumKind::Min, prom});
        }
    }
    std::sort(scan.extrema.begin(), scan.extrema.end(),
              [](const Extremum& a, const Extremum& b) { return a.index < b.index; });
    return scan;
}

RefinedScan refine_scan(const MultivariateSeries& series, CusumCurve curve, int smoothing_window,
                        std::optional<double> min_prominence, std::optional<int> bandwidth, int max_rounds) {
    if (!curve.has_quadform()) throw Error(ErrorCategory::DomainError, "scan needs the quadratic form q");
    if (max_rounds < 0) throw Error(ErrorCategory::DomainError, "max_rounds must be >= 0");
    auto maxima = [](const ExtremaScan& scan) {
        std::vector<Eigen::Index> at;
        for (const auto& e : scan.extrema) {
            if (e.kind == ExtremumKind::Max) at.push_back(e.index);
        }
        return at;
    };

    RefinedScan out;
    out.scan = scan_extrema(curve, smoothing_window, min_prominence);
    out.curve = std::move(curve);
    auto breaks = maxima(out.scan);
    while (out.rounds < max_rounds && !breaks.empty()) {
        out.sigma = long_run_covariance_segmented(series, breaks, bandwidth);
        out.curve = quadform(std::move(out.curve), out.sigma);
        out.scan = scan_extrema(out.curve, smoothing_window, min_prominence);
        ++out.rounds;
        auto next = maxima(out.scan);
        if (next == breaks) break;
        breaks = std::move(next);
    }
    if (out.rounds == 0) out.sigma = long_run_covariance(series, bandwidth);
    return out;
}

void write_curve_csv(const CusumCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCategory::IoError, "cannot write '" + path + "'");
    const Eigen::Index d = curve.s_tilde.cols();
    out << "k,t,q,q_over_n";
    for (Eigen::Index j = 0; j < d; ++j) out << ",s_" << j + 1;
    out << '\n';
    out.precision(17);
    const double n = static_cast<double>(curve.length);
    for (Eigen::Index k = 0; k <= curve.length; ++k) {
        const double q = curve.has_quadform() ? curve.q(k) : std::nan("");
        out << k << ',' << static_cast<double>(k) / n << ',' << q << ',' << q / n;
        for (Eigen::Index j = 0; j < d; ++j) out << ',' << curve.s_tilde(k, j);
        out << '\n';
    }
    if (!out) throw Error(ErrorCategory::IoError, "write to '" + path + "' failed");
}

std::string format_test_result(const TestResult& result) {
    std::ostringstream os;
    os.precision(10);
    os << "statistic=" << result.statistic << '\n'
       << "critical_value=" << result.critical_value << '\n'
       << "alpha=" << result.alpha << '\n'
       << "reject=" << (result.reject ? "true" : "false") << '\n'
       << "d=" << result.d << '\n'
       << "argmax=" << result.argmax << '\n'
       << "bandwidth=" << result.sigma.bandwidth << '\n'
       << "ridge_applied=" << result.sigma.ridge_applied << '\n';
    os << "sigma_diag=";
    for (Eigen::Index j = 0; j < result.sigma.sigma.rows(); ++j) {
        if (j) os << ';';
        os << result.sigma.sigma(j, j);
    }
    os << '\n';
    return os.str();
}

}  // namespace mcusum
