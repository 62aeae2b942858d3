#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "mcusum/cusum.hpp"
#include "mcusum/simulator.hpp"

using namespace mcusum;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = normal(gen);
    return x;
}

// Dyadic values keep every partial sum exact in double precision.
Eigen::MatrixXd dyadic(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> pick(-64, 64);
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = pick(gen) / 8.0;
    return x;
}

CriticalValueTable one_entry(int d, double value) {
    CriticalValueTable t;
    t.insert({d, 0.05, value, 0, 0, 0, 0.0});
    return t;
}

}  // namespace

TEST_CASE("CUSUM curve", "[cusum]") {
    SECTION("two-point hand example") {
        Eigen::MatrixXd x(2, 1);
        x << 1.0, -1.0;
        const auto c = cusum(MultivariateSeries(x));
        CHECK(c.s_tilde(1, 0) == Catch::Approx(1.0 / std::sqrt(2.0)));
    }
    SECTION("matches the raw definition and has zero endpoints") {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const auto x = gaussian(50 + static_cast<Eigen::Index>(seed), 3, seed);
            const auto c = cusum(MultivariateSeries(x));
            const auto n = x.rows();
            CHECK(c.s_tilde.row(0).norm() == 0.0);
            CHECK(c.s_tilde.row(n).norm() == 0.0);
            const Eigen::RowVectorXd total = x.colwise().sum();
            Eigen::RowVectorXd partial = Eigen::RowVectorXd::Zero(3);
            for (Eigen::Index k = 1; k < n; ++k) {
                partial += x.row(k - 1);
                const Eigen::RowVectorXd naive =
                    (partial - static_cast<double>(k) / static_cast<double>(n) * total) / std::sqrt(static_cast<double>(n));
                CHECK((c.s_tilde.row(k) - naive).norm() <= 1e-10);
            }
        }
    }
    SECTION("constant series gives exact zeros") {
        const auto c = cusum(MultivariateSeries(Eigen::MatrixXd::Constant(97, 2, 0.1)));
        CHECK(c.s_tilde.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("exact invariance to a constant shift") {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const auto x = dyadic(200, 2, seed);
            Eigen::RowVectorXd offset(2);
            offset << 12.5, -3.375;
            const Eigen::MatrixXd shifted = x.rowwise() + offset;
            CHECK(cusum(MultivariateSeries(x)).s_tilde == cusum(MultivariateSeries(shifted)).s_tilde);
        }
        const auto g = gaussian(300, 2, 4);
        const Eigen::MatrixXd moved = g.array() + 1000.0;
        CHECK((cusum(MultivariateSeries(g)).s_tilde - cusum(MultivariateSeries(moved)).s_tilde).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("quadratic form", "[cusum]") {
    SECTION("hand example") {
        CusumCurve c;
        c.length = 2;
        c.s_tilde = Eigen::MatrixXd::Zero(3, 1);
        c.s_tilde(1, 0) = 3.0;
        c = quadform(std::move(c), LongRunCovariance::from_matrix(Eigen::MatrixXd::Constant(1, 1, 2.0)));
        CHECK(c.q(1) == Catch::Approx(4.5));
        CHECK(c.q(0) == 0.0);
        CHECK(c.q(2) == 0.0);
    }
    SECTION("agrees with the explicit inverse and brute-force argmax") {
        for (const Eigen::Index n : {16, 100, 257, 512}) {
            const auto x = gaussian(n, 3, static_cast<std::uint64_t>(n));
            const MultivariateSeries s(x);
            const auto lrc = long_run_covariance(s);
            const auto c = quadform(cusum(s), lrc);
            const Eigen::MatrixXd inv = lrc.sigma.inverse();
            Eigen::Index best = 1;
            double best_value = -1.0;
            for (Eigen::Index k = 0; k <= n; ++k) {
                const Eigen::VectorXd sk = c.s_tilde.row(k).transpose();
                const double oracle = sk.dot(inv * sk);
                CHECK(c.q(k) >= 0.0);
                CHECK(std::abs(c.q(k) - oracle) <= 1e-9 * std::max(1.0, oracle));
                if (k >= 1 && k < n && oracle > best_value) {
                    best = k;
                    best_value = oracle;
                }
            }
            CHECK(estimate_changepoint(c, EstimatorMethod::QuadformArgmax).t_hat == best);
        }
    }
    SECTION("dimension mismatch") {
        const auto c = cusum(MultivariateSeries(gaussian(32, 2, 1)));
        CHECK_THROWS_AS(quadform(c, LongRunCovariance::from_matrix(Eigen::MatrixXd::Identity(3, 3))), Error);
    }
}

TEST_CASE("change-point estimators", "[cusum]") {
    Eigen::MatrixXd step(200, 1);
    step.topRows(100).setZero();
    step.bottomRows(100).setConstant(10.0);
    const auto sigma = LongRunCovariance::from_matrix(Eigen::MatrixXd::Identity(1, 1));
    const auto curve = quadform(cusum(MultivariateSeries(step)), sigma);
    const auto q = estimate_changepoint(curve, EstimatorMethod::QuadformArgmax);
    CHECK(q.t_hat == 100);
    CHECK(q.k_hat == Catch::Approx(0.5));
    CHECK(estimate_changepoint(curve, EstimatorMethod::NormArgmax).t_hat == 100);

    SECTION("norm estimator matches brute force") {
        const auto x = gaussian(300, 2, 8);
        const auto c = cusum(MultivariateSeries(x));
        Eigen::Index best = 1;
        for (Eigen::Index k = 2; k < 300; ++k) {
            if (c.s_tilde.row(k).norm() > c.s_tilde.row(best).norm()) best = k;
        }
        CHECK(estimate_changepoint(c, EstimatorMethod::NormArgmax).t_hat == best);
        CHECK_THROWS_AS(estimate_changepoint(c, EstimatorMethod::QuadformArgmax), Error);
    }
    SECTION("trim restricts the search window") {
        Eigen::MatrixXd early(200, 1);
        early.setZero();
        early.bottomRows(190).setConstant(1.0);
        const auto c = cusum(MultivariateSeries(early));
        CHECK(estimate_changepoint(c, EstimatorMethod::NormArgmax).t_hat == 10);
        CHECK(estimate_changepoint(c, EstimatorMethod::NormArgmax, 0.1).t_hat == 20);
        CHECK_THROWS_AS(estimate_changepoint(c, EstimatorMethod::NormArgmax, 0.5), Error);
    }
    SECTION("ties go to the first index") {
        Eigen::MatrixXd flat(10, 1);
        flat << 1, -1, 1, -1, 1, -1, 1, -1, 1, -1;
        const auto c = cusum(MultivariateSeries(flat));
        CHECK(estimate_changepoint(c, EstimatorMethod::NormArgmax).t_hat == 1);
    }
}

TEST_CASE("test pipeline", "[cusum]") {
    auto spec = SimulationSpec::defaults(2);
    spec.length = 4000;
    spec.delta = Eigen::Vector2d(0.5, 1.2);
    spec.k_star = 0.5;
    spec.seed = 3;
    const auto sim = gen_series(spec);
    const auto result = run_test(sim.series, one_entry(2, 2.4941));
    CHECK(result.reject);
    CHECK(result.statistic == Catch::Approx(result.curve.q.maxCoeff()));
    CHECK(result.curve.q(result.argmax) == result.statistic);
    CHECK(result.sigma.bandwidth == 7);
    CHECK(std::abs(estimate_changepoint(result.curve, EstimatorMethod::QuadformArgmax).t_hat - 2000) < 200);

    TestOptions two;
    two.two_pass = true;
    const auto refined = run_test(sim.series, one_entry(2, 2.4941), two);
    CHECK(refined.sigma.sigma.trace() < result.sigma.sigma.trace());
    CHECK(refined.statistic > result.statistic);

    try {
        run_test(sim.series, one_entry(3, 1.0));
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::MissingCriticalValue);
    }
    const auto report = format_test_result(result);
    CHECK_THAT(report, Catch::Matchers::ContainsSubstring("reject=true"));
    CHECK(parse_method("norm_argmax") == EstimatorMethod::NormArgmax);
    CHECK(method_name(EstimatorMethod::QuadformArgmax) == "quadform_argmax");
    CHECK_THROWS_AS(parse_method("median"), Error);
}

TEST_CASE("extrema scan", "[cusum]") {
    CHECK(default_smoothing_window(8000) == 19);
    CHECK(default_smoothing_window(16) == 5);

    SECTION("epidemic change gives maxima at both ends of the segment") {
        Eigen::MatrixXd x = gaussian(1500, 2, 11) * 0.2;
        x.middleRows(500, 500).array() += 1.0;
        const auto sigma = LongRunCovariance::from_matrix(Eigen::MatrixXd::Identity(2, 2) * 0.04);
        const auto curve = quadform(cusum(MultivariateSeries(x)), sigma);
        const auto scan = scan_extrema(curve, default_smoothing_window(1500));
        std::vector<Eigen::Index> maxima;
        for (const auto& e : scan.extrema) {
            if (e.kind == ExtremumKind::Max) maxima.push_back(e.index);
            CHECK(e.prominence >= scan.min_prominence);
        }
        REQUIRE(maxima.size() == 2);
        CHECK(std::abs(maxima[0] - 500) <= 10);
        CHECK(std::abs(maxima[1] - 1000) <= 10);
        CHECK(scan.smoothed.size() == 1501);
    }
    SECTION("window and threshold validation") {
        const auto curve = quadform(cusum(MultivariateSeries(gaussian(64, 1, 2))),
                                    LongRunCovariance::from_matrix(Eigen::MatrixXd::Identity(1, 1)));
        CHECK_THROWS_AS(scan_extrema(curve, 4), Error);
        CHECK_THROWS_AS(scan_extrema(curve, 5, -1.0), Error);
        CHECK(scan_extrema(curve, 5, 1e9).extrema.empty());
        CHECK_THROWS_AS(scan_extrema(cusum(MultivariateSeries(gaussian(64, 1, 2))), 5), Error);
    }
    SECTION("plateau reported once") {
        CusumCurve c;
        c.length = 8;
        c.s_tilde = Eigen::MatrixXd::Zero(9, 1);
        c.q.resize(9);
        c.q << 0, 1, 3, 3, 3, 1, 2, 1, 0;
        const auto scan = scan_extrema(c, 1, 0.5);
        REQUIRE(scan.extrema.size() == 3);
        CHECK(scan.extrema[0].index == 2);
        CHECK(scan.extrema[0].prominence == Catch::Approx(3.0));
        CHECK(scan.extrema[1].kind == ExtremumKind::Min);
        CHECK(scan.extrema[1].index == 5);
        CHECK(scan.extrema[2].index == 6);
        CHECK(scan.extrema[2].prominence == Catch::Approx(1.0));
    }
}

TEST_CASE("refined scan", "[cusum]") {
    auto spec = SimulationSpec::defaults(5);
    spec.length = 2000;
    spec.m = 0;
    spec.coeff = CoefficientScheme::geometric(0.0, Eigen::MatrixXd::Identity(5, 5));
    const Eigen::VectorXd shift = Eigen::VectorXd::Constant(5, 5.0);
    int plain_hits = 0;
    int refined_hits = 0;
    auto hits = [](const ExtremaScan& scan) {
        auto near = [&](Eigen::Index target) {
            return std::any_of(scan.extrema.begin(), scan.extrema.end(), [&](const Extremum& e) {
                return e.kind == ExtremumKind::Max && std::abs(e.index - target) <= 25;
            });
        };
        return near(666) && near(1333);
    };
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        spec.seed = seed;
        auto series = inject_shift(gen_series(spec).series, 666, shift);
        series = inject_shift(series, 1333, -shift);
        const auto curve = quadform(cusum(series), long_run_covariance(series));
        const int window = default_smoothing_window(series.length());
        plain_hits += hits(scan_extrema(curve, window)) ? 1 : 0;
        const auto refined = refine_scan(series, curve, window);
        CHECK(refined.rounds >= 1);
        CHECK(refined.rounds <= 5);
        refined_hits += hits(refined.scan) ? 1 : 0;
    }
    // Shifts along the dominant direction inflate the single-pass sigma.
    CHECK(refined_hits >= 9);
    CHECK(refined_hits > plain_hits);

    const MultivariateSeries noise(gaussian(50, 1, 3));
    const auto flat = quadform(cusum(noise), LongRunCovariance::from_matrix(Eigen::MatrixXd::Identity(1, 1)));
    CHECK(refine_scan(noise, flat, 3, 1e9).rounds == 0);
    CHECK_THROWS_AS(refine_scan(noise, cusum(noise), 3), Error);
}
