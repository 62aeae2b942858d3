#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <numbers>
#include <random>

#include "mcusum/simulator.hpp"
#include "mcusum/spectral.hpp"

using namespace mcusum;
using std::numbers::pi;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) x(i, j) = normal(gen);
    }
    return x;
}

Eigen::VectorXcd direct_dft(const Eigen::MatrixXd& x, Eigen::Index j) {
    const auto n = x.rows();
    const double omega = 2.0 * pi * static_cast<double>(j) / static_cast<double>(n);
    Eigen::VectorXcd w = Eigen::VectorXcd::Zero(x.cols());
    for (Eigen::Index t = 0; t < n; ++t) {
        const std::complex<double> phase = std::polar(1.0, omega * static_cast<double>(t + 1));
        w += phase * x.row(t).transpose().cast<std::complex<double>>();
    }
    return w / std::sqrt(static_cast<double>(n));
}

}  // namespace

TEST_CASE("FFT transform matches the direct sum", "[spectral]") {
    for (const Eigen::Index n : {2, 3, 17, 64, 100, 255, 256}) {
        const auto centered = center(MultivariateSeries(gaussian(n, 3, static_cast<std::uint64_t>(n))));
        const auto pgram = dft(centered);
        for (Eigen::Index j = pgram.min_index(); j <= pgram.max_index(); ++j) {
            const auto fast = pgram.transform(j);
            const auto slow = direct_dft(centered.values, j);
            const double scale = std::max(1.0, slow.norm());
            INFO("n=" << n << " j=" << j);
            CHECK((fast - slow).norm() <= 1e-9 * scale);
            const auto ordinate = pgram.ordinate(j);
            const Eigen::MatrixXcd oracle = slow * slow.adjoint();
            for (Eigen::Index a = 0; a < ordinate.size(); ++a) {
                CHECK(std::abs(ordinate(a) - oracle(a)) <= 1e-9 * std::max(1.0, std::abs(oracle(a))));
            }
        }
    }
}

TEST_CASE("periodogram identities", "[spectral]") {
    SECTION("two-point series") {
        Eigen::MatrixXd x(2, 1);
        x << 1.0, -1.0;
        const auto pgram = dft(center(MultivariateSeries(x)));
        CHECK(pgram.ordinate(1)(0, 0).real() == Catch::Approx(2.0));
        CHECK(std::abs(pgram.transform(1)(0) - std::complex<double>(-2.0 / std::sqrt(2.0), 0.0)) < 1e-12);
    }
    SECTION("zero series") {
        const auto pgram = dft(center(MultivariateSeries(Eigen::MatrixXd::Zero(16, 2))));
        for (Eigen::Index j = pgram.min_index(); j <= pgram.max_index(); ++j) {
            CHECK(pgram.ordinate(j).norm() == 0.0);
        }
        CHECK(smoothed_spectrum(pgram, sma_kernel(2), 1.0).norm() == 0.0);
    }
    SECTION("Parseval, Hermitian PSD and conjugate symmetry") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const Eigen::Index n = 40 + static_cast<Eigen::Index>(seed * 7);
            const auto centered = center(MultivariateSeries(gaussian(n, 2, seed) * 3.0));
            const auto pgram = dft(centered);
            double trace_sum = 0.0;
            for (Eigen::Index j = pgram.min_index(); j <= pgram.max_index(); ++j) {
                const auto ord = pgram.ordinate(j);
                trace_sum += ord.trace().real();
                CHECK((ord - ord.adjoint()).norm() <= 1e-10);
                const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(ord);
                CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
                CHECK((pgram.ordinate(-j) - ord.conjugate()).norm() <= 1e-12);
            }
            const double energy = centered.values.squaredNorm();
            CHECK(std::abs(trace_sum - energy) <= 1e-8 * energy);
        }
    }
}

TEST_CASE("nearest Fourier frequency", "[spectral]") {
    CHECK(nearest_fourier_index(8, 0.0) == 0);
    CHECK(nearest_fourier_index(8, pi / 8.0 + 1e-12) == 1);
    CHECK(nearest_fourier_index(8, pi / 8.0) == 1);
    CHECK(nearest_fourier_index(8, 3.0 * pi / 8.0) == 2);
    CHECK(nearest_fourier_index(1000, 1.0) == 159);
    CHECK(nearest_fourier(1000, 1.0) == Catch::Approx(2.0 * pi * 159.0 / 1000.0));
    // pi sits exactly between k = 3 and k = 4 when N is odd.
    CHECK(nearest_fourier_index(7, pi) == 4);

    for (const Eigen::Index n : {5, 8, 33, 1000}) {
        for (int step = 0; step <= 200; ++step) {
            const double omega = pi * step / 200.0;
            Eigen::Index best = 0;
            double best_gap = omega;
            for (Eigen::Index k = 1; k <= n / 2 + 1; ++k) {
                const double gap = std::abs(2.0 * pi * static_cast<double>(k) / static_cast<double>(n) - omega);
                if (gap <= best_gap + 1e-12) {
                    best = k;
                    best_gap = std::min(gap, best_gap);
                }
            }
            INFO("n=" << n << " omega=" << omega);
            CHECK(nearest_fourier_index(n, omega) == best);
        }
    }
    CHECK_THROWS_AS(nearest_fourier_index(8, -0.1), Error);
    CHECK_THROWS_AS(nearest_fourier_index(8, pi + 1e-6), Error);
}

TEST_CASE("kernel weights", "[spectral]") {
    const auto k2 = sma_kernel(2);
    CHECK(k2.weights().size() == 5);
    for (int k = -2; k <= 2; ++k) CHECK(k2(k) == Catch::Approx(0.2));
    CHECK(k2(3) == 0.0);
    const auto k1 = sma_kernel(1);
    CHECK(k1(-1) == Catch::Approx(1.0 / 3.0));
    for (int h = 1; h <= 40; ++h) {
        const auto kh = sma_kernel(h);
        double sum = 0.0;
        for (int k = -h; k <= h; ++k) {
            CHECK(kh(k) == kh(-k));
            CHECK(kh(k) >= 0.0);
            sum += kh(k);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        CHECK(kh.sum_of_squares() == Catch::Approx(1.0 / (2.0 * h + 1.0)));
    }
    CHECK_THROWS_AS(sma_kernel(0), Error);
    CHECK_THROWS_AS(KernelWeights({0.5, 0.5}), Error);
    CHECK_THROWS_AS(KernelWeights({0.2, 0.5, 0.3}), Error);
    CHECK_THROWS_AS(KernelWeights({-0.1, 1.2, -0.1}), Error);
    CHECK_THROWS_AS(KernelWeights({0.3, 0.3, 0.3}), Error);
    CHECK_NOTHROW(KernelWeights({0.25, 0.5, 0.25}));
}

TEST_CASE("default bandwidth", "[spectral]") {
    CHECK(default_bandwidth(8000) == 9);
    CHECK(default_bandwidth(16000) == 11);
    CHECK(default_bandwidth(16) == 2);
    CHECK(default_bandwidth(81) == 3);
    CHECK(default_bandwidth(80) == 2);
    CHECK(default_bandwidth(16384) == 11);
    CHECK_THROWS_AS(default_bandwidth(15), Error);
}

TEST_CASE("smoothed spectrum contract", "[spectral]") {
    const auto pgram = dft(center(MultivariateSeries(gaussian(101, 3, 5))));
    const auto kernel = sma_kernel(4);
    for (const double omega : {0.0, 0.3, 1.7, pi - 0.01, pi}) {
        const auto f = smoothed_spectrum(pgram, kernel, omega);
        CHECK((f - f.adjoint()).norm() <= 1e-8);
        CHECK((smoothed_spectrum(pgram, kernel, -omega) - f.conjugate()).norm() <= 1e-8);
    }
    // Window at pi centres on k = 51 and wraps through the conjugate extension.
    const auto edge = smoothed_spectrum(pgram, kernel, pi);
    Eigen::MatrixXcd manual = Eigen::MatrixXcd::Zero(3, 3);
    for (int k = -4; k <= 4; ++k) manual += pgram.ordinate(51 + k) / 9.0;
    CHECK((edge - manual / (2.0 * pi)).norm() <= 1e-12);
    CHECK_THROWS_AS(smoothed_spectrum(dft(center(MultivariateSeries(gaussian(8, 1, 1)))), sma_kernel(4), 0.0),
                    Error);
}

// Each check averages 40 seeded replications, so the tolerance bounds the
// estimator's bias rather than a single draw's sampling error.
TEST_CASE("spectral estimates are centred on the truth", "[spectral][statistical]") {
    constexpr int reps = 40;
    double white = 0.0;
    double ma1 = 0.0;
    for (int r = 0; r < reps; ++r) {
        const auto z = gaussian(16385, 1, 100 + static_cast<std::uint64_t>(r));
        const auto pw = dft(center(MultivariateSeries(z.topRows(16384))));
        white += 2.0 * pi * smoothed_spectrum(pw, sma_kernel(11), 0.0)(0, 0).real();
        const Eigen::MatrixXd x = z.bottomRows(16384) + 0.5 * z.topRows(16384);
        const auto pm = dft(center(MultivariateSeries(x)));
        ma1 += smoothed_spectrum(pm, sma_kernel(default_bandwidth(16384)), 0.0)(0, 0).real();
    }
    CHECK(std::abs(white / reps - 1.0) < 0.15);
    CHECK(std::abs(ma1 / reps - 1.5 * 1.5 / (2.0 * pi)) < 0.06);
}

TEST_CASE("long-run covariance", "[spectral]") {
    SECTION("iid bivariate, averaged over replications") {
        auto spec = SimulationSpec::defaults(2);
        spec.m = 0;
        spec.coeff = CoefficientScheme::geometric(0.0, Eigen::MatrixXd::Identity(2, 2));
        spec.length = 16000;
        Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(2, 2);
        double err_long = 0.0;
        double err_short = 0.0;
        for (std::uint64_t s = 1; s <= 50; ++s) {
            spec.seed = s;
            spec.length = 16000;
            const auto lrc = long_run_covariance(gen_series(spec).series);
            mean += lrc.sigma / 50.0;
            err_long += (lrc.sigma - spec.innovation_cov).norm();
            spec.length = 1000;
            err_short += (long_run_covariance(gen_series(spec).series).sigma - spec.innovation_cov).norm();

            CHECK((lrc.sigma - lrc.sigma.transpose()).norm() <= 1e-8);
            const Eigen::MatrixXd floored = lrc.sigma + lrc.ridge_applied * Eigen::MatrixXd::Identity(2, 2);
            CHECK((lrc.sigma_inv * floored - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-6);
            CHECK(lrc.imaginary_ratio < 1e-6);
        }
        CHECK((mean - spec.innovation_cov).norm() < 0.15);
        CHECK(err_long < err_short);
    }
    SECTION("constant series is degenerate") {
        try {
            long_run_covariance(MultivariateSeries(Eigen::MatrixXd::Constant(64, 2, 3.0)));
            FAIL("no error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::DegenerateSpectrum);
        }
    }
    SECTION("collinear columns get a ridge") {
        Eigen::MatrixXd x(256, 2);
        x.col(0) = gaussian(256, 1, 3);
        x.col(1) = 2.0 * x.col(0);
        const auto lrc = long_run_covariance(MultivariateSeries(x));
        CHECK(lrc.ridge_applied > 0.0);
        const Eigen::MatrixXd floored = lrc.sigma + lrc.ridge_applied * Eigen::MatrixXd::Identity(2, 2);
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(floored).eigenvalues().minCoeff() > 0.0);
        CHECK((lrc.sigma_inv * floored - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-6);
    }
    SECTION("explicit bandwidth is honoured and bounded") {
        const MultivariateSeries s(gaussian(64, 2, 9));
        CHECK(long_run_covariance(s, 5).bandwidth == 5);
        CHECK(long_run_covariance(s).bandwidth == 2);
        CHECK_THROWS_AS(long_run_covariance(s, 40), Error);
    }
}
