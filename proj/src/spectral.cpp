#include "mcusum/spectral.hpp"

#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "mcusum/error.hpp"

namespace mcusum {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwBuffer {
    explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {
        if (!ptr) throw Error(ErrorCategory::Internal, "fftw_malloc failed");
    }
    ~FftwBuffer() { fftw_free(ptr); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    void* ptr;
};

int checked_bandwidth(Eigen::Index length, std::optional<int> bandwidth) {
    const int h = bandwidth ? *bandwidth : default_bandwidth(length);
    if (h < 1) throw Error(ErrorCategory::DomainError, "bandwidth must be >= 1");
    if (2 * static_cast<Eigen::Index>(h) + 1 > length) {
        throw Error(ErrorCategory::BandwidthTooLarge,
                    "bandwidth " + std::to_string(h) + " needs at least " +
                        std::to_string(2 * h + 1) + " observations");
    }
    return h;
}

LongRunCovariance estimate_from_centered(const CenteredSeries& centered, int h) {
    const auto periodogram = dft(centered);
    const auto kernel = sma_kernel(h);
    const Eigen::MatrixXcd f0 = smoothed_spectrum(periodogram, kernel, 0.0);
    const Eigen::MatrixXd re = kTwoPi * f0.real();
    auto out = LongRunCovariance::from_matrix(re);
    out.bandwidth = h;
    const double re_norm = f0.real().norm();
    out.imaginary_ratio = re_norm > 0.0 ? f0.imag().norm() / re_norm : 0.0;
    return out;
}

}  // namespace

Periodogram::Periodogram(Eigen::MatrixXcd transforms, Eigen::Index length)
    : transforms_(std::move(transforms)), length_(length) {
    if (transforms_.rows() != length_ / 2 + 1) {
        throw Error(ErrorCategory::DimensionMismatch, "periodogram storage does not match length");
    }
}

Eigen::VectorXcd Periodogram::transform(Eigen::Index j) const {
    const Eigen::Index wrapped = ((j % length_) + length_) % length_;
    if (wrapped <= length_ / 2) return transforms_.row(wrapped).transpose();
    return transforms_.row(length_ - wrapped).transpose().conjugate();
}

Eigen::MatrixXcd Periodogram::ordinate(Eigen::Index j) const {
    const Eigen::VectorXcd w = transform(j);
    return w * w.adjoint();
}

Periodogram dft(const CenteredSeries& series) {
    const Eigen::Index n = series.values.rows();
    const Eigen::Index d = series.values.cols();
    if (n < 2) throw Error(ErrorCategory::TooShort, "DFT needs at least 2 observations");
    const Eigen::Index bins = n / 2 + 1;

    FftwBuffer in(sizeof(double) * static_cast<std::size_t>(n * d));
    FftwBuffer out(sizeof(fftw_complex) * static_cast<std::size_t>(bins * d));
    auto* in_data = static_cast<double*>(in.ptr);
    auto* out_data = static_cast<fftw_complex*>(out.ptr);

    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        int dims[1] = {static_cast<int>(n)};
        plan = fftw_plan_many_dft_r2c(1, dims, static_cast<int>(d), in_data, nullptr, 1,
                                      static_cast<int>(n), out_data, nullptr, 1,
                                      static_cast<int>(bins), FFTW_ESTIMATE);
    }
    if (!plan) throw Error(ErrorCategory::Internal, "FFTW planning failed");
    // Column-major storage matches the howmany/dist layout directly.
    std::copy(series.values.data(), series.values.data() + n * d, in_data);
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }

    // FFTW computes sum_{n'=0}^{N-1} x exp(-i n' w); the 1-based positive
    // exponent convention is exp(i w) times its conjugate.
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    Eigen::MatrixXcd transforms(bins, d);
    for (Eigen::Index j = 0; j < bins; ++j) {
        const double omega = kTwoPi * static_cast<double>(j) / static_cast<double>(n);
        const std::complex<double> phase = std::polar(scale, omega);
        for (Eigen::Index c = 0; c < d; ++c) {
            const auto& z = out_data[c * bins + j];
            transforms(j, c) = phase * std::complex<double>(z[0], -z[1]);
        }
    }
    return Periodogram(std::move(transforms), n);
}

Eigen::Index nearest_fourier_index(Eigen::Index length, double omega) {
    if (!(omega >= 0.0 && omega <= std::numbers::pi)) {
        throw Error(ErrorCategory::DomainError, "frequency must lie in [0, pi]");
    }
    if (length < 1) throw Error(ErrorCategory::DomainError, "length must be positive");
    const double step = kTwoPi / static_cast<double>(length);
    const auto lower = static_cast<Eigen::Index>(std::floor(omega / step));
    const double below = std::abs(omega - step * static_cast<double>(lower));
    const double above = std::abs(step * static_cast<double>(lower + 1) - omega);
    // Distances within a few ulps of each other count as a tie.
    const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, omega);
    return above <= below + slack ? lower + 1 : lower;
}

double nearest_fourier(Eigen::Index length, double omega) {
    return kTwoPi * static_cast<double>(nearest_fourier_index(length, omega)) /
           static_cast<double>(length);
}

KernelWeights::KernelWeights(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty() || weights_.size() % 2 == 0) {
        throw Error(ErrorCategory::DomainError, "kernel needs an odd number (2h+1) of weights");
    }
    bandwidth_ = static_cast<int>(weights_.size() / 2);
    double total = 0.0;
    for (int k = 0; k <= bandwidth_; ++k) {
        const double left = weights_[static_cast<std::size_t>(bandwidth_ - k)];
        const double right = weights_[static_cast<std::size_t>(bandwidth_ + k)];
        if (left != right) throw Error(ErrorCategory::DomainError, "kernel weights must be symmetric");
        if (left < 0.0) throw Error(ErrorCategory::DomainError, "kernel weights must be nonnegative");
    }
    for (const double w : weights_) total += w;
    if (std::abs(total - 1.0) > 1e-12) {
        throw Error(ErrorCategory::DomainError, "kernel weights must sum to one");
    }
}

double KernelWeights::operator()(int k) const {
    if (k < -bandwidth_ || k > bandwidth_) return 0.0;
    return weights_[static_cast<std::size_t>(k + bandwidth_)];
}

double KernelWeights::sum_of_squares() const {
    double s = 0.0;
    for (const double w : weights_) s += w * w;
    return s;
}

KernelWeights sma_kernel(int bandwidth) {
    if (bandwidth < 1) throw Error(ErrorCategory::DomainError, "bandwidth must be >= 1");
    const auto count = static_cast<std::size_t>(2 * bandwidth + 1);
    return KernelWeights(std::vector<double>(count, 1.0 / static_cast<double>(count)));
}

int default_bandwidth(Eigen::Index length) {
    if (length < 16) {
        throw Error(ErrorCategory::TooShort,
                    "default bandwidth needs T >= 16, got " + std::to_string(length));
    }
    auto h = static_cast<Eigen::Index>(std::floor(std::pow(static_cast<double>(length), 0.25)));
    auto fourth = [](Eigen::Index v) { return v * v * v * v; };
    while (fourth(h + 1) <= length) ++h;
    while (h > 1 && fourth(h) > length) --h;
    return static_cast<int>(std::max<Eigen::Index>(h, 1));
}

Eigen::MatrixXcd smoothed_spectrum(const Periodogram& periodogram,
                                   const KernelWeights& kernel, double omega) {
    const int h = kernel.bandwidth();
    if (2 * static_cast<Eigen::Index>(h) + 1 > periodogram.length()) {
        throw Error(ErrorCategory::BandwidthTooLarge,
                    "bandwidth " + std::to_string(h) + " exceeds the Fourier grid");
    }
    if (!(omega >= -std::numbers::pi && omega <= std::numbers::pi)) {
        throw Error(ErrorCategory::DomainError, "frequency must lie in [-pi, pi]");
    }
    const Eigen::Index centre = nearest_fourier_index(periodogram.length(), std::abs(omega));
    const Eigen::Index d = periodogram.dim();
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(d, d);
    for (int k = -h; k <= h; ++k) {
        acc += kernel(k) * periodogram.ordinate(centre + k);
    }
    acc /= kTwoPi;
    if (omega < 0.0) acc = acc.conjugate().eval();
    return acc;
}

LongRunCovariance LongRunCovariance::from_matrix(const Eigen::MatrixXd& sigma) {
    if (sigma.rows() != sigma.cols() || sigma.rows() < 1) {
        throw Error(ErrorCategory::DimensionMismatch, "covariance must be a nonempty square matrix");
    }
    if (!sigma.allFinite()) throw Error(ErrorCategory::NonFinite, "covariance has non-finite entries");
    LongRunCovariance out;
    out.sigma = 0.5 * (sigma + sigma.transpose());
    const auto d = static_cast<double>(out.sigma.rows());
    const double trace = out.sigma.trace();
    if (!(trace > 0.0)) {
        throw Error(ErrorCategory::DegenerateSpectrum,
                    "long-run covariance has nonpositive trace; the series shows no variation");
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.sigma);
    const double floor_value = 1e-8 * trace / d;
    const double lambda_min = eig.eigenvalues().minCoeff();
    if (lambda_min <= floor_value) out.ridge_applied = floor_value - lambda_min;

    const Eigen::VectorXd shifted = eig.eigenvalues().array() + out.ridge_applied;
    out.sigma_inv = eig.eigenvectors() * shifted.cwiseInverse().asDiagonal() *
                    eig.eigenvectors().transpose();
    out.sigma_inv = 0.5 * (out.sigma_inv + out.sigma_inv.transpose()).eval();
    return out;
}

LongRunCovariance long_run_covariance(const MultivariateSeries& series,
                                      std::optional<int> bandwidth) {
    const int h = checked_bandwidth(series.length(), bandwidth);
    return estimate_from_centered(center(series), h);
}

LongRunCovariance long_run_covariance_segmented(const MultivariateSeries& series,
                                                const std::vector<Eigen::Index>& breaks,
                                                std::optional<int> bandwidth) {
    const Eigen::Index n = series.length();
    const int h = checked_bandwidth(n, bandwidth);
    std::vector<Eigen::Index> edges{0};
    for (const auto b : breaks) {
        if (b <= edges.back() || b >= n) {
            throw Error(ErrorCategory::DomainError, "segment breaks must be increasing and inside (0, T)");
        }
        edges.push_back(b);
    }
    edges.push_back(n);

    CenteredSeries residual;
    residual.values.resize(n, series.dim());
    residual.mean = Eigen::VectorXd::Zero(series.dim());
    for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
        const auto begin = edges[s];
        const auto rows = edges[s + 1] - begin;
        const auto block = series.values().middleRows(begin, rows);
        const Eigen::RowVectorXd mean = block.colwise().mean();
        residual.values.middleRows(begin, rows) = block.rowwise() - mean;
    }
    return estimate_from_centered(residual, h);
}

void write_spectrum_csv(const MultivariateSeries& series, std::optional<int> bandwidth,
                        const std::string& path) {
    const Eigen::Index n = series.length();
    const int h = checked_bandwidth(n, bandwidth);
    const auto periodogram = dft(center(series));
    const auto kernel = sma_kernel(h);
    const Eigen::Index d = series.dim();

    std::ofstream out(path);
    if (!out) throw Error(ErrorCategory::IoError, "cannot write '" + path + "'");
    out << "omega";
    for (Eigen::Index r = 0; r < d; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) {
            out << ",re_" << r + 1 << '_' << c + 1 << ",im_" << r + 1 << '_' << c + 1;
        }
    }
    out << '\n';
    out.precision(17);
    for (Eigen::Index j = 0; j <= n / 2; ++j) {
        const double omega = std::min(kTwoPi * static_cast<double>(j) / static_cast<double>(n),
                                      std::numbers::pi);
        const Eigen::MatrixXcd f = smoothed_spectrum(periodogram, kernel, omega);
        out << omega;
        for (Eigen::Index r = 0; r < d; ++r) {
            for (Eigen::Index c = 0; c < d; ++c) {
                out << ',' << f(r, c).real() << ',' << f(r, c).imag();
            }
        }
        out << '\n';
    }
    if (!out) throw Error(ErrorCategory::IoError, "write to '" + path + "' failed");
}

}  // namespace mcusum
