#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcusum/series.hpp"

namespace mcusum {

/// Matrix periodogram of a centered series on the Fourier grid
/// omega_j = 2*pi*j/N.
///
/// Only the transforms for 0 <= j <= N/2 are stored. Every other integer j is
/// served through 2*pi periodicity and W(-omega) = conj(W(omega)), so
/// ordinate(-j) is the elementwise conjugate of ordinate(j).
class Periodogram {
public:
    Periodogram(Eigen::MatrixXcd transforms, Eigen::Index length);

    Eigen::Index length() const noexcept { return length_; }
    Eigen::Index dim() const noexcept { return transforms_.cols(); }

    /// Lowest and highest stored-grid index: -[(N-1)/2] and [N/2].
    Eigen::Index min_index() const noexcept { return -((length_ - 1) / 2); }
    Eigen::Index max_index() const noexcept { return length_ / 2; }

    /// W(omega_j) = N^{-1/2} sum_{n=1}^{N} X_n exp(i n omega_j), any integer j.
    Eigen::VectorXcd transform(Eigen::Index j) const;

    /// I_N(omega_j) = W(omega_j) W(omega_j)^*, any integer j.
    Eigen::MatrixXcd ordinate(Eigen::Index j) const;

private:
    Eigen::MatrixXcd transforms_;  // rows j = 0..N/2, one column per coordinate
    Eigen::Index length_;
};

/// FFT-based discrete Fourier transform of every coordinate.
Periodogram dft(const CenteredSeries& series);

/// Index k of the grid frequency 2*pi*k/N nearest to omega in [0, pi]. Exact
/// ties go to the larger k.
Eigen::Index nearest_fourier_index(Eigen::Index length, double omega);
double nearest_fourier(Eigen::Index length, double omega);

/// Symmetric, nonnegative smoothing weights over |k| <= h that sum to one.
class KernelWeights {
public:
    /// weights[k + h] holds K(k); throws DomainError if the contract fails.
    explicit KernelWeights(std::vector<double> weights);

    int bandwidth() const noexcept { return bandwidth_; }
    double operator()(int k) const;
    const std::vector<double>& weights() const noexcept { return weights_; }
    double sum_of_squares() const;

private:
    std::vector<double> weights_;
    int bandwidth_;
};

/// Equal weights 1/(2h+1) over |k| <= h.
KernelWeights sma_kernel(int bandwidth);

/// floor(T^{1/4}), at least 1. Throws TooShort below T = 16.
int default_bandwidth(Eigen::Index length);

/// Kernel-smoothed periodogram (2*pi)^{-1} sum_k K(k) I_N(g(N,|omega|) + omega_k),
/// conjugated for negative omega.
Eigen::MatrixXcd smoothed_spectrum(const Periodogram& periodogram,
                                   const KernelWeights& kernel, double omega);

/// Long-run covariance 2*pi*Re f(0), symmetrised and floored to be positive
/// definite.
struct LongRunCovariance {
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd sigma_inv;
    double ridge_applied = 0.0;
    int bandwidth = 0;
    // ||Im f(0)||_F / ||Re f(0)||_F from the estimate.
    double imaginary_ratio = 0.0;

    Eigen::Index dim() const noexcept { return sigma.rows(); }

    /// Wraps an externally supplied covariance, applying the same symmetrise
    /// and ridge rules as the estimator.
    static LongRunCovariance from_matrix(const Eigen::MatrixXd& sigma);
};

LongRunCovariance long_run_covariance(const MultivariateSeries& series,
                                      std::optional<int> bandwidth = std::nullopt);

/// Estimate from residuals after removing a separate mean on each segment
/// between consecutive breaks. Breaks are observation counts in (0, T).
LongRunCovariance long_run_covariance_segmented(const MultivariateSeries& series,
                                                const std::vector<Eigen::Index>& breaks,
                                                std::optional<int> bandwidth = std::nullopt);

/// One row per Fourier frequency 0 <= omega_j <= pi: omega followed by the d*d
/// entries of f(omega_j) row-major, real and imaginary parts interleaved.
void write_spectrum_csv(const MultivariateSeries& series, std::optional<int> bandwidth,
                        const std::string& path);

}  // namespace mcusum
