#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcusum {

/// Monte Carlo budget for the sup-of-squared-bridges law.
struct McBudget {
    std::size_t paths = 200000;
    std::size_t grid = 40000;
    std::uint64_t seed = 20240531;
    unsigned threads = 1;
};

struct CriticalValueEntry {
    int d = 0;
    double alpha = 0.0;
    double value = 0.0;
    std::size_t paths = 0;
    std::size_t grid = 0;
    std::uint64_t seed = 0;
    double stderr_estimate = 0.0;
};

/// (d, alpha) -> upper quantile of sup_t sum_i W_i^0(t)^2, each entry with
/// the budget that produced it.
class CriticalValueTable {
public:
    std::optional<CriticalValueEntry> find(int d, double alpha) const;
    void insert(const CriticalValueEntry& entry);
    std::vector<CriticalValueEntry> entries() const;
    bool empty() const noexcept { return entries_.empty(); }

    /// CSV columns: d,alpha,value,paths,grid,seed,stderr.
    static CriticalValueTable load_csv(const std::string& path);
    static CriticalValueTable parse_csv(const std::string& text, const std::string& origin);
    void save_csv(const std::string& path) const;

    /// Values generated at the default budget for d = 1..10 and
    /// alpha in {0.10, 0.05, 0.01}, compiled into the library.
    static const CriticalValueTable& shipped();

private:
    static std::int64_t alpha_key(double alpha);
    std::map<std::pair<int, std::int64_t>, CriticalValueEntry> entries_;
};

/// Per-path sup over the grid {j/grid} of sum_i W_i^0(j/grid)^2 for d
/// independent bridges. Paths are drawn in fixed blocks with seed-derived
/// streams, so the output does not depend on the thread count.
std::vector<double> simulate_sup_bridges(int d, std::size_t paths, std::size_t grid,
                                         std::uint64_t seed, unsigned threads = 1);

/// P(sup_t W^0(t)^2 > x) = 2 sum_{k>=1} (-1)^{k+1} exp(-2 k^2 x).
double kolmogorov_tail(double x);

/// Inverse of kolmogorov_tail: the x with tail probability alpha.
double kolmogorov_quantile(double alpha);

/// Empirical upper-alpha quantile (linear interpolation between order
/// statistics) and its order-statistic standard error. Sorts in place.
struct QuantileEstimate {
    double value = 0.0;
    double stderr_estimate = 0.0;
};
QuantileEstimate upper_quantile(std::vector<double>& samples, double alpha);

/// Runs one simulation and reads off every requested level.
std::vector<CriticalValueEntry> compute_critical_values(int d, const std::vector<double>& alphas,
                                                        const McBudget& budget);

/// Cache lookup, falling back to simulation at the given budget. A computed
/// value is stored in the table.
CriticalValueEntry critical_value(int d, double alpha, CriticalValueTable& table,
                                  const McBudget& budget = {});

}  // namespace mcusum
