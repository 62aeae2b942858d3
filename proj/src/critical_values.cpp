#include "mcusum/critical_values.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <boost/random/normal_distribution.hpp>

#include "mcusum/error.hpp"
#include "rng.hpp"

namespace mcusum {

namespace detail {
// Generated from data/critical_values.csv at configure time.
const char* shipped_critical_values_csv();
}  // namespace detail

namespace {

constexpr std::size_t kBlockPaths = 2048;

void simulate_block(int d, std::size_t first, std::size_t count, std::size_t grid,
                    std::uint64_t seed, std::size_t block, std::vector<double>& out) {
    detail::SplitMix64 engine(detail::derive_seed(seed, static_cast<std::uint64_t>(d) << 32 | grid, block));
    boost::random::normal_distribution<double> normal;
    const double step = 1.0 / std::sqrt(static_cast<double>(grid));
    const double inv_grid = 1.0 / static_cast<double>(grid);
    std::vector<double> walk(grid);
    std::vector<double> level(grid);
    for (std::size_t p = 0; p < count; ++p) {
        std::fill(level.begin(), level.end(), 0.0);
        for (int c = 0; c < d; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < grid; ++j) {
                s += step * normal(engine);
                walk[j] = s;
            }
            const double end = walk[grid - 1];
            for (std::size_t j = 0; j < grid; ++j) {
                const double bridge = walk[j] - static_cast<double>(j + 1) * inv_grid * end;
                level[j] += bridge * bridge;
            }
        }
        out[first + p] = *std::max_element(level.begin(), level.end());
    }
}

}  // namespace

std::int64_t CriticalValueTable::alpha_key(double alpha) {
    return std::llround(alpha * 1e9);
}

std::optional<CriticalValueEntry> CriticalValueTable::find(int d, double alpha) const {
    const auto it = entries_.find({d, alpha_key(alpha)});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void CriticalValueTable::insert(const CriticalValueEntry& entry) {
    entries_[{entry.d, alpha_key(entry.alpha)}] = entry;
}

std::vector<CriticalValueEntry> CriticalValueTable::entries() const {
    std::vector<CriticalValueEntry> out;
    out.reserve(entries_.size());
    for (const auto& [key, entry] : entries_) out.push_back(entry);
    return out;
}

CriticalValueTable CriticalValueTable::parse_csv(const std::string& text, const std::string& origin) {
    CriticalValueTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("d,", 0) == 0) continue;
        }
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        CriticalValueEntry e;
        if (!(row >> e.d >> e.alpha >> e.value >> e.paths >> e.grid >> e.seed >> e.stderr_estimate)) {
            throw Error(ErrorCategory::ParseError,
                        origin + ":" + std::to_string(line_no) + ": malformed critical value row");
        }
        table.insert(e);
    }
    return table;
}

CriticalValueTable CriticalValueTable::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::IoError, "cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str(), path);
}

void CriticalValueTable::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCategory::IoError, "cannot write '" + path + "'");
    out << "d,alpha,value,paths,grid,seed,stderr\n";
    out.precision(17);
    for (const auto& [key, e] : entries_) {
        out << e.d << ',' << e.alpha << ',' << e.value << ',' << e.paths << ',' << e.grid << ','
            << e.seed << ',' << e.stderr_estimate << '\n';
    }
}

const CriticalValueTable& CriticalValueTable::shipped() {
    static const CriticalValueTable table = parse_csv(detail::shipped_critical_values_csv(), "<shipped>");
    return table;
}

std::vector<double> simulate_sup_bridges(int d, std::size_t paths, std::size_t grid,
                                         std::uint64_t seed, unsigned threads) {
    if (d < 1) throw Error(ErrorCategory::DomainError, "dimension must be >= 1");
    if (paths < 1) throw Error(ErrorCategory::DomainError, "paths must be >= 1");
    if (grid < 2) throw Error(ErrorCategory::DomainError, "grid must be >= 2");

    std::vector<double> out(paths);
    const std::size_t blocks = (paths + kBlockPaths - 1) / kBlockPaths;
    auto run_block = [&](std::size_t b) {
        const std::size_t first = b * kBlockPaths;
        simulate_block(d, first, std::min(kBlockPaths, paths - first), grid, seed, b, out);
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(blocks)));
    if (workers == 1) {
        for (std::size_t b = 0; b < blocks; ++b) run_block(b);
        return out;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t b = w; b < blocks; b += workers) run_block(b);
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

double kolmogorov_tail(double x) {
    if (!(x > 0.0)) throw Error(ErrorCategory::DomainError, "tail threshold must be positive");
    double sum = 0.0;
    for (int k = 1;; ++k) {
        const double term = std::exp(-2.0 * k * k * x);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-14) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double kolmogorov_quantile(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCategory::DomainError, "alpha must lie in (0, 1)");
    // The tail is decreasing in x; bracket then bisect to machine precision.
    double lo = 1e-3;
    double hi = 1.0;
    while (kolmogorov_tail(hi) > alpha) hi *= 2.0;
    while (kolmogorov_tail(lo) < alpha) lo *= 0.5;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (kolmogorov_tail(mid) > alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

QuantileEstimate upper_quantile(std::vector<double>& samples, double alpha) {
    if (samples.empty()) throw Error(ErrorCategory::DomainError, "no samples");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCategory::DomainError, "alpha must lie in (0, 1)");
    std::sort(samples.begin(), samples.end());
    const auto n = samples.size();
    const double p = 1.0 - alpha;
    auto at = [&](double position) {
        const double clamped = std::clamp(position, 0.0, static_cast<double>(n - 1));
        const auto lower = static_cast<std::size_t>(std::floor(clamped));
        const auto upper = std::min(lower + 1, n - 1);
        const double frac = clamped - static_cast<double>(lower);
        return samples[lower] + frac * (samples[upper] - samples[lower]);
    };
    const double centre = p * static_cast<double>(n - 1);
    const double spread = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
    QuantileEstimate q;
    q.value = at(centre);
    q.stderr_estimate = 0.5 * (at(centre + spread) - at(centre - spread));
    return q;
}

std::vector<CriticalValueEntry> compute_critical_values(int d, const std::vector<double>& alphas,
                                                        const McBudget& budget) {
    auto sups = simulate_sup_bridges(d, budget.paths, budget.grid, budget.seed, budget.threads);
    std::vector<CriticalValueEntry> out;
    for (const double alpha : alphas) {
        const auto q = upper_quantile(sups, alpha);
        out.push_back({d, alpha, q.value, budget.paths, budget.grid, budget.seed, q.stderr_estimate});
    }
    return out;
}

CriticalValueEntry critical_value(int d, double alpha, CriticalValueTable& table,
                                  const McBudget& budget) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCategory::DomainError, "alpha must lie in (0, 1)");
    if (auto hit = table.find(d, alpha)) return *hit;
    const auto entry = compute_critical_values(d, {alpha}, budget).front();
    table.insert(entry);
    return entry;
}

}  // namespace mcusum
