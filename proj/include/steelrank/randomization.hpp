#pragma once

// The conditional randomization distribution: all splits of the pooled midranks into groups of
// sizes n_0..n_K, each equally likely. Exact enumeration for small problems, Monte Carlo otherwise.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "error.hpp"
#include "moments.hpp"
#include "ranks.hpp"
#include "statistics.hpp"

namespace steelrank {

enum class PMethod { exact, monte_carlo, asymptotic };

inline const char* to_string(PMethod m) {
    switch (m) {
        case PMethod::exact: return "exact";
        case PMethod::monte_carlo: return "monte_carlo";
        case PMethod::asymptotic: return "asymptotic";
    }
    return "?";
}

struct PValue {
    double estimate = 1.0;
    PMethod method = PMethod::asymptotic;
    std::uint64_t nsim = 0;   // Monte Carlo only
    double std_error = 0.0;   // Monte Carlo only
    std::uint64_t seed = 0;   // Monte Carlo only
};

/// Weighted null distribution. Rows hold `dim` values each (1 for scalar statistics, K for
/// vector_w); identical rows are merged and rows are sorted ascending.
struct NullSample {
    Statistic statistic = Statistic::s_max;
    std::size_t dim = 1;
    std::vector<double> values;
    std::vector<std::uint64_t> weights;
    std::uint64_t total = 0;

    std::size_t rows() const { return weights.size(); }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * dim, dim}; }
};

struct ExactOptions {
    std::uint64_t budget = 10'000'000;  // maximum number of distinct midrank allocations
};

struct SimulationOptions {
    std::uint64_t nsim = 10'000;
    std::uint64_t seed = 0;
    unsigned threads = 0;    // 0: STEELRANK_THREADS, else hardware concurrency
    bool plus_one = false;   // report (count + 1) / (nsim + 1)
};

namespace detail {

inline bool tail_contains(double value, double threshold, bool upper) {
    const double tol = 1e-12 * std::max(1.0, std::abs(threshold));
    return upper ? value >= threshold - tol : value <= threshold + tol;
}

inline bool upper_tail(Statistic s) { return s != Statistic::s_min; }

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out = 0;
    if (__builtin_mul_overflow(a, b, &out)) fail(ErrorKind::budget, "split weights exceed 64-bit range");
    return out;
}

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out = 0;
    if (__builtin_add_overflow(a, b, &out)) fail(ErrorKind::budget, "split weights exceed 64-bit range");
    return out;
}

/// Binomial coefficients C(r, k) for r <= n; entries that overflow 64 bits are rejected on use.
class BinomialTable {
public:
    explicit BinomialTable(std::int64_t n)
        : n_(n), table_(static_cast<std::size_t>((n + 1) * (n + 1)), 0), overflow_(table_.size(), false) {
        for (std::int64_t r = 0; r <= n; ++r) {
            slot(r, 0) = 1;
            for (std::int64_t k = 1; k <= r; ++k) {
                const std::size_t left = index(r - 1, k - 1);
                const std::size_t right = index(r - 1, k);  // C(r-1, r) = 0
                const std::size_t here = index(r, k);
                overflow_[here] = overflow_[left] || (k < r && overflow_[right]) ||
                                  __builtin_add_overflow(table_[left], k < r ? table_[right] : 0, &table_[here]);
            }
        }
    }
    std::uint64_t operator()(std::int64_t r, std::int64_t k) const {
        const std::size_t i = index(r, k);
        if (overflow_[i]) fail(ErrorKind::budget, "split weights exceed 64-bit range");
        return table_[i];
    }

private:
    std::size_t index(std::int64_t r, std::int64_t k) const { return static_cast<std::size_t>(r * (n_ + 1) + k); }
    std::uint64_t& slot(std::int64_t r, std::int64_t k) { return table_[index(r, k)]; }
    std::int64_t n_;
    std::vector<std::uint64_t> table_;
    std::vector<bool> overflow_;
};

inline double log_multinomial(std::int64_t n, std::span<const std::int64_t> parts) {
    double out = std::lgamma(static_cast<double>(n) + 1.0);
    for (auto p : parts) out -= std::lgamma(static_cast<double>(p) + 1.0);
    return out;
}

/// Depth-first enumeration of all distinct allocations of the tie classes to the groups.
/// Allocation of class v assigns counts c_{g,v} summing to d_v; its weight is the product of
/// multinomial(d_v; c_{.,v}), the number of labeled splits it stands for. For each tracked
/// ordered pair (a, b) the visitor receives W*(X_a, X_b).
class SplitEnumerator {
public:
    using Visitor = std::function<void(std::span<const double> w, std::uint64_t weight)>;

    SplitEnumerator(std::vector<std::int64_t> sizes, TiePattern tie, std::vector<std::pair<std::size_t, std::size_t>> pairs,
                    std::uint64_t budget)
        : sizes_(std::move(sizes)), tie_(std::move(tie)), pairs_(std::move(pairs)), budget_(budget),
          binom_(tie_.max_multiplicity()) {
        const std::int64_t n = tie_.total();
        std::int64_t sum = 0;
        for (auto s : sizes_) {
            if (s < 1) fail(ErrorKind::parameter, "group sizes must be >= 1");
            sum += s;
        }
        if (sum != n) fail(ErrorKind::parameter, "group sizes do not sum to the tie pattern total");
        // Each allocation stands for at most prod d_v! labeled splits.
        double log_lower = log_multinomial(n, sizes_);
        for (auto d : tie_.d) log_lower -= std::lgamma(static_cast<double>(d) + 1.0);
        if (log_lower > std::log(static_cast<double>(budget_)) + 1e-9)
            fail(ErrorKind::budget, "exact enumeration exceeds the split budget; use monte_carlo");
    }

    /// Returns the total weight, i.e. N! / prod n_g!.
    std::uint64_t run(const Visitor& visit) {
        remaining_ = sizes_;
        cumulative_.assign(sizes_.size(), 0);
        counts_.assign(tie_.d.size(), std::vector<std::int64_t>(sizes_.size(), 0));
        w_.assign(pairs_.size(), 0.0);
        leaves_ = 0;
        total_ = 0;
        visit_ = &visit;
        descend_class(0, 1);
        return total_;
    }

private:
    void descend_class(std::size_t v, std::uint64_t weight) {
        if (v == tie_.d.size()) {
            if (++leaves_ > budget_) fail(ErrorKind::budget, "exact enumeration exceeds the split budget; use monte_carlo");
            total_ = checked_add(total_, weight);
            (*visit_)(w_, weight);
            return;
        }
        place(v, 0, tie_.d[v], weight);
    }

    // Choose how many members of class v go to group g, given `left` still unplaced.
    void place(std::size_t v, std::size_t g, std::int64_t left, std::uint64_t weight) {
        const std::size_t groups = sizes_.size();
        auto& counts = counts_[v];
        if (g + 1 == groups) {
            if (left > remaining_[g]) return;
            counts[g] = left;
            finish_class(v, weight);
            return;
        }
        std::int64_t later = 0;
        for (std::size_t h = g + 1; h < groups; ++h) later += remaining_[h];
        const std::int64_t lo = std::max<std::int64_t>(0, left - later);
        const std::int64_t hi = std::min(left, remaining_[g]);
        for (std::int64_t c = lo; c <= hi; ++c) {
            counts[g] = c;
            place(v, g + 1, left - c, checked_mul(weight, binom_(left, c)));
        }
    }

    // W increments are multiples of 1/2 and stay exact, so undoing by subtraction is exact.
    void finish_class(std::size_t v, std::uint64_t weight) {
        const auto& counts = counts_[v];
        for (std::size_t p = 0; p < pairs_.size(); ++p) {
            const auto [a, b] = pairs_[p];
            w_[p] += static_cast<double>(counts[b]) * (static_cast<double>(cumulative_[a]) + 0.5 * static_cast<double>(counts[a]));
        }
        for (std::size_t g = 0; g < sizes_.size(); ++g) {
            remaining_[g] -= counts[g];
            cumulative_[g] += counts[g];
        }
        descend_class(v + 1, weight);
        for (std::size_t g = 0; g < sizes_.size(); ++g) {
            remaining_[g] += counts[g];
            cumulative_[g] -= counts[g];
        }
        for (std::size_t p = 0; p < pairs_.size(); ++p) {
            const auto [a, b] = pairs_[p];
            w_[p] -= static_cast<double>(counts[b]) * (static_cast<double>(cumulative_[a]) + 0.5 * static_cast<double>(counts[a]));
        }
    }

    std::vector<std::int64_t> sizes_;
    TiePattern tie_;
    std::vector<std::pair<std::size_t, std::size_t>> pairs_;
    std::uint64_t budget_;
    BinomialTable binom_;
    std::vector<std::int64_t> remaining_;
    std::vector<std::int64_t> cumulative_;
    std::vector<std::vector<std::int64_t>> counts_;  // per tie class
    std::vector<double> w_;
    std::uint64_t leaves_ = 0;
    std::uint64_t total_ = 0;
    const Visitor* visit_ = nullptr;
};

inline std::vector<std::pair<std::size_t, std::size_t>> control_pairs(std::size_t groups) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 1; i < groups; ++i) out.emplace_back(0, i);
    return out;
}

inline NullSample merge_rows(Statistic stat, std::size_t dim, std::vector<std::pair<std::vector<double>, std::uint64_t>> rows,
                             std::uint64_t total) {
    std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    NullSample out;
    out.statistic = stat;
    out.dim = dim;
    out.total = total;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!out.weights.empty() && rows[r].first == rows[r - 1].first) {
            out.weights.back() += rows[r].second;
            continue;
        }
        out.values.insert(out.values.end(), rows[r].first.begin(), rows[r].first.end());
        out.weights.push_back(rows[r].second);
    }
    return out;
}

inline NullSample exact_distribution(const RankedSamples& samples, Statistic stat, const std::vector<double>& mu,
                                     const std::vector<double>& tau, const ExactOptions& opts) {
    if (samples.group_count() < 2) fail(ErrorKind::parameter, "need a control and at least one treatment");
    const std::size_t k = samples.group_count() - 1;
    SplitEnumerator enumerator(samples.sizes, samples.tie_pattern, control_pairs(samples.group_count()), opts.budget);
    std::vector<std::pair<std::vector<double>, std::uint64_t>> rows;
    std::vector<double> z(k);
    const std::uint64_t total = enumerator.run([&](std::span<const double> w, std::uint64_t weight) {
        if (stat == Statistic::vector_w) {
            rows.emplace_back(std::vector<double>(w.begin(), w.end()), weight);
            return;
        }
        for (std::size_t i = 0; i < k; ++i) z[i] = standardize(w[i], mu[i], tau[i]);
        rows.emplace_back(std::vector<double>{reduce_statistic(stat, z)}, weight);
    });
    return merge_rows(stat, stat == Statistic::vector_w ? k : 1, std::move(rows), total);
}

}  // namespace detail

/// Exact conditional null distribution of `stat` (standardized with the moments of the pooled
/// tie pattern), or of the raw vector (W*_1..W*_K) for Statistic::vector_w.
inline NullSample exact_null_distribution(const RankedSamples& samples, Statistic stat, const ExactOptions& opts = {}) {
    const MomentSet m = factor_decomposition(samples);
    std::vector<double> tau(m.treatments());
    for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = m.tau(i);
    return detail::exact_distribution(samples, stat, m.mu, tau, opts);
}

/// Exact p-value; the tail includes values equal to the observed one.
inline PValue exact_p_value(const RankedSamples& samples, const SteelObservation& obs, const ExactOptions& opts = {}) {
    const Statistic stat = statistic_for(obs.alternative);
    const NullSample null = detail::exact_distribution(samples, stat, obs.mu, obs.tau, opts);
    const double observed = obs.value();
    std::uint64_t mass = 0;
    for (std::size_t r = 0; r < null.rows(); ++r)
        if (detail::tail_contains(null.values[r], observed, detail::upper_tail(stat))) mass += null.weights[r];
    PValue p;
    p.method = PMethod::exact;
    p.estimate = static_cast<double>(mass) / static_cast<double>(null.total);
    return p;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Uniform integer in [0, range) from a 64-bit engine (Lemire's multiply-shift with rejection).
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t range) {
    unsigned __int128 m = static_cast<unsigned __int128>(rng()) * range;
    auto low = static_cast<std::uint64_t>(m);
    if (low < range) {
        const std::uint64_t threshold = (0 - range) % range;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(rng()) * range;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

inline constexpr std::uint64_t chunk_size = 4096;

inline std::mt19937_64 chunk_engine(std::uint64_t seed, std::uint64_t chunk) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(chunk + 0x5851F42D4C957F2DULL)));
}

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("STEELRANK_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `nsim` replicates in fixed-size chunks and counts, per threshold, the replicate values in
/// the tail. `make_sampler()` builds one sampler per worker; a sampler exposes `reset()`, called at
/// the start of every chunk, and `double operator()(std::mt19937_64&)`. Each chunk draws from its
/// own engine seeded by (seed, chunk index), so the counts do not depend on the worker count.
template <class MakeSampler>
std::vector<std::uint64_t> chunked_tail_counts(MakeSampler&& make_sampler, std::span<const double> thresholds, bool upper,
                                               const SimulationOptions& opts) {
    if (opts.nsim == 0) fail(ErrorKind::parameter, "nsim must be >= 1");
    const std::uint64_t chunks = (opts.nsim + chunk_size - 1) / chunk_size;
    std::vector<std::vector<std::uint64_t>> per_chunk(chunks);
    std::atomic<std::uint64_t> next{0};

    const auto worker = [&]() {
        auto sampler = make_sampler();
        std::vector<double> values;
        for (std::uint64_t c = next++; c < chunks; c = next++) {
            sampler.reset();
            auto rng = chunk_engine(opts.seed, c);
            const std::uint64_t first = c * chunk_size;
            const std::uint64_t last = std::min(opts.nsim, first + chunk_size);
            values.clear();
            for (std::uint64_t r = first; r < last; ++r) values.push_back(sampler(rng));
            std::sort(values.begin(), values.end());
            std::vector<std::uint64_t> counts(thresholds.size());
            for (std::size_t t = 0; t < thresholds.size(); ++t) {
                const double tol = 1e-12 * std::max(1.0, std::abs(thresholds[t]));
                counts[t] = upper ? static_cast<std::uint64_t>(values.end() - std::lower_bound(values.begin(), values.end(), thresholds[t] - tol))
                                  : static_cast<std::uint64_t>(std::upper_bound(values.begin(), values.end(), thresholds[t] + tol) - values.begin());
            }
            per_chunk[c] = std::move(counts);
        }
    };

    const auto threads = static_cast<unsigned>(std::min<std::uint64_t>(resolve_threads(opts.threads), chunks));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::vector<std::uint64_t> total(thresholds.size(), 0);
    for (const auto& counts : per_chunk)
        for (std::size_t t = 0; t < counts.size(); ++t) total[t] += counts[t];
    return total;
}

/// Per-group counts of each tie class in one random split.
struct SplitCounts {
    std::size_t classes = 0;
    std::vector<std::int64_t> counts;  // counts[g * classes + v]

    std::int64_t at(std::size_t g, std::size_t v) const { return counts[g * classes + v]; }

    /// W*(X_a, X_b) from the class counts.
    double mann_whitney(std::size_t a, std::size_t b) const {
        double cum = 0.0;
        double w = 0.0;
        for (std::size_t v = 0; v < classes; ++v) {
            const auto ca = static_cast<double>(at(a, v));
            w += static_cast<double>(at(b, v)) * (cum + 0.5 * ca);
            cum += ca;
        }
        return w;
    }
};

using SplitStatistic = std::function<double(const SplitCounts&, std::vector<double>& scratch)>;

/// Uniformly random split of the pooled sample, by partial Fisher-Yates shuffle of the tie classes.
class SplitSampler {
public:
    SplitSampler(const RankedSamples& samples, const SplitStatistic& statistic)
        : samples_(&samples), statistic_(&statistic), pool_(samples.tie_class),
          split_{samples.tie_pattern.distinct(), std::vector<std::int64_t>(samples.group_count() * samples.tie_pattern.distinct())} {
        bounds_.push_back(0);
        for (auto s : samples.sizes) bounds_.push_back(bounds_.back() + static_cast<std::size_t>(s));
        shuffled_ = pool_.size() - static_cast<std::size_t>(samples.sizes.back());
    }

    void reset() { std::copy(samples_->tie_class.begin(), samples_->tie_class.end(), pool_.begin()); }

    double operator()(std::mt19937_64& rng) {
        const std::size_t n = pool_.size();
        for (std::size_t pos = 0; pos < shuffled_; ++pos) {
            const auto j = pos + static_cast<std::size_t>(bounded(rng, n - pos));
            std::swap(pool_[pos], pool_[j]);
        }
        std::fill(split_.counts.begin(), split_.counts.end(), 0);
        for (std::size_t g = 0; g + 1 < bounds_.size(); ++g)
            for (std::size_t pos = bounds_[g]; pos < bounds_[g + 1]; ++pos) ++split_.counts[g * split_.classes + pool_[pos]];
        return (*statistic_)(split_, scratch_);
    }

private:
    const RankedSamples* samples_;
    const SplitStatistic* statistic_;
    std::vector<std::size_t> pool_;
    SplitCounts split_;
    std::vector<std::size_t> bounds_;
    std::size_t shuffled_ = 0;
    std::vector<double> scratch_;
};

inline std::vector<std::uint64_t> simulate_tail_counts(const RankedSamples& samples, const SplitStatistic& statistic,
                                                       std::span<const double> thresholds, bool upper,
                                                       const SimulationOptions& opts) {
    return chunked_tail_counts([&] { return SplitSampler(samples, statistic); }, thresholds, upper, opts);
}

inline SplitStatistic steel_split_statistic(Statistic stat, std::vector<double> mu, std::vector<double> tau) {
    return [stat, mu = std::move(mu), tau = std::move(tau)](const SplitCounts& split, std::vector<double>& z) {
        z.resize(mu.size());
        for (std::size_t i = 0; i < mu.size(); ++i) z[i] = standardize(split.mann_whitney(0, i + 1), mu[i], tau[i]);
        return reduce_statistic(stat, z);
    };
}

inline PValue monte_carlo_p_value(std::uint64_t count, const SimulationOptions& opts) {
    PValue p;
    p.method = PMethod::monte_carlo;
    p.nsim = opts.nsim;
    p.seed = opts.seed;
    const auto nsim = static_cast<double>(opts.nsim);
    p.estimate = opts.plus_one ? (static_cast<double>(count) + 1.0) / (nsim + 1.0) : static_cast<double>(count) / nsim;
    p.std_error = std::sqrt(p.estimate * (1.0 - p.estimate) / nsim);
    return p;
}

}  // namespace detail

/// Monte Carlo p-value over random splits, standardizing with the observation's fixed moments.
inline PValue simulate_p_value(const RankedSamples& samples, const SteelObservation& obs, const SimulationOptions& opts) {
    if (samples.group_count() != obs.w_star.size() + 1) fail(ErrorKind::parameter, "dimension mismatch between samples and observation");
    const Statistic stat = statistic_for(obs.alternative);
    const double threshold = obs.value();
    const auto counts = detail::simulate_tail_counts(samples, detail::steel_split_statistic(stat, obs.mu, obs.tau),
                                                     std::span<const double>(&threshold, 1), detail::upper_tail(stat), opts);
    return detail::monte_carlo_p_value(counts[0], opts);
}

/// Simulated tail probabilities of `stat` at each threshold, from one simulation run. The tail is
/// upper for s_max/s_abs and lower for s_min, matching the p-value convention.
inline std::vector<double> simulated_tail_curve(const RankedSamples& samples, Statistic stat, std::span<const double> thresholds,
                                                const SimulationOptions& opts, const MomentSet* moments = nullptr) {
    if (stat == Statistic::vector_w) fail(ErrorKind::parameter, "tail curve needs a scalar statistic");
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) fail(ErrorKind::parameter, "thresholds must be sorted");
    const MomentSet own = moments ? MomentSet{} : factor_decomposition(samples);
    const MomentSet& m = moments ? *moments : own;
    std::vector<double> tau(m.treatments());
    for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = m.tau(i);
    const auto counts = detail::simulate_tail_counts(samples, detail::steel_split_statistic(stat, m.mu, tau), thresholds,
                                                     detail::upper_tail(stat), opts);
    std::vector<double> out;
    for (auto c : counts) out.push_back(detail::monte_carlo_p_value(c, opts).estimate);
    return out;
}

}  // namespace steelrank
