// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any criterion fails.

#include <algorithm>
#include <array>
#include <boost/multiprecision/cpp_int.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "oracles.hpp"
#include "steelrank/steelrank.hpp"

using namespace steelrank;
using Rational = boost::multiprecision::cpp_rational;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Check {
public:
    void require(bool ok, const std::string& what) {
        if (!ok && failures_ < 5) (first_ += (first_.empty() ? "" : "; ")) += what;
        failures_ += !ok;
        ++checks_;
    }
    Outcome outcome(const std::string& summary) const {
        std::ostringstream out;
        out << summary << " [" << checks_ - failures_ << "/" << checks_ << " checks]";
        if (failures_) out << " first failures: " << first_;
        return {failures_ == 0, out.str()};
    }

private:
    int checks_ = 0;
    int failures_ = 0;
    std::string first_;
};

std::string fmt(double x, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::vector<double>> normal_groups(std::size_t groups, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> out(groups, std::vector<double>(n));
    for (auto& s : out)
        for (auto& v : s) v = g(rng);
    return out;
}

// Threshold at which the adjusted normal approximation of the upper tail equals p.
double threshold_for(const FactorModel& model, double p) {
    double lo = -2.0, hi = 8.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (tail_prob_max(model, mid) > p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Outcome moment_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Check check;
    std::mt19937_64 rng(20240501);
    std::int64_t size_vectors = 0, splits = 0;
    for (std::size_t k = 1; k <= 3; ++k) {
        for (std::int64_t n = static_cast<std::int64_t>(k) + 1; n <= 10; ++n) {
            std::vector<std::vector<std::int64_t>> all;
            std::vector<std::int64_t> cur;
            oracle::compositions(n, k + 1, cur, all);
            for (const auto& sizes : all) {
                ++size_vectors;
                const auto pairs = lexicographic_pairs(k + 1);
                for (int rep = 0; rep < 20; ++rep) {
                    const auto d = oracle::random_tie_pattern(n, rng);
                    const TiePattern tie{d};
                    const auto e = oracle::enumerate_split_moments(oracle::midranks_of_pattern(d), sizes, pairs);
                    splits += e.splits;
                    const auto pm = pairwise_moment_matrix(sizes, tie);
                    const std::string where = "sizes/pattern #" + std::to_string(size_vectors) + "." + std::to_string(rep);
                    // Control pairs (0, i) are the first k lexicographic pairs.
                    for (std::size_t i = 0; i < k; ++i) {
                        check.require(oracle::close_rel(e.mean[i], mean_w(sizes[0], sizes[i + 1]), 1e-10), "mean " + where);
                        check.require(oracle::close_rel(e.cov[i][i], var_w(sizes[0], sizes[i + 1], tie), 1e-10), "var " + where);
                        for (std::size_t j = 0; j < k; ++j)
                            if (i != j)
                                check.require(oracle::close_rel(e.cov[i][j], cov_w(sizes[0], sizes[i + 1], sizes[j + 1], tie), 1e-10),
                                              "cov " + where);
                    }
                    for (std::size_t p = 0; p < pairs.size(); ++p) {
                        check.require(oracle::close_rel(e.mean[p], pm.mu[p], 1e-10), "pair mean " + where);
                        for (std::size_t q = 0; q < pairs.size(); ++q)
                            check.require(oracle::close_rel(e.cov[p][q], pm.cov[p][q], 1e-10), "pair cov " + where);
                    }
                }
            }
        }
    }
    const double secs = seconds_since(t0);
    check.require(secs < 120.0, "runtime " + fmt(secs) + " s");
    return check.outcome(std::to_string(size_vectors) + " size vectors x 20 tie patterns, " + std::to_string(splits) +
                         " labeled splits, " + fmt(secs, 3) + " s");
}

Outcome closed_forms() {
    Check check;
    int reductions = 0;
    for (std::int64_t n0 = 1; n0 <= 7; ++n0)
        for (std::int64_t n1 = 1; n1 <= 7; ++n1) {
            const std::int64_t n = n0 + n1;
            if (n < 3) continue;
            for (std::size_t parts = 1; parts <= static_cast<std::size_t>(n); ++parts) {
                std::vector<std::vector<std::int64_t>> all;
                std::vector<std::int64_t> cur;
                oracle::compositions(n, parts, cur, all);
                for (const auto& d : all) {
                    const TiePattern t{d};
                    check.require(detail::var_three_term<Rational>(n0, n1, t) == detail::var_two_sample<Rational>(n0, n1, t),
                                  "three-term vs two-sample at n0=" + std::to_string(n0) + ", n1=" + std::to_string(n1));
                    ++reductions;
                }
            }
        }
    for (std::int64_t n = 2; n <= 40; ++n) {
        const auto untied = TiePattern::untied(n);
        const TiePattern tied{{n}};
        for (std::int64_t n0 = 1; n0 < n; ++n0)
            for (std::int64_t n1 = 1; n0 + n1 <= n; ++n1) {
                check.require(var_w<Rational>(n0, n1, untied) == Rational(n0 * n1 * (n0 + n1 + 1), 12), "untied var");
                check.require(std::abs(var_w(n0, n1, tied)) <= 1e-12, "fully tied var");
                for (std::int64_t n2 = 1; n0 + n1 + n2 <= n; ++n2) {
                    check.require(cov_w<Rational>(n0, n1, n2, untied) == Rational(n0 * n1 * n2, 12), "untied cov");
                    check.require(std::abs(cov_w(n0, n1, n2, tied)) <= 1e-12, "fully tied cov");
                }
            }
    }
    return check.outcome(std::to_string(reductions) + " tie patterns for the two-sample reduction (exact rationals), N <= 40 grids");
}

Outcome one_dimensional_collapse() {
    Check check;
    double worst = 0.0;
    const auto iq_like = rank_samples({{1, 2, 2, 3, 5, 5}, {2, 4, 4, 4, 6, 7, 8}});
    std::vector<FactorModel> models{continuous_model(std::vector<std::int64_t>{6, 6}),
                                    continuous_model(std::vector<std::int64_t>{3, 40}),
                                    FactorModel::from_moments(factor_decomposition(iq_like))};
    for (const auto& m : models) {
        for (int k = 0; k <= 100; ++k) {
            const double u = -5.0 + 0.1 * k;
            const double a = std::abs(tail_prob_max(m, u) - (1.0 - std_normal_cdf(u)));
            const double b = std::abs(tail_prob_min(m, u) - std_normal_cdf(u));
            const double v = 0.05 * k;
            const double c = std::abs(tail_prob_abs(m, v) - 2.0 * (1.0 - std_normal_cdf(v)));
            worst = std::max({worst, a, b, c});
            check.require(a <= 1e-8 && b <= 1e-8 && c <= 1e-8, "u=" + fmt(u));
        }
    }
    return check.outcome("3 models x 101 thresholds per tail, max deviation " + fmt(worst, 3));
}

Outcome paper_example() {
    Check check;
    Dataset data = read_samples({std::string(STEELRANK_FIXTURES "/steel1959_iq.csv")}, InputFormat::csv_long);
    data.move_to_front("control");
    const auto s = rank_samples(data.samples);
    const auto m = factor_decomposition(s);
    const auto obs = steel_statistics(s, m, Alternative::less);
    check.require(obs.w_star == std::vector<double>{7, 17, 12.5}, "W*");
    for (std::size_t i = 0; i < 3; ++i) {
        check.require(m.mu[i] == 18.0, "mu");
        check.require(std::abs(m.sigma(i) - 4.540007) <= 1e-6, "sigma_i " + fmt(m.sigma(i), 10));
        check.require(std::abs(m.tau(i) - 6.210249) <= 1e-6, "tau_i " + fmt(m.tau(i), 10));
    }
    check.require(std::abs(m.sigma0() - 0.7062328) <= 1e-6, "sigma0 " + fmt(m.sigma0(), 10));
    check.require(std::abs(obs.s_min + 1.7713) <= 5e-5, "s_min " + fmt(obs.s_min, 8));
    const double p_asym = tail_prob_min(FactorModel::from_moments(m), obs.s_min);
    check.require(std::abs(p_asym - 0.0946) <= 5e-4, "asymptotic p " + fmt(p_asym));
    const std::uint64_t nsim = 100000;
    const auto p_sim = simulate_p_value(s, obs, {nsim, 1});
    const double band = 3.0 * std::sqrt(0.10474 * (1 - 0.10474) / static_cast<double>(nsim));
    check.require(std::abs(p_sim.estimate - 0.10474) <= band, "simulated p " + fmt(p_sim.estimate));
    return check.outcome("W*=(7,17,12.5), sigma0=" + fmt(m.sigma0(), 8) + ", sigma=" + fmt(m.sigma(0), 8) + ", tau=" + fmt(m.tau(0), 8) +
                         ", s_min=" + fmt(obs.s_min, 6) + ", p_asym=" + fmt(p_asym, 5) + ", p_sim=" + fmt(p_sim.estimate, 5) +
                         " (band +/-" + fmt(band, 2) + ")");
}

Outcome approximation_quality() {
    const auto t0 = std::chrono::steady_clock::now();
    Check check;
    const auto raw = normal_groups(3, 100, 1959);
    auto rounded = raw;
    for (auto& g : rounded)
        for (auto& v : g) v = std::round(v * 10.0) / 10.0;
    std::string summary;
    for (const auto* data : std::array<const std::vector<std::vector<double>>*, 2>{&raw, &rounded}) {
        const auto s = rank_samples(*data);
        summary += data == &raw ? " untied" : "; rounded, " + std::to_string(s.tie_pattern.distinct()) + " distinct values";
        for (auto alt : {Alternative::greater, Alternative::less, Alternative::two_sided}) {
            const auto thresholds = harness_thresholds(alt);
            const auto rows = quality_harness(s, alt, thresholds, {100000, 7});
            double worst = 0.0;
            int used = 0;
            for (const auto& r : rows) {
                if (r.p_asym_adj < 0.01 || r.p_asym_adj > 0.2) continue;
                worst = std::max(worst, std::abs(r.p_asym_adj - r.p_sim));
                ++used;
            }
            check.require(used > 5 && worst <= 0.01, std::string(to_string(alt)) + " max diff " + fmt(worst, 3));
            summary += " " + std::string(to_string(alt)) + "=" + fmt(worst, 2);
        }
    }
    const double secs = seconds_since(t0);
    check.require(secs < 60.0, "runtime " + fmt(secs) + " s");
    return check.outcome("max |p_asym - p_MC| over p_asym in [0.01, 0.2]:" + summary + ", nsim=1e5, " + fmt(secs, 3) + " s");
}

Outcome tie_adjustment() {
    Check check;
    std::mt19937_64 rng(2016);
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> nine(1, 9);
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> two(3, std::vector<double>(100)), uniform9 = two, binned9 = two;
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 100; ++b) {
            two[a][b] = coin(rng);
            uniform9[a][b] = nine(rng);
            binned9[a][b] = std::clamp(std::round(1.5 * g(rng)), -4.0, 4.0);
        }
    std::string summary;

    {
        const auto s = rank_samples(two);
        const auto model = FactorModel::from_moments(factor_decomposition(s));
        const std::vector<double> t{threshold_for(model, 0.05)};
        const auto row = quality_harness(s, Alternative::greater, t, {100000, 11})[0];
        const double adj = std::abs(row.p_sim - row.p_asym_adj);
        const double unadj = std::abs(row.p_sim - row.p_asym_unadj);
        check.require(s.tie_pattern.distinct() == 2, "two-valued fixture");
        check.require(adj < unadj, "two-valued ordering");
        summary += "two-valued at t=" + fmt(row.threshold, 4) + ": p_sim=" + fmt(row.p_sim, 4) + ", adjusted=" + fmt(row.p_asym_adj, 4) +
                   ", unadjusted=" + fmt(row.p_asym_unadj, 4);
    }
    for (const auto* data : std::array<const std::vector<std::vector<double>>*, 2>{&uniform9, &binned9}) {
        const auto s = rank_samples(*data);
        check.require(s.tie_pattern.distinct() == 9, "nine-valued fixture");
        const auto thresholds = harness_thresholds(Alternative::greater);
        const auto rows = quality_harness(s, Alternative::greater, thresholds, {20000, 12});
        double worst = 0.0;
        for (const auto& r : rows)
            if (r.p_asym_adj >= 0.01 && r.p_asym_adj <= 0.2) worst = std::max(worst, std::abs(r.p_asym_adj - r.p_asym_unadj));
        check.require(worst <= 0.01, "nine-valued gap " + fmt(worst, 3));
        summary += std::string(data == &uniform9 ? "; 9 equal-frequency values" : "; 9 binned-normal values") +
                   ": max |adjusted - unadjusted| = " + fmt(worst, 3);
    }
    return check.outcome(summary);
}

Outcome confidence_inversion() {
    Check check;
    const std::vector<std::int64_t> sizes{6, 6};
    const auto model = continuous_model(sizes);
    const auto dist = oracle::mann_whitney_distribution(6, 6);
    const auto exact = [&](std::int64_t j) {
        std::int64_t in = 0, total = 0;
        for (const auto& [w, c] : dist) {
            total += c;
            if (w <= static_cast<double>(j - 1)) in += c;
        }
        return static_cast<double>(in) / static_cast<double>(total);
    };
    std::string summary;
    for (double gamma : {0.9, 0.95, 0.975, 0.99}) {
        const auto sel = select_indices(model, sizes, gamma, BoundSide::upper);
        const double ec = exact(sel.j_closest[0]);
        const double ex = exact(sel.j_conservative[0]);
        check.require(std::abs(sel.achieved_closest - ec) <= 0.02, "closest coverage at " + fmt(gamma));
        check.require(std::abs(sel.achieved_conservative - ex) <= 0.02, "conservative coverage at " + fmt(gamma));
        for (const auto& cand : sel.candidates) {
            const double direct = joint_lower_box_prob(model, std::vector<double>{static_cast<double>(cand.j[0] - 1)});
            check.require(std::abs(cand.coverage - direct) <= 1e-12, "self-consistency");
        }
        if (gamma == 0.95)
            summary = "gamma=0.95: j_closest=" + std::to_string(sel.j_closest[0]) + " (normal " + fmt(sel.achieved_closest, 4) + ", exact " +
                      fmt(ec, 4) + "), j_conservative=" + std::to_string(sel.j_conservative[0]) + " (normal " +
                      fmt(sel.achieved_conservative, 4) + ", exact " + fmt(ex, 4) + ")";
    }
    const auto data = normal_groups(4, 6, 77);
    const auto iv = simultaneous_intervals(data, 0.90, 0.1);
    const auto up = simultaneous_bounds(data, 0.95, BoundSide::upper, 0.1);
    const auto low = simultaneous_bounds(data, 0.95, BoundSide::lower, 0.1);
    check.require(iv.one_sided_level == 0.95, "one-sided level");
    check.require(iv.upper->conservative == up.upper->conservative && iv.upper->closest == up.upper->closest, "upper matches");
    check.require(iv.lower->conservative == low.lower->conservative && iv.lower->closest == low.lower->closest, "lower matches");
    return check.outcome(summary + "; gamma=0.90 interval equals the two 0.95 bounds");
}

Outcome pairwise_identities() {
    Check check;
    const std::vector<std::int64_t> sizes{2, 2, 2, 2};
    const auto e = oracle::enumerate_split_moments(oracle::midranks_of_pattern(std::vector<std::int64_t>(8, 1)), sizes,
                                                   {{0, 1}, {0, 2}, {2, 0}, {2, 3}});
    check.require(e.splits == 2520, "2520 splits");
    check.require(std::abs(e.cov[0][1] - 2.0 / 3.0) <= 1e-10, "cov(W12,W13) " + fmt(e.cov[0][1], 12));
    check.require(std::abs(e.cov[0][2] + 2.0 / 3.0) <= 1e-10, "cov(W12,W31) " + fmt(e.cov[0][2], 12));
    check.require(std::abs(e.cov[0][3]) <= 1e-10, "cov(W12,W34) " + fmt(e.cov[0][3], 12));
    const auto tie = TiePattern::untied(8);
    const double c13 = pair_covariance<double>(sizes, tie, {0, 1}, {0, 2});
    const double c31 = pair_covariance<double>(sizes, tie, {0, 1}, {2, 0});
    const double c34 = pair_covariance<double>(sizes, tie, {0, 1}, {2, 3});
    check.require(std::abs(c13 - e.cov[0][1]) <= 1e-10 && std::abs(c31 - e.cov[0][2]) <= 1e-10 && std::abs(c34 - e.cov[0][3]) <= 1e-10,
                  "library matrix");
    return check.outcome("enumeration over 2520 splits: cov(W12,W13)=" + fmt(e.cov[0][1], 10) + ", cov(W12,W31)=" + fmt(e.cov[0][2], 10) +
                         ", cov(W12,W34)=" + fmt(e.cov[0][3], 3));
}

std::string capture(const std::string& cmd) {
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return out;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
    pclose(pipe);
    return out;
}

Outcome determinism() {
    Check check;
    const unsigned max_threads = std::max(4u, std::thread::hardware_concurrency());
    const std::string fixture = STEELRANK_FIXTURES "/steel1959_iq.csv";
    const std::vector<std::string> runs{"--alternative less --method simulated --nsim 50000 --seed 5",
                                        "--alternative two-sided --method all --nsim 30000 --seed 6",
                                        "--mode pairwise --nsim 30000 --seed 7",
                                        "--mode pairwise --method asymptotic --nsim 30000 --seed 7",
                                        "--mode confidence --conf-level 0.9 --round-eps 0.5",
                                        "--mode quality_harness --alternative greater --nsim 20000 --seed 8"};
    int compared = 0;
    for (const auto& args : runs) {
        const std::string base = std::string(STEELRANK_CLI) + " -i " + fixture + " " + args;
        const auto one = capture("STEELRANK_THREADS=1 " + base);
        const auto again = capture("STEELRANK_THREADS=1 " + base);
        const auto many = capture("STEELRANK_THREADS=" + std::to_string(max_threads) + " " + base);
        check.require(!one.empty() && one.find("\"error\"") == std::string::npos, "run succeeded: " + args);
        check.require(one == again, "repeat: " + args);
        check.require(one == many, "threads: " + args);
        compared += 2;
    }
    Dataset d;
    d.labels = {"c", "a", "b"};
    d.samples = normal_groups(3, 60, 3);
    RunConfig cfg;
    cfg.nsim = 40000;
    cfg.threads = 1;
    const auto a = serialize(run(cfg, d));
    cfg.threads = max_threads;
    check.require(a == serialize(run(cfg, d)), "in-process threads");
    ++compared;
    return check.outcome(std::to_string(compared) + " byte comparisons, threads 1 vs " + std::to_string(max_threads));
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"moment oracle (N <= 10, K <= 3)", moment_oracle},
        {"closed-form reductions", closed_forms},
        {"K=1 analytic collapse", one_dimensional_collapse},
        {"IQ example", paper_example},
        {"approximation quality n=(100,100,100)", approximation_quality},
        {"tie-adjustment contrast", tie_adjustment},
        {"confidence-bound inversion n=(6,6)", confidence_inversion},
        {"pairwise identities K=4, N=8", pairwise_identities},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t c = 0; c < criteria.size(); ++c) {
        Outcome o;
        try {
            o = criteria[c].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c + 1 << ": " << criteria[c].first << " -- " << o.detail << std::endl;
    }
    std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : std::string("acceptance: all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
