#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "steelrank/statistics.hpp"

using namespace steelrank;

namespace {

double mw(std::vector<double> x, std::vector<double> y) { return mann_whitney_star(x, y); }

std::vector<std::vector<double>> iq_groups() {
    return {{103, 111, 136, 106, 122, 114}, {119, 100, 97, 89, 112, 86}, {89, 132, 86, 114, 114, 125}, {92, 114, 86, 119, 131, 94}};
}

}  // namespace

TEST(MannWhitney, Examples) {
    EXPECT_EQ(mw({1.5, 1.5}, {3, 5}), 4.0);
    EXPECT_EQ(mw({1.5, 5}, {1.5, 5}), 2.0);
    EXPECT_THROW(mw({}, {1}), Error);
}

TEST(MannWhitney, IqData) {
    const auto g = iq_groups();
    EXPECT_EQ(mann_whitney_star(g[0], g[1]), 7.0);
    EXPECT_EQ(mann_whitney_star(g[0], g[2]), 17.0);
    EXPECT_EQ(mann_whitney_star(g[0], g[3]), 12.5);
}

TEST(MannWhitney, AntisymmetryShiftInvarianceAndOracle) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> val(0, 5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(1 + rng() % 9), b(1 + rng() % 9);
        for (auto& v : a) v = val(rng);
        for (auto& v : b) v = val(rng);
        const double w = mann_whitney_star(a, b);
        EXPECT_EQ(w, oracle::mann_whitney_direct(a, b));
        EXPECT_EQ(w + mann_whitney_star(b, a), static_cast<double>(a.size() * b.size()));
        for (auto& v : a) v += 17.25;
        for (auto& v : b) v += 17.25;
        EXPECT_EQ(mann_whitney_star(a, b), w);
    }
}

TEST(SteelStatistics, IqLowerTail) {
    const auto s = rank_samples(iq_groups());
    const auto obs = steel_statistics(s, factor_decomposition(s), Alternative::less);
    EXPECT_EQ(obs.w_star, (std::vector<double>{7, 17, 12.5}));
    EXPECT_NEAR(obs.s_min, -1.7713, 5e-5);
    EXPECT_EQ(obs.value(), obs.s_min);
    EXPECT_EQ(obs.s_abs, std::max(obs.s_max, -obs.s_min));
    // Equal treatment sizes: the standardized ordering is the raw ordering.
    EXPECT_EQ(std::max_element(obs.standardized.begin(), obs.standardized.end()) - obs.standardized.begin(),
              std::max_element(obs.w_star.begin(), obs.w_star.end()) - obs.w_star.begin());
    EXPECT_EQ(obs.rank_sum(0, 6), 7.0 + 21.0);
}

TEST(SteelStatistics, AllEqualIsDegenerate) {
    const auto s = rank_samples({{4, 4, 4}, {4, 4}, {4}});
    const auto obs = steel_statistics(s, factor_decomposition(s), Alternative::greater);
    EXPECT_EQ(obs.standardized, (std::vector<double>{0, 0}));
    EXPECT_EQ(obs.s_max, 0.0);
    EXPECT_EQ(obs.s_min, 0.0);
    EXPECT_TRUE(obs.degenerate[0] && obs.degenerate[1]);
}

TEST(SteelStatistics, SmallSplit) {
    const auto s = rank_samples({{1, 1}, {2, 3}, {3, 3}});
    const auto obs = steel_statistics(s, factor_decomposition(s), Alternative::greater);
    EXPECT_EQ(obs.w_star, (std::vector<double>{4, 4}));
    const double z = 2.0 / std::sqrt(41.0 / 30.0);
    EXPECT_NEAR(obs.standardized[0], z, 1e-14);
    EXPECT_NEAR(obs.standardized[1], z, 1e-14);
    EXPECT_NEAR(z, 1.7108, 5e-5);
}

TEST(SteelStatistics, DimensionMismatch) {
    const auto s = rank_samples({{1, 2}, {3, 4}, {5, 6}});
    auto m = factor_decomposition(rank_samples({{1, 2}, {3, 4}}));
    EXPECT_THROW(steel_statistics(s, m, Alternative::greater), Error);
}

TEST(SteelStatistics, ContinuityCorrectionMovesAgainstTheTail) {
    const auto obs = make_observation({10.0, 3.0}, {8.0, 8.0}, {2.0, 2.0}, Alternative::greater);
    const auto up = continuity_corrected(obs);
    EXPECT_EQ(up.w_star, (std::vector<double>{9.5, 2.5}));
    auto low = obs;
    low.alternative = Alternative::less;
    EXPECT_EQ(continuity_corrected(low).w_star, (std::vector<double>{10.5, 3.5}));
    auto two = obs;
    two.alternative = Alternative::two_sided;
    EXPECT_EQ(continuity_corrected(two).w_star, (std::vector<double>{9.5, 3.5}));
}

TEST(AlternativeNames, RoundTrip) {
    for (auto a : {Alternative::greater, Alternative::less, Alternative::two_sided}) EXPECT_EQ(parse_alternative(to_string(a)), a);
    EXPECT_THROW(parse_alternative("both"), Error);
}
