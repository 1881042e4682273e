#include "guardian/stats.hpp"
#include "guardian/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace guardian;
using namespace guardian::stats;

namespace {

// Hypergeometric two-sided p from log-factorials, written out directly.
double fisher_reference(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    const auto lf = [](double n) { return std::lgamma(n + 1.0); };
    const double r1 = a + b, r2 = c + d, c1 = a + c, n = a + b + c + d;
    const auto logp = [&](double x) {
        return lf(r1) + lf(r2) + lf(c1) + lf(n - c1) - lf(n) - lf(x) - lf(r1 - x) - lf(c1 - x) - lf(r2 - c1 + x);
    };
    const double obs = logp(static_cast<double>(a));
    double p = 0.0;
    for (double x = std::max(0.0, c1 - r2); x <= std::min(r1, c1); x += 1.0)
        if (logp(x) <= obs + 1e-7) p += std::exp(logp(x));
    return std::min(1.0, p);
}

// Upper tail of chi-square with one degree of freedom: erfc(sqrt(x/2)).
double chi1_sf(double x) { return std::erfc(std::sqrt(x / 2.0)); }

// Student t two-sided p by Simpson integration of the density.
double t_two_sided_reference(double t, double df) {
    const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
    const auto f = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
    const double a = 0.0, b = std::fabs(t);
    const int n = 20000;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(a + i * h);
    return 1.0 - 2.0 * s * h / 3.0;
}

}  // namespace

TEST(Fisher, ModalTableHasPOne) { EXPECT_DOUBLE_EQ(fisher_exact_2x2({5, 5, 5, 5}), 1.0); }

TEST(Fisher, SmallTableMatchesEnumeration) { EXPECT_NEAR(fisher_exact_2x2({3, 1, 1, 3}), 34.0 / 70.0, 1e-14); }

TEST(Fisher, ExtremeTablesOnly) { EXPECT_NEAR(fisher_exact_2x2({10, 0, 0, 10}), 2.0 / 184756.0, 1e-18); }

TEST(Fisher, ZeroMarginIsAnError) {
    EXPECT_THROW(fisher_exact_2x2({0, 0, 3, 4}), std::invalid_argument);
    EXPECT_THROW(fisher_exact_2x2({0, 3, 0, 4}), std::invalid_argument);
}

TEST(Fisher, AgreesWithLogFactorialReference) {
    for (std::uint64_t a = 0; a <= 12; ++a)
        for (std::uint64_t b = 0; b <= 12; ++b)
            for (std::uint64_t c = 0; c <= 12; ++c)
                for (std::uint64_t d = 0; d <= 12; d += 3) {
                    const Table2x2 t{a, b, c, d};
                    if (!t.row1() || !t.row2() || !t.col1() || !t.col2()) continue;
                    ASSERT_NEAR(fisher_exact_2x2(t), fisher_reference(a, b, c, d), 1e-9) << a << ' ' << b << ' ' << c << ' ' << d;
                }
}

TEST(Fisher, LargeTablesStayFinite) {
    const double p = fisher_exact_2x2({3000, 7000, 3300, 6700});
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1e-5);
}

TEST(Fisher, PValuesInUnitIntervalAndSwapInvariant) {
    Rng rng(3);
    for (int k = 0; k < 2000; ++k) {
        const Table2x2 t{rng.below(40), rng.below(40) + 1, rng.below(40) + 1, rng.below(40)};
        const double p = fisher_exact_2x2(t);
        ASSERT_GT(p, 0.0);
        ASSERT_LE(p, 1.0);
        ASSERT_NEAR(p, fisher_exact_2x2({t.c, t.d, t.a, t.b}), 1e-12);  // rows swapped
        ASSERT_NEAR(p, fisher_exact_2x2({t.b, t.a, t.d, t.c}), 1e-12);  // columns swapped
    }
}

TEST(ChiSquare, BalancedTable) {
    const auto r = pearson_chi_square_2x2({10, 10, 10, 10});
    EXPECT_DOUBLE_EQ(r.statistic, 0.0);
    EXPECT_DOUBLE_EQ(r.p_value, 1.0);
}

TEST(ChiSquare, HandComputedStatistic) {
    const auto r = pearson_chi_square_2x2({20, 30, 30, 20});
    EXPECT_NEAR(r.statistic, 4.0, 1e-12);
    EXPECT_NEAR(r.p_value, chi1_sf(4.0), 1e-12);
    EXPECT_NEAR(r.p_value, 0.0455, 1e-4);
}

TEST(ChiSquare, ScalingDoublesStatistic) {
    const auto r1 = pearson_chi_square_2x2({7, 13, 11, 4});
    const auto r2 = pearson_chi_square_2x2({14, 26, 22, 8});
    EXPECT_NEAR(r2.statistic, 2.0 * r1.statistic, 1e-12);
}

TEST(ChiSquare, TailMatchesErfcAcrossRange) {
    for (double x = 0.01; x < 60.0; x *= 1.3) EXPECT_NEAR(chi_square_sf(x, 1.0), chi1_sf(x), 1e-10 * std::max(1.0, chi1_sf(x)));
    // Even degrees of freedom have a closed form: exp(-x/2) sum (x/2)^k / k!.
    for (double df : {2.0, 4.0, 10.0})
        for (double x = 0.1; x < 80.0; x *= 1.5) {
            double term = 1.0, sum = 1.0;
            for (int k = 1; k < df / 2; ++k) sum += term *= (x / 2) / k;
            const double ref = std::exp(-x / 2) * sum;
            EXPECT_NEAR(chi_square_sf(x, df), ref, 1e-10 * std::max(ref, 1e-300)) << df << ' ' << x;
        }
}

TEST(StudentT, IdenticalSamples) {
    const std::vector<double> a{1, 2, 3, 4};
    const auto r = students_t(a, a);
    EXPECT_DOUBLE_EQ(r.t, 0.0);
    EXPECT_NEAR(r.p_value, 1.0, 1e-15);
}

TEST(StudentT, HandComputedExample) {
    const std::vector<double> a{1, 2, 3, 4}, b{2, 3, 4, 5};
    const auto r = students_t(a, b);
    // Means differ by 1, pooled variance 5/3, se = sqrt(5/3 * 1/2).
    EXPECT_NEAR(r.t, -1.0 / std::sqrt(5.0 / 6.0), 1e-12);
    EXPECT_NEAR(r.t, -1.0954, 1e-4);
    EXPECT_DOUBLE_EQ(r.df, 6.0);
    EXPECT_NEAR(r.p_value, t_two_sided_reference(r.t, 6.0), 1e-9);
}

TEST(StudentT, SwapNegatesT) {
    const std::vector<double> a{1.5, 2.0, 7.0, 3.3}, b{0.2, 0.9, 1.1};
    const auto ab = students_t(a, b), ba = students_t(b, a);
    EXPECT_DOUBLE_EQ(ab.t, -ba.t);
    EXPECT_DOUBLE_EQ(ab.p_value, ba.p_value);
}

TEST(StudentT, ZeroVarianceIsAnError) {
    const std::vector<double> a{2, 2, 2}, b{2, 2};
    EXPECT_THROW(students_t(a, b), std::invalid_argument);
}

TEST(StudentT, TailAgainstNumericIntegration) {
    for (double df : {1.0, 3.0, 9.0, 40.0})
        for (double t : {0.1, 0.7, 1.5, 2.4, 4.0}) EXPECT_NEAR(t_two_sided(t, df), t_two_sided_reference(t, df), 1e-9);
}

TEST(Wilcoxon, IdenticalSamples) {
    const std::vector<double> a{1, 2, 3};
    EXPECT_DOUBLE_EQ(wilcoxon_rank_sum(a, a).p_value, 1.0);
}

TEST(Wilcoxon, FullySeparatedPairs) {
    const std::vector<double> a{1, 2}, b{3, 4};
    const auto r = wilcoxon_rank_sum(a, b);
    EXPECT_TRUE(r.exact);
    EXPECT_DOUBLE_EQ(r.statistic, 3.0);
    EXPECT_NEAR(r.p_value, 2.0 / 6.0, 1e-15);
}

TEST(Wilcoxon, InterleavedPairs) {
    const std::vector<double> a{1, 3}, b{2, 4};
    EXPECT_NEAR(wilcoxon_rank_sum(a, b).p_value, 4.0 / 6.0, 1e-15);
}

TEST(Wilcoxon, NormalApproximationForLargeSamples) {
    Rng rng(5);
    std::vector<double> a(60), b(70);
    for (auto& v : a) v = rng.uniform();
    for (auto& v : b) v = rng.uniform() + 0.5;
    const auto r = wilcoxon_rank_sum(a, b);
    EXPECT_FALSE(r.exact);
    EXPECT_LT(r.p_value, 1e-6);
}

TEST(Wilcoxon, SwapPreservesP) {
    Rng rng(8);
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> a(1 + rng.below(15)), b(1 + rng.below(15));
        for (auto& v : a) v = static_cast<double>(rng.below(6));
        for (auto& v : b) v = static_cast<double>(rng.below(6));
        const double p = wilcoxon_rank_sum(a, b).p_value;
        ASSERT_GT(p, 0.0);
        ASSERT_LE(p, 1.0);
        ASSERT_NEAR(p, wilcoxon_rank_sum(b, a).p_value, 1e-12);
    }
}

TEST(EffectSize, Examples) {
    EXPECT_DOUBLE_EQ(*effect_size(0.04, 0.04), 0.0);
    EXPECT_DOUBLE_EQ(*effect_size(0.0, 0.04), 1.0);
    EXPECT_NEAR(*effect_size(0.03, 0.04), 0.25, 1e-15);
    EXPECT_FALSE(effect_size(0.1, 0.0).has_value());
}

TEST(EffectSize, AntitoneInInterventionRate) {
    Rng rng(2);
    for (int k = 0; k < 1000; ++k) {
        const double xc = 0.01 + rng.uniform(), a = rng.uniform(), b = rng.uniform();
        const double lo = std::min(a, b), hi = std::max(a, b);
        ASSERT_GE(*effect_size(lo, xc), *effect_size(hi, xc));
        // Swapping arms is the same formula on swapped inputs.
        if (lo > 0) {
            ASSERT_DOUBLE_EQ(*effect_size(xc, lo), (lo - xc) / lo);
        }
    }
}

TEST(Calibration, MonotoneOutcomesGivePositiveCorrelation) {
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 100; ++i) {
        s.push_back(i);
        y.push_back(i >= 50);
    }
    const auto c = risk_outcome_calibration(s, y);
    EXPECT_GT(*c.spearman, 0.0);
    ASSERT_EQ(c.bins.size(), 10u);
    for (std::size_t b = 1; b < c.bins.size(); ++b) EXPECT_GE(c.bins[b].outcome_rate, c.bins[b - 1].outcome_rate);
}

TEST(Calibration, ThreePointRankCorrelation) {
    const std::vector<double> s{1, 2, 3};
    const std::vector<std::uint8_t> y{0, 0, 1};
    // Ranks (1,2,3) against (1.5,1.5,3): cross-product sum 1.5, squared deviations 2 and 1.5.
    EXPECT_NEAR(*risk_outcome_calibration(s, y).spearman, 1.5 / std::sqrt(2.0 * 1.5), 1e-12);
}

TEST(Calibration, ConstantScoresAreNA) {
    const std::vector<double> s{1, 1, 1};
    const std::vector<std::uint8_t> y{0, 1, 1};
    EXPECT_FALSE(risk_outcome_calibration(s, y).spearman.has_value());
}

TEST(Calibration, IndependentOutcomesCorrelateNearZero) {
    double sum = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        Rng rng(1000 + r);
        std::vector<double> s(500);
        std::vector<std::uint8_t> y(500);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = rng.uniform();
            y[i] = rng.uniform() < 0.2;
        }
        sum += *risk_outcome_calibration(s, y).spearman;
    }
    // Each draw has sd about 1/sqrt(500); the mean of 200 has sd about 0.0032.
    EXPECT_LT(std::fabs(sum / reps), 0.015);
}

TEST(Quantile, LinearInterpolation) {
    const std::vector<double> x{4, 1, 3, 2};
    EXPECT_DOUBLE_EQ(quantile(x, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(quantile(x, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile(x, 1.0), 4.0);
}
