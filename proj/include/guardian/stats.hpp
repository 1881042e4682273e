#pragma once

// Exact and classical tests used by the trial analysis: Fisher's exact test,
// Pearson chi-square, Student's t, Wilcoxon rank-sum, rank correlation and
// the effect formula, plus the special functions behind their tails.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace guardian::stats {

// ============================================================================
// SPECIAL FUNCTIONS
// ============================================================================

namespace detail {

inline constexpr double kEps = 1e-16;
inline constexpr double kTiny = 1e-300;
inline constexpr int kMaxIter = 10000;

// Series for P(a, x), valid for x < a + 1.
inline double gamma_p_series(double a, double x) {
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < kMaxIter; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x), valid for x >= a + 1 (modified Lentz).
inline double gamma_q_fraction(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_fraction(double a, double b, double x) {
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m < kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw std::domain_error("gamma_p: requires a > 0, x >= 0");
    if (x == 0.0) return 0.0;
    return x < a + 1.0 ? detail::gamma_p_series(a, x) : 1.0 - detail::gamma_q_fraction(a, x);
}

// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
inline double gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw std::domain_error("gamma_q: requires a > 0, x >= 0");
    if (x == 0.0) return 1.0;
    return x < a + 1.0 ? 1.0 - detail::gamma_p_series(a, x) : detail::gamma_q_fraction(a, x);
}

// Regularized incomplete beta I_x(a, b).
inline double beta_inc(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0) || x < 0.0 || x > 1.0) throw std::domain_error("beta_inc: invalid arguments");
    if (x == 0.0 || x == 1.0) return x;
    const double front =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_fraction(b, a, 1.0 - x) / b;
}

// Upper tail of the chi-square distribution.
inline double chi_square_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    return gamma_q(0.5 * df, 0.5 * x);
}

// Two-sided tail of Student's t.
inline double t_two_sided(double t, double df) {
    if (!(df > 0.0)) throw std::domain_error("t_two_sided: df must be positive");
    if (!std::isfinite(t)) return 0.0;
    return beta_inc(0.5 * df, 0.5, df / (df + t * t));
}

// Upper tail of the standard normal.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// ============================================================================
// 2x2 TABLES
// ============================================================================

// Rows are arms, columns outcome / no outcome:
//   [[a, b],
//    [c, d]]
struct Table2x2 {
    std::uint64_t a = 0, b = 0, c = 0, d = 0;

    [[nodiscard]] std::uint64_t n() const { return a + b + c + d; }
    [[nodiscard]] std::uint64_t row1() const { return a + b; }
    [[nodiscard]] std::uint64_t row2() const { return c + d; }
    [[nodiscard]] std::uint64_t col1() const { return a + c; }
    [[nodiscard]] std::uint64_t col2() const { return b + d; }

    friend bool operator==(const Table2x2&, const Table2x2&) = default;
};

inline constexpr double kFisherTieSlack = 1e-7;

// Two-sided Fisher exact test: total probability of the tables with the
// observed margins whose point probability does not exceed the observed one.
inline double fisher_exact_2x2(const Table2x2& t) {
    if (t.row1() == 0 || t.row2() == 0 || t.col1() == 0 || t.col2() == 0)
        throw std::invalid_argument("fisher_exact_2x2: every margin must be positive");
    const std::uint64_t r1 = t.row1(), r2 = t.row2(), c1 = t.col1();
    const std::uint64_t lo = c1 > r2 ? c1 - r2 : 0;
    const std::uint64_t hi = std::min(r1, c1);
    // Unnormalized hypergeometric weights by the ratio recurrence
    //   w(x+1)/w(x) = (r1-x)(c1-x) / ((x+1)(r2-c1+x+1)),
    // rescaled whenever a term grows large so nothing overflows.
    const std::size_t m = static_cast<std::size_t>(hi - lo + 1);
    std::vector<double> w(m);
    w[0] = 1.0;
    for (std::size_t i = 1; i < m; ++i) {
        const double x = static_cast<double>(lo + i - 1);
        w[i] = w[i - 1] * (static_cast<double>(r1) - x) * (static_cast<double>(c1) - x) /
               ((x + 1.0) * (static_cast<double>(r2) - static_cast<double>(c1) + x + 1.0));
        if (w[i] > 1e280) {
            for (std::size_t j = 0; j <= i; ++j) w[j] *= 1e-280;
        }
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    const double observed = w[static_cast<std::size_t>(t.a - lo)];
    double tail = 0.0;
    for (double v : w)
        if (v <= observed * (1.0 + kFisherTieSlack)) tail += v;
    return std::min(1.0, tail / total);
}

struct ChiSquareResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

// Pearson chi-square without continuity correction, df = 1.
inline ChiSquareResult pearson_chi_square_2x2(const Table2x2& t) {
    if (t.row1() == 0 || t.row2() == 0 || t.col1() == 0 || t.col2() == 0)
        throw std::invalid_argument("pearson_chi_square_2x2: zero expected count");
    const double a = static_cast<double>(t.a), b = static_cast<double>(t.b);
    const double c = static_cast<double>(t.c), d = static_cast<double>(t.d);
    const double diff = a * d - b * c;
    const double stat = static_cast<double>(t.n()) * diff * diff /
                        (static_cast<double>(t.row1()) * static_cast<double>(t.row2()) *
                         static_cast<double>(t.col1()) * static_cast<double>(t.col2()));
    return {stat, chi_square_sf(stat, 1.0)};
}

// ============================================================================
// STUDENT'S T
// ============================================================================

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p_value = 1.0;
};

inline double mean(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("mean: empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Sample standard deviation (n - 1 denominator).
inline double stddev(std::span<const double> x) {
    if (x.size() < 2) throw std::invalid_argument("stddev: need at least two values");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// Pooled-variance two-sample t-test.
inline TTestResult students_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("students_t: each sample needs >= 2 values");
    const double ma = mean(a), mb = mean(b);
    double ss = 0.0;
    for (double v : a) ss += (v - ma) * (v - ma);
    for (double v : b) ss += (v - mb) * (v - mb);
    const double df = static_cast<double>(a.size() + b.size() - 2);
    const double pooled = ss / df;
    if (!(pooled > 0.0)) throw std::invalid_argument("students_t: zero pooled variance");
    const double se = std::sqrt(pooled * (1.0 / static_cast<double>(a.size()) + 1.0 / static_cast<double>(b.size())));
    const double t = (ma - mb) / se;
    return {t, df, t_two_sided(t, df)};
}

// ============================================================================
// RANKS
// ============================================================================

// Mid-ranks (1-based) of the values.
inline std::vector<double> mid_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) r[order[k]] = mid;
        i = j;
    }
    return r;
}

// ============================================================================
// WILCOXON RANK-SUM
// ============================================================================

struct WilcoxonResult {
    double statistic = 0.0;  // rank sum of the first sample
    double p_value = 1.0;
    bool exact = false;
};

inline constexpr std::size_t kWilcoxonExactLimit = 20;

// Two-sided rank-sum test: p = P(|W - E[W]| >= |w - E[W]|) under random
// assignment of the pooled mid-ranks. Exact for n1 + n2 <= 20, otherwise a
// normal approximation with tie and continuity correction.
inline WilcoxonResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wilcoxon_rank_sum: both samples must be nonempty");
    const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    for (double v : pooled)
        if (!std::isfinite(v)) throw std::invalid_argument("wilcoxon_rank_sum: non-finite value");
    const auto ranks = mid_ranks(pooled);
    WilcoxonResult res;
    for (std::size_t i = 0; i < n1; ++i) res.statistic += ranks[i];

    if (n <= kWilcoxonExactLimit) {
        // Doubled mid-ranks are integers; count subsets of size n1 by doubled
        // rank sum.
        std::vector<int> r2(n);
        int total2 = 0;
        for (std::size_t i = 0; i < n; ++i) total2 += r2[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
        std::vector<std::vector<double>> ways(n1 + 1, std::vector<double>(static_cast<std::size_t>(total2) + 1, 0.0));
        ways[0][0] = 1.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = std::min(i + 1, n1); k >= 1; --k)
                for (int s = total2; s >= r2[i]; --s) ways[k][static_cast<std::size_t>(s)] += ways[k - 1][static_cast<std::size_t>(s - r2[i])];
        const long long mean2 = static_cast<long long>(n1) * static_cast<long long>(n + 1);  // 2 E[W]
        long long w2 = 0;
        for (std::size_t i = 0; i < n1; ++i) w2 += r2[i];
        const long long dev = std::llabs(w2 - mean2);
        double hit = 0.0, all = 0.0;
        for (int s = 0; s <= total2; ++s) {
            const double c = ways[n1][static_cast<std::size_t>(s)];
            if (c == 0.0) continue;
            all += c;
            if (std::llabs(s - mean2) >= dev) hit += c;
        }
        res.p_value = std::min(1.0, hit / all);
        res.exact = true;
        return res;
    }

    const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2), dn = static_cast<double>(n);
    std::vector<double> sorted(pooled);
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
    if (!(var > 0.0)) return res;  // every value tied
    const double expected = dn1 * (dn + 1.0) / 2.0;
    const double z = std::max(0.0, std::fabs(res.statistic - expected) - 0.5) / std::sqrt(var);
    res.p_value = std::min(1.0, 2.0 * normal_sf(z));
    return res;
}

// ============================================================================
// EFFECTS AND CORRELATION
// ============================================================================

// (x_c - x_i) / x_c; undefined when the control rate is zero.
inline std::optional<double> effect_size(double x_i, double x_c) {
    if (!(x_c > 0.0)) return std::nullopt;
    return (x_c - x_i) / x_c;
}

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: size mismatch");
    if (x.size() < 2) return std::nullopt;
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

// Spearman correlation: Pearson correlation of mid-ranks. NA when either
// side is constant.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: size mismatch");
    const auto rx = mid_ranks(x), ry = mid_ranks(y);
    return pearson(rx, ry);
}

// Linear-interpolation quantile (type 7) of an unsorted sample.
inline double quantile(std::span<const double> x, double q) {
    if (x.empty()) throw std::invalid_argument("quantile: empty sample");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double h = (static_cast<double>(s.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

struct CalibrationBin {
    double score_min = 0.0;
    double score_max = 0.0;
    std::size_t count = 0;
    double outcome_rate = 0.0;
};

struct Calibration {
    std::vector<CalibrationBin> bins;
    std::optional<double> spearman;
};

// Outcome rates by score quantile bin (equal counts, ties kept together) and
// the rank correlation between score and outcome.
inline Calibration risk_outcome_calibration(std::span<const double> scores, std::span<const std::uint8_t> outcomes,
                                            std::size_t n_bins = 10) {
    if (scores.size() != outcomes.size()) throw std::invalid_argument("calibration: size mismatch");
    if (n_bins < 1) throw std::invalid_argument("calibration: need at least one bin");
    Calibration cal;
    std::vector<double> y(outcomes.begin(), outcomes.end());
    cal.spearman = spearman(scores, y);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
    const std::size_t n = order.size();
    std::size_t start = 0;
    for (std::size_t b = 0; b < n_bins && start < n; ++b) {
        std::size_t end = std::max(start + 1, (b + 1) * n / n_bins);
        end = std::min(end, n);
        while (end < n && scores[order[end]] == scores[order[end - 1]]) ++end;
        CalibrationBin bin;
        bin.score_min = scores[order[start]];
        bin.score_max = scores[order[end - 1]];
        bin.count = end - start;
        double pos = 0.0;
        for (std::size_t k = start; k < end; ++k) pos += outcomes[order[k]];
        bin.outcome_rate = pos / static_cast<double>(bin.count);
        cal.bins.push_back(bin);
        start = end;
    }
    return cal;
}

}  // namespace guardian::stats
