#pragma once

// Brute-force reference implementations used to check the production code:
// exact-integer Fisher enumeration, rank-sum permutation enumeration,
// finite-difference GAT gradients and an exhaustive depth-1 split search.
// They are deliberately slow and share no code with what they check.

#include "guardian/gat.hpp"
#include "guardian/gbdt.hpp"
#include "guardian/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace guardian::oracle {

// ============================================================================
// FISHER
// ============================================================================

inline std::uint64_t choose(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    if (r > std::numeric_limits<std::uint64_t>::max()) throw std::overflow_error("choose: result does not fit");
    return static_cast<std::uint64_t>(r);
}

// Two-sided Fisher p by listing every table with the observed margins. Point
// probabilities are compared as exact integers C(r1,x) C(r2,c1-x), with the
// same 1e-7 relative tie slack as the production test.
inline double fisher_enumerate(const stats::Table2x2& t) {
    const std::uint64_t r1 = t.a + t.b, r2 = t.c + t.d, c1 = t.a + t.c;
    if (r1 == 0 || r2 == 0 || c1 == 0 || c1 == r1 + r2) throw std::invalid_argument("fisher_enumerate: zero margin");
    std::vector<std::uint64_t> w;
    std::uint64_t observed = 0;
    for (std::uint64_t x = 0; x <= std::min(r1, c1); ++x) {
        if (c1 - x > r2) continue;
        const std::uint64_t v = choose(r1, x) * choose(r2, c1 - x);
        w.push_back(v);
        if (x == t.a) observed = v;
    }
    constexpr unsigned __int128 scale = 10'000'000;
    unsigned __int128 tail = 0, total = 0;
    for (auto v : w) {
        total += v;
        if (static_cast<unsigned __int128>(v) * scale <= static_cast<unsigned __int128>(observed) * (scale + 1)) tail += v;
    }
    return static_cast<double>(tail) / static_cast<double>(total);
}

// ============================================================================
// WILCOXON
// ============================================================================

// Mid-ranks by counting: rank(v) = #below + (#equal + 1) / 2.
inline std::vector<double> count_ranks(std::span<const double> x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t below = 0, equal = 0;
        for (double v : x) {
            below += v < x[i] ? 1 : 0;
            equal += v == x[i] ? 1 : 0;
        }
        r[i] = static_cast<double>(below) + static_cast<double>(equal + 1) / 2.0;
    }
    return r;
}

// Two-sided rank-sum p by visiting every way to pick the first sample's
// positions from the pooled data.
inline double wilcoxon_enumerate(std::span<const double> a, std::span<const double> b) {
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const auto ranks = count_ranks(pooled);
    const std::size_t n = pooled.size(), k = a.size();
    // Doubled ranks are integers, so sums compare exactly.
    std::vector<long> r2(n);
    for (std::size_t i = 0; i < n; ++i) r2[i] = std::lround(2.0 * ranks[i]);
    long observed = 0;
    for (std::size_t i = 0; i < k; ++i) observed += r2[i];
    const long centre = static_cast<long>(k * (n + 1));  // twice the expected sum
    const long dev = std::labs(observed - centre);
    std::uint64_t hit = 0, all = 0;
    std::function<void(std::size_t, std::size_t, long)> visit = [&](std::size_t next, std::size_t left, long sum) {
        if (left == 0) {
            ++all;
            hit += std::labs(sum - centre) >= dev ? 1 : 0;
            return;
        }
        for (std::size_t i = next; i + left <= n; ++i) visit(i + 1, left - 1, sum + r2[i]);
    };
    visit(0, k, 0);
    return static_cast<double>(hit) / static_cast<double>(all);
}

// ============================================================================
// GAT GRADIENT
// ============================================================================

struct GradientCheck {
    std::size_t params = 0;
    double max_rel_error = 0.0;
    std::size_t worst = 0;
};

// Central differences of the loss against the analytic gradient, per
// parameter: |g - fd| / max(|g|, |fd|, floor).
inline GradientCheck gat_gradient_check(const gat::NeighborIndex& idx, std::span<const double> x, std::size_t n,
                                        const gat::GatParams& p, std::span<const gat::PairLabel> pairs,
                                        double weight_decay, double step = 1e-5, double floor = 1e-6) {
    std::vector<double> analytic;
    gat::loss_and_gradient(idx, x, n, p, pairs, weight_decay, &analytic);
    GradientCheck out;
    out.params = p.theta.size();
    gat::GatParams q = p;
    for (std::size_t t = 0; t < p.theta.size(); ++t) {
        q.theta[t] = p.theta[t] + step;
        const double up = gat::loss_and_gradient(idx, x, n, q, pairs, weight_decay, nullptr);
        q.theta[t] = p.theta[t] - step;
        const double down = gat::loss_and_gradient(idx, x, n, q, pairs, weight_decay, nullptr);
        q.theta[t] = p.theta[t];
        const double fd = (up - down) / (2.0 * step);
        const double rel = std::fabs(analytic[t] - fd) / std::max({std::fabs(analytic[t]), std::fabs(fd), floor});
        if (rel > out.max_rel_error) {
            out.max_rel_error = rel;
            out.worst = t;
        }
    }
    return out;
}

// ============================================================================
// DEPTH-1 SPLIT SEARCH
// ============================================================================

struct StumpSplit {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
    std::vector<std::uint8_t> goes_left;  // per row
};

// Best root split under the second-order gain
//   G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - G^2/(H+l2),
// trying every threshold halfway between consecutive distinct values and
// summing each side from scratch.
inline StumpSplit exhaustive_stump(const gbdt::Dataset& d, std::span<const double> grad, std::span<const double> hess,
                                   std::size_t min_leaf, double l2) {
    StumpSplit best;
    const std::size_t n = d.rows();
    double G = 0.0, H = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        G += grad[i];
        H += hess[i];
    }
    const double parent = G * G / (H + l2);
    for (std::size_t f = 0; f < d.n_features; ++f) {
        std::vector<double> values;
        for (std::size_t i = 0; i < n; ++i) values.push_back(d.at(i, f));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t k = 0; k + 1 < values.size(); ++k) {
            const double thr = values[k] + (values[k + 1] - values[k]) / 2.0;
            double gl = 0.0, hl = 0.0, gr = 0.0, hr = 0.0;
            std::size_t nl = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (d.at(i, f) <= thr) {
                    gl += grad[i];
                    hl += hess[i];
                    ++nl;
                } else {
                    gr += grad[i];
                    hr += hess[i];
                }
            }
            if (nl < min_leaf || n - nl < min_leaf) continue;
            const double gain = gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent;
            if (gain > 1e-12 && (!best.found || gain > best.gain)) {
                best.found = true;
                best.feature = f;
                best.threshold = thr;
                best.gain = gain;
            }
        }
    }
    if (best.found)
        for (std::size_t i = 0; i < n; ++i) best.goes_left.push_back(d.at(i, best.feature) <= best.threshold ? 1 : 0);
    return best;
}

// Gradient and Hessian of the log-loss at the base score used by training.
inline void base_gradients(const gbdt::Dataset& d, std::vector<double>& grad, std::vector<double>& hess) {
    double pos = 0.0;
    for (auto v : d.y) pos += v;
    const double p = pos / static_cast<double>(d.rows());
    grad.resize(d.rows());
    hess.resize(d.rows());
    for (std::size_t i = 0; i < d.rows(); ++i) {
        grad[i] = p - d.y[i];
        hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
}

}  // namespace guardian::oracle
