#pragma once

// Oracle suites: each compares a production routine with its brute-force
// reference over a generated sweep and reports the worst disagreement.

#include "guardian/oracles.hpp"
#include "guardian/rng.hpp"

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

namespace guardian::selftest {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

namespace detail {

inline std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

template <typename F>
SuiteResult timed(std::string name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteResult r = body();
    r.name = std::move(name);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace detail

// Every 2x2 table with N <= max_n. Tables with a zero margin must be rejected.
inline SuiteResult fisher_sweep(std::uint64_t max_n = 30, double tol = 1e-12) {
    return detail::timed("fisher-enumeration", [&] {
        std::size_t tables = 0, rejected = 0, bad = 0;
        double worst = 0.0;
        for (std::uint64_t a = 0; a <= max_n; ++a)
            for (std::uint64_t b = 0; a + b <= max_n; ++b)
                for (std::uint64_t c = 0; a + b + c <= max_n; ++c)
                    for (std::uint64_t d = 0; a + b + c + d <= max_n; ++d) {
                        const stats::Table2x2 t{a, b, c, d};
                        if (t.row1() == 0 || t.row2() == 0 || t.col1() == 0 || t.col2() == 0) {
                            try {
                                (void)stats::fisher_exact_2x2(t);
                                ++bad;
                            } catch (const std::invalid_argument&) {
                                ++rejected;
                            }
                            continue;
                        }
                        ++tables;
                        const double p = stats::fisher_exact_2x2(t);
                        const double diff = std::fabs(p - oracle::fisher_enumerate(t));
                        worst = std::max(worst, diff);
                        if (!(diff < tol) || !(p > 0.0 && p <= 1.0)) ++bad;
                    }
        SuiteResult r;
        r.passed = bad == 0;
        r.detail = detail::fmt("%zu tables, %zu zero-margin rejected, max |dp| = %.3g, %zu failures", tables, rejected,
                               worst, bad);
        return r;
    });
}

// `datasets` random integer samples for every size pair up to max_n each.
inline SuiteResult wilcoxon_sweep(std::size_t datasets = 100, std::size_t max_n = 8, std::uint64_t seed = 1,
                                  double tol = 1e-12) {
    return detail::timed("wilcoxon-enumeration", [&] {
        Rng rng(seed);
        std::size_t cases = 0, bad = 0;
        double worst = 0.0;
        for (std::size_t n1 = 1; n1 <= max_n; ++n1)
            for (std::size_t n2 = 1; n2 <= max_n; ++n2)
                for (std::size_t k = 0; k < datasets; ++k) {
                    // Small value ranges force ties in most datasets.
                    const std::uint64_t range = 2 + rng.below(12);
                    std::vector<double> a(n1), b(n2);
                    for (auto& v : a) v = static_cast<double>(rng.below(range));
                    for (auto& v : b) v = static_cast<double>(rng.below(range));
                    const auto res = stats::wilcoxon_rank_sum(a, b);
                    const double diff = std::fabs(res.p_value - oracle::wilcoxon_enumerate(a, b));
                    worst = std::max(worst, diff);
                    ++cases;
                    if (!res.exact || !(diff < tol)) ++bad;
                }
        SuiteResult r;
        r.passed = bad == 0;
        r.detail = detail::fmt("%zu datasets, max |dp| = %.3g, %zu failures", cases, worst, bad);
        return r;
    });
}

// Random 10-node, 2-head layer with self loops, a few labeled pairs and
// weight decay; one instance per seed.
struct GatProblem {
    gat::NeighborIndex idx;
    std::vector<double> x;
    std::size_t n = 10;
    gat::GatParams params;
    std::vector<gat::PairLabel> pairs;
    double weight_decay = 1e-3;
};

inline GatProblem make_gat_problem(std::uint64_t seed, std::size_t n = 10, std::size_t d_in = 4, std::size_t d_out = 3,
                                   std::size_t heads = 2) {
    Rng rng(seed);
    GatProblem g;
    g.n = n;
    std::vector<gat::LocalEdge> edges;
    for (std::size_t k = 0; k < 3 * n; ++k) {
        const auto s = static_cast<std::uint32_t>(rng.below(n)), t = static_cast<std::uint32_t>(rng.below(n));
        if (s != t) edges.push_back({s, t, 1});
    }
    g.idx = gat::NeighborIndex::build(n, edges);
    g.x.resize(n * d_in);
    for (auto& v : g.x) v = 2.0 * rng.uniform() - 1.0;
    g.params = gat::GatParams::zeros(d_in, d_out, heads);
    for (auto& v : g.params.theta) v = rng.uniform() - 0.5;
    for (std::size_t k = 0; k < 2 * n; ++k)
        g.pairs.push_back({static_cast<std::uint32_t>(rng.below(n)), static_cast<std::uint32_t>(rng.below(n)),
                           std::log1p(static_cast<double>(rng.below(5))), rng.uniform() < 0.4});
    return g;
}

inline SuiteResult gat_gradient(std::size_t instances = 5, double tol = 1e-4) {
    return detail::timed("gat-gradient", [&] {
        double worst = 0.0;
        std::size_t params = 0;
        for (std::size_t s = 0; s < instances; ++s) {
            for (auto act : {gat::Activation::Elu, gat::Activation::Linear}) {
                auto g = make_gat_problem(100 + s);
                g.params.activation = act;
                const auto c = oracle::gat_gradient_check(g.idx, g.x, g.n, g.params, g.pairs, g.weight_decay);
                worst = std::max(worst, c.max_rel_error);
                params = c.params;
            }
        }
        SuiteResult r;
        r.passed = worst < tol;
        r.detail = detail::fmt("%zu instances x %zu parameters, max relative error = %.3g", 2 * instances, params, worst);
        return r;
    });
}

inline gbdt::Dataset random_dataset(Rng& rng, std::size_t rows = 200, std::size_t features = 5) {
    gbdt::Dataset d;
    d.n_features = features;
    std::vector<double> w(features);
    for (auto& v : w) v = 2.0 * rng.uniform() - 1.0;
    for (std::size_t i = 0; i < rows; ++i) {
        std::vector<double> r(features);
        double z = 0.0;
        for (std::size_t f = 0; f < features; ++f) {
            r[f] = rng.uniform();
            z += w[f] * (r[f] - 0.5) * 4.0;
        }
        d.add(r, rng.uniform() < gbdt::logistic(z));
    }
    // Keep both classes present.
    d.y[0] = 1;
    d.y[1] = 0;
    return d;
}

// Depth-1 one-round trees against the exhaustive stump, then 200-round
// training with a nonincreasing loss on the same datasets.
inline SuiteResult gbdt_sweep(std::size_t datasets = 50, std::uint64_t seed = 7) {
    return detail::timed("gbdt-split-and-loss", [&] {
        Rng rng(seed);
        std::size_t split_bad = 0, loss_bad = 0;
        double worst_gain = 0.0;
        for (std::size_t k = 0; k < datasets; ++k) {
            const auto d = random_dataset(rng);
            gbdt::GbdtHyper stump;
            stump.rounds = 1;
            stump.max_depth = 1;
            const auto m = gbdt::train_gbdt(d, stump);
            std::vector<double> grad, hess;
            oracle::base_gradients(d, grad, hess);
            const auto ref = oracle::exhaustive_stump(d, grad, hess, stump.min_leaf, stump.l2);
            const auto& root = m.trees.at(0).nodes.at(0);
            if (!ref.found) {
                split_bad += root.feature >= 0 ? 1 : 0;
            } else if (root.feature < 0) {
                ++split_bad;
            } else {
                bool same = static_cast<std::size_t>(root.feature) == ref.feature;
                for (std::size_t i = 0; same && i < d.rows(); ++i)
                    same = (d.at(i, ref.feature) <= root.threshold ? 1 : 0) == ref.goes_left[i];
                // The chosen split's gain, recomputed the oracle's way.
                std::vector<std::uint32_t> all(d.rows());
                std::iota(all.begin(), all.end(), 0U);
                const auto s = gbdt::best_split(d, all, grad, hess, stump.min_leaf, stump.l2);
                worst_gain = std::max(worst_gain, std::fabs(s.gain - ref.gain) / std::max(ref.gain, 1e-12));
                if (!same) ++split_bad;
            }
            gbdt::TrainLog log;
            (void)gbdt::train_gbdt(d, gbdt::GbdtHyper{}, &log);
            for (std::size_t i = 1; i < log.loss.size(); ++i)
                if (log.loss[i] > log.loss[i - 1]) {
                    ++loss_bad;
                    break;
                }
        }
        SuiteResult r;
        r.passed = split_bad == 0 && loss_bad == 0 && worst_gain < 1e-9;
        r.detail = detail::fmt("%zu datasets: %zu split mismatches, %zu runs with a loss increase, max gain rel diff %.3g",
                               datasets, split_bad, loss_bad, worst_gain);
        return r;
    });
}

inline std::vector<SuiteResult> run_all() {
    return {fisher_sweep(), wilcoxon_sweep(), gat_gradient(), gbdt_sweep()};
}

}  // namespace guardian::selftest
