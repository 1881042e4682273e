#include "guardian/gat.hpp"
#include "guardian/oracles.hpp"
#include "guardian/selftest.hpp"
#include "guardian/stacker.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace guardian;
using namespace guardian::gat;

namespace {

GatParams random_params(std::uint64_t seed, std::size_t d_in, std::size_t d_out, std::size_t heads,
                        Activation act = Activation::Elu) {
    Rng rng(seed);
    auto p = GatParams::zeros(d_in, d_out, heads);
    p.activation = act;
    for (auto& v : p.theta) v = rng.uniform() - 0.5;
    return p;
}

LayerData random_layer(std::uint64_t seed, std::size_t n, std::size_t d_in, std::size_t m) {
    Rng rng(seed);
    LayerData d;
    d.n = n;
    d.d_in = d_in;
    d.x.resize(n * d_in);
    for (auto& v : d.x) v = 2.0 * rng.uniform() - 1.0;
    for (std::size_t k = 0; k < m; ++k) {
        const auto s = static_cast<std::uint32_t>(rng.below(n)), t = static_cast<std::uint32_t>(rng.below(n));
        if (s != t) d.edges.push_back({s, t, 1});
    }
    return d;
}

double leaky(double v, double slope) { return v > 0.0 ? v : slope * v; }

}  // namespace

// ============================================================================
// FORWARD
// ============================================================================

TEST(GatForward, IsolatedNodeWithIdentityKeepsFeatures) {
    LayerData d{3, 2, {0.5, -1.5, 2.0, 0.25, -3.0, 1.0}, {}};
    auto p = GatParams::zeros(2, 2, 1);
    p.activation = Activation::Linear;
    p.W(0, 0, 0) = 1.0;
    p.W(0, 1, 1) = 1.0;
    const auto e = gat_forward(d, p);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(e.values[i], d.x[i]);
}

TEST(GatForward, SymmetricGraphGivesIdenticalEmbeddings) {
    // Directed triangle in both directions, equal features.
    LayerData d{3, 2, {0.3, -0.7, 0.3, -0.7, 0.3, -0.7}, {}};
    for (std::uint32_t a = 0; a < 3; ++a)
        for (std::uint32_t b = 0; b < 3; ++b)
            if (a != b) d.edges.push_back({a, b, 1});
    const auto p = random_params(4, 2, 3, 2);
    const auto e = gat_forward(d, p);
    for (std::size_t i = 1; i < 3; ++i)
        for (std::size_t k = 0; k < e.dim; ++k) EXPECT_NEAR(e.row(i)[k], e.row(0)[k], 1e-14);
}

TEST(GatForward, TwoNodeDenseComputation) {
    // Edge 1 -> 0: node 0 attends to {0, 1}, node 1 only to itself.
    LayerData d{2, 2, {1.0, 2.0, -0.5, 0.5}, {{1, 0, 1}}};
    const auto p = random_params(11, 2, 2, 1, Activation::Linear);
    double z[2][2] = {};
    for (int i = 0; i < 2; ++i)
        for (int o = 0; o < 2; ++o) z[i][o] = d.x[i * 2] * p.W(0, 0, o) + d.x[i * 2 + 1] * p.W(0, 1, o);
    const double* ad = p.theta.data() + p.off_a_dst();
    const double* as = p.theta.data() + p.off_a_src();
    const double e00 = leaky(ad[0] * z[0][0] + ad[1] * z[0][1] + as[0] * z[0][0] + as[1] * z[0][1], p.leaky_slope);
    const double e01 = leaky(ad[0] * z[0][0] + ad[1] * z[0][1] + as[0] * z[1][0] + as[1] * z[1][1], p.leaky_slope);
    const double a00 = std::exp(e00) / (std::exp(e00) + std::exp(e01)), a01 = 1.0 - a00;
    const auto e = gat_forward(d, p);
    for (int o = 0; o < 2; ++o) {
        EXPECT_NEAR(e.row(0)[o], a00 * z[0][o] + a01 * z[1][o], 1e-14);
        EXPECT_NEAR(e.row(1)[o], z[1][o], 1e-14);
    }
    const auto att = attention_of(d, p, 0);
    EXPECT_NEAR(att[0][0], a00, 1e-14);
    EXPECT_NEAR(att[0][1], a01, 1e-14);
}

TEST(GatForward, AttentionSumsToOne) {
    const auto d = random_layer(21, 30, 4, 120);
    const auto p = random_params(22, 4, 3, 3);
    for (std::uint32_t i = 0; i < d.n; ++i)
        for (const auto& head : attention_of(d, p, i)) {
            double s = 0.0;
            for (double a : head) {
                EXPECT_GT(a, 0.0);
                s += a;
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
}

TEST(GatForward, PermutationEquivariant) {
    const auto d = random_layer(31, 25, 3, 80);
    const auto p = random_params(32, 3, 4, 2);
    std::vector<std::uint32_t> perm(d.n);
    std::iota(perm.begin(), perm.end(), 0U);
    Rng rng(33);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    LayerData q = d;
    for (std::size_t i = 0; i < d.n; ++i)
        for (std::size_t k = 0; k < d.d_in; ++k) q.x[perm[i] * d.d_in + k] = d.x[i * d.d_in + k];
    for (auto& e : q.edges) e = {perm[e.src], perm[e.dst], e.weight};
    const auto a = gat_forward(d, p), b = gat_forward(q, p);
    for (std::size_t i = 0; i < d.n; ++i)
        for (std::size_t k = 0; k < a.dim; ++k) EXPECT_NEAR(b.row(perm[i])[k], a.row(i)[k], 1e-12);
}

TEST(GatForward, RejectsBadInput) {
    auto d = random_layer(1, 4, 2, 4);
    const auto p = random_params(2, 3, 2, 1);
    EXPECT_THROW(gat_forward(d, p), std::invalid_argument);
    d.edges.push_back({0, 9, 1});
    EXPECT_THROW(gat_forward(d, random_params(2, 2, 2, 1)), std::invalid_argument);
}

// ============================================================================
// PAIR SCORING
// ============================================================================

TEST(GatScore, ZeroWeightsGiveOneHalf) {
    const auto p = GatParams::zeros(2, 2, 2);
    const std::vector<double> u{1, 2, 3, 4}, v{-1, 0, 5, 2};
    EXPECT_DOUBLE_EQ(edge_probability(u, v, p, 1.3), 0.5);
}

TEST(GatScore, LargeLogitSaturates) {
    auto p = GatParams::zeros(2, 1, 1);
    p.bias() = 30.0;
    const std::vector<double> u{0.0}, v{0.0};
    EXPECT_GT(edge_probability(u, v, p), 0.999);
    p.bias() = -30.0;
    EXPECT_LT(edge_probability(u, v, p), 0.001);
}

TEST(GatScore, HandSetWeights) {
    auto p = GatParams::zeros(1, 2, 1);
    p.w_src(0) = 1.0;
    p.w_dst(1) = -2.0;
    p.w_prod(0) = 0.5;
    p.w_weight() = 0.25;
    p.bias() = 0.1;
    const std::vector<double> u{2.0, 1.0}, v{3.0, 0.5};
    // 0.1 + 0.25*log(1+3) + 1*2 - 2*0.5 + 0.5*2*3
    const double s = 0.1 + 0.25 * std::log(4.0) + 2.0 - 1.0 + 3.0;
    EXPECT_NEAR(pair_score(u, v, p, std::log(4.0)), s, 1e-14);
    EXPECT_NEAR(edge_probability(u, v, p, std::log(4.0)), 1.0 / (1.0 + std::exp(-s)), 1e-15);
}

// ============================================================================
// TRAINING
// ============================================================================

TEST(GatTrain, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
        for (auto act : {Activation::Elu, Activation::Linear}) {
            auto g = selftest::make_gat_problem(seed, 12, 3, 2, 2);
            g.params.activation = act;
            const auto c = oracle::gat_gradient_check(g.idx, g.x, g.n, g.params, g.pairs, g.weight_decay);
            EXPECT_LT(c.max_rel_error, 1e-4) << "seed " << seed << " worst parameter " << c.worst;
        }
}

namespace {

// Nodes with positive first feature violate every target; others never do.
struct Separable {
    LayerData data;
    std::vector<PairLabel> labels;
};

Separable separable(std::uint64_t seed, std::size_t n = 60) {
    Rng rng(seed);
    Separable s;
    s.data.n = n;
    s.data.d_in = 2;
    for (std::size_t i = 0; i < n; ++i) {
        s.data.x.push_back(i % 3 == 0 ? 1.0 + rng.uniform() : -1.0 - rng.uniform());
        s.data.x.push_back(rng.uniform());
    }
    for (std::size_t k = 0; k < 4 * n; ++k) {
        const auto a = static_cast<std::uint32_t>(rng.below(n)), b = static_cast<std::uint32_t>(rng.below(n));
        if (a == b) continue;
        s.data.edges.push_back({a, b, 1});
        s.labels.push_back({a, b, std::log(2.0), a % 3 == 0});
    }
    return s;
}

}  // namespace

TEST(GatTrain, SmallStepGradientDescentLowersLoss) {
    const auto s = separable(3);
    TrainHyper h;
    h.optimizer = Optimizer::GradientDescent;
    h.learning_rate = 1e-3;
    h.epochs = 40;
    h.negative_ratio = 0.0;
    const auto r = train_weak_learner(s.data, s.labels, h);
    for (std::size_t i = 1; i < r.loss_history.size(); ++i) EXPECT_LE(r.loss_history[i], r.loss_history[i - 1]);
}

TEST(GatTrain, LearnsSeparableData) {
    const auto s = separable(5);
    TrainHyper h;
    h.epochs = 150;
    const auto r = train_weak_learner(s.data, s.labels, h);
    EXPECT_LT(r.loss_history.back(), r.loss_history.front());
    const auto e = gat_forward(s.data, r.params);
    std::vector<double> scores;
    std::vector<std::uint8_t> y;
    for (const auto& l : s.labels) {
        scores.push_back(edge_probability(e.row(l.src), e.row(l.dst), r.params, l.log_weight));
        y.push_back(l.label ? 1 : 0);
    }
    EXPECT_GT(evaluate_auc(scores, y), 0.95);
}

TEST(GatTrain, Deterministic) {
    const auto s = separable(8);
    TrainHyper h;
    h.epochs = 30;
    EXPECT_EQ(train_weak_learner(s.data, s.labels, h).params, train_weak_learner(s.data, s.labels, h).params);
}

TEST(GatTrain, NeedsBothClasses) {
    auto s = separable(9);
    for (auto& l : s.labels) l.label = false;
    EXPECT_THROW(train_weak_learner(s.data, s.labels, TrainHyper{}), std::invalid_argument);
}

TEST(GatTrain, NegativeSamplingKeepsAllPositives) {
    std::vector<PairLabel> labels;
    for (std::uint32_t i = 0; i < 100; ++i) labels.push_back({i, i + 1, 0.0, i < 10});
    const auto s = sample_pairs(labels, 2.0, 1);
    std::size_t pos = 0;
    for (const auto& l : s) pos += l.label ? 1 : 0;
    EXPECT_EQ(pos, 10u);
    EXPECT_EQ(s.size(), 30u);
    EXPECT_EQ(sample_pairs(labels, 0.0, 1).size(), 100u);
}

TEST(GatSerialization, RoundTrip) {
    auto p = random_params(41, 5, 3, 2, Activation::Linear);
    p.feature_mean = {0.1, 0.2, 0.3, 0.4, 0.5};
    p.feature_scale = {1, 2, 3, 4, 5.5};
    std::stringstream ss;
    save(ss, p);
    EXPECT_EQ(load(ss), p);
    std::stringstream bad("gbdt v1\n");
    EXPECT_THROW(load(bad), std::invalid_argument);
}
