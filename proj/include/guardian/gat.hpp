#pragma once

// Graph-attention weak learner for one interaction layer.
//
// One attention layer with H heads over in-neighborhoods (plus a self loop),
// heads concatenated into a node embedding, followed by a pairwise scoring
// head producing the probability that actor u violates target v. Gradients
// are derived by hand; see tests/test_gat.cpp for the finite-difference check.

#include "guardian/artifact.hpp"
#include "guardian/domain.hpp"
#include "guardian/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace guardian::gat {

enum class Activation : std::uint8_t { Linear, Elu };
enum class Optimizer : std::uint8_t { GradientDescent, Adam };

inline double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// ============================================================================
// GRAPH INPUT
// ============================================================================

struct LocalEdge {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint32_t weight = 1;
};

// Node features (row-major n x d_in) and directed edges in local indices.
struct LayerData {
    std::size_t n = 0;
    std::size_t d_in = 0;
    std::vector<double> x;
    std::vector<LocalEdge> edges;
};

// In-neighborhood CSR with a self loop first in every row.
struct NeighborIndex {
    std::vector<std::uint32_t> offsets;
    std::vector<std::uint32_t> src;

    static NeighborIndex build(std::size_t n, std::span<const LocalEdge> edges) {
        NeighborIndex idx;
        std::vector<std::uint32_t> deg(n, 1);
        for (const auto& e : edges) {
            if (e.src >= n || e.dst >= n) throw std::invalid_argument("gat: edge endpoint out of range");
            if (e.src != e.dst) ++deg[e.dst];
        }
        idx.offsets.assign(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i) idx.offsets[i + 1] = idx.offsets[i] + deg[i];
        idx.src.assign(idx.offsets[n], 0);
        std::vector<std::uint32_t> fill(idx.offsets.begin(), idx.offsets.end() - 1);
        for (std::size_t i = 0; i < n; ++i) idx.src[fill[i]++] = static_cast<std::uint32_t>(i);
        for (const auto& e : edges)
            if (e.src != e.dst) idx.src[fill[e.dst]++] = e.src;
        return idx;
    }
};

// ============================================================================
// PARAMETERS
// ============================================================================

// All trainable values live in one flat vector `theta`:
//   W      heads x d_in x d_out
//   a_dst  heads x d_out   (center node half of the attention vector)
//   a_src  heads x d_out   (neighbor half)
//   w_src, w_dst, w_prod   embedding-sized pairwise scoring weights
//   w_weight               coefficient on log(1 + edge count)
//   bias
struct GatParams {
    std::size_t d_in = 0;
    std::size_t d_out = 8;
    std::size_t heads = 2;
    double leaky_slope = 0.2;
    Activation activation = Activation::Elu;
    std::vector<double> feature_mean;   // standardization, d_in
    std::vector<double> feature_scale;  // d_in, > 0
    std::vector<double> theta;

    [[nodiscard]] std::size_t embed_dim() const { return heads * d_out; }
    [[nodiscard]] std::size_t off_W() const { return 0; }
    [[nodiscard]] std::size_t off_a_dst() const { return heads * d_in * d_out; }
    [[nodiscard]] std::size_t off_a_src() const { return off_a_dst() + heads * d_out; }
    [[nodiscard]] std::size_t off_w_src() const { return off_a_src() + heads * d_out; }
    [[nodiscard]] std::size_t off_w_dst() const { return off_w_src() + embed_dim(); }
    [[nodiscard]] std::size_t off_w_prod() const { return off_w_dst() + embed_dim(); }
    [[nodiscard]] std::size_t off_w_weight() const { return off_w_prod() + embed_dim(); }
    [[nodiscard]] std::size_t off_bias() const { return off_w_weight() + 1; }
    [[nodiscard]] std::size_t param_count() const { return off_bias() + 1; }

    double& W(std::size_t h, std::size_t i, std::size_t o) { return theta[(h * d_in + i) * d_out + o]; }
    [[nodiscard]] double W(std::size_t h, std::size_t i, std::size_t o) const { return theta[(h * d_in + i) * d_out + o]; }
    double& a_dst(std::size_t h, std::size_t o) { return theta[off_a_dst() + h * d_out + o]; }
    double& a_src(std::size_t h, std::size_t o) { return theta[off_a_src() + h * d_out + o]; }
    double& w_src(std::size_t k) { return theta[off_w_src() + k]; }
    double& w_dst(std::size_t k) { return theta[off_w_dst() + k]; }
    double& w_prod(std::size_t k) { return theta[off_w_prod() + k]; }
    double& w_weight() { return theta[off_w_weight()]; }
    double& bias() { return theta[off_bias()]; }

    static GatParams zeros(std::size_t d_in, std::size_t d_out, std::size_t heads) {
        if (heads < 1 || d_out < 1 || d_in < 1) throw std::invalid_argument("gat: dimensions must be >= 1");
        GatParams p;
        p.d_in = d_in;
        p.d_out = d_out;
        p.heads = heads;
        p.feature_mean.assign(d_in, 0.0);
        p.feature_scale.assign(d_in, 1.0);
        p.theta.assign(p.param_count(), 0.0);
        return p;
    }

    void check() const {
        if (heads < 1) throw std::invalid_argument("gat: head count must be >= 1");
        if (theta.size() != param_count()) throw std::invalid_argument("gat: parameter vector has wrong size");
        if (feature_mean.size() != d_in || feature_scale.size() != d_in)
            throw std::invalid_argument("gat: standardization has wrong size");
        for (double v : theta)
            if (!std::isfinite(v)) throw std::invalid_argument("gat: non-finite parameter");
    }

    friend bool operator==(const GatParams&, const GatParams&) = default;
};

// ============================================================================
// FORWARD
// ============================================================================

struct ForwardCache {
    std::vector<double> z;      // heads x n x d_out, transformed features
    std::vector<double> u;      // heads x |in-edges|, pre-LeakyReLU logits
    std::vector<double> alpha;  // heads x |in-edges|, attention coefficients
    std::vector<double> g;      // n x embed, pre-activation aggregates
    std::vector<double> embed;  // n x embed
};

struct Embeddings {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> values;  // n x dim

    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return std::span<const double>(values).subspan(i * dim, dim);
    }
};

inline double activate(Activation a, double v) {
    if (a == Activation::Linear || v > 0.0) return v;
    return std::expm1(v);
}

inline double activate_grad(Activation a, double pre) {
    if (a == Activation::Linear || pre > 0.0) return 1.0;
    return std::exp(pre);
}

inline void forward(const NeighborIndex& idx, std::span<const double> x, std::size_t n, const GatParams& p,
                    ForwardCache& cache) {
    const std::size_t H = p.heads, Din = p.d_in, Dout = p.d_out, E = p.embed_dim();
    const std::size_t m = idx.src.size();
    cache.z.assign(H * n * Dout, 0.0);
    cache.u.assign(H * m, 0.0);
    cache.alpha.assign(H * m, 0.0);
    cache.g.assign(n * E, 0.0);
    cache.embed.assign(n * E, 0.0);
    std::vector<double> s_dst(n), s_src(n);
    for (std::size_t h = 0; h < H; ++h) {
        double* z = cache.z.data() + h * n * Dout;
        const double* W = p.theta.data() + h * Din * Dout;
        const double* ad = p.theta.data() + p.off_a_dst() + h * Dout;
        const double* as = p.theta.data() + p.off_a_src() + h * Dout;
        for (std::size_t i = 0; i < n; ++i) {
            double* zi = z + i * Dout;
            const double* xi = x.data() + i * Din;
            for (std::size_t k = 0; k < Din; ++k) {
                const double xk = xi[k];
                if (xk == 0.0) continue;
                const double* wk = W + k * Dout;
                for (std::size_t o = 0; o < Dout; ++o) zi[o] += xk * wk[o];
            }
            double sd = 0.0, ss = 0.0;
            for (std::size_t o = 0; o < Dout; ++o) {
                sd += ad[o] * zi[o];
                ss += as[o] * zi[o];
            }
            s_dst[i] = sd;
            s_src[i] = ss;
        }
        double* u = cache.u.data() + h * m;
        double* alpha = cache.alpha.data() + h * m;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t b = idx.offsets[i], e = idx.offsets[i + 1];
            double mx = -std::numeric_limits<double>::infinity();
            for (std::uint32_t q = b; q < e; ++q) {
                const double v = s_dst[i] + s_src[idx.src[q]];
                u[q] = v;
                const double lr = v > 0.0 ? v : p.leaky_slope * v;
                alpha[q] = lr;
                mx = std::max(mx, lr);
            }
            double sum = 0.0;
            for (std::uint32_t q = b; q < e; ++q) sum += alpha[q] = std::exp(alpha[q] - mx);
            double* gi = cache.g.data() + i * E + h * Dout;
            for (std::uint32_t q = b; q < e; ++q) {
                alpha[q] /= sum;
                const double* zj = z + static_cast<std::size_t>(idx.src[q]) * Dout;
                for (std::size_t o = 0; o < Dout; ++o) gi[o] += alpha[q] * zj[o];
            }
        }
    }
    for (std::size_t t = 0; t < n * E; ++t) cache.embed[t] = activate(p.activation, cache.g[t]);
}

namespace detail {

inline void check_inputs(const LayerData& data, const GatParams& p) {
    p.check();
    if (data.d_in != p.d_in) throw std::invalid_argument("gat: feature dimension mismatch");
    if (data.x.size() != data.n * data.d_in) throw std::invalid_argument("gat: feature matrix has wrong size");
    for (double v : data.x)
        if (!std::isfinite(v)) throw std::invalid_argument("gat: non-finite feature");
}

inline std::vector<double> standardized(const LayerData& data, const GatParams& p) {
    std::vector<double> x(data.x);
    for (std::size_t i = 0; i < data.n; ++i)
        for (std::size_t k = 0; k < p.d_in; ++k) {
            double& v = x[i * p.d_in + k];
            v = (v - p.feature_mean[k]) / p.feature_scale[k];
        }
    return x;
}

}  // namespace detail

// Node embeddings for every node of the layer. Features are standardized
// with the parameters' stored mean/scale (identity by default).
inline Embeddings gat_forward(const LayerData& data, const GatParams& p) {
    detail::check_inputs(data, p);
    const auto idx = NeighborIndex::build(data.n, data.edges);
    const auto x = detail::standardized(data, p);
    ForwardCache cache;
    forward(idx, x, data.n, p, cache);
    return {data.n, p.embed_dim(), std::move(cache.embed)};
}

// Attention coefficients per head for the in-neighborhood of `node`, self first.
inline std::vector<std::vector<double>> attention_of(const LayerData& data, const GatParams& p, std::uint32_t node) {
    detail::check_inputs(data, p);
    const auto idx = NeighborIndex::build(data.n, data.edges);
    const auto x = detail::standardized(data, p);
    ForwardCache cache;
    forward(idx, x, data.n, p, cache);
    const std::size_t m = idx.src.size();
    std::vector<std::vector<double>> out(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h)
        out[h].assign(cache.alpha.begin() + static_cast<std::ptrdiff_t>(h * m + idx.offsets[node]),
                      cache.alpha.begin() + static_cast<std::ptrdiff_t>(h * m + idx.offsets[node + 1]));
    return out;
}

// ============================================================================
// PAIR SCORING
// ============================================================================

inline double pair_score(std::span<const double> eu, std::span<const double> ev, const GatParams& p,
                         double log_weight = 0.0) {
    const std::size_t E = p.embed_dim();
    if (eu.size() != E || ev.size() != E) throw std::invalid_argument("gat: embedding dimension mismatch");
    const double* ws = p.theta.data() + p.off_w_src();
    const double* wd = p.theta.data() + p.off_w_dst();
    const double* wp = p.theta.data() + p.off_w_prod();
    double s = p.theta[p.off_bias()] + p.theta[p.off_w_weight()] * log_weight;
    for (std::size_t k = 0; k < E; ++k) s += ws[k] * eu[k] + wd[k] * ev[k] + wp[k] * eu[k] * ev[k];
    return s;
}

// Probability that the actor with embedding `eu` violates the target `ev`.
// `log_weight` is log(1 + contact count) of the pair in this layer.
inline double edge_probability(std::span<const double> eu, std::span<const double> ev, const GatParams& p,
                               double log_weight = 0.0) {
    return logistic(pair_score(eu, ev, p, log_weight));
}

// ============================================================================
// LOSS AND GRADIENT
// ============================================================================

struct PairLabel {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    double log_weight = 0.0;
    bool label = false;
};

inline double bce(double score, bool y) {
    // log(1 + exp(-s)) for y=1, log(1 + exp(s)) for y=0, stable.
    const double s = y ? -score : score;
    return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
}

// Mean binary cross-entropy over `pairs` plus 0.5 * weight_decay * |theta|^2
// (bias excluded). Fills `grad` when non-null.
inline double loss_and_gradient(const NeighborIndex& idx, std::span<const double> x, std::size_t n,
                                const GatParams& p, std::span<const PairLabel> pairs, double weight_decay,
                                std::vector<double>* grad) {
    const std::size_t H = p.heads, Din = p.d_in, Dout = p.d_out, E = p.embed_dim();
    ForwardCache c;
    forward(idx, x, n, p, c);
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(pairs.size(), 1));
    double loss = 0.0;
    std::vector<double> d_embed;
    if (grad) {
        grad->assign(p.param_count(), 0.0);
        d_embed.assign(n * E, 0.0);
    }
    const double* ws = p.theta.data() + p.off_w_src();
    const double* wd = p.theta.data() + p.off_w_dst();
    const double* wp = p.theta.data() + p.off_w_prod();
    for (const auto& pr : pairs) {
        std::span<const double> eu(c.embed.data() + pr.src * E, E), ev(c.embed.data() + pr.dst * E, E);
        const double s = pair_score(eu, ev, p, pr.log_weight);
        loss += bce(s, pr.label) * inv;
        if (!grad) continue;
        const double ds = (logistic(s) - (pr.label ? 1.0 : 0.0)) * inv;
        auto& gr = *grad;
        gr[p.off_bias()] += ds;
        gr[p.off_w_weight()] += ds * pr.log_weight;
        double* deu = d_embed.data() + pr.src * E;
        double* dev = d_embed.data() + pr.dst * E;
        for (std::size_t k = 0; k < E; ++k) {
            gr[p.off_w_src() + k] += ds * eu[k];
            gr[p.off_w_dst() + k] += ds * ev[k];
            gr[p.off_w_prod() + k] += ds * eu[k] * ev[k];
            deu[k] += ds * (ws[k] + wp[k] * ev[k]);
            dev[k] += ds * (wd[k] + wp[k] * eu[k]);
        }
    }
    double reg = 0.0;
    for (std::size_t t = 0; t < p.off_bias(); ++t) reg += p.theta[t] * p.theta[t];
    loss += 0.5 * weight_decay * reg;
    if (!grad) return loss;

    auto& gr = *grad;
    for (std::size_t t = 0; t < p.off_bias(); ++t) gr[t] += weight_decay * p.theta[t];

    const std::size_t m = idx.src.size();
    std::vector<double> dz(n * Dout), ds_dst(n), ds_src(n), dg(Dout);
    for (std::size_t h = 0; h < H; ++h) {
        std::fill(dz.begin(), dz.end(), 0.0);
        std::fill(ds_dst.begin(), ds_dst.end(), 0.0);
        std::fill(ds_src.begin(), ds_src.end(), 0.0);
        const double* z = c.z.data() + h * n * Dout;
        const double* u = c.u.data() + h * m;
        const double* alpha = c.alpha.data() + h * m;
        for (std::size_t i = 0; i < n; ++i) {
            bool any = false;
            for (std::size_t o = 0; o < Dout; ++o) {
                const std::size_t t = i * E + h * Dout + o;
                dg[o] = d_embed[t] * activate_grad(p.activation, c.g[t]);
                any = any || dg[o] != 0.0;
            }
            if (!any) continue;
            const std::uint32_t b = idx.offsets[i], e = idx.offsets[i + 1];
            // d alpha_ij = dg . z_j ; softmax backward.
            double csum = 0.0;
            thread_local std::vector<double> dalpha;
            dalpha.assign(e - b, 0.0);
            for (std::uint32_t q = b; q < e; ++q) {
                const double* zj = z + static_cast<std::size_t>(idx.src[q]) * Dout;
                double* dzj = dz.data() + static_cast<std::size_t>(idx.src[q]) * Dout;
                double da = 0.0;
                for (std::size_t o = 0; o < Dout; ++o) {
                    da += dg[o] * zj[o];
                    dzj[o] += alpha[q] * dg[o];
                }
                dalpha[q - b] = da;
                csum += alpha[q] * da;
            }
            for (std::uint32_t q = b; q < e; ++q) {
                const double de = alpha[q] * (dalpha[q - b] - csum);
                const double du = de * (u[q] > 0.0 ? 1.0 : p.leaky_slope);
                ds_dst[i] += du;
                ds_src[idx.src[q]] += du;
            }
        }
        const double* ad = p.theta.data() + p.off_a_dst() + h * Dout;
        const double* as = p.theta.data() + p.off_a_src() + h * Dout;
        double* g_ad = gr.data() + p.off_a_dst() + h * Dout;
        double* g_as = gr.data() + p.off_a_src() + h * Dout;
        double* g_W = gr.data() + h * Din * Dout;
        for (std::size_t i = 0; i < n; ++i) {
            const double* zi = z + i * Dout;
            double* dzi = dz.data() + i * Dout;
            for (std::size_t o = 0; o < Dout; ++o) {
                g_ad[o] += ds_dst[i] * zi[o];
                g_as[o] += ds_src[i] * zi[o];
                dzi[o] += ds_dst[i] * ad[o] + ds_src[i] * as[o];
            }
            const double* xi = x.data() + i * Din;
            for (std::size_t k = 0; k < Din; ++k) {
                if (xi[k] == 0.0) continue;
                for (std::size_t o = 0; o < Dout; ++o) g_W[k * Dout + o] += xi[k] * dzi[o];
            }
        }
    }
    return loss;
}

// ============================================================================
// TRAINING
// ============================================================================

struct TrainHyper {
    double learning_rate = 0.01;
    int epochs = 150;
    double negative_ratio = 5.0;  // sampled negatives per positive; <= 0 keeps all
    double weight_decay = 1e-4;
    std::uint64_t seed = 7;
    Optimizer optimizer = Optimizer::Adam;
    std::size_t heads = 2;
    std::size_t d_out = 8;
    Activation activation = Activation::Elu;
};

inline void validate(const TrainHyper& h) {
    if (!(h.learning_rate > 0.0)) throw std::invalid_argument("gat: learning rate must be > 0");
    if (h.epochs < 1) throw std::invalid_argument("gat: epochs must be >= 1");
    if (h.heads < 1) throw std::invalid_argument("gat: head count must be >= 1");
    if (h.d_out < 1) throw std::invalid_argument("gat: d_out must be >= 1");
    if (h.weight_decay < 0.0) throw std::invalid_argument("gat: weight decay must be >= 0");
}

struct TrainResult {
    GatParams params;
    std::vector<double> loss_history;  // loss before each update, then final
};

// Positives plus `ratio` uniformly sampled negatives per positive.
inline std::vector<PairLabel> sample_pairs(std::span<const PairLabel> labels, double ratio, std::uint64_t seed) {
    std::vector<PairLabel> pos, neg;
    for (const auto& l : labels) (l.label ? pos : neg).push_back(l);
    if (ratio > 0.0) {
        const auto want = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(pos.size())));
        if (want < neg.size()) {
            Rng rng(hash_keys({seed, 0x6e6567ULL}));
            for (std::size_t i = 0; i < want; ++i) std::swap(neg[i], neg[i + rng.below(neg.size() - i)]);
            neg.resize(want);
        }
    }
    pos.insert(pos.end(), neg.begin(), neg.end());
    return pos;
}

inline GatParams init_params(std::size_t d_in, const TrainHyper& h, double positive_rate) {
    GatParams p = GatParams::zeros(d_in, h.d_out, h.heads);
    p.activation = h.activation;
    Rng rng(hash_keys({h.seed, 0x696e6974ULL}));
    auto uni = [&](double scale) { return scale * (2.0 * rng.uniform() - 1.0); };
    const double glorot = std::sqrt(6.0 / static_cast<double>(d_in + h.d_out));
    for (std::size_t t = 0; t < p.off_a_dst(); ++t) p.theta[t] = uni(glorot);
    const double att = std::sqrt(6.0 / static_cast<double>(2 * h.d_out + 1));
    for (std::size_t t = p.off_a_dst(); t < p.off_w_src(); ++t) p.theta[t] = uni(att);
    const double out = 1.0 / std::sqrt(static_cast<double>(p.embed_dim()));
    for (std::size_t t = p.off_w_src(); t < p.off_w_weight(); ++t) p.theta[t] = uni(out);
    const double r = std::clamp(positive_rate, 1e-6, 1.0 - 1e-6);
    p.bias() = std::log(r / (1.0 - r));
    return p;
}

// Fits standardization on the layer's nodes.
inline void fit_standardization(const LayerData& data, GatParams& p) {
    for (std::size_t k = 0; k < p.d_in; ++k) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < data.n; ++i) mean += data.x[i * p.d_in + k];
        mean /= static_cast<double>(std::max<std::size_t>(data.n, 1));
        for (std::size_t i = 0; i < data.n; ++i) {
            const double dv = data.x[i * p.d_in + k] - mean;
            sq += dv * dv;
        }
        const double sd = std::sqrt(sq / static_cast<double>(std::max<std::size_t>(data.n, 1)));
        p.feature_mean[k] = mean;
        p.feature_scale[k] = sd > 1e-12 ? sd : 1.0;
    }
}

// Full-batch training on the given labeled pairs of one layer.
inline TrainResult train_weak_learner(const LayerData& data, std::span<const PairLabel> labels, const TrainHyper& h) {
    validate(h);
    if (data.x.size() != data.n * data.d_in) throw std::invalid_argument("gat: feature matrix has wrong size");
    const auto pairs = sample_pairs(labels, h.negative_ratio, h.seed);
    std::size_t npos = 0;
    for (const auto& pr : pairs) npos += pr.label ? 1 : 0;
    if (npos == 0 || npos == pairs.size())
        throw std::invalid_argument("gat: training labels need at least one positive and one negative pair");
    for (const auto& pr : pairs)
        if (pr.src >= data.n || pr.dst >= data.n) throw std::invalid_argument("gat: pair endpoint out of range");

    TrainResult result;
    GatParams p = init_params(data.d_in, h, static_cast<double>(npos) / static_cast<double>(pairs.size()));
    fit_standardization(data, p);
    detail::check_inputs(data, p);
    const auto idx = NeighborIndex::build(data.n, data.edges);
    const auto x = detail::standardized(data, p);

    std::vector<double> grad, m1(p.param_count(), 0.0), m2(p.param_count(), 0.0);
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int epoch = 1; epoch <= h.epochs; ++epoch) {
        result.loss_history.push_back(loss_and_gradient(idx, x, data.n, p, pairs, h.weight_decay, &grad));
        if (h.optimizer == Optimizer::GradientDescent) {
            for (std::size_t t = 0; t < p.theta.size(); ++t) p.theta[t] -= h.learning_rate * grad[t];
        } else {
            const double c1 = 1.0 - std::pow(b1, epoch), c2 = 1.0 - std::pow(b2, epoch);
            for (std::size_t t = 0; t < p.theta.size(); ++t) {
                m1[t] = b1 * m1[t] + (1 - b1) * grad[t];
                m2[t] = b2 * m2[t] + (1 - b2) * grad[t] * grad[t];
                p.theta[t] -= h.learning_rate * (m1[t] / c1) / (std::sqrt(m2[t] / c2) + eps);
            }
        }
    }
    result.loss_history.push_back(loss_and_gradient(idx, x, data.n, p, pairs, h.weight_decay, nullptr));
    result.params = std::move(p);
    return result;
}

// ============================================================================
// SERIALIZATION
// ============================================================================

inline void save(std::ostream& out, const GatParams& p) {
    p.check();
    out << "gat v1\n";
    out << "heads " << p.heads << " d_in " << p.d_in << " d_out " << p.d_out << " activation "
        << (p.activation == Activation::Elu ? "elu" : "linear") << " leaky_slope " << format_double(p.leaky_slope)
        << " params " << p.theta.size() << '\n';
    auto row = [&](const char* name, const std::vector<double>& v) {
        out << name;
        for (double x : v) out << ' ' << format_double(x);
        out << '\n';
    };
    row("mean", p.feature_mean);
    row("scale", p.feature_scale);
    row("theta", p.theta);
}

inline GatParams load(std::istream& in) {
    std::string tag, version;
    in >> tag >> version;
    if (tag != "gat" || version != "v1") throw std::invalid_argument("gat: not a v1 model container");
    GatParams p;
    std::string k, act, slope;
    std::size_t count = 0;
    in >> k >> p.heads >> k >> p.d_in >> k >> p.d_out >> k >> act >> k >> slope >> k >> count;
    if (!in) throw std::invalid_argument("gat: malformed dimension header");
    p.activation = act == "elu" ? Activation::Elu : Activation::Linear;
    p.leaky_slope = parse_double(slope);
    auto row = [&](const char* name, std::size_t n) {
        std::string got;
        in >> got;
        if (got != name) throw std::invalid_argument(std::string("gat: expected row ") + name);
        std::vector<double> v(n);
        for (auto& x : v) {
            std::string s;
            in >> s;
            x = parse_double(s);
        }
        return v;
    };
    p.feature_mean = row("mean", p.d_in);
    p.feature_scale = row("scale", p.d_in);
    p.theta = row("theta", count);
    p.check();
    return p;
}

}  // namespace guardian::gat
