#pragma once

// Gradient-boosted regression trees for binary log-loss.
//
// Level-wise growth with exact sorted split scans, second-order leaf values
// and a per-leaf backtracking step that keeps the training loss
// nonincreasing from round to round.

#include "guardian/artifact.hpp"

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

namespace guardian::gbdt {

inline double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double log_loss_term(double logit, bool y) {
    const double s = y ? -logit : logit;
    return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
}

// Row-major dense matrix of feature rows.
struct Dataset {
    std::size_t n_features = 0;
    std::vector<double> x;
    std::vector<std::uint8_t> y;

    [[nodiscard]] std::size_t rows() const { return y.size(); }
    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return std::span<const double>(x).subspan(i * n_features, n_features);
    }
    [[nodiscard]] double at(std::size_t i, std::size_t f) const { return x[i * n_features + f]; }

    void add(std::span<const double> r, bool label) {
        if (n_features == 0 && x.empty()) n_features = r.size();
        if (r.size() != n_features) throw std::invalid_argument("gbdt: row width mismatch");
        x.insert(x.end(), r.begin(), r.end());
        y.push_back(label ? 1 : 0);
    }
};

// ============================================================================
// MODEL
// ============================================================================

struct Node {
    int feature = -1;  // -1 for a leaf
    double threshold = 0.0;  // x[feature] <= threshold goes left
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf value in logit space, before learning rate

    friend bool operator==(const Node&, const Node&) = default;
};

// Nodes stored in preorder; node 0 is the root.
struct Tree {
    std::vector<Node> nodes;

    [[nodiscard]] double predict(std::span<const double> row) const {
        int i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const Node& n = nodes[static_cast<std::size_t>(i)];
            i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }

    [[nodiscard]] int depth() const { return depth_from(0); }

    friend bool operator==(const Tree&, const Tree&) = default;

private:
    [[nodiscard]] int depth_from(int i) const {
        const Node& n = nodes[static_cast<std::size_t>(i)];
        if (n.feature < 0) return 0;
        return 1 + std::max(depth_from(n.left), depth_from(n.right));
    }
};

struct GbdtModel {
    std::size_t n_features = 0;
    double base_score = 0.0;  // logit
    double learning_rate = 0.1;
    int max_depth = 4;
    std::vector<Tree> trees;

    friend bool operator==(const GbdtModel&, const GbdtModel&) = default;
};

struct GbdtHyper {
    int rounds = 200;
    int max_depth = 4;
    double learning_rate = 0.1;
    std::size_t min_leaf = 20;
    double l2 = 1.0;
};

inline void validate(const GbdtHyper& h) {
    if (h.rounds < 0) throw std::invalid_argument("gbdt: rounds must be >= 0");
    if (h.max_depth < 1) throw std::invalid_argument("gbdt: max depth must be >= 1");
    if (!(h.learning_rate > 0.0)) throw std::invalid_argument("gbdt: learning rate must be > 0");
    if (h.min_leaf < 1) throw std::invalid_argument("gbdt: min leaf must be >= 1");
    if (h.l2 < 0.0) throw std::invalid_argument("gbdt: l2 must be >= 0");
}

inline double predict_logit(const GbdtModel& m, std::span<const double> row) {
    if (row.size() != m.n_features) throw std::invalid_argument("gbdt: row schema does not match the model");
    // Accumulated tree by tree so FlatEnsemble reproduces it bit for bit.
    double s = m.base_score;
    for (const auto& t : m.trees) s += m.learning_rate * t.predict(row);
    return s;
}

inline double predict_gbdt(const GbdtModel& m, std::span<const double> row) { return logistic(predict_logit(m, row)); }

// Trees re-laid as complete binary trees of a common depth, walked without
// branches. Padding below shallow leaves repeats the leaf value, so every
// row reaches the same leaf value as in the original tree.
class FlatEnsemble {
public:
    explicit FlatEnsemble(const GbdtModel& m) : n_features_(m.n_features), learning_rate_(m.learning_rate), base_(m.base_score) {
        for (const auto& t : m.trees) depth_ = std::max(depth_, t.depth());
        const std::size_t inner = (std::size_t{1} << depth_) - 1, leaves = std::size_t{1} << depth_;
        feature_.assign(m.trees.size() * inner, 0);
        threshold_.assign(m.trees.size() * inner, 0.0);
        leaf_.assign(m.trees.size() * leaves, 0.0);
        for (std::size_t t = 0; t < m.trees.size(); ++t) fill(m.trees[t], 0, 0, t * inner, t * leaves, 0);
        trees_ = m.trees.size();
    }

    [[nodiscard]] std::size_t size() const { return trees_; }

    [[nodiscard]] double tree_value(std::size_t t, std::span<const double> row) const {
        const std::size_t inner = (std::size_t{1} << depth_) - 1;
        const std::uint16_t* f = feature_.data() + t * inner;
        const double* thr = threshold_.data() + t * inner;
        std::size_t i = 0;
        for (int level = 0; level < depth_; ++level) i = 2 * i + 1 + static_cast<std::size_t>(!(row[f[i]] <= thr[i]));
        return leaf_[t * (inner + 1) + (i - inner)];
    }

    [[nodiscard]] double logit(std::span<const double> row) const {
        if (row.size() != n_features_) throw std::invalid_argument("gbdt: row schema does not match the model");
        double s = base_;
        for (std::size_t t = 0; t < trees_; ++t) s += learning_rate_ * tree_value(t, row);
        return s;
    }

    // Logits of `n` contiguous rows of width n_features(). Rows are walked
    // in interleaved groups; each row still accumulates its trees in order,
    // so the results equal logit() exactly.
    void logit_rows(const double* rows, std::size_t n, double* out) const {
        constexpr std::size_t kGroup = 8;
        const std::size_t inner = (std::size_t{1} << depth_) - 1;
        std::size_t r = 0;
        for (; r + kGroup <= n; r += kGroup) {
            double s[kGroup];
            const double* x[kGroup];
            for (std::size_t g = 0; g < kGroup; ++g) {
                s[g] = base_;
                x[g] = rows + (r + g) * n_features_;
            }
            for (std::size_t t = 0; t < trees_; ++t) {
                const std::uint16_t* f = feature_.data() + t * inner;
                const double* thr = threshold_.data() + t * inner;
                const double* leaf = leaf_.data() + t * (inner + 1) - inner;
                std::size_t i[kGroup] = {};
                for (int level = 0; level < depth_; ++level)
                    for (std::size_t g = 0; g < kGroup; ++g)
                        i[g] = 2 * i[g] + 1 + static_cast<std::size_t>(!(x[g][f[i[g]]] <= thr[i[g]]));
                for (std::size_t g = 0; g < kGroup; ++g) s[g] += learning_rate_ * leaf[i[g]];
            }
            for (std::size_t g = 0; g < kGroup; ++g) out[r + g] = s[g];
        }
        for (; r < n; ++r) out[r] = logit(std::span<const double>(rows + r * n_features_, n_features_));
    }

    [[nodiscard]] double learning_rate() const { return learning_rate_; }
    [[nodiscard]] double base() const { return base_; }
    [[nodiscard]] std::size_t n_features() const { return n_features_; }

private:
    // Writes the subtree of `node` at complete-tree position `pos`, `level`
    // levels down.
    void fill(const Tree& tree, int node, std::size_t pos, std::size_t inner_off, std::size_t leaf_off, int level) {
        const std::size_t inner = (std::size_t{1} << depth_) - 1;
        if (level == depth_) {
            leaf_[leaf_off + (pos - inner)] = tree.nodes[static_cast<std::size_t>(node)].value;
            return;
        }
        const Node& n = tree.nodes[static_cast<std::size_t>(node)];
        if (n.feature < 0) {
            feature_[inner_off + pos] = 0;
            threshold_[inner_off + pos] = 0.0;
            fill(tree, node, 2 * pos + 1, inner_off, leaf_off, level + 1);
            fill(tree, node, 2 * pos + 2, inner_off, leaf_off, level + 1);
            return;
        }
        feature_[inner_off + pos] = static_cast<std::uint16_t>(n.feature);
        threshold_[inner_off + pos] = n.threshold;
        fill(tree, n.left, 2 * pos + 1, inner_off, leaf_off, level + 1);
        fill(tree, n.right, 2 * pos + 2, inner_off, leaf_off, level + 1);
    }

    std::size_t n_features_ = 0;
    double learning_rate_ = 0.1;
    double base_ = 0.0;
    int depth_ = 0;
    std::size_t trees_ = 0;
    std::vector<std::uint16_t> feature_;
    std::vector<double> threshold_;
    std::vector<double> leaf_;
};

inline std::vector<double> predict_batch(const GbdtModel& m, const Dataset& d) {
    const FlatEnsemble flat(m);
    std::vector<double> out(d.rows());
    for (std::size_t i = 0; i < d.rows(); ++i) out[i] = logistic(flat.logit(d.row(i)));
    return out;
}

// ============================================================================
// SPLIT SEARCH
// ============================================================================

struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

inline double leaf_objective(double g, double h, double l2) { return g * g / (h + l2); }

// Exact best split of `rows` by scanning every feature in sorted order.
// Ties on gain keep the lowest feature index, then the lowest threshold.
inline Split best_split(const Dataset& d, std::span<const std::uint32_t> rows, std::span<const double> grad,
                        std::span<const double> hess, std::size_t min_leaf, double l2) {
    Split best;
    if (rows.size() < 2 * min_leaf) return best;
    double G = 0.0, H = 0.0;
    for (auto r : rows) {
        G += grad[r];
        H += hess[r];
    }
    const double parent = leaf_objective(G, H, l2);
    std::vector<std::uint32_t> order(rows.begin(), rows.end());
    for (std::size_t f = 0; f < d.n_features; ++f) {
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            const double va = d.at(a, f), vb = d.at(b, f);
            return va < vb || (va == vb && a < b);
        });
        double gl = 0.0, hl = 0.0;
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
            gl += grad[order[k]];
            hl += hess[order[k]];
            const double v = d.at(order[k], f), next = d.at(order[k + 1], f);
            if (v == next) continue;
            const std::size_t nl = k + 1, nr = order.size() - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            const double gain = leaf_objective(gl, hl, l2) + leaf_objective(G - gl, H - hl, l2) - parent;
            if (gain > 1e-12 && (!best.found || gain > best.gain)) {
                best.found = true;
                best.feature = f;
                best.threshold = v + (next - v) / 2.0;
                best.gain = gain;
            }
        }
    }
    return best;
}

// ============================================================================
// TRAINING
// ============================================================================

struct TrainLog {
    std::vector<double> loss;  // mean log-loss after base score and after each round
};

inline double mean_log_loss(std::span<const double> logits, std::span<const std::uint8_t> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += log_loss_term(logits[i], y[i] != 0);
    return s / static_cast<double>(std::max<std::size_t>(y.size(), 1));
}

namespace detail {

// Newton leaf value, halved until the leaf's loss does not increase.
inline double safe_leaf_value(std::span<const std::uint32_t> rows, std::span<const double> logits,
                              std::span<const std::uint8_t> y, double g, double h, double l2, double lr) {
    double v = -g / (h + l2);
    double before = 0.0;
    for (auto r : rows) before += log_loss_term(logits[r], y[r] != 0);
    for (int k = 0; k < 60 && v != 0.0; ++k) {
        double after = 0.0;
        for (auto r : rows) after += log_loss_term(logits[r] + lr * v, y[r] != 0);
        if (after <= before) return v;
        v *= 0.5;
    }
    return 0.0;
}

struct Pending {
    std::vector<std::uint32_t> rows;
    int depth = 0;
    int node = 0;
};

inline Tree grow_tree(const Dataset& d, std::span<const double> grad, std::span<const double> hess,
                      std::span<const double> logits, const GbdtHyper& h) {
    Tree tree;
    std::vector<std::uint32_t> all(d.rows());
    std::iota(all.begin(), all.end(), 0U);
    // Build level by level, then renumber into preorder.
    struct Raw {
        Node node;
        std::vector<std::uint32_t> rows;
    };
    std::vector<Raw> raw;
    raw.push_back({Node{}, all});
    std::vector<int> frontier{0};
    for (int depth = 0; depth <= h.max_depth && !frontier.empty(); ++depth) {
        std::vector<int> next;
        for (int id : frontier) {
            auto rows = raw[static_cast<std::size_t>(id)].rows;
            Split s;
            if (depth < h.max_depth) s = best_split(d, rows, grad, hess, h.min_leaf, h.l2);
            if (!s.found) {
                double g = 0.0, hh = 0.0;
                for (auto r : rows) {
                    g += grad[r];
                    hh += hess[r];
                }
                raw[static_cast<std::size_t>(id)].node.value =
                    safe_leaf_value(rows, logits, d.y, g, hh, h.l2, h.learning_rate);
                continue;
            }
            std::vector<std::uint32_t> lrows, rrows;
            for (auto r : rows) (d.at(r, s.feature) <= s.threshold ? lrows : rrows).push_back(r);
            Node& n = raw[static_cast<std::size_t>(id)].node;
            n.feature = static_cast<int>(s.feature);
            n.threshold = s.threshold;
            n.left = static_cast<int>(raw.size());
            n.right = static_cast<int>(raw.size() + 1);
            raw[static_cast<std::size_t>(id)].rows.clear();
            raw.push_back({Node{}, std::move(lrows)});
            raw.push_back({Node{}, std::move(rrows)});
            next.push_back(n.left);
            next.push_back(n.right);
        }
        frontier = std::move(next);
    }
    // Preorder renumbering.
    std::vector<int> stack{0};
    std::vector<int> new_id(raw.size(), -1);
    std::vector<int> order;
    while (!stack.empty()) {
        int id = stack.back();
        stack.pop_back();
        new_id[static_cast<std::size_t>(id)] = static_cast<int>(order.size());
        order.push_back(id);
        const Node& n = raw[static_cast<std::size_t>(id)].node;
        if (n.feature >= 0) {
            stack.push_back(n.right);
            stack.push_back(n.left);
        }
    }
    for (int id : order) {
        Node n = raw[static_cast<std::size_t>(id)].node;
        if (n.feature >= 0) {
            n.left = new_id[static_cast<std::size_t>(n.left)];
            n.right = new_id[static_cast<std::size_t>(n.right)];
        }
        tree.nodes.push_back(n);
    }
    return tree;
}

}  // namespace detail

inline GbdtModel train_gbdt(const Dataset& d, const GbdtHyper& h, TrainLog* log = nullptr) {
    validate(h);
    std::size_t npos = 0;
    for (auto v : d.y) npos += v;
    if (npos == 0 || npos == d.rows()) throw std::invalid_argument("gbdt: training rows need both classes");
    GbdtModel m;
    m.n_features = d.n_features;
    m.learning_rate = h.learning_rate;
    m.max_depth = h.max_depth;
    const double rate = static_cast<double>(npos) / static_cast<double>(d.rows());
    m.base_score = std::log(rate / (1.0 - rate));

    std::vector<double> logits(d.rows(), m.base_score), grad(d.rows()), hess(d.rows());
    if (log) log->loss.push_back(mean_log_loss(logits, d.y));
    for (int round = 0; round < h.rounds; ++round) {
        for (std::size_t i = 0; i < d.rows(); ++i) {
            const double p = logistic(logits[i]);
            grad[i] = p - d.y[i];
            hess[i] = std::max(p * (1.0 - p), 1e-16);
        }
        Tree t = detail::grow_tree(d, grad, hess, logits, h);
        for (std::size_t i = 0; i < d.rows(); ++i) logits[i] += m.learning_rate * t.predict(d.row(i));
        m.trees.push_back(std::move(t));
        if (log) log->loss.push_back(mean_log_loss(logits, d.y));
    }
    return m;
}

// ============================================================================
// SERIALIZATION
// ============================================================================

inline void save(std::ostream& out, const GbdtModel& m) {
    out << "gbdt v1\n";
    out << "features " << m.n_features << " base " << format_double(m.base_score) << " lr "
        << format_double(m.learning_rate) << " depth " << m.max_depth << " trees " << m.trees.size() << '\n';
    for (const auto& t : m.trees) {
        out << "tree " << t.nodes.size() << '\n';
        for (const auto& n : t.nodes) {
            if (n.feature < 0) out << "leaf " << format_double(n.value) << '\n';
            else out << "split " << n.feature << ' ' << format_double(n.threshold) << '\n';
        }
    }
}

inline GbdtModel load(std::istream& in) {
    std::string tag, version, k, base, lr;
    in >> tag >> version;
    if (tag != "gbdt" || version != "v1") throw std::invalid_argument("gbdt: not a v1 model container");
    GbdtModel m;
    std::size_t ntrees = 0;
    in >> k >> m.n_features >> k >> base >> k >> lr >> k >> m.max_depth >> k >> ntrees;
    if (!in) throw std::invalid_argument("gbdt: malformed header");
    m.base_score = parse_double(base);
    m.learning_rate = parse_double(lr);
    for (std::size_t t = 0; t < ntrees; ++t) {
        std::size_t count = 0;
        in >> k >> count;
        if (k != "tree") throw std::invalid_argument("gbdt: expected tree");
        Tree tree;
        tree.nodes.resize(count);
        // Preorder: children of a split are the next subtree and the one after it.
        std::vector<std::size_t> open;  // split nodes awaiting a right child
        for (std::size_t i = 0; i < count; ++i) {
            std::string kind, v;
            in >> kind;
            Node& n = tree.nodes[i];
            if (kind == "leaf") {
                in >> v;
                n.value = parse_double(v);
            } else if (kind == "split") {
                in >> n.feature >> v;
                n.threshold = parse_double(v);
            } else {
                throw std::invalid_argument("gbdt: bad node kind");
            }
            if (i > 0) {
                Node& parent = tree.nodes[open.back()];
                if (parent.left < 0) {
                    parent.left = static_cast<int>(i);
                } else {
                    parent.right = static_cast<int>(i);
                    open.pop_back();
                }
            }
            if (n.feature >= 0) open.push_back(i);
            if (n.feature >= 0 && static_cast<std::size_t>(n.feature) >= m.n_features)
                throw std::invalid_argument("gbdt: split feature out of range");
        }
        if (!open.empty()) throw std::invalid_argument("gbdt: truncated tree");
        m.trees.push_back(std::move(tree));
    }
    return m;
}

}  // namespace guardian::gbdt
