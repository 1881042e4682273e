#pragma once

// Two-phase risk model: one graph-attention weak learner per layer, stacked
// by a gradient-boosted metamodel over per-pair rows.

#include "guardian/domain.hpp"
#include "guardian/gat.hpp"
#include "guardian/gbdt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

namespace guardian {

// ============================================================================
// AUC
// ============================================================================

// Mann-Whitney AUC: probability that a random positive outranks a random
// negative, ties counted one half.
inline double evaluate_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("evaluate_auc: size mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0, npos = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) {
                rank_sum += mid;
                npos += 1.0;
            }
        i = j;
    }
    const double nneg = static_cast<double>(scores.size()) - npos;
    if (npos == 0.0 || nneg == 0.0) throw std::invalid_argument("evaluate_auc: need both classes");
    return (rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg);
}

// ============================================================================
// STACK ROWS
// ============================================================================

struct StackRow {
    static constexpr std::size_t kDim = 2 * kLayerCount + 2 * FeatureVector::kDim;

    PlayerId actor = 0;
    PlayerId target = 0;
    std::array<double, kLayerCount> probability{};  // 0 when the pair is absent from the layer
    std::array<double, kLayerCount> present{};      // 0/1 indicator
    FeatureVector actor_features;
    FeatureVector target_features;
    bool label = false;

    [[nodiscard]] std::array<double, kDim> values() const {
        std::array<double, kDim> v{};
        std::size_t k = 0;
        for (double p : probability) v[k++] = p;
        for (double p : present) v[k++] = p;
        for (double f : actor_features.values()) v[k++] = f;
        for (double f : target_features.values()) v[k++] = f;
        return v;
    }
};

// Weak-learner probabilities per layer, aligned with MultiplexGraph::layer(l).
using WeakOutputs = std::array<std::vector<double>, kLayerCount>;

inline StackRow assemble_stack_features(PlayerId actor, PlayerId target, const MultiplexGraph& graph,
                                        const WeakOutputs& weak, std::span<const FeatureVector> features) {
    StackRow row;
    row.actor = actor;
    row.target = target;
    const auto key = pair_key(actor, target);
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        const auto& edges = graph.layers[l];
        auto it = std::lower_bound(edges.begin(), edges.end(), key,
                                   [](const WeightedEdge& e, std::uint64_t k) { return pair_key(e.actor, e.target) < k; });
        if (it != edges.end() && it->actor == actor && it->target == target) {
            row.present[l] = 1.0;
            row.probability[l] = weak[l].at(static_cast<std::size_t>(it - edges.begin()));
        }
    }
    row.actor_features = features[actor];
    row.target_features = features[target];
    return row;
}

// Rows for every pair of the universe, in key order. Linear merge per layer.
inline std::vector<StackRow> assemble_all(const MultiplexGraph& graph, const WeakOutputs& weak,
                                          std::span<const FeatureVector> features) {
    const auto keys = pair_universe(graph);
    std::vector<StackRow> rows(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        rows[i].actor = key_actor(keys[i]);
        rows[i].target = key_target(keys[i]);
        rows[i].actor_features = features[rows[i].actor];
        rows[i].target_features = features[rows[i].target];
    }
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        const auto& edges = graph.layers[l];
        std::size_t r = 0;
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const auto k = pair_key(edges[e].actor, edges[e].target);
            while (keys[r] < k) ++r;
            rows[r].present[l] = 1.0;
            rows[r].probability[l] = weak[l][e];
        }
    }
    return rows;
}

// ============================================================================
// RISK MODEL
// ============================================================================

struct RiskModel {
    std::array<gat::GatParams, kLayerCount> weak;
    gbdt::GbdtModel meta;

    friend bool operator==(const RiskModel&, const RiskModel&) = default;
};

struct RiskModelHyper {
    gat::TrainHyper gat;
    gbdt::GbdtHyper gbdt;
    double stack_negative_ratio = 1.0;
    std::uint64_t seed = 11;
};

// Windows for a training anchor: features from the two weeks preceding the
// label week, labels from the week preceding the anchor. Scoring on day D
// uses features [D-14, D-1], i.e. the anchor D+7.
struct AnchorWindows {
    DayRange features;
    DayRange labels;
};

inline AnchorWindows anchor_windows(Day anchor) {
    const DayRange labels = label_window(anchor);
    return {window_before(labels.first, kFeatureWindowDays), labels};
}

inline gat::LayerData layer_data(const MultiplexGraph& graph, Layer layer, std::span<const FeatureVector> features) {
    gat::LayerData d;
    d.n = features.size();
    d.d_in = FeatureVector::kDim;
    d.x.reserve(d.n * d.d_in);
    for (const auto& f : features) {
        const auto v = f.values();
        d.x.insert(d.x.end(), v.begin(), v.end());
    }
    for (const auto& e : graph.layer(layer)) d.edges.push_back({e.actor, e.target, e.weight});
    return d;
}

// Weak-learner probabilities for every edge of every layer.
inline WeakOutputs weak_outputs(const RiskModel& model, const MultiplexGraph& graph,
                                std::span<const FeatureVector> features) {
    WeakOutputs out;
    for (Layer l : kAllLayers) {
        const auto data = layer_data(graph, l, features);
        const auto& params = model.weak[layer_index(l)];
        const auto emb = gat::gat_forward(data, params);
        auto& probs = out[layer_index(l)];
        probs.reserve(data.edges.size());
        for (const auto& e : data.edges)
            probs.push_back(gat::edge_probability(emb.row(e.src), emb.row(e.dst), params,
                                                  std::log1p(static_cast<double>(e.weight))));
    }
    return out;
}

struct ScoredEdge {
    PlayerId actor = 0;
    PlayerId target = 0;
    double probability = 0.0;

    friend bool operator==(const ScoredEdge&, const ScoredEdge&) = default;
};

// Meta-learner probabilities for assembled rows.
inline std::vector<double> stacked_probabilities(const gbdt::GbdtModel& meta, std::span<const StackRow> rows) {
    constexpr std::size_t kChunk = 4096;
    const gbdt::FlatEnsemble flat(meta);
    std::vector<double> out(rows.size());
    std::vector<double> x;
    x.reserve(kChunk * StackRow::kDim);
    for (std::size_t lo = 0; lo < rows.size(); lo += kChunk) {
        const std::size_t hi = std::min(rows.size(), lo + kChunk);
        x.clear();
        for (std::size_t i = lo; i < hi; ++i) {
            const auto v = rows[i].values();
            x.insert(x.end(), v.begin(), v.end());
        }
        flat.logit_rows(x.data(), hi - lo, out.data() + lo);
    }
    for (double& p : out) p = gbdt::logistic(p);
    return out;
}

// Stacked probability for every pair of the universe.
inline std::vector<ScoredEdge> score_pairs(const RiskModel& model, const MultiplexGraph& graph,
                                           std::span<const FeatureVector> features) {
    const auto weak = weak_outputs(model, graph, features);
    const auto rows = assemble_all(graph, weak, features);
    const auto p = stacked_probabilities(model.meta, rows);
    std::vector<ScoredEdge> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = {rows[i].actor, rows[i].target, p[i]};
    return out;
}

// Only the pairs whose stacked probability exceeds `threshold`.
inline std::vector<ScoredEdge> score_pairs_above(const RiskModel& model, const MultiplexGraph& graph,
                                                 std::span<const FeatureVector> features, double threshold) {
    auto all = score_pairs(model, graph, features);
    std::erase_if(all, [&](const ScoredEdge& e) { return !(e.probability > threshold); });
    return all;
}

// ----------------------------------------------------------------------------

struct LayerTrainSummary {
    std::size_t positives = 0;
    std::size_t pairs = 0;
    double final_loss = 0.0;
};

struct RiskModelTrainReport {
    std::array<LayerTrainSummary, kLayerCount> layers{};
    std::size_t stack_rows = 0;
    std::size_t stack_positives = 0;
    double stack_train_auc = 0.0;
    std::array<double, kLayerCount> weak_train_auc{};  // on the stacking rows, absent pairs scored 0
    std::vector<double> gbdt_loss;
};

inline std::vector<std::uint8_t> pair_labels(std::span<const std::uint64_t> keys,
                                             std::span<const std::uint64_t> positives) {
    std::vector<std::uint8_t> y(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i)
        y[i] = std::binary_search(positives.begin(), positives.end(), keys[i]) ? 1 : 0;
    return y;
}

// Trains the weak learners on `weak_anchor` and the metamodel on
// `stack_anchor`, both from `log` and dense `players`.
inline RiskModel train_risk_model(std::span<const PlayerRecord> players, const EventLog& log, Day weak_anchor,
                                  Day stack_anchor, const RiskModelHyper& hyper,
                                  RiskModelTrainReport* report = nullptr) {
    RiskModel model;
    RiskModelTrainReport rep;
    {
        const auto win = anchor_windows(weak_anchor);
        const auto events = log.range({win.features.first, win.labels.last});
        const auto graph = build_multiplex_graph(events, win.features);
        const auto features = compute_all_features(players, events, win.features);
        const auto positives = violating_pairs(events, win.labels);
        for (Layer l : kAllLayers) {
            const auto data = layer_data(graph, l, features);
            std::vector<gat::PairLabel> labels;
            labels.reserve(data.edges.size());
            for (const auto& e : data.edges)
                labels.push_back({e.src, e.dst, std::log1p(static_cast<double>(e.weight)),
                                  std::binary_search(positives.begin(), positives.end(), pair_key(e.src, e.dst))});
            gat::TrainHyper h = hyper.gat;
            h.seed = hash_keys({hyper.gat.seed, layer_index(l)});
            auto& summary = rep.layers[layer_index(l)];
            for (const auto& x : labels) summary.positives += x.label ? 1 : 0;
            summary.pairs = labels.size();
            auto result = gat::train_weak_learner(data, labels, h);
            summary.final_loss = result.loss_history.back();
            model.weak[layer_index(l)] = std::move(result.params);
        }
    }
    {
        const auto win = anchor_windows(stack_anchor);
        const auto events = log.range({win.features.first, win.labels.last});
        const auto graph = build_multiplex_graph(events, win.features);
        const auto features = compute_all_features(players, events, win.features);
        const auto positives = violating_pairs(events, win.labels);
        const auto weak = weak_outputs(model, graph, features);
        auto rows = assemble_all(graph, weak, features);
        std::vector<StackRow> pos, neg;
        for (auto& r : rows) {
            r.label = std::binary_search(positives.begin(), positives.end(), pair_key(r.actor, r.target));
            (r.label ? pos : neg).push_back(r);
        }
        const auto want = static_cast<std::size_t>(std::ceil(hyper.stack_negative_ratio * static_cast<double>(pos.size())));
        if (hyper.stack_negative_ratio > 0.0 && want < neg.size()) {
            Rng rng(hash_keys({hyper.seed, 0x737461636bULL}));
            for (std::size_t i = 0; i < want; ++i) std::swap(neg[i], neg[i + rng.below(neg.size() - i)]);
            neg.resize(want);
        }
        gbdt::Dataset data;
        data.n_features = StackRow::kDim;
        for (const auto* set : {&pos, &neg})
            for (const auto& r : *set) data.add(r.values(), r.label);
        gbdt::TrainLog tlog;
        model.meta = gbdt::train_gbdt(data, hyper.gbdt, &tlog);
        rep.gbdt_loss = tlog.loss;
        rep.stack_rows = data.rows();
        rep.stack_positives = pos.size();
        rep.stack_train_auc = evaluate_auc(gbdt::predict_batch(model.meta, data), data.y);
        for (std::size_t l = 0; l < kLayerCount; ++l) {
            std::vector<double> s(data.rows());
            for (std::size_t i = 0; i < data.rows(); ++i) s[i] = data.at(i, l);
            rep.weak_train_auc[l] = evaluate_auc(s, data.y);
        }
    }
    if (report) *report = std::move(rep);
    return model;
}

// Held-out evaluation on one anchor: per-pair and per-player AUC.
struct RiskModelEvaluation {
    std::size_t pairs = 0;
    std::size_t positive_pairs = 0;
    double stacked_auc = 0.0;
    std::array<double, kLayerCount> weak_auc{};  // absent pairs scored 0
    double best_weak_auc = 0.0;
    std::size_t players = 0;
    std::size_t positive_players = 0;
    double player_auc = 0.0;  // player score = max outgoing stacked probability
};

inline RiskModelEvaluation evaluate_risk_model(const RiskModel& model, std::span<const PlayerRecord> players,
                                               const EventLog& log, Day anchor) {
    const auto win = anchor_windows(anchor);
    const auto events = log.range({win.features.first, win.labels.last});
    const auto graph = build_multiplex_graph(events, win.features);
    const auto features = compute_all_features(players, events, win.features);
    const auto positives = violating_pairs(events, win.labels);
    const auto weak = weak_outputs(model, graph, features);
    const auto rows = assemble_all(graph, weak, features);

    RiskModelEvaluation ev;
    ev.pairs = rows.size();
    const std::vector<double> stacked = stacked_probabilities(model.meta, rows);
    std::vector<std::uint8_t> y(rows.size());
    std::vector<double> player_score(players.size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        y[i] = std::binary_search(positives.begin(), positives.end(), pair_key(rows[i].actor, rows[i].target)) ? 1 : 0;
        ev.positive_pairs += y[i];
        player_score[rows[i].actor] = std::max(player_score[rows[i].actor], stacked[i]);
    }
    ev.stacked_auc = evaluate_auc(stacked, y);
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        std::vector<double> s(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) s[i] = rows[i].probability[l];
        ev.weak_auc[l] = evaluate_auc(s, y);
        ev.best_weak_auc = std::max(ev.best_weak_auc, ev.weak_auc[l]);
    }
    const auto labels = assign_labels(events, anchor);
    std::vector<std::uint8_t> py(players.size());
    for (std::size_t i = 0; i < players.size(); ++i) {
        py[i] = labels.is_positive(static_cast<PlayerId>(i)) ? 1 : 0;
        ev.positive_players += py[i];
    }
    ev.players = players.size();
    if (ev.positive_players > 0 && ev.positive_players < ev.players) ev.player_auc = evaluate_auc(player_score, py);
    return ev;
}

// ============================================================================
// SERIALIZATION
// ============================================================================

inline void save(std::ostream& out, const RiskModel& m) {
    out << "risk-model v1 layers " << kLayerCount << '\n';
    for (Layer l : kAllLayers) {
        out << "layer " << layer_name(l) << '\n';
        gat::save(out, m.weak[layer_index(l)]);
    }
    out << "meta\n";
    gbdt::save(out, m.meta);
}

inline RiskModel load_risk_model(std::istream& in) {
    std::string tag, version, k;
    std::size_t layers = 0;
    in >> tag >> version >> k >> layers;
    if (tag != "risk-model" || version != "v1" || layers != kLayerCount)
        throw std::invalid_argument("risk model: not a v1 container");
    RiskModel m;
    for (Layer l : kAllLayers) {
        std::string name;
        in >> k >> name;
        if (k != "layer" || name != layer_name(l)) throw std::invalid_argument("risk model: layer block out of order");
        m.weak[layer_index(l)] = gat::load(in);
    }
    in >> k;
    if (k != "meta") throw std::invalid_argument("risk model: missing metamodel");
    m.meta = gbdt::load(in);
    if (m.meta.n_features != StackRow::kDim) throw std::invalid_argument("risk model: metamodel schema mismatch");
    return m;
}

}  // namespace guardian
