#pragma once

// Core data model: players, interaction events, the five-layer multiplex
// graph, per-player metadata features and ground-truth labels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace guardian {

using PlayerId = std::uint32_t;
using Day = int;

// ============================================================================
// ENUMS
// ============================================================================

enum class Layer : std::uint8_t { AC = 0, DM = 1, Comment = 2, Follow = 3, Like = 4 };
inline constexpr std::size_t kLayerCount = 5;
inline constexpr std::array<Layer, kLayerCount> kAllLayers{Layer::AC, Layer::DM, Layer::Comment, Layer::Follow,
                                                           Layer::Like};

inline constexpr std::string_view layer_name(Layer l) {
    switch (l) {
        case Layer::AC: return "AC";
        case Layer::DM: return "DM";
        case Layer::Comment: return "Comment";
        case Layer::Follow: return "Follow";
        case Layer::Like: return "Like";
    }
    return "?";
}

inline Layer parse_layer(std::string_view s) {
    for (Layer l : kAllLayers)
        if (layer_name(l) == s) return l;
    throw std::invalid_argument("unknown layer '" + std::string(s) + "'");
}

inline constexpr std::size_t layer_index(Layer l) { return static_cast<std::size_t>(l); }

inline bool valid_layer(Layer l) { return static_cast<std::size_t>(l) < kLayerCount; }

enum class Gender : std::uint8_t { Female = 0, Male = 1 };

inline constexpr std::string_view gender_name(Gender g) { return g == Gender::Female ? "female" : "male"; }

inline Gender parse_gender(std::string_view s) {
    if (s == "female") return Gender::Female;
    if (s == "male") return Gender::Male;
    throw std::invalid_argument("unknown gender '" + std::string(s) + "'");
}

// ============================================================================
// RECORDS
// ============================================================================

struct PlayerRecord {
    PlayerId id = 0;
    Gender gender = Gender::Female;
    int age = 0;
    Day install_day = 0;
    bool penalized = false;
    // Simulator-only latent traits, all in [0, 1].
    double predator_propensity = 0.0;
    double victim_susceptibility = 0.0;
    double responsiveness = 0.0;
};

struct InteractionEvent {
    Day day = 0;
    std::uint8_t hour = 0;
    Layer layer = Layer::AC;
    PlayerId actor = 0;
    PlayerId target = 0;
    bool violation = false;

    friend bool operator==(const InteractionEvent&, const InteractionEvent&) = default;
};

inline void validate(const InteractionEvent& e) {
    if (!valid_layer(e.layer)) throw std::invalid_argument("event with unknown layer");
    if (e.hour > 23) throw std::invalid_argument("event hour out of range 0..23");
    if (e.actor == e.target) throw std::invalid_argument("event actor equals target");
    if (e.violation && e.layer != Layer::AC && e.layer != Layer::DM)
        throw std::invalid_argument("violation flagged outside AC/DM");
}

// Night hours 20:00-04:59, nine hourly windows.
inline constexpr bool is_night_hour(int hour) { return hour >= 20 || hour <= 4; }
inline constexpr int kNightWindows = 9;

// Inclusive day range.
struct DayRange {
    Day first = 0;
    Day last = -1;

    [[nodiscard]] constexpr bool empty() const { return last < first; }
    [[nodiscard]] constexpr int length() const { return empty() ? 0 : last - first + 1; }
    [[nodiscard]] constexpr bool contains(Day d) const { return d >= first && d <= last; }

    friend bool operator==(const DayRange&, const DayRange&) = default;
};

// Feature window ending the day before `day`.
inline constexpr DayRange window_before(Day day, int length) { return {day - length, day - 1}; }

inline constexpr int kFeatureWindowDays = 14;
inline constexpr int kLabelWindowDays = 7;

// ============================================================================
// EVENT LOG
// ============================================================================

// Append-only, day-ordered event store with O(1) access to any day range.
class EventLog {
public:
    EventLog() = default;

    explicit EventLog(std::vector<InteractionEvent> events) {
        std::stable_sort(events.begin(), events.end(),
                         [](const auto& a, const auto& b) { return a.day < b.day; });
        for (const auto& e : events) append(e);
    }

    void append(const InteractionEvent& e) {
        validate(e);
        if (e.day < 0) throw std::invalid_argument("negative event day");
        if (!events_.empty() && e.day < events_.back().day)
            throw std::invalid_argument("event log is append-only in day order");
        while (static_cast<Day>(day_begin_.size()) <= e.day) day_begin_.push_back(events_.size());
        events_.push_back(e);
    }

    void append_day(Day day, std::span<const InteractionEvent> events) {
        mark_day(day);
        for (const auto& e : events) {
            if (e.day != day) throw std::invalid_argument("day log contains event from another day");
            append(e);
        }
    }

    // Registers `day` as covered even when it has no events.
    void mark_day(Day day) {
        if (day < covered_days()) throw std::invalid_argument("event log is append-only in day order");
        while (static_cast<Day>(day_begin_.size()) <= day) day_begin_.push_back(events_.size());
    }

    [[nodiscard]] Day covered_days() const { return static_cast<Day>(day_begin_.size()); }
    [[nodiscard]] std::size_t size() const { return events_.size(); }
    [[nodiscard]] std::span<const InteractionEvent> all() const { return events_; }

    [[nodiscard]] std::span<const InteractionEvent> range(DayRange r) const {
        if (r.empty()) return {};
        const auto lo = offset(std::max(r.first, 0));
        const auto hi = offset(std::max(r.last + 1, 0));
        return std::span<const InteractionEvent>(events_).subspan(lo, hi - lo);
    }

    [[nodiscard]] std::span<const InteractionEvent> day(Day d) const { return range({d, d}); }

private:
    [[nodiscard]] std::size_t offset(Day d) const {
        if (d < static_cast<Day>(day_begin_.size())) return day_begin_[static_cast<std::size_t>(d)];
        return events_.size();
    }

    std::vector<InteractionEvent> events_;
    std::vector<std::size_t> day_begin_;
};

// ============================================================================
// MULTIPLEX GRAPH
// ============================================================================

struct WeightedEdge {
    PlayerId actor = 0;
    PlayerId target = 0;
    std::uint32_t weight = 0;

    friend bool operator==(const WeightedEdge&, const WeightedEdge&) = default;
};

inline constexpr std::uint64_t pair_key(PlayerId actor, PlayerId target) {
    return (static_cast<std::uint64_t>(actor) << 32) | target;
}
inline constexpr PlayerId key_actor(std::uint64_t k) { return static_cast<PlayerId>(k >> 32); }
inline constexpr PlayerId key_target(std::uint64_t k) { return static_cast<PlayerId>(k & 0xFFFFFFFFULL); }

struct MultiplexGraph {
    DayRange window;
    std::vector<PlayerId> nodes;                                  // sorted, unique
    std::array<std::vector<WeightedEdge>, kLayerCount> layers;    // sorted by (actor, target)

    [[nodiscard]] const std::vector<WeightedEdge>& layer(Layer l) const { return layers[layer_index(l)]; }

    // Weight of actor->target in a layer, 0 when absent.
    [[nodiscard]] std::uint32_t weight(Layer l, PlayerId actor, PlayerId target) const {
        const auto& edges = layer(l);
        auto it = std::lower_bound(edges.begin(), edges.end(), pair_key(actor, target),
                                   [](const WeightedEdge& e, std::uint64_t k) { return pair_key(e.actor, e.target) < k; });
        if (it != edges.end() && it->actor == actor && it->target == target) return it->weight;
        return 0;
    }

    [[nodiscard]] std::uint64_t total_weight() const {
        std::uint64_t s = 0;
        for (const auto& edges : layers)
            for (const auto& e : edges) s += e.weight;
        return s;
    }

    friend bool operator==(const MultiplexGraph&, const MultiplexGraph&) = default;
};

inline MultiplexGraph build_multiplex_graph(std::span<const InteractionEvent> events, DayRange window) {
    if (window.empty()) throw std::invalid_argument("build_multiplex_graph: empty window");
    MultiplexGraph g;
    g.window = window;
    std::array<std::vector<std::uint64_t>, kLayerCount> keys;
    std::vector<std::uint8_t> seen;
    for (const auto& e : events) {
        if (!valid_layer(e.layer)) throw std::invalid_argument("build_multiplex_graph: event with unknown layer");
        if (!window.contains(e.day)) continue;
        keys[layer_index(e.layer)].push_back(pair_key(e.actor, e.target));
        const PlayerId hi = std::max(e.actor, e.target);
        if (hi >= seen.size()) seen.resize(static_cast<std::size_t>(hi) + 1, 0);
        seen[e.actor] = 1;
        seen[e.target] = 1;
    }
    for (std::size_t l = 0; l < kLayerCount; ++l) {
        auto& k = keys[l];
        std::sort(k.begin(), k.end());
        auto& out = g.layers[l];
        for (std::size_t i = 0; i < k.size();) {
            std::size_t j = i;
            while (j < k.size() && k[j] == k[i]) ++j;
            out.push_back({key_actor(k[i]), key_target(k[i]), static_cast<std::uint32_t>(j - i)});
            i = j;
        }
    }
    for (std::size_t p = 0; p < seen.size(); ++p)
        if (seen[p]) g.nodes.push_back(static_cast<PlayerId>(p));
    return g;
}

// Union of directed pairs over all layers, sorted by key. This is the pair
// universe that gets scored.
inline std::vector<std::uint64_t> pair_universe(const MultiplexGraph& g) {
    std::vector<std::uint64_t> keys;
    for (const auto& edges : g.layers)
        for (const auto& e : edges) keys.push_back(pair_key(e.actor, e.target));
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
}

// ============================================================================
// METADATA FEATURES
// ============================================================================

struct FeatureVector {
    static constexpr std::size_t kDim = 11;

    double avatar_age = 0.0;
    double female = 0.0;  // one-hot gender
    double male = 0.0;
    double friend_count = 0.0;
    double days_since_install = 0.0;
    std::array<double, kLayerCount> rates{};  // events per login day, indexed by Layer
    double login_days = 0.0;

    [[nodiscard]] std::array<double, kDim> values() const {
        return {avatar_age, female,   male,     friend_count, days_since_install, rates[0],
                rates[1],   rates[2], rates[3], rates[4],     login_days};
    }

    static constexpr std::array<std::string_view, kDim> names{
        "avatar_age", "female",       "male",        "friend_count", "days_since_install", "rate_ac",
        "rate_dm",    "rate_comment", "rate_follow", "rate_like",    "login_days"};

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

namespace detail {

// Mutual-follow pair counts over in-window Follow events.
inline std::vector<std::uint32_t> friend_counts(std::span<const InteractionEvent> events, DayRange window,
                                                std::size_t n_players) {
    std::vector<std::uint64_t> follows;
    for (const auto& e : events)
        if (e.layer == Layer::Follow && window.contains(e.day)) follows.push_back(pair_key(e.actor, e.target));
    std::sort(follows.begin(), follows.end());
    follows.erase(std::unique(follows.begin(), follows.end()), follows.end());
    std::vector<std::uint32_t> counts(n_players, 0);
    for (std::uint64_t k : follows) {
        const PlayerId a = key_actor(k), b = key_target(k);
        if (a < b && std::binary_search(follows.begin(), follows.end(), pair_key(b, a))) {
            if (a < n_players) ++counts[a];
            if (b < n_players) ++counts[b];
        }
    }
    return counts;
}

inline FeatureVector base_features(const PlayerRecord& p, DayRange window) {
    FeatureVector f;
    f.avatar_age = p.age;
    f.female = p.gender == Gender::Female ? 1.0 : 0.0;
    f.male = p.gender == Gender::Male ? 1.0 : 0.0;
    f.days_since_install = std::max(0, window.last + 1 - p.install_day);
    return f;
}

}  // namespace detail

// Feature vector for a single player. Players with no in-window activity get
// zero rates and login_days = 0.
inline FeatureVector compute_metadata_features(const PlayerRecord& player, std::span<const InteractionEvent> events,
                                               DayRange window) {
    if (window.empty()) throw std::invalid_argument("compute_metadata_features: empty window");
    FeatureVector f = detail::base_features(player, window);
    std::array<std::uint64_t, kLayerCount> counts{};
    std::vector<Day> days;
    std::vector<std::uint64_t> follows;
    for (const auto& e : events) {
        if (!window.contains(e.day)) continue;
        if (e.actor == player.id) {
            ++counts[layer_index(e.layer)];
            days.push_back(e.day);
        }
        if (e.layer == Layer::Follow && (e.actor == player.id || e.target == player.id))
            follows.push_back(pair_key(e.actor, e.target));
    }
    std::sort(days.begin(), days.end());
    const auto login_days = static_cast<double>(std::unique(days.begin(), days.end()) - days.begin());
    f.login_days = login_days;
    if (login_days > 0)
        for (std::size_t l = 0; l < kLayerCount; ++l) f.rates[l] = static_cast<double>(counts[l]) / login_days;
    std::sort(follows.begin(), follows.end());
    follows.erase(std::unique(follows.begin(), follows.end()), follows.end());
    for (std::uint64_t k : follows)
        if (key_actor(k) == player.id && std::binary_search(follows.begin(), follows.end(), pair_key(key_target(k), player.id)))
            f.friend_count += 1.0;
    return f;
}

// Batch version over a dense population (player id == index). Equivalent to
// calling compute_metadata_features per player, in one pass over the events.
inline std::vector<FeatureVector> compute_all_features(std::span<const PlayerRecord> players,
                                                       std::span<const InteractionEvent> events, DayRange window) {
    if (window.empty()) throw std::invalid_argument("compute_all_features: empty window");
    const auto by_day = [](const InteractionEvent& a, const InteractionEvent& b) { return a.day < b.day; };
    if (!std::is_sorted(events.begin(), events.end(), by_day)) {
        std::vector<InteractionEvent> sorted(events.begin(), events.end());
        std::stable_sort(sorted.begin(), sorted.end(), by_day);
        return compute_all_features(players, sorted, window);
    }
    const std::size_t n = players.size();
    std::vector<FeatureVector> out(n);
    std::vector<std::array<std::uint32_t, kLayerCount>> counts(n, std::array<std::uint32_t, kLayerCount>{});
    std::vector<std::uint32_t> login_days(n, 0);
    std::vector<Day> last_day(n, window.first - 1);
    for (const auto& e : events) {
        if (!window.contains(e.day) || e.actor >= n) continue;
        ++counts[e.actor][layer_index(e.layer)];
        if (last_day[e.actor] != e.day) {
            last_day[e.actor] = e.day;
            ++login_days[e.actor];
        }
    }
    const auto friends = detail::friend_counts(events, window, n);
    for (std::size_t i = 0; i < n; ++i) {
        FeatureVector f = detail::base_features(players[i], window);
        f.friend_count = friends[i];
        f.login_days = login_days[i];
        if (login_days[i] > 0)
            for (std::size_t l = 0; l < kLayerCount; ++l)
                f.rates[l] = static_cast<double>(counts[i][l]) / static_cast<double>(login_days[i]);
        out[i] = f;
    }
    return out;
}

// ============================================================================
// LABELS
// ============================================================================

struct LabelSet {
    Day inference_day = 0;
    DayRange window;
    std::vector<PlayerId> positives;  // sorted

    [[nodiscard]] bool is_positive(PlayerId id) const {
        return std::binary_search(positives.begin(), positives.end(), id);
    }
};

inline DayRange label_window(Day inference_day) { return window_before(inference_day, kLabelWindowDays); }

// A player is positive iff they committed at least one violation in the seven
// days strictly preceding the inference day.
inline LabelSet assign_labels(std::span<const InteractionEvent> events, Day inference_day) {
    if (inference_day < 8) throw std::invalid_argument("assign_labels: inference_day must be >= 8");
    LabelSet labels;
    labels.inference_day = inference_day;
    labels.window = label_window(inference_day);
    for (const auto& e : events)
        if (e.violation && labels.window.contains(e.day)) labels.positives.push_back(e.actor);
    std::sort(labels.positives.begin(), labels.positives.end());
    labels.positives.erase(std::unique(labels.positives.begin(), labels.positives.end()), labels.positives.end());
    return labels;
}

// Directed (actor, target) pairs with a violation in the window, sorted keys.
inline std::vector<std::uint64_t> violating_pairs(std::span<const InteractionEvent> events, DayRange window) {
    std::vector<std::uint64_t> keys;
    for (const auto& e : events)
        if (e.violation && window.contains(e.day)) keys.push_back(pair_key(e.actor, e.target));
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
}

}  // namespace guardian
