#pragma once

// Agent-based generator of a synthetic avatar platform.
//
// Players interact daily over five layers along a static friendship backbone
// (preferential attachment). Predators run grooming episodes against one
// target at a time; DM and AC contacts inside and outside episodes can turn
// into violations. Received warning messages lower an agent's violation
// hazard and push its (and its contacts') activity out of night hours, with a
// response that decays over time and habituates with repeats.

#include "guardian/domain.hpp"
#include "guardian/errors.hpp"
#include "guardian/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace guardian {

// ============================================================================
// CONFIGURATION
// ============================================================================

struct ResponseParams {
    double e0 = 0.2;           // initial hazard reduction
    double tau = 42.0;         // decay time constant, days
    double habituation = 0.5;  // multiplier per repeated message
};

struct SimConfig {
    std::uint32_t population = 20000;
    double female_ratio = 0.61;

    double age_mean_female = 21.0;
    double age_mean_male = 25.0;
    double age_sd = 9.0;
    int age_min = 8;
    int age_max = 70;
    int install_span_days = 720;

    double predator_fraction_female = 0.06;
    double predator_fraction_male = 0.10;
    // Occasional offenders: no grooming episodes, moderate propensity.
    double risky_fraction_female = 0.6;
    double risky_fraction_male = 0.5;
    double risky_propensity_min = 0.1;
    double risky_propensity_max = 0.2;
    double background_propensity = 0.02;  // upper bound for everyone else

    double login_prob_min = 0.15;
    double login_prob_max = 0.75;
    std::array<double, kLayerCount> layer_rates{2.0, 1.2, 0.6, 0.15, 1.2};  // events per login day
    std::uint32_t backbone_degree = 3;
    double stranger_share = 0.3;

    double night_share_mean = 0.35;
    double predator_night_share = 0.7;
    double night_multiplier = 3.0;
    double base_hazard = 0.2;

    double episode_start_rate = 0.012;
    double episode_mean_days = 12.0;
    double episode_dm_rate = 2.0;
    double episode_ac_rate = 2.0;
    double episode_like_rate = 1.0;
    double episode_comment_rate = 0.5;
    double victim_reply_rate = 1.0;

    int penalty_threshold = 10;

    ResponseParams response;
    double responsiveness_female = 1.0;
    double responsiveness_male = 0.1;
    double responsiveness_sd = 0.1;

    int horizon_days = 174;
    std::uint64_t seed = 1;
};

inline void validate(const SimConfig& c) {
    auto prob = [](const std::string& name, double v) {
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(name, "must lie in [0,1]");
    };
    auto nonneg = [](const std::string& name, double v) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(name, "must be >= 0");
    };
    if (c.population == 0) throw ConfigError("sim.population", "must be >= 1");
    prob("sim.female_ratio", c.female_ratio);
    prob("sim.predator_fraction_female", c.predator_fraction_female);
    prob("sim.predator_fraction_male", c.predator_fraction_male);
    prob("sim.risky_fraction_female", c.risky_fraction_female);
    prob("sim.risky_fraction_male", c.risky_fraction_male);
    prob("sim.risky_propensity_min", c.risky_propensity_min);
    prob("sim.risky_propensity_max", c.risky_propensity_max);
    if (c.risky_propensity_min > c.risky_propensity_max)
        throw ConfigError("sim.risky_propensity_min", "must be <= sim.risky_propensity_max");
    prob("sim.background_propensity", c.background_propensity);
    prob("sim.login_prob_min", c.login_prob_min);
    prob("sim.login_prob_max", c.login_prob_max);
    if (c.login_prob_min > c.login_prob_max) throw ConfigError("sim.login_prob_min", "must be <= sim.login_prob_max");
    prob("sim.stranger_share", c.stranger_share);
    prob("sim.night_share_mean", c.night_share_mean);
    prob("sim.predator_night_share", c.predator_night_share);
    prob("sim.base_hazard", c.base_hazard);
    prob("sim.episode_start_rate", c.episode_start_rate);
    prob("response.e0", c.response.e0);
    prob("response.habituation", c.response.habituation);
    prob("sim.responsiveness_female", c.responsiveness_female);
    prob("sim.responsiveness_male", c.responsiveness_male);
    nonneg("sim.responsiveness_sd", c.responsiveness_sd);
    nonneg("sim.night_multiplier", c.night_multiplier);
    nonneg("sim.age_sd", c.age_sd);
    nonneg("sim.episode_dm_rate", c.episode_dm_rate);
    nonneg("sim.episode_ac_rate", c.episode_ac_rate);
    nonneg("sim.episode_like_rate", c.episode_like_rate);
    nonneg("sim.episode_comment_rate", c.episode_comment_rate);
    nonneg("sim.victim_reply_rate", c.victim_reply_rate);
    for (Layer l : kAllLayers) {
        std::string key = "sim.rate_";
        for (char ch : layer_name(l)) key += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        nonneg(key, c.layer_rates[layer_index(l)]);
    }
    if (!(c.episode_mean_days >= 1.0)) throw ConfigError("sim.episode_mean_days", "must be >= 1");
    if (!(c.response.tau > 0.0)) throw ConfigError("response.tau", "must be > 0");
    if (c.horizon_days < 1) throw ConfigError("sim.horizon_days", "must be >= 1");
    if (c.age_min < 0 || c.age_min > c.age_max) throw ConfigError("sim.age_min", "must satisfy 0 <= age_min <= age_max");
    if (c.install_span_days < 0) throw ConfigError("sim.install_span_days", "must be >= 0");
    if (c.penalty_threshold < 1) throw ConfigError("sim.penalty_threshold", "must be >= 1");
}

// ============================================================================
// INTERVENTION RESPONSE
// ============================================================================

// Hazard multiplier after `repeat_count` messages, the latest received
// `days_since_last` days ago: 1 - e0 * h^(repeat-1) * exp(-days/tau).
inline double intervention_response(int days_since_last, int repeat_count, const ResponseParams& p) {
    if (repeat_count < 1) return 1.0;
    const double impulse = p.e0 * std::pow(p.habituation, repeat_count - 1) *
                           std::exp(-static_cast<double>(std::max(days_since_last, 0)) / p.tau);
    return 1.0 - impulse;
}

// Per-player message receipt days, strictly increasing.
class InterventionHistory {
public:
    InterventionHistory() = default;
    explicit InterventionHistory(std::size_t n_players) : receipts_(n_players) {}

    void record(PlayerId player, Day day) {
        auto& r = receipts_.at(player);
        if (!r.empty() && day <= r.back()) throw std::invalid_argument("intervention days must be strictly increasing");
        r.push_back(day);
    }

    [[nodiscard]] std::span<const Day> receipts(PlayerId player) const { return receipts_.at(player); }
    [[nodiscard]] std::size_t size() const { return receipts_.size(); }

    // Response multiplier in effect on `day` for a player with responsiveness
    // scaling the configured initial reduction.
    [[nodiscard]] double multiplier(PlayerId player, Day day, double responsiveness, const ResponseParams& p) const {
        const auto& r = receipts_[player];
        if (r.empty() || r.front() > day) return 1.0;
        const auto count = std::upper_bound(r.begin(), r.end(), day) - r.begin();
        const Day last = r[static_cast<std::size_t>(count - 1)];
        ResponseParams scaled = p;
        scaled.e0 = p.e0 * responsiveness;
        return intervention_response(day - last, static_cast<int>(count), scaled);
    }

private:
    std::vector<std::vector<Day>> receipts_;
};

// ============================================================================
// WORLD STATE
// ============================================================================

// Behavioral profile kept alongside PlayerRecord; never exported as a feature.
struct AgentProfile {
    double login_prob = 0.0;
    double activity = 1.0;
    double night_share = 0.0;
    bool predator = false;
};

struct Episode {
    PlayerId target = 0;
    Day end_day = -1;  // inclusive; inactive once day > end_day
};

struct WorldState {
    SimConfig config;
    Day day = 0;
    std::vector<PlayerRecord> players;
    std::vector<AgentProfile> profiles;
    std::vector<std::uint32_t> friend_offsets;  // CSR friendship backbone
    std::vector<PlayerId> friends;
    std::vector<double> popularity_cdf;      // preferential attachment over backbone degree
    std::vector<double> susceptibility_cdf;  // predator target choice
    std::vector<Episode> episodes;
    std::vector<std::uint32_t> violation_counts;
    InterventionHistory interventions;
    EventLog log;

    [[nodiscard]] std::span<const PlayerId> friends_of(PlayerId p) const {
        return std::span<const PlayerId>(friends).subspan(friend_offsets[p], friend_offsets[p + 1] - friend_offsets[p]);
    }
};

struct DayLog {
    Day day = 0;
    std::vector<InteractionEvent> events;
};

namespace detail {

enum StreamTag : std::uint64_t { kPopulation = 1, kBackbone = 2, kDaily = 3 };

inline std::size_t sample_cdf(const std::vector<double>& cdf, Rng& rng) {
    const double u = rng.uniform() * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline std::uint8_t draw_hour(Rng& rng, double night_share) {
    if (rng.bernoulli(night_share)) {
        const auto k = static_cast<int>(rng.below(kNightWindows));  // 20..23, 0..4
        return static_cast<std::uint8_t>(k < 4 ? 20 + k : k - 4);
    }
    return static_cast<std::uint8_t>(5 + rng.below(15));  // 5..19
}

inline std::uint8_t day_hour(Rng& rng) { return static_cast<std::uint8_t>(5 + rng.below(15)); }

inline void build_backbone(WorldState& w) {
    const std::uint32_t n = w.config.population;
    const std::uint32_t m = w.config.backbone_degree;
    Rng rng = Rng::keyed({w.config.seed, kBackbone});
    std::vector<std::pair<PlayerId, PlayerId>> edges;
    std::vector<PlayerId> endpoints;  // each node repeated by degree
    const std::uint32_t core = std::min(n, m + 1);
    for (PlayerId a = 0; a < core; ++a)
        for (PlayerId b = a + 1; b < core; ++b) {
            edges.emplace_back(a, b);
            endpoints.push_back(a);
            endpoints.push_back(b);
        }
    std::vector<PlayerId> chosen;
    for (PlayerId v = core; v < n; ++v) {
        chosen.clear();
        for (std::uint32_t tries = 0; chosen.size() < m && tries < 20 * m; ++tries) {
            const PlayerId u = endpoints.empty() ? static_cast<PlayerId>(rng.below(v)) : endpoints[rng.below(endpoints.size())];
            if (u != v && std::find(chosen.begin(), chosen.end(), u) == chosen.end()) chosen.push_back(u);
        }
        for (PlayerId u : chosen) {
            edges.emplace_back(u, v);
            endpoints.push_back(u);
            endpoints.push_back(v);
        }
    }
    std::vector<std::uint32_t> degree(n, 0);
    for (auto [a, b] : edges) {
        ++degree[a];
        ++degree[b];
    }
    w.friend_offsets.assign(n + 1, 0);
    for (std::uint32_t i = 0; i < n; ++i) w.friend_offsets[i + 1] = w.friend_offsets[i] + degree[i];
    w.friends.assign(w.friend_offsets[n], 0);
    std::vector<std::uint32_t> fill(w.friend_offsets.begin(), w.friend_offsets.end() - 1);
    for (auto [a, b] : edges) {
        w.friends[fill[a]++] = b;
        w.friends[fill[b]++] = a;
    }
    for (std::uint32_t i = 0; i < n; ++i)
        std::sort(w.friends.begin() + w.friend_offsets[i], w.friends.begin() + w.friend_offsets[i + 1]);
    w.popularity_cdf.resize(n);
    double acc = 0.0;
    for (std::uint32_t i = 0; i < n; ++i) w.popularity_cdf[i] = acc += 1.0 + degree[i];
}

}  // namespace detail

// ============================================================================
// POPULATION
// ============================================================================

inline WorldState generate_population(const SimConfig& config) {
    validate(config);
    WorldState w;
    w.config = config;
    const std::uint32_t n = config.population;
    w.players.resize(n);
    w.profiles.resize(n);
    for (PlayerId i = 0; i < n; ++i) {
        Rng rng = Rng::keyed({config.seed, detail::kPopulation, i});
        PlayerRecord& p = w.players[i];
        AgentProfile& a = w.profiles[i];
        p.id = i;
        p.gender = rng.bernoulli(config.female_ratio) ? Gender::Female : Gender::Male;
        const bool female = p.gender == Gender::Female;
        std::normal_distribution<double> age_dist(female ? config.age_mean_female : config.age_mean_male, config.age_sd);
        p.age = std::clamp(static_cast<int>(std::lround(age_dist(rng))), config.age_min, config.age_max);
        p.install_day = -static_cast<Day>(rng.below(static_cast<std::uint64_t>(config.install_span_days) + 1));

        a.predator = rng.bernoulli(female ? config.predator_fraction_female : config.predator_fraction_male);
        const bool risky = !a.predator && rng.bernoulli(female ? config.risky_fraction_female : config.risky_fraction_male);
        const double u = rng.uniform();
        if (a.predator) p.predator_propensity = 0.5 + 0.5 * u;
        else if (risky) p.predator_propensity = config.risky_propensity_min + (config.risky_propensity_max - config.risky_propensity_min) * u;
        else p.predator_propensity = config.background_propensity * u;

        double susc = p.age < 18 ? 0.5 + 0.5 * rng.uniform() : (p.age <= 25 ? 0.2 + 0.4 * rng.uniform() : 0.3 * rng.uniform());
        p.victim_susceptibility = detail::clamp01(susc * (female ? 1.0 : 0.7));

        std::normal_distribution<double> resp(female ? config.responsiveness_female : config.responsiveness_male,
                                              config.responsiveness_sd);
        p.responsiveness = detail::clamp01(resp(rng));

        a.login_prob = config.login_prob_min + (config.login_prob_max - config.login_prob_min) * rng.uniform();
        std::lognormal_distribution<double> act(-0.125, 0.5);
        a.activity = act(rng);
        const double base_night = a.predator ? config.predator_night_share : config.night_share_mean;
        a.night_share = detail::clamp01(base_night + 0.15 * (rng.uniform() - 0.5));
    }
    detail::build_backbone(w);
    w.susceptibility_cdf.resize(n);
    double acc = 0.0;
    for (PlayerId i = 0; i < n; ++i) {
        const double s = w.players[i].victim_susceptibility;
        w.susceptibility_cdf[i] = acc += s * s + 1e-6;
    }
    w.episodes.assign(n, Episode{});
    w.violation_counts.assign(n, 0);
    w.interventions = InterventionHistory(n);
    return w;
}

// ============================================================================
// DAILY STEP
// ============================================================================

// Generates one day of activity and advances the clock. Each agent draws from
// its own (seed, player, day) stream against the state as of the start of
// the day, so the output does not depend on processing order.
inline DayLog step_day(WorldState& w) {
    const SimConfig& c = w.config;
    if (w.day >= c.horizon_days) throw std::out_of_range("step_day: simulation horizon reached");
    const Day d = w.day;
    const std::uint32_t n = c.population;

    std::vector<double> response(n, 1.0);
    for (PlayerId i = 0; i < n; ++i)
        response[i] = w.interventions.multiplier(i, d, w.players[i].responsiveness, c.response);

    // Active episodes as of the start of the day, indexed by target.
    std::vector<std::pair<PlayerId, PlayerId>> by_target;
    for (PlayerId i = 0; i < n; ++i)
        if (w.episodes[i].end_day >= d) by_target.emplace_back(w.episodes[i].target, i);
    std::sort(by_target.begin(), by_target.end());

    DayLog out;
    out.day = d;
    std::vector<Episode> next_episodes = w.episodes;

    for (PlayerId i = 0; i < n; ++i) {
        Rng rng = Rng::keyed({c.seed, detail::kDaily, i, static_cast<std::uint64_t>(d)});
        const AgentProfile& prof = w.profiles[i];
        const PlayerRecord& me = w.players[i];
        if (!rng.bernoulli(prof.login_prob)) continue;

        auto emit = [&](Layer layer, PlayerId target, double night_share) {
            if (target == i) return;
            InteractionEvent e;
            e.day = d;
            e.layer = layer;
            e.actor = i;
            e.target = target;
            e.hour = detail::draw_hour(rng, night_share);
            if (is_night_hour(e.hour) && !rng.bernoulli(response[i] * response[target])) e.hour = detail::day_hour(rng);
            if (layer == Layer::AC || layer == Layer::DM) {
                const double night = is_night_hour(e.hour) ? c.night_multiplier : 1.0;
                const double hazard = c.base_hazard * me.predator_propensity *
                                      w.players[target].victim_susceptibility * night * response[i];
                e.violation = rng.bernoulli(std::min(1.0, hazard));
            }
            out.events.push_back(e);
        };
        auto poisson = [&](double mean) {
            if (mean <= 0.0) return 0;
            std::poisson_distribution<int> dist(mean);
            return dist(rng);
        };
        const auto my_friends = w.friends_of(i);
        auto pick_friend = [&]() -> PlayerId {
            if (my_friends.empty()) return i;
            // Preferential attachment within the backbone: weight by degree.
            double total = 0.0;
            for (PlayerId f : my_friends) total += 1.0 + (w.friend_offsets[f + 1] - w.friend_offsets[f]);
            double u = rng.uniform() * total;
            for (PlayerId f : my_friends) {
                u -= 1.0 + (w.friend_offsets[f + 1] - w.friend_offsets[f]);
                if (u < 0.0) return f;
            }
            return my_friends.back();
        };
        auto pick_stranger = [&]() { return static_cast<PlayerId>(detail::sample_cdf(w.popularity_cdf, rng)); };

        // Routine activity.
        for (Layer layer : kAllLayers) {
            const int k = poisson(c.layer_rates[layer_index(layer)] * prof.activity);
            for (int j = 0; j < k; ++j) {
                PlayerId target;
                if (layer == Layer::DM) target = pick_friend();
                else if (layer == Layer::Follow) target = rng.bernoulli(0.5) ? pick_friend() : pick_stranger();
                else target = rng.bernoulli(c.stranger_share) ? pick_stranger() : pick_friend();
                emit(layer, target, prof.night_share);
            }
        }

        // Grooming episodes.
        if (prof.predator) {
            Episode ep = w.episodes[i];
            if (ep.end_day < d && rng.bernoulli(c.episode_start_rate)) {
                ep.target = static_cast<PlayerId>(detail::sample_cdf(w.susceptibility_cdf, rng));
                if (ep.target != i) {
                    std::geometric_distribution<int> dur(1.0 / c.episode_mean_days);
                    ep.end_day = d + dur(rng);
                    next_episodes[i] = ep;
                    emit(Layer::Follow, ep.target, prof.night_share);
                }
            }
            if (ep.end_day >= d && ep.target != i) {
                for (int j = poisson(c.episode_dm_rate); j > 0; --j) emit(Layer::DM, ep.target, prof.night_share);
                for (int j = poisson(c.episode_ac_rate); j > 0; --j) emit(Layer::AC, ep.target, prof.night_share);
                for (int j = poisson(c.episode_like_rate); j > 0; --j) emit(Layer::Like, ep.target, prof.night_share);
                for (int j = poisson(c.episode_comment_rate); j > 0; --j) emit(Layer::Comment, ep.target, prof.night_share);
            }
        }

        // Targets answer the players grooming them.
        auto lo = std::lower_bound(by_target.begin(), by_target.end(), std::make_pair(i, PlayerId{0}));
        for (auto it = lo; it != by_target.end() && it->first == i; ++it)
            for (int j = poisson(c.victim_reply_rate); j > 0; --j) emit(Layer::DM, it->second, prof.night_share);
    }

    for (const auto& e : out.events) {
        if (!e.violation) continue;
        if (++w.violation_counts[e.actor] >= static_cast<std::uint32_t>(c.penalty_threshold))
            w.players[e.actor].penalized = true;
    }
    w.episodes = std::move(next_episodes);
    w.log.append_day(d, out.events);
    ++w.day;
    return out;
}

inline void run_until(WorldState& w, Day day) {
    while (w.day < day) step_day(w);
}

}  // namespace guardian
