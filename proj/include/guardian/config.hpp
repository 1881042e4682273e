#pragma once

// Run configuration: every stage parameter in one INI-style file.
//
//   [section]
//   key = value      ; or # comments
//
// Unset keys keep their defaults, unknown keys are errors, and serialize()
// writes every key so that load -> serialize -> load is a fixed point.

#include "guardian/analysis.hpp"
#include "guardian/artifact.hpp"
#include "guardian/errors.hpp"
#include "guardian/gat.hpp"
#include "guardian/gbdt.hpp"
#include "guardian/pipeline.hpp"
#include "guardian/simulator.hpp"
#include "guardian/stacker.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace guardian {

struct TrialConfig {
    Day start_day = 36;        // first trial day; the risk model trains on the days before it
    int days = 138;
    int followup_days = 168;   // simulated after the last trial day so late windows are observed
    std::uint64_t seed = 20220213;
    std::string message =
        "Your recent activity resembles patterns seen before past trouble on this platform. "
        "Be careful with people you only know online, and talk to someone you trust if anything worries you.";
};

struct RunConfig {
    SimConfig sim;
    gat::TrainHyper gat;
    gbdt::GbdtHyper gbdt;
    double stack_negative_ratio = 1.0;
    std::uint64_t stack_seed = 11;
    PipelineConfig pipeline;
    TrialConfig trial;
    AnalysisOptions analysis;
    std::string out_dir = "out";

    [[nodiscard]] Day trial_end() const { return trial.start_day + trial.days; }  // exclusive
    [[nodiscard]] Day horizon() const { return trial_end() + trial.followup_days; }

    // Simulator settings with the horizon implied by the trial schedule.
    [[nodiscard]] SimConfig effective_sim() const {
        SimConfig s = sim;
        s.horizon_days = horizon();
        return s;
    }

    [[nodiscard]] PipelineConfig effective_pipeline() const {
        PipelineConfig p = pipeline;
        p.penalty_threshold = sim.penalty_threshold;
        return p;
    }

    [[nodiscard]] RiskModelHyper model_hyper() const {
        RiskModelHyper h;
        h.gat = gat;
        h.gbdt = gbdt;
        h.stack_negative_ratio = stack_negative_ratio;
        h.seed = stack_seed;
        return h;
    }

    // Training anchors: weak learners two weeks before the trial, the
    // metamodel one week before; each anchor labels the week before it.
    [[nodiscard]] Day weak_anchor() const { return trial.start_day - 2 * kLabelWindowDays; }
    [[nodiscard]] Day stack_anchor() const { return trial.start_day - kLabelWindowDays; }
};

// ============================================================================
// FIELD TABLE
// ============================================================================

namespace detail {

struct ConfigField {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;

    [[nodiscard]] std::string name() const { return section + "." + key; }
};

template <typename T>
std::string to_text(const T& v) {
    if constexpr (std::is_same_v<T, double>) return format_double(v);
    else if constexpr (std::is_same_v<T, std::string>) return v;
    else return std::to_string(v);
}

template <typename T>
T from_text(std::string_view s) {
    if constexpr (std::is_same_v<T, double>) return parse_double(s);
    else if constexpr (std::is_same_v<T, std::string>) return std::string(s);
    else return parse_int<T>(s);
}

template <typename T, typename Ref>
ConfigField field(std::string section, std::string key, Ref ref) {
    return {std::move(section), std::move(key), [ref](const RunConfig& c) { return to_text<T>(ref(const_cast<RunConfig&>(c))); },
            [ref](RunConfig& c, std::string_view s) { ref(c) = from_text<T>(s); }};
}

#define GUARDIAN_FIELD(T, SECTION, KEY, EXPR) field<T>(SECTION, KEY, [](RunConfig& c) -> T& { return EXPR; })

inline const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = [] {
        std::vector<ConfigField> f{
            GUARDIAN_FIELD(std::uint32_t, "sim", "population", c.sim.population),
            GUARDIAN_FIELD(std::uint64_t, "sim", "seed", c.sim.seed),
            GUARDIAN_FIELD(double, "sim", "female_ratio", c.sim.female_ratio),
            GUARDIAN_FIELD(double, "sim", "age_mean_female", c.sim.age_mean_female),
            GUARDIAN_FIELD(double, "sim", "age_mean_male", c.sim.age_mean_male),
            GUARDIAN_FIELD(double, "sim", "age_sd", c.sim.age_sd),
            GUARDIAN_FIELD(int, "sim", "age_min", c.sim.age_min),
            GUARDIAN_FIELD(int, "sim", "age_max", c.sim.age_max),
            GUARDIAN_FIELD(int, "sim", "install_span_days", c.sim.install_span_days),
            GUARDIAN_FIELD(double, "sim", "predator_fraction_female", c.sim.predator_fraction_female),
            GUARDIAN_FIELD(double, "sim", "predator_fraction_male", c.sim.predator_fraction_male),
            GUARDIAN_FIELD(double, "sim", "risky_fraction_female", c.sim.risky_fraction_female),
            GUARDIAN_FIELD(double, "sim", "risky_fraction_male", c.sim.risky_fraction_male),
            GUARDIAN_FIELD(double, "sim", "risky_propensity_min", c.sim.risky_propensity_min),
            GUARDIAN_FIELD(double, "sim", "risky_propensity_max", c.sim.risky_propensity_max),
            GUARDIAN_FIELD(double, "sim", "background_propensity", c.sim.background_propensity),
            GUARDIAN_FIELD(double, "sim", "login_prob_min", c.sim.login_prob_min),
            GUARDIAN_FIELD(double, "sim", "login_prob_max", c.sim.login_prob_max),
            GUARDIAN_FIELD(double, "sim", "rate_ac", c.sim.layer_rates[0]),
            GUARDIAN_FIELD(double, "sim", "rate_dm", c.sim.layer_rates[1]),
            GUARDIAN_FIELD(double, "sim", "rate_comment", c.sim.layer_rates[2]),
            GUARDIAN_FIELD(double, "sim", "rate_follow", c.sim.layer_rates[3]),
            GUARDIAN_FIELD(double, "sim", "rate_like", c.sim.layer_rates[4]),
            GUARDIAN_FIELD(std::uint32_t, "sim", "backbone_degree", c.sim.backbone_degree),
            GUARDIAN_FIELD(double, "sim", "stranger_share", c.sim.stranger_share),
            GUARDIAN_FIELD(double, "sim", "night_share_mean", c.sim.night_share_mean),
            GUARDIAN_FIELD(double, "sim", "predator_night_share", c.sim.predator_night_share),
            GUARDIAN_FIELD(double, "sim", "night_multiplier", c.sim.night_multiplier),
            GUARDIAN_FIELD(double, "sim", "base_hazard", c.sim.base_hazard),
            GUARDIAN_FIELD(double, "sim", "episode_start_rate", c.sim.episode_start_rate),
            GUARDIAN_FIELD(double, "sim", "episode_mean_days", c.sim.episode_mean_days),
            GUARDIAN_FIELD(double, "sim", "episode_dm_rate", c.sim.episode_dm_rate),
            GUARDIAN_FIELD(double, "sim", "episode_ac_rate", c.sim.episode_ac_rate),
            GUARDIAN_FIELD(double, "sim", "episode_like_rate", c.sim.episode_like_rate),
            GUARDIAN_FIELD(double, "sim", "episode_comment_rate", c.sim.episode_comment_rate),
            GUARDIAN_FIELD(double, "sim", "victim_reply_rate", c.sim.victim_reply_rate),
            GUARDIAN_FIELD(int, "sim", "penalty_threshold", c.sim.penalty_threshold),
            GUARDIAN_FIELD(double, "sim", "responsiveness_female", c.sim.responsiveness_female),
            GUARDIAN_FIELD(double, "sim", "responsiveness_male", c.sim.responsiveness_male),
            GUARDIAN_FIELD(double, "sim", "responsiveness_sd", c.sim.responsiveness_sd),
            GUARDIAN_FIELD(double, "response", "e0", c.sim.response.e0),
            GUARDIAN_FIELD(double, "response", "tau", c.sim.response.tau),
            GUARDIAN_FIELD(double, "response", "habituation", c.sim.response.habituation),
            GUARDIAN_FIELD(double, "gat", "learning_rate", c.gat.learning_rate),
            GUARDIAN_FIELD(int, "gat", "epochs", c.gat.epochs),
            GUARDIAN_FIELD(double, "gat", "negative_ratio", c.gat.negative_ratio),
            GUARDIAN_FIELD(double, "gat", "weight_decay", c.gat.weight_decay),
            GUARDIAN_FIELD(std::uint64_t, "gat", "seed", c.gat.seed),
            GUARDIAN_FIELD(std::size_t, "gat", "heads", c.gat.heads),
            GUARDIAN_FIELD(std::size_t, "gat", "d_out", c.gat.d_out),
            GUARDIAN_FIELD(int, "gbdt", "rounds", c.gbdt.rounds),
            GUARDIAN_FIELD(int, "gbdt", "max_depth", c.gbdt.max_depth),
            GUARDIAN_FIELD(double, "gbdt", "learning_rate", c.gbdt.learning_rate),
            GUARDIAN_FIELD(std::size_t, "gbdt", "min_leaf", c.gbdt.min_leaf),
            GUARDIAN_FIELD(double, "gbdt", "l2", c.gbdt.l2),
            GUARDIAN_FIELD(double, "gbdt", "negative_ratio", c.stack_negative_ratio),
            GUARDIAN_FIELD(std::uint64_t, "gbdt", "seed", c.stack_seed),
            GUARDIAN_FIELD(double, "pipeline", "threshold", c.pipeline.threshold),
            GUARDIAN_FIELD(std::size_t, "pipeline", "top_k", c.pipeline.top_k),
            GUARDIAN_FIELD(int, "pipeline", "cooldown_days", c.pipeline.cooldown_days),
            GUARDIAN_FIELD(int, "pipeline", "activity_window_days", c.pipeline.activity_window_days),
            GUARDIAN_FIELD(int, "pipeline", "min_login_days", c.pipeline.min_login_days),
            GUARDIAN_FIELD(int, "trial", "start_day", c.trial.start_day),
            GUARDIAN_FIELD(int, "trial", "days", c.trial.days),
            GUARDIAN_FIELD(int, "trial", "followup_days", c.trial.followup_days),
            GUARDIAN_FIELD(std::uint64_t, "trial", "seed", c.trial.seed),
            GUARDIAN_FIELD(std::string, "trial", "message", c.trial.message),
            GUARDIAN_FIELD(int, "analysis", "night_period_days", c.analysis.night_period_days),
            GUARDIAN_FIELD(std::size_t, "analysis", "repeated_windows", c.analysis.repeated_windows),
            GUARDIAN_FIELD(std::string, "run", "out", c.out_dir),
        };
        f.push_back({"gat", "activation",
                     [](const RunConfig& c) { return std::string(c.gat.activation == gat::Activation::Elu ? "elu" : "linear"); },
                     [](RunConfig& c, std::string_view s) {
                         if (s == "elu") c.gat.activation = gat::Activation::Elu;
                         else if (s == "linear") c.gat.activation = gat::Activation::Linear;
                         else throw std::invalid_argument("expected 'elu' or 'linear'");
                     }});
        f.push_back({"gat", "optimizer",
                     [](const RunConfig& c) { return std::string(c.gat.optimizer == gat::Optimizer::Adam ? "adam" : "gd"); },
                     [](RunConfig& c, std::string_view s) {
                         if (s == "adam") c.gat.optimizer = gat::Optimizer::Adam;
                         else if (s == "gd") c.gat.optimizer = gat::Optimizer::GradientDescent;
                         else throw std::invalid_argument("expected 'adam' or 'gd'");
                     }});
        f.push_back({"analysis", "windows", [](const RunConfig& c) { return format_windows(c.analysis.windows); },
                     [](RunConfig& c, std::string_view s) { c.analysis.windows = parse_windows(s); }});
        f.push_back({"analysis", "unit", [](const RunConfig& c) { return std::string(unit_name(c.analysis.unit)); },
                     [](RunConfig& c, std::string_view s) { c.analysis.unit = parse_unit(s); }});
        f.push_back({"analysis", "scope", [](const RunConfig& c) { return std::string(scope_name(c.analysis.scope)); },
                     [](RunConfig& c, std::string_view s) { c.analysis.scope = parse_scope(s); }});
        // Keep sections together in the serialized file.
        const std::vector<std::string> order{"sim", "response", "gat", "gbdt", "pipeline", "trial", "analysis", "run"};
        std::stable_sort(f.begin(), f.end(), [&](const ConfigField& a, const ConfigField& b) {
            return std::find(order.begin(), order.end(), a.section) < std::find(order.begin(), order.end(), b.section);
        });
        return f;
    }();
    return fields;
}

#undef GUARDIAN_FIELD

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace detail

// ============================================================================
// VALIDATION
// ============================================================================

inline void validate(const RunConfig& c) {
    validate(c.effective_sim());
    try {
        gat::validate(c.gat);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("gat", e.what());
    }
    try {
        gbdt::validate(c.gbdt);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("gbdt", e.what());
    }
    if (!(c.stack_negative_ratio >= 0.0)) throw ConfigError("gbdt.negative_ratio", "must be >= 0 (0 keeps every negative)");
    validate(c.effective_pipeline());
    if (c.trial.start_day < kFeatureWindowDays + 3 * kLabelWindowDays + 1)
        throw ConfigError("trial.start_day", "must be >= " + std::to_string(kFeatureWindowDays + 3 * kLabelWindowDays + 1) +
                                                 " so the training windows fit before the trial");
    if (c.trial.days < 1) throw ConfigError("trial.days", "must be >= 1");
    if (c.trial.followup_days < 0) throw ConfigError("trial.followup_days", "must be >= 0");
    if (c.trial.message.empty()) throw ConfigError("trial.message", "must not be empty");
    validate_windows(c.analysis.windows);
    if (c.analysis.night_period_days < 1) throw ConfigError("analysis.night_period_days", "must be >= 1");
    if (c.out_dir.empty()) throw ConfigError("run.out", "must not be empty");
}

// ============================================================================
// LOAD / SERIALIZE
// ============================================================================

inline RunConfig parse_config(std::istream& in) {
    RunConfig c;
    const auto& fields = detail::config_fields();
    std::string section;
    std::string raw;
    std::set<std::string> seen;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto line = detail::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no), "unterminated section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no), "expected key = value");
        const std::string key(detail::trim(line.substr(0, eq)));
        const auto value = detail::trim(line.substr(eq + 1));
        const std::string name = section + "." + key;
        auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.section == section && f.key == key; });
        if (it == fields.end()) throw ConfigError(name, "unknown key");
        if (!seen.insert(name).second) throw ConfigError(name, "set more than once");
        try {
            it->set(c, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(name, e.what());
        }
    }
    validate(c);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("missing config file: " + path.string());
    return parse_config(in);
}

inline std::string serialize(const RunConfig& c) {
    std::ostringstream out;
    std::string section;
    for (const auto& f : detail::config_fields()) {
        if (f.section != section) {
            out << (section.empty() ? "" : "\n") << '[' << f.section << "]\n";
            section = f.section;
        }
        out << f.key << " = " << f.get(c) << '\n';
    }
    return out.str();
}

// Applies a single "section.key=value" override.
inline void set_config_value(RunConfig& c, std::string_view name, std::string_view value) {
    const auto& fields = detail::config_fields();
    auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.name() == name; });
    if (it == fields.end()) throw ConfigError(std::string(name), "unknown key");
    try {
        it->set(c, value);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string(name), e.what());
    }
}

// Fingerprint of every setting that shapes the simulated data, the model and
// the ledger. The output directory and the analysis options are left out so
// one trial can be analyzed several ways.
inline std::uint64_t config_hash(const RunConfig& c) {
    RunConfig copy = c;
    copy.out_dir.clear();
    copy.analysis = AnalysisOptions{};
    return fnv1a(serialize(copy));
}

}  // namespace guardian
