#pragma once

// Daily operational loop: risk scores from scored relationships, eligibility
// filtering, top-K listing per risk kind and arm, arm assignment and capped
// message dispatch, recorded in an append-only trial ledger.

#include "guardian/artifact.hpp"
#include "guardian/domain.hpp"
#include "guardian/rng.hpp"
#include "guardian/stacker.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace guardian {

// ============================================================================
// PARAMETERS
// ============================================================================

struct PipelineConfig {
    double threshold = 0.95;
    std::size_t top_k = 100;
    int cooldown_days = 9;
    int activity_window_days = 7;
    int min_login_days = 3;
    int penalty_threshold = 10;  // cumulative violations that trigger a penalty
};

inline void validate(const PipelineConfig& c) {
    if (!(c.threshold > 0.0 && c.threshold < 1.0)) throw ConfigError("pipeline.threshold", "must lie in (0,1)");
    if (c.top_k < 1) throw ConfigError("pipeline.top_k", "must be >= 1");
    if (c.cooldown_days < 0) throw ConfigError("pipeline.cooldown_days", "must be >= 0");
    if (c.activity_window_days < 1 || c.activity_window_days > 63)
        throw ConfigError("pipeline.activity_window_days", "must lie in [1,63]");
    if (c.min_login_days < 0 || c.min_login_days > c.activity_window_days)
        throw ConfigError("pipeline.min_login_days", "must lie in [0, activity_window_days]");
    if (c.penalty_threshold < 1) throw ConfigError("pipeline.penalty_threshold", "must be >= 1");
}

enum class RiskKind : std::uint8_t { Violator = 0, Victim = 1 };
enum class Arm : std::uint8_t { Intervention = 0, Control = 1 };

inline constexpr std::string_view risk_kind_name(RiskKind k) { return k == RiskKind::Violator ? "violator" : "victim"; }
inline constexpr std::string_view arm_name(Arm a) { return a == Arm::Intervention ? "intervention" : "control"; }

inline RiskKind parse_risk_kind(std::string_view s) {
    if (s == "violator") return RiskKind::Violator;
    if (s == "victim") return RiskKind::Victim;
    throw std::invalid_argument("unknown risk kind '" + std::string(s) + "'");
}

inline Arm parse_arm(std::string_view s) {
    if (s == "intervention") return Arm::Intervention;
    if (s == "control") return Arm::Control;
    throw std::invalid_argument("unknown arm '" + std::string(s) + "'");
}

// ============================================================================
// RISK SCORES
// ============================================================================

struct RiskAssessment {
    Day day = 0;
    double threshold = 0.95;
    std::vector<double> violator;  // indexed by player id
    std::vector<double> victim;

    [[nodiscard]] const std::vector<double>& scores(RiskKind k) const {
        return k == RiskKind::Violator ? violator : victim;
    }
};

// Sums of relationship probabilities strictly above `threshold`, outgoing for
// the violator score and incoming for the victim score.
inline RiskAssessment risk_scores(Day day, std::span<const ScoredEdge> edges, std::size_t n_players, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("risk_scores: threshold must lie in (0,1)");
    RiskAssessment a;
    a.day = day;
    a.threshold = threshold;
    a.violator.assign(n_players, 0.0);
    a.victim.assign(n_players, 0.0);
    for (const auto& e : edges) {
        if (!(e.probability >= 0.0 && e.probability <= 1.0)) throw std::invalid_argument("risk_scores: probability outside [0,1]");
        if (e.actor >= n_players || e.target >= n_players) throw std::out_of_range("risk_scores: player id out of range");
        if (e.probability > threshold) {
            a.violator[e.actor] += e.probability;
            a.victim[e.target] += e.probability;
        }
    }
    return a;
}

// ============================================================================
// ELIGIBILITY
// ============================================================================

// Per-player state needed by the listing rules, folded forward one day at a
// time from the event log.
class EligibilityState {
public:
    static constexpr Day kNever = -1'000'000;

    EligibilityState() = default;
    EligibilityState(std::size_t n_players, const PipelineConfig& config)
        : config_(config), last_listed_(n_players, kNever), login_mask_(n_players, 0),
          violations_(n_players, 0), penalized_(n_players, 0) {}

    // Folds in all events of `day`; days must be observed in increasing order.
    void observe_day(Day day, std::span<const InteractionEvent> events) {
        if (day <= observed_through_) throw std::invalid_argument("EligibilityState: days must be observed in order");
        const Day shift = day - observed_through_;
        for (auto& m : login_mask_) m = shift >= 64 ? 0 : m << shift;
        for (const auto& e : events) {
            if (e.day != day) throw std::invalid_argument("EligibilityState: event from another day");
            if (e.actor >= login_mask_.size()) throw std::out_of_range("EligibilityState: player id out of range");
            login_mask_[e.actor] |= 1;
            if (e.violation && ++violations_[e.actor] >= static_cast<std::uint32_t>(config_.penalty_threshold))
                penalized_[e.actor] = 1;
        }
        observed_through_ = day;
    }

    // Marks a player as penalized independently of the observed events.
    void set_penalized(PlayerId p) { penalized_.at(p) = 1; }

    void record_listing(PlayerId p, Day day) {
        if (day < last_listed_.at(p)) throw std::invalid_argument("EligibilityState: listing days must not go back");
        last_listed_[p] = day;
    }

    // Login days in [day - window, day - 1]; requires the log through day - 1.
    [[nodiscard]] int login_days(PlayerId p, Day day) const {
        const Day shift = day - 1 - observed_through_;
        if (shift < 0) throw std::logic_error("EligibilityState: state is ahead of the queried day");
        if (shift >= 64) return 0;
        const std::uint64_t window = (std::uint64_t{1} << config_.activity_window_days) - 1;
        return std::popcount((login_mask_.at(p) << shift) & window);
    }

    [[nodiscard]] Day last_listed(PlayerId p) const { return last_listed_.at(p); }
    [[nodiscard]] bool penalized(PlayerId p) const { return penalized_.at(p) != 0; }
    [[nodiscard]] Day observed_through() const { return observed_through_; }
    [[nodiscard]] std::size_t size() const { return last_listed_.size(); }
    [[nodiscard]] const PipelineConfig& config() const { return config_; }

private:
    PipelineConfig config_;
    Day observed_through_ = -1;
    std::vector<Day> last_listed_;
    std::vector<std::uint64_t> login_mask_;  // bit k: logged in on observed_through_ - k
    std::vector<std::uint32_t> violations_;
    std::vector<std::uint8_t> penalized_;
};

// Not listed in [day - cooldown, day - 1], not penalized, and logged in on at
// least min_login_days of the preceding activity window.
inline bool eligible(PlayerId player, const EligibilityState& state, Day day) {
    const auto& c = state.config();
    if (state.last_listed(player) >= day - c.cooldown_days) return false;
    if (state.penalized(player)) return false;
    return state.login_days(player, day) >= c.min_login_days;
}

// Eligible players with a positive score, score descending then id
// ascending, truncated to k. `include` restricts the candidate set.
template <typename Include>
std::vector<PlayerId> select_top_k(std::span<const double> scores, const EligibilityState& state, Day day, std::size_t k,
                                   Include&& include) {
    if (k < 1) throw std::invalid_argument("select_top_k: k must be >= 1");
    std::vector<PlayerId> candidates;
    for (PlayerId p = 0; p < scores.size(); ++p)
        if (scores[p] > 0.0 && include(p) && eligible(p, state, day)) candidates.push_back(p);
    const auto better = [&](PlayerId a, PlayerId b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
    const std::size_t n = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(), better);
    candidates.resize(n);
    return candidates;
}

inline std::vector<PlayerId> select_top_k(std::span<const double> scores, const EligibilityState& state, Day day,
                                          std::size_t k) {
    return select_top_k(scores, state, day, k, [](PlayerId) { return true; });
}

// ============================================================================
// ARM ASSIGNMENT
// ============================================================================

inline Arm assign_group(PlayerId player, std::uint64_t trial_seed) {
    return (hash_keys({trial_seed, 0x61726dULL, player}) & 1U) == 0 ? Arm::Intervention : Arm::Control;
}

// ============================================================================
// TRIAL LEDGER
// ============================================================================

struct ListingRecord {
    Day day = 0;
    Arm arm = Arm::Intervention;
    RiskKind kind = RiskKind::Violator;
    PlayerId player = 0;
    double score = 0.0;
    bool dispatched = false;

    friend bool operator==(const ListingRecord&, const ListingRecord&) = default;
};

class TrialLedger {
public:
    TrialLedger() = default;
    explicit TrialLedger(std::uint64_t trial_seed) : trial_seed_(trial_seed) {}

    [[nodiscard]] std::uint64_t trial_seed() const { return trial_seed_; }
    [[nodiscard]] const std::vector<Day>& days() const { return days_; }
    [[nodiscard]] const std::vector<ListingRecord>& records() const { return records_; }
    [[nodiscard]] bool has_day(Day d) const { return std::binary_search(days_.begin(), days_.end(), d); }

    // Starts a new day; days are strictly increasing and never revisited.
    void open_day(Day d) {
        if (!days_.empty() && d <= days_.back())
            throw std::invalid_argument("TrialLedger: day " + std::to_string(d) + " is already recorded");
        days_.push_back(d);
    }

    void append(const ListingRecord& r) {
        if (days_.empty() || r.day != days_.back()) throw std::invalid_argument("TrialLedger: record outside the open day");
        if (r.dispatched && r.arm != Arm::Intervention) throw std::invalid_argument("TrialLedger: control-arm dispatch");
        records_.push_back(r);
    }

    [[nodiscard]] std::size_t dispatch_count() const {
        return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [](const auto& r) { return r.dispatched; }));
    }

    friend bool operator==(const TrialLedger&, const TrialLedger&) = default;

private:
    std::uint64_t trial_seed_ = 0;
    std::vector<Day> days_;
    std::vector<ListingRecord> records_;
};

// Lists the top-k violator-risk and victim-risk players of each arm, sends
// one message per listed intervention-arm player, and starts the cooldown of
// every listed player. Returns the players messaged, ascending.
inline std::vector<PlayerId> run_trial_day(Day day, const RiskAssessment& assessment, EligibilityState& eligibility,
                                           TrialLedger& ledger) {
    if (assessment.day != day) throw std::invalid_argument("run_trial_day: assessment is for another day");
    const auto& c = eligibility.config();
    ledger.open_day(day);
    std::vector<PlayerId> listed_today;
    std::vector<PlayerId> messaged;
    for (Arm arm : {Arm::Intervention, Arm::Control}) {
        const auto in_arm = [&](PlayerId p) { return assign_group(p, ledger.trial_seed()) == arm; };
        for (RiskKind kind : {RiskKind::Violator, RiskKind::Victim}) {
            const auto& scores = assessment.scores(kind);
            // Eligibility is evaluated as of the start of the day, so both
            // lists see the same state.
            for (PlayerId p : select_top_k(scores, eligibility, day, c.top_k, in_arm)) {
                const bool first_today = std::find(listed_today.begin(), listed_today.end(), p) == listed_today.end();
                const bool dispatch = arm == Arm::Intervention && first_today;
                ledger.append({day, arm, kind, p, scores[p], dispatch});
                if (first_today) listed_today.push_back(p);
                if (dispatch) messaged.push_back(p);
            }
        }
    }
    for (PlayerId p : listed_today) eligibility.record_listing(p, day);
    std::sort(messaged.begin(), messaged.end());
    return messaged;
}

// ============================================================================
// LEDGER FILE FORMAT
// ============================================================================
//
// After the provenance header: one "# trial" line with the trial seed and the
// recorded days, a column header, then one record per line.

inline void write_ledger(std::ostream& out, const TrialLedger& ledger) {
    out << "# trial seed=" << ledger.trial_seed() << " days=";
    for (std::size_t i = 0; i < ledger.days().size(); ++i) {
        // Runs of consecutive days are written as a..b.
        std::size_t j = i;
        while (j + 1 < ledger.days().size() && ledger.days()[j + 1] == ledger.days()[j] + 1) ++j;
        if (i > 0) out << ',';
        out << ledger.days()[i];
        if (j > i) out << ".." << ledger.days()[j];
        i = j;
    }
    out << "\nday\tarm\trisk_kind\tplayer_id\tscore\tdispatched\n";
    std::string buf;
    for (const auto& r : ledger.records()) {
        buf.clear();
        buf += std::to_string(r.day);
        buf += '\t';
        buf += arm_name(r.arm);
        buf += '\t';
        buf += risk_kind_name(r.kind);
        buf += '\t';
        buf += std::to_string(r.player);
        buf += '\t';
        buf += format_double(r.score);
        buf += '\t';
        buf += r.dispatched ? '1' : '0';
        buf += '\n';
        out << buf;
    }
}

inline TrialLedger read_ledger(std::istream& in) {
    std::string line;
    TrialLedger ledger;
    bool have_meta = false, have_columns = false;
    std::vector<ListingRecord> pending;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# trial ", 0) == 0) {
            std::istringstream meta(line.substr(8));
            std::string seed, days;
            meta >> seed >> days;
            if (seed.rfind("seed=", 0) != 0 || days.rfind("days=", 0) != 0)
                throw std::invalid_argument("ledger: malformed trial line");
            ledger = TrialLedger(parse_int<std::uint64_t>(std::string_view(seed).substr(5)));
            std::string_view list = std::string_view(days).substr(5);
            while (!list.empty()) {
                const auto comma = list.find(',');
                const auto item = list.substr(0, comma);
                const auto dots = item.find("..");
                const Day a = parse_int<Day>(item.substr(0, dots));
                const Day b = dots == std::string_view::npos ? a : parse_int<Day>(item.substr(dots + 2));
                for (Day d = a; d <= b; ++d) ledger.open_day(d);
                list = comma == std::string_view::npos ? std::string_view{} : list.substr(comma + 1);
            }
            have_meta = true;
            continue;
        }
        if (line[0] == '#') continue;
        if (!have_columns) {
            have_columns = true;
            continue;
        }
        const auto f = split_tabs(line);
        if (f.size() != 6) throw std::invalid_argument("ledger line needs 6 fields");
        ListingRecord r;
        r.day = parse_int<Day>(f[0]);
        r.arm = parse_arm(f[1]);
        r.kind = parse_risk_kind(f[2]);
        r.player = parse_int<PlayerId>(f[3]);
        r.score = parse_double(f[4]);
        if (f[5] != "0" && f[5] != "1") throw std::invalid_argument("ledger dispatched flag must be 0 or 1");
        r.dispatched = f[5] == "1";
        pending.push_back(r);
    }
    if (!have_meta) throw std::invalid_argument("ledger: missing trial line");
    // Records are validated against the recorded days.
    TrialLedger out(ledger.trial_seed());
    std::size_t k = 0;
    for (Day d : ledger.days()) {
        out.open_day(d);
        for (; k < pending.size() && pending[k].day == d; ++k) out.append(pending[k]);
    }
    if (k != pending.size()) throw std::invalid_argument("ledger: record on an unrecorded day or out of order");
    return out;
}

}  // namespace guardian
