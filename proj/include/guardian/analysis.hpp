#pragma once

// Trial analysis: windowed effect tables with Fisher tests, repeated-messaging
// variants, night usage, covariate balance and the report formats.

#include "guardian/artifact.hpp"
#include "guardian/domain.hpp"
#include "guardian/pipeline.hpp"
#include "guardian/stats.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace guardian {

// ============================================================================
// WINDOWS AND CELLS
// ============================================================================

// Days after the listing day, inclusive: {1, 14} is the 14 days starting the
// day after listing.
struct AnalysisWindow {
    int first = 1;
    int last = 14;

    [[nodiscard]] std::string label() const { return std::to_string(first) + "-" + std::to_string(last); }
    friend bool operator==(const AnalysisWindow&, const AnalysisWindow&) = default;
};

inline std::vector<AnalysisWindow> default_windows() {
    return {{1, 14}, {15, 28}, {29, 56}, {57, 84}, {85, 112}, {113, 140}, {141, 168}};
}

inline void validate_windows(std::span<const AnalysisWindow> w) {
    if (w.empty()) throw ConfigError("analysis.windows", "at least one window is required");
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i].first < 1 || w[i].last < w[i].first) throw ConfigError("analysis.windows", "window " + w[i].label() + " is invalid");
        if (i > 0 && w[i].first != w[i - 1].last + 1)
            throw ConfigError("analysis.windows", "windows must be contiguous and non-overlapping");
    }
}

// "1-14,15-28,..."
inline std::string format_windows(std::span<const AnalysisWindow> w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + w[i].label();
    return s;
}

inline std::vector<AnalysisWindow> parse_windows(std::string_view s) {
    std::vector<AnalysisWindow> out;
    while (!s.empty()) {
        const auto comma = s.find(',');
        const auto item = s.substr(0, comma);
        const auto dash = item.find('-');
        if (dash == std::string_view::npos) throw ConfigError("analysis.windows", "expected first-last, got '" + std::string(item) + "'");
        try {
            out.push_back({parse_int<int>(item.substr(0, dash)), parse_int<int>(item.substr(dash + 1))});
        } catch (const std::invalid_argument&) {
            throw ConfigError("analysis.windows", "expected first-last, got '" + std::string(item) + "'");
        }
        s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
    }
    validate_windows(out);
    return out;
}

enum class Outcome : std::uint8_t { Violation = 0, ViolatedDM = 1, ViolatedAC = 2 };
inline constexpr std::array<Outcome, 3> kAllOutcomes{Outcome::Violation, Outcome::ViolatedDM, Outcome::ViolatedAC};

inline constexpr std::string_view outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Violation: return "violation";
        case Outcome::ViolatedDM: return "violated_dm";
        case Outcome::ViolatedAC: return "violated_ac";
    }
    return "?";
}

// The listing kind whose players are followed for an outcome.
inline constexpr RiskKind outcome_kind(Outcome o) { return o == Outcome::Violation ? RiskKind::Violator : RiskKind::Victim; }

// Which listings make a player part of an outcome's cohort: any listing, or
// only listings of the outcome's own kind.
enum class ListingScope : std::uint8_t { Any = 0, Matched = 1 };

inline constexpr std::string_view scope_name(ListingScope s) { return s == ListingScope::Any ? "any" : "matched"; }

inline ListingScope parse_scope(std::string_view s) {
    if (s == "any") return ListingScope::Any;
    if (s == "matched") return ListingScope::Matched;
    throw ConfigError("analysis.scope", "expected 'any' or 'matched', got '" + std::string(s) + "'");
}

// All listed players, or the repeated-messaging subsets anchored at their
// second (exactly two listings) or third (three or more) listing.
enum class Cohort : std::uint8_t { All = 0, Exactly2 = 1, AtLeast3 = 2 };
inline constexpr std::array<Cohort, 3> kAllCohorts{Cohort::All, Cohort::Exactly2, Cohort::AtLeast3};

inline constexpr std::string_view cohort_name(Cohort c) {
    switch (c) {
        case Cohort::All: return "all";
        case Cohort::Exactly2: return "receipts=2";
        case Cohort::AtLeast3: return "receipts>=3";
    }
    return "?";
}

// Unit of the 2x2 table: each listed player once (at the cohort's anchor
// listing) or every listing of the cohort's kind.
enum class AnalysisUnit : std::uint8_t { Player = 0, Listing = 1 };

inline constexpr std::string_view unit_name(AnalysisUnit u) { return u == AnalysisUnit::Player ? "player" : "listing"; }

inline AnalysisUnit parse_unit(std::string_view s) {
    if (s == "player") return AnalysisUnit::Player;
    if (s == "listing") return AnalysisUnit::Listing;
    throw ConfigError("analysis.unit", "expected 'player' or 'listing', got '" + std::string(s) + "'");
}

// ============================================================================
// OUTCOME INDEX
// ============================================================================

// Per player, the sorted days of each outcome event (with repeats, one entry
// per flagged event).
class OutcomeIndex {
public:
    OutcomeIndex(std::span<const InteractionEvent> events, std::size_t n_players) {
        for (auto& v : days_) v.assign(n_players, {});
        for (const auto& e : events) {
            if (!e.violation) continue;
            if (e.actor >= n_players || e.target >= n_players) throw std::out_of_range("OutcomeIndex: player id out of range");
            days_[0][e.actor].push_back(e.day);
            if (e.layer == Layer::DM) days_[1][e.target].push_back(e.day);
            if (e.layer == Layer::AC) days_[2][e.target].push_back(e.day);
        }
        for (auto& v : days_)
            for (auto& d : v) std::sort(d.begin(), d.end());
    }

    [[nodiscard]] std::size_t count(Outcome o, PlayerId p, DayRange r) const {
        const auto& d = days_[static_cast<std::size_t>(o)][p];
        return static_cast<std::size_t>(std::upper_bound(d.begin(), d.end(), r.last) -
                                        std::lower_bound(d.begin(), d.end(), r.first));
    }

    // Days in the range with at least one outcome event.
    [[nodiscard]] std::size_t active_days(Outcome o, PlayerId p, DayRange r) const {
        const auto& d = days_[static_cast<std::size_t>(o)][p];
        auto lo = std::lower_bound(d.begin(), d.end(), r.first);
        auto hi = std::upper_bound(d.begin(), d.end(), r.last);
        std::size_t n = 0;
        for (auto it = lo; it != hi; ++it)
            if (it == lo || *it != *(it - 1)) ++n;
        return n;
    }

private:
    std::array<std::vector<std::vector<Day>>, 3> days_;
};

// ============================================================================
// LISTING HISTORY
// ============================================================================

struct PlayerListings {
    Arm arm = Arm::Intervention;
    std::vector<Day> days;                  // distinct listing days, ascending
    std::vector<std::uint8_t> kinds;        // bit 0 violator, bit 1 victim, per day
    std::size_t messages = 0;

    [[nodiscard]] bool listed_as(std::size_t i, RiskKind k) const { return (kinds[i] >> static_cast<int>(k)) & 1U; }
};

inline std::map<PlayerId, PlayerListings> listing_history(const TrialLedger& ledger) {
    std::map<PlayerId, PlayerListings> h;
    for (const auto& r : ledger.records()) {
        auto [it, fresh] = h.try_emplace(r.player);
        auto& pl = it->second;
        if (fresh) pl.arm = r.arm;
        if (pl.arm != r.arm) throw std::invalid_argument("ledger: player " + std::to_string(r.player) + " appears in both arms");
        if (pl.days.empty() || pl.days.back() != r.day) {
            if (!pl.days.empty() && r.day < pl.days.back()) throw std::invalid_argument("ledger: records out of day order");
            pl.days.push_back(r.day);
            pl.kinds.push_back(0);
        }
        pl.kinds.back() |= static_cast<std::uint8_t>(1U << static_cast<int>(r.kind));
        if (r.dispatched) ++pl.messages;
    }
    return h;
}

struct AnalysisUnitRecord {
    PlayerId player = 0;
    Arm arm = Arm::Intervention;
    Day anchor = 0;
};

// Units of a cohort; with a kind, only listings of that kind count.
inline std::vector<AnalysisUnitRecord> cohort_units(const std::map<PlayerId, PlayerListings>& history,
                                                    std::optional<RiskKind> kind, Cohort cohort, AnalysisUnit unit) {
    std::vector<AnalysisUnitRecord> out;
    for (const auto& [player, pl] : history) {
        const std::size_t n = pl.days.size();
        if (cohort == Cohort::All) {
            for (std::size_t i = 0; i < n; ++i) {
                if (kind && !pl.listed_as(i, *kind)) continue;
                out.push_back({player, pl.arm, pl.days[i]});
                if (unit == AnalysisUnit::Player) break;
            }
            continue;
        }
        const std::size_t ordinal = cohort == Cohort::Exactly2 ? 2 : 3;
        const bool member = cohort == Cohort::Exactly2 ? n == 2 : n >= 3;
        if (member && (!kind || pl.listed_as(ordinal - 1, *kind))) out.push_back({player, pl.arm, pl.days[ordinal - 1]});
    }
    return out;
}

// ============================================================================
// WINDOWED EFFECTS
// ============================================================================

struct EffectCell {
    Outcome outcome = Outcome::Violation;
    Cohort cohort = Cohort::All;
    Gender gender = Gender::Female;
    AnalysisWindow window;

    // Binary unit outcome: any outcome event in the window.
    std::size_t units_i = 0, units_c = 0;
    std::size_t positive_i = 0, positive_c = 0;
    std::optional<double> effect;
    std::optional<double> p_value;

    // Incident variant: outcome events per unit-window, tested on unit-days
    // with at least one outcome against unit-days without.
    std::size_t events_i = 0, events_c = 0;
    std::size_t active_days_i = 0, active_days_c = 0;
    std::optional<double> incident_effect;
    std::optional<double> incident_p_value;

    [[nodiscard]] double rate_i() const { return units_i ? static_cast<double>(positive_i) / static_cast<double>(units_i) : 0.0; }
    [[nodiscard]] double rate_c() const { return units_c ? static_cast<double>(positive_c) / static_cast<double>(units_c) : 0.0; }
    [[nodiscard]] double incident_rate_i() const { return units_i ? static_cast<double>(events_i) / static_cast<double>(units_i) : 0.0; }
    [[nodiscard]] double incident_rate_c() const { return units_c ? static_cast<double>(events_c) / static_cast<double>(units_c) : 0.0; }
};

inline std::optional<double> fisher_or_na(const stats::Table2x2& t) {
    if (t.row1() == 0 || t.row2() == 0 || t.col1() == 0 || t.col2() == 0) return std::nullopt;
    return stats::fisher_exact_2x2(t);
}

// One row of cells (one per window) for an outcome, cohort and gender.
// Units whose window extends past `last_observed_day` are left out.
inline std::vector<EffectCell> windowed_effect_table(const std::map<PlayerId, PlayerListings>& history,
                                                     const OutcomeIndex& outcomes, std::span<const PlayerRecord> players,
                                                     std::span<const AnalysisWindow> windows, Gender gender,
                                                     Outcome outcome, Cohort cohort, AnalysisUnit unit,
                                                     ListingScope scope, Day last_observed_day) {
    const auto kind = scope == ListingScope::Matched ? std::optional<RiskKind>(outcome_kind(outcome)) : std::nullopt;
    const auto units = cohort_units(history, kind, cohort, unit);
    std::vector<EffectCell> row;
    for (const auto& w : windows) {
        EffectCell cell;
        cell.outcome = outcome;
        cell.cohort = cohort;
        cell.gender = gender;
        cell.window = w;
        for (const auto& u : units) {
            if (players[u.player].gender != gender) continue;
            const DayRange r{u.anchor + w.first, u.anchor + w.last};
            if (r.last > last_observed_day) continue;
            const std::size_t events = outcomes.count(outcome, u.player, r);
            const std::size_t active = outcomes.active_days(outcome, u.player, r);
            const bool intervention = u.arm == Arm::Intervention;
            (intervention ? cell.units_i : cell.units_c) += 1;
            (intervention ? cell.positive_i : cell.positive_c) += events > 0 ? 1 : 0;
            (intervention ? cell.events_i : cell.events_c) += events;
            (intervention ? cell.active_days_i : cell.active_days_c) += active;
        }
        if (cell.units_i > 0 && cell.units_c > 0) {
            cell.effect = stats::effect_size(cell.rate_i(), cell.rate_c());
            cell.p_value = fisher_or_na({cell.positive_i, cell.units_i - cell.positive_i, cell.positive_c,
                                         cell.units_c - cell.positive_c});
            const auto len = static_cast<std::size_t>(w.last - w.first + 1);
            cell.incident_effect = stats::effect_size(cell.incident_rate_i(), cell.incident_rate_c());
            cell.incident_p_value = fisher_or_na({cell.active_days_i, cell.units_i * len - cell.active_days_i,
                                                  cell.active_days_c, cell.units_c * len - cell.active_days_c});
        }
        row.push_back(cell);
    }
    return row;
}

// ============================================================================
// NIGHT USAGE
// ============================================================================

// Hourly night windows (20:00-04:59) in which the player used DM or AC, per
// calendar day: 0..9.
struct NightUsage {
    Gender gender = Gender::Female;
    int period_days = 84;
    std::vector<double> intervention;  // per-player mean over the period
    std::vector<double> control;
    std::vector<PlayerId> intervention_ids;  // aligned with the values
    std::vector<PlayerId> control_ids;
    std::optional<stats::WilcoxonResult> test;
};

inline constexpr int night_slot(int hour) { return hour >= 20 ? hour - 20 : hour + 4; }

// Players listed at least once, followed for `period_days` days after their
// first listing; players whose period is not fully observed are left out.
inline NightUsage night_usage_metric(std::span<const InteractionEvent> events,
                                     const std::map<PlayerId, PlayerListings>& history,
                                     std::span<const PlayerRecord> players, Gender gender, int period_days,
                                     Day last_observed_day) {
    if (period_days < 1) throw std::invalid_argument("night_usage_metric: period must be >= 1 day");
    NightUsage out;
    out.gender = gender;
    out.period_days = period_days;
    struct Member {
        Day first;
        std::size_t slot;
        Arm arm;
        PlayerId player;
    };
    std::vector<std::int64_t> member_of(players.size(), -1);
    std::vector<Member> members;
    for (const auto& [player, pl] : history) {
        if (players[player].gender != gender) continue;
        const Day first = pl.days.front() + 1;
        if (first + period_days - 1 > last_observed_day) continue;
        member_of[player] = static_cast<std::int64_t>(members.size());
        members.push_back({first, members.size(), pl.arm, player});
    }
    std::vector<std::uint16_t> masks(members.size() * static_cast<std::size_t>(period_days), 0);
    for (const auto& e : events) {
        if ((e.layer != Layer::DM && e.layer != Layer::AC) || !is_night_hour(e.hour)) continue;
        if (e.actor >= member_of.size() || member_of[e.actor] < 0) continue;
        const auto& m = members[static_cast<std::size_t>(member_of[e.actor])];
        const int offset = e.day - m.first;
        if (offset < 0 || offset >= period_days) continue;
        masks[m.slot * static_cast<std::size_t>(period_days) + static_cast<std::size_t>(offset)] |=
            static_cast<std::uint16_t>(1U << night_slot(e.hour));
    }
    for (const auto& m : members) {
        int total = 0;
        for (int k = 0; k < period_days; ++k)
            total += std::popcount(masks[m.slot * static_cast<std::size_t>(period_days) + static_cast<std::size_t>(k)]);
        const double mean = static_cast<double>(total) / static_cast<double>(period_days);
        (m.arm == Arm::Intervention ? out.intervention : out.control).push_back(mean);
        (m.arm == Arm::Intervention ? out.intervention_ids : out.control_ids).push_back(m.player);
    }
    if (!out.intervention.empty() && !out.control.empty()) out.test = stats::wilcoxon_rank_sum(out.intervention, out.control);
    return out;
}

// ============================================================================
// COVARIATE BALANCE
// ============================================================================

struct ArmSummary {
    std::size_t cumulative = 0;  // listings
    std::size_t unique = 0;
    double age_mean = 0.0, age_sd = 0.0;
    double usage_mean = 0.0, usage_sd = 0.0;  // DM/AC usage days in the 14 days after the first listing
    double one_time = 0.0;                    // share of players listed once
    double five_or_more = 0.0;                // share listed five times or more
};

struct BalanceRow {
    Gender gender = Gender::Female;
    ArmSummary intervention, control;
    std::optional<double> age_p, usage_p, one_time_p, five_or_more_p;
};

struct BalanceTable {
    std::array<BalanceRow, 2> rows;  // female, male
    std::optional<double> gender_p;  // arm x gender over unique players
};

inline BalanceTable covariate_balance(std::span<const InteractionEvent> events,
                                      const std::map<PlayerId, PlayerListings>& history,
                                      std::span<const PlayerRecord> players, Day last_observed_day) {
    // DM/AC usage days per player in days first+1 .. first+14.
    std::vector<std::int64_t> first(players.size(), -1);
    for (const auto& [p, pl] : history) first[p] = pl.days.front();
    std::vector<std::uint16_t> usage_mask(players.size(), 0);
    for (const auto& e : events) {
        if (e.layer != Layer::DM && e.layer != Layer::AC) continue;
        if (e.actor >= first.size() || first[e.actor] < 0) continue;
        const auto off = e.day - first[e.actor] - 1;
        if (off >= 0 && off < 14) usage_mask[e.actor] |= static_cast<std::uint16_t>(1U << off);
    }
    BalanceTable table;
    stats::Table2x2 gender_table;
    for (Gender g : {Gender::Female, Gender::Male}) {
        BalanceRow& row = table.rows[g == Gender::Female ? 0 : 1];
        row.gender = g;
        std::array<std::vector<double>, 2> age, usage;
        std::array<std::size_t, 2> once{}, five{};
        for (const auto& [p, pl] : history) {
            if (players[p].gender != g) continue;
            const std::size_t a = pl.arm == Arm::Intervention ? 0 : 1;
            ArmSummary& s = a == 0 ? row.intervention : row.control;
            s.unique += 1;
            for (std::size_t i = 0; i < pl.kinds.size(); ++i) s.cumulative += std::popcount(pl.kinds[i]);
            age[a].push_back(players[p].age);
            if (pl.days.front() + 14 <= last_observed_day) usage[a].push_back(std::popcount(usage_mask[p]));
            once[a] += pl.days.size() == 1 ? 1 : 0;
            five[a] += pl.days.size() >= 5 ? 1 : 0;
        }
        for (std::size_t a = 0; a < 2; ++a) {
            ArmSummary& s = a == 0 ? row.intervention : row.control;
            if (!age[a].empty()) s.age_mean = stats::mean(age[a]);
            if (age[a].size() > 1) s.age_sd = stats::stddev(age[a]);
            if (!usage[a].empty()) s.usage_mean = stats::mean(usage[a]);
            if (usage[a].size() > 1) s.usage_sd = stats::stddev(usage[a]);
            if (s.unique) {
                s.one_time = static_cast<double>(once[a]) / static_cast<double>(s.unique);
                s.five_or_more = static_cast<double>(five[a]) / static_cast<double>(s.unique);
            }
        }
        const auto t_or_na = [](const std::vector<double>& x, const std::vector<double>& y) -> std::optional<double> {
            try {
                return stats::students_t(x, y).p_value;
            } catch (const std::invalid_argument&) {
                return std::nullopt;
            }
        };
        const auto chi_or_na = [](const stats::Table2x2& t) -> std::optional<double> {
            if (t.row1() == 0 || t.row2() == 0 || t.col1() == 0 || t.col2() == 0) return std::nullopt;
            return stats::pearson_chi_square_2x2(t).p_value;
        };
        row.age_p = t_or_na(age[0], age[1]);
        row.usage_p = t_or_na(usage[0], usage[1]);
        const std::size_t ui = row.intervention.unique, uc = row.control.unique;
        row.one_time_p = chi_or_na({once[0], ui - once[0], once[1], uc - once[1]});
        row.five_or_more_p = chi_or_na({five[0], ui - five[0], five[1], uc - five[1]});
        if (g == Gender::Female) {
            gender_table.a = ui;
            gender_table.c = uc;
        } else {
            gender_table.b = ui;
            gender_table.d = uc;
        }
    }
    if (gender_table.row1() && gender_table.row2() && gender_table.col1() && gender_table.col2())
        table.gender_p = stats::pearson_chi_square_2x2(gender_table).p_value;
    return table;
}

// ============================================================================
// FULL REPORT
// ============================================================================

struct EffectReport {
    AnalysisUnit unit = AnalysisUnit::Player;
    ListingScope scope = ListingScope::Any;
    std::vector<AnalysisWindow> windows;
    std::vector<EffectCell> cells;  // outcome-major, then cohort, gender, window
    std::array<NightUsage, 2> night;
    BalanceTable balance;

    [[nodiscard]] const EffectCell& cell(Outcome o, Cohort c, Gender g, std::size_t window) const {
        for (const auto& x : cells)
            if (x.outcome == o && x.cohort == c && x.gender == g && x.window == windows.at(window)) return x;
        throw std::out_of_range("EffectReport: no such cell");
    }
    [[nodiscard]] const NightUsage& night_of(Gender g) const { return night[g == Gender::Female ? 0 : 1]; }
};

struct AnalysisOptions {
    std::vector<AnalysisWindow> windows = default_windows();
    AnalysisUnit unit = AnalysisUnit::Player;
    ListingScope scope = ListingScope::Any;
    int night_period_days = 84;
    // Repeated-messaging cohorts use the first three windows only.
    std::size_t repeated_windows = 3;
};

inline EffectReport analyze_trial(const EventLog& log, std::span<const PlayerRecord> players, const TrialLedger& ledger,
                                  const AnalysisOptions& opt) {
    validate_windows(opt.windows);
    const Day last_observed = log.covered_days() - 1;
    const auto history = listing_history(ledger);
    const OutcomeIndex outcomes(log.all(), players.size());
    EffectReport rep;
    rep.unit = opt.unit;
    rep.scope = opt.scope;
    rep.windows = opt.windows;
    for (Outcome o : kAllOutcomes)
        for (Cohort c : kAllCohorts) {
            const std::size_t nw = c == Cohort::All ? opt.windows.size() : std::min(opt.repeated_windows, opt.windows.size());
            const std::span<const AnalysisWindow> ws(opt.windows.data(), nw);
            for (Gender g : {Gender::Female, Gender::Male}) {
                auto row = windowed_effect_table(history, outcomes, players, ws, g, o, c, opt.unit, opt.scope, last_observed);
                rep.cells.insert(rep.cells.end(), row.begin(), row.end());
            }
        }
    for (Gender g : {Gender::Female, Gender::Male})
        rep.night[g == Gender::Female ? 0 : 1] =
            night_usage_metric(log.all(), history, players, g, opt.night_period_days, last_observed);
    rep.balance = covariate_balance(log.all(), history, players, last_observed);
    return rep;
}

// Cells with a defined Fisher p-value on the binary unit outcome, and how
// many of them fall below alpha.
struct SignificanceCount {
    std::size_t cells = 0;
    std::size_t significant = 0;
};

inline SignificanceCount count_significant(const EffectReport& rep, double alpha = 0.05) {
    SignificanceCount s;
    for (const auto& c : rep.cells) {
        if (!c.p_value) continue;
        ++s.cells;
        if (*c.p_value < alpha) ++s.significant;
    }
    return s;
}

// ----------------------------------------------------------------------------
// Formatting

inline std::string fmt_fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string fmt_opt(const std::optional<double>& v, int digits = 4) { return v ? fmt_fixed(*v, digits) : "NA"; }

// ----------------------------------------------------------------------------
// Machine-readable tables. Values are written at full precision so that the
// report rendered from the files equals the one rendered in memory.

namespace detail {

inline std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

inline std::optional<double> opt_parse(std::string_view s) {
    if (s == "NA") return std::nullopt;
    return parse_double(s);
}

inline Outcome parse_outcome(std::string_view s) {
    for (Outcome o : kAllOutcomes)
        if (outcome_name(o) == s) return o;
    throw std::invalid_argument("unknown outcome '" + std::string(s) + "'");
}

inline Cohort parse_cohort(std::string_view s) {
    for (Cohort c : kAllCohorts)
        if (cohort_name(c) == s) return c;
    throw std::invalid_argument("unknown cohort '" + std::string(s) + "'");
}

inline AnalysisWindow parse_window(std::string_view s) {
    const auto w = parse_windows(s);
    if (w.size() != 1) throw std::invalid_argument("expected one window, got '" + std::string(s) + "'");
    return w[0];
}

// Data lines of a table: skips '#' lines (returned through `meta`) and checks
// the column header.
inline std::vector<std::vector<std::string>> read_table(std::istream& in, std::string_view columns,
                                                        std::vector<std::string>* meta = nullptr) {
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header = false;
    const std::size_t width = split_tabs(columns).size();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (meta) meta->push_back(line);
            continue;
        }
        if (!header) {
            if (line != columns) throw std::invalid_argument("unexpected column header: " + line);
            header = true;
            continue;
        }
        const auto f = split_tabs(line);
        if (f.size() != width) throw std::invalid_argument("expected " + std::to_string(width) + " fields: " + line);
        rows.emplace_back(f.begin(), f.end());
    }
    if (!header) throw std::invalid_argument("table has no column header");
    return rows;
}

inline constexpr std::string_view kEffectColumns =
    "outcome\tcohort\tgender\twindow\tunits_i\tunits_c\tpositive_i\tpositive_c\teffect\tp_value"
    "\tevents_i\tevents_c\tactive_days_i\tactive_days_c\tincident_effect\tincident_p_value";
inline constexpr std::string_view kNightColumns = "player_id\tgender\tarm\tnight_windows_per_day";
inline constexpr std::string_view kBalanceColumns = "gender\tfield\tintervention\tcontrol\tp_value";

}  // namespace detail

inline void write_effects_tsv(std::ostream& out, const EffectReport& rep) {
    out << "# unit=" << unit_name(rep.unit) << " scope=" << scope_name(rep.scope) << " windows=" << format_windows(rep.windows)
        << '\n'
        << detail::kEffectColumns << '\n';
    for (const auto& c : rep.cells)
        out << outcome_name(c.outcome) << '\t' << cohort_name(c.cohort) << '\t' << gender_name(c.gender) << '\t'
            << c.window.label() << '\t' << c.units_i << '\t' << c.units_c << '\t' << c.positive_i << '\t' << c.positive_c
            << '\t' << detail::opt_text(c.effect) << '\t' << detail::opt_text(c.p_value) << '\t' << c.events_i << '\t'
            << c.events_c << '\t' << c.active_days_i << '\t' << c.active_days_c << '\t'
            << detail::opt_text(c.incident_effect) << '\t' << detail::opt_text(c.incident_p_value) << '\n';
}

// One row per followed player.
inline void write_night_tsv(std::ostream& out, const EffectReport& rep) {
    out << "# period_days=" << rep.night[0].period_days << '\n' << detail::kNightColumns << '\n';
    for (const auto& n : rep.night) {
        for (Arm arm : {Arm::Intervention, Arm::Control}) {
            const auto& values = arm == Arm::Intervention ? n.intervention : n.control;
            const auto& ids = arm == Arm::Intervention ? n.intervention_ids : n.control_ids;
            if (ids.size() != values.size()) throw std::invalid_argument("write_night_tsv: id and value counts differ");
            for (std::size_t i = 0; i < values.size(); ++i)
                out << ids[i] << '\t' << gender_name(n.gender) << '\t' << arm_name(arm) << '\t' << format_double(values[i]) << '\n';
        }
    }
}

inline void write_balance_tsv(std::ostream& out, const EffectReport& rep) {
    out << detail::kBalanceColumns << '\n';
    for (const auto& r : rep.balance.rows) {
        const auto g = gender_name(r.gender);
        const auto put = [&](std::string_view field, double i, double c, const std::optional<double>& p) {
            out << g << '\t' << field << '\t' << format_double(i) << '\t' << format_double(c) << '\t' << detail::opt_text(p) << '\n';
        };
        const auto& a = r.intervention;
        const auto& b = r.control;
        put("cumulative", static_cast<double>(a.cumulative), static_cast<double>(b.cumulative), std::nullopt);
        put("unique", static_cast<double>(a.unique), static_cast<double>(b.unique), std::nullopt);
        put("age_mean", a.age_mean, b.age_mean, r.age_p);
        put("age_sd", a.age_sd, b.age_sd, std::nullopt);
        put("usage_mean", a.usage_mean, b.usage_mean, r.usage_p);
        put("usage_sd", a.usage_sd, b.usage_sd, std::nullopt);
        put("one_time", a.one_time, b.one_time, r.one_time_p);
        put("five_or_more", a.five_or_more, b.five_or_more, r.five_or_more_p);
    }
    out << "all\tgender_ratio\tNA\tNA\t" << detail::opt_text(rep.balance.gender_p) << '\n';
}

// Rebuilds a report from the three tables; the night test is recomputed
// from the per-player values.
inline EffectReport read_report_tables(std::istream& effects, std::istream& night, std::istream& balance) {
    EffectReport rep;
    std::vector<std::string> meta;
    for (const auto& f : detail::read_table(effects, detail::kEffectColumns, &meta)) {
        EffectCell c;
        c.outcome = detail::parse_outcome(f[0]);
        c.cohort = detail::parse_cohort(f[1]);
        c.gender = parse_gender(f[2]);
        c.window = detail::parse_window(f[3]);
        c.units_i = parse_int<std::size_t>(f[4]);
        c.units_c = parse_int<std::size_t>(f[5]);
        c.positive_i = parse_int<std::size_t>(f[6]);
        c.positive_c = parse_int<std::size_t>(f[7]);
        c.effect = detail::opt_parse(f[8]);
        c.p_value = detail::opt_parse(f[9]);
        c.events_i = parse_int<std::size_t>(f[10]);
        c.events_c = parse_int<std::size_t>(f[11]);
        c.active_days_i = parse_int<std::size_t>(f[12]);
        c.active_days_c = parse_int<std::size_t>(f[13]);
        c.incident_effect = detail::opt_parse(f[14]);
        c.incident_p_value = detail::opt_parse(f[15]);
        rep.cells.push_back(c);
    }
    bool have_meta = false;
    for (const auto& m : meta) {
        std::istringstream in(m.substr(1));
        std::string unit, scope, windows;
        in >> unit >> scope >> windows;
        if (unit.rfind("unit=", 0) != 0 || scope.rfind("scope=", 0) != 0 || windows.rfind("windows=", 0) != 0) continue;
        rep.unit = parse_unit(unit.substr(5));
        rep.scope = parse_scope(scope.substr(6));
        rep.windows = parse_windows(windows.substr(8));
        have_meta = true;
    }
    if (!have_meta) throw std::invalid_argument("effects table lacks its unit/scope/windows line");

    meta.clear();
    rep.night[0].gender = Gender::Female;
    rep.night[1].gender = Gender::Male;
    for (const auto& f : detail::read_table(night, detail::kNightColumns, &meta)) {
        auto& n = rep.night[parse_gender(f[1]) == Gender::Female ? 0 : 1];
        const bool intervention = parse_arm(f[2]) == Arm::Intervention;
        (intervention ? n.intervention : n.control).push_back(parse_double(f[3]));
        (intervention ? n.intervention_ids : n.control_ids).push_back(parse_int<PlayerId>(f[0]));
    }
    int period = -1;
    for (const auto& m : meta)
        if (m.rfind("# period_days=", 0) == 0) period = parse_int<int>(std::string_view(m).substr(14));
    if (period < 1) throw std::invalid_argument("night table lacks its period_days line");
    for (auto& n : rep.night) {
        n.period_days = period;
        if (!n.intervention.empty() && !n.control.empty()) n.test = stats::wilcoxon_rank_sum(n.intervention, n.control);
    }

    rep.balance.rows[0].gender = Gender::Female;
    rep.balance.rows[1].gender = Gender::Male;
    for (const auto& f : detail::read_table(balance, detail::kBalanceColumns)) {
        if (f[0] == "all") {
            if (f[1] != "gender_ratio") throw std::invalid_argument("unknown balance field " + f[1]);
            rep.balance.gender_p = detail::opt_parse(f[4]);
            continue;
        }
        auto& r = rep.balance.rows[parse_gender(f[0]) == Gender::Female ? 0 : 1];
        const double i = parse_double(f[2]), c = parse_double(f[3]);
        const auto p = detail::opt_parse(f[4]);
        const auto count = [](double v) { return static_cast<std::size_t>(v); };
        const std::string& k = f[1];
        if (k == "cumulative") r.intervention.cumulative = count(i), r.control.cumulative = count(c);
        else if (k == "unique") r.intervention.unique = count(i), r.control.unique = count(c);
        else if (k == "age_mean") r.intervention.age_mean = i, r.control.age_mean = c, r.age_p = p;
        else if (k == "age_sd") r.intervention.age_sd = i, r.control.age_sd = c;
        else if (k == "usage_mean") r.intervention.usage_mean = i, r.control.usage_mean = c, r.usage_p = p;
        else if (k == "usage_sd") r.intervention.usage_sd = i, r.control.usage_sd = c;
        else if (k == "one_time") r.intervention.one_time = i, r.control.one_time = c, r.one_time_p = p;
        else if (k == "five_or_more") r.intervention.five_or_more = i, r.control.five_or_more = c, r.five_or_more_p = p;
        else throw std::invalid_argument("unknown balance field " + k);
    }
    return rep;
}

// Plain-text tables: gender rows, window columns, effects significant at
// alpha marked with '*'.
inline void write_report_text(std::ostream& out, const EffectReport& rep, double alpha = 0.05) {
    const auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.insert(0, w - s.size(), ' ');
        return s;
    };
    const auto& b = rep.balance;
    out << "Trial basic statistics (unit: " << unit_name(rep.unit) << ", listings: " << scope_name(rep.scope) << ")\n";
    out << pad("", 30) << pad("female:int", 16) << pad("control", 16) << pad("p", 8) << pad("male:int", 16) << pad("control", 16)
        << pad("p", 8) << '\n';
    const auto line = [&](const std::string& name, auto get, auto getp, int digits) {
        out << pad(name, 30);
        for (const auto& r : b.rows)
            out << pad(fmt_fixed(get(r.intervention), digits), 16) << pad(fmt_fixed(get(r.control), digits), 16)
                << pad(fmt_opt(getp(r), 3), 8);
        out << '\n';
    };
    const auto none = [](const BalanceRow&) { return std::optional<double>{}; };
    line("Cumulative total", [](const ArmSummary& s) { return static_cast<double>(s.cumulative); }, none, 0);
    line("Unique players", [](const ArmSummary& s) { return static_cast<double>(s.unique); }, none, 0);
    line("Avatar age (mean)", [](const ArmSummary& s) { return s.age_mean; }, [](const BalanceRow& r) { return r.age_p; }, 3);
    line("Avatar age (sd)", [](const ArmSummary& s) { return s.age_sd; }, none, 3);
    line("Usage days after listing", [](const ArmSummary& s) { return s.usage_mean; }, [](const BalanceRow& r) { return r.usage_p; }, 3);
    line("Usage days (sd)", [](const ArmSummary& s) { return s.usage_sd; }, none, 3);
    line("1 time (share)", [](const ArmSummary& s) { return s.one_time; }, [](const BalanceRow& r) { return r.one_time_p; }, 4);
    line("5 times or more (share)", [](const ArmSummary& s) { return s.five_or_more; },
         [](const BalanceRow& r) { return r.five_or_more_p; }, 4);
    out << "Gender ratio by arm, chi-square p = " << fmt_opt(b.gender_p, 3) << "\n\n";

    for (Outcome o : kAllOutcomes)
        for (Cohort c : kAllCohorts) {
            out << "Effect on " << outcome_name(o) << ", cohort " << cohort_name(c) << "  (effect = (x_c - x_i)/x_c, '*' p < "
                << alpha << ")\n";
            std::vector<const EffectCell*> female, male;
            for (const auto& x : rep.cells)
                if (x.outcome == o && x.cohort == c) (x.gender == Gender::Female ? female : male).push_back(&x);
            out << pad("gender", 8) << pad("value", 10);
            for (const auto* x : female) out << pad(x->window.label() + " days", 14);
            out << '\n';
            for (const auto* rowp : {&female, &male}) {
                if (rowp->empty()) continue;
                const std::string g(gender_name((*rowp)[0]->gender));
                out << pad(g, 8) << pad("effect", 10);
                for (const auto* x : *rowp) {
                    std::string s = fmt_opt(x->effect);
                    if (x->p_value && *x->p_value < alpha && x->effect) s += '*';
                    out << pad(s, 14);
                }
                out << '\n' << pad("", 8) << pad("p-value", 10);
                for (const auto* x : *rowp) out << pad(fmt_opt(x->p_value), 14);
                out << '\n' << pad("", 8) << pad("n (i/c)", 10);
                for (const auto* x : *rowp) out << pad(std::to_string(x->units_i) + "/" + std::to_string(x->units_c), 14);
                out << '\n';
            }
            out << '\n';
        }

    out << "Night usage (DM/AC hourly windows 20:00-04:59 per day, mean over " << rep.night[0].period_days
        << " days after first listing)\n";
    out << pad("gender", 8) << pad("arm", 14) << pad("n", 8);
    for (const char* q : {"2.5%ile", "25%ile", "50%ile", "75%ile", "97.5%ile"}) out << pad(q, 10);
    out << pad("Wilcoxon p", 12) << '\n';
    for (const auto& n : rep.night)
        for (Arm arm : {Arm::Intervention, Arm::Control}) {
            const auto& x = arm == Arm::Intervention ? n.intervention : n.control;
            out << pad(std::string(gender_name(n.gender)), 8) << pad(std::string(arm_name(arm)), 14) << pad(std::to_string(x.size()), 8);
            for (double q : {0.025, 0.25, 0.5, 0.75, 0.975}) out << pad(x.empty() ? "NA" : fmt_fixed(stats::quantile(x, q), 3), 10);
            out << pad(arm == Arm::Intervention && n.test ? fmt_fixed(n.test->p_value, 4) : "", 12) << '\n';
        }
}

}  // namespace guardian
