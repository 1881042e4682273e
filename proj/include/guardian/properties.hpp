#pragma once

// Randomized property suites for the daily listing loop. Each case builds a
// random population state, runs the production code and checks the result
// against rules restated here from raw per-player histories.

#include "guardian/pipeline.hpp"
#include "guardian/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace guardian::properties {

struct PropertyResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t violations = 0;
    std::string first_failure;

    [[nodiscard]] bool passed() const { return violations == 0 && cases > 0; }

    void fail(std::size_t c, const std::string& what) {
        if (violations++ == 0) first_failure = "case " + std::to_string(c) + ": " + what;
    }
};

namespace detail {

// Raw history of one simulated population, kept alongside EligibilityState.
struct History {
    std::vector<std::set<Day>> logins;
    std::vector<std::vector<Day>> listings;
    std::vector<std::uint32_t> violations;
    std::vector<bool> penalized;
};

struct RandomWorld {
    PipelineConfig config;
    std::size_t n = 0;
    EligibilityState state;
    History history;
};

inline PipelineConfig random_config(Rng& rng) {
    PipelineConfig c;
    c.top_k = 1 + rng.below(25);
    c.cooldown_days = static_cast<int>(rng.below(12));
    c.activity_window_days = 1 + static_cast<int>(rng.below(10));
    c.min_login_days = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.activity_window_days) + 1));
    c.penalty_threshold = 1 + static_cast<int>(rng.below(4));
    return c;
}

// Random logins and violations for one day, applied to both the production
// state and the raw history.
inline void random_day(RandomWorld& w, Day day, Rng& rng, double login_rate) {
    std::vector<InteractionEvent> events;
    for (PlayerId p = 0; p < w.n; ++p) {
        if (!rng.bernoulli(login_rate)) continue;
        InteractionEvent e;
        e.day = day;
        e.actor = p;
        e.target = (p + 1) % static_cast<PlayerId>(w.n);
        e.layer = Layer::DM;
        e.violation = rng.bernoulli(0.03);
        events.push_back(e);
        w.history.logins[p].insert(day);
        if (e.violation && ++w.history.violations[p] >= static_cast<std::uint32_t>(w.config.penalty_threshold))
            w.history.penalized[p] = true;
    }
    w.state.observe_day(day, events);
}

inline RandomWorld random_world(Rng& rng, std::size_t n, Day warmup) {
    RandomWorld w;
    w.config = random_config(rng);
    w.n = n;
    w.state = EligibilityState(n, w.config);
    w.history.logins.resize(n);
    w.history.listings.resize(n);
    w.history.violations.assign(n, 0);
    w.history.penalized.assign(n, false);
    const double rate = 0.2 + 0.7 * rng.uniform();
    for (Day d = 0; d < warmup; ++d) random_day(w, d, rng, rate);
    return w;
}

inline bool reference_eligible(const RandomWorld& w, PlayerId p, Day day) {
    if (w.history.penalized[p]) return false;
    for (Day d : w.history.listings[p])
        if (d >= day - w.config.cooldown_days && d < day) return false;
    int logins = 0;
    for (Day d = day - w.config.activity_window_days; d < day; ++d) logins += w.history.logins[p].count(d) ? 1 : 0;
    return logins >= w.config.min_login_days;
}

inline std::vector<double> random_scores(Rng& rng, std::size_t n) {
    std::vector<double> s(n, 0.0);
    const std::uint64_t levels = 1 + rng.below(20);  // few levels force ties
    for (auto& v : s)
        if (rng.bernoulli(0.6)) v = static_cast<double>(rng.below(levels)) * 0.37;
    return s;
}

inline std::vector<PlayerId> reference_top_k(const RandomWorld& w, std::span<const double> scores, Day day,
                                             std::size_t k, const std::function<bool(PlayerId)>& include) {
    std::vector<PlayerId> c;
    for (PlayerId p = 0; p < scores.size(); ++p)
        if (scores[p] > 0.0 && include(p) && reference_eligible(w, p, day)) c.push_back(p);
    std::stable_sort(c.begin(), c.end(), [&](PlayerId a, PlayerId b) { return scores[a] > scores[b]; });
    if (c.size() > k) c.resize(k);
    return c;
}

}  // namespace detail

// Eligibility against the raw-history rule.
inline PropertyResult eligibility(std::size_t cases = 1000, std::uint64_t seed = 101) {
    PropertyResult r;
    r.name = "eligibility";
    Rng rng(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t n = 5 + rng.below(40);
        auto w = detail::random_world(rng, n, 1 + static_cast<Day>(rng.below(20)));
        const Day day = w.state.observed_through() + 1;
        for (PlayerId p = 0; p < n; ++p) {
            const Day back = 1 + static_cast<Day>(rng.below(15));
            if (rng.bernoulli(0.3) && day - back >= 0) {
                w.state.record_listing(p, day - back);
                w.history.listings[p].push_back(day - back);
            }
        }
        for (PlayerId p = 0; p < n; ++p)
            if (eligible(p, w.state, day) != detail::reference_eligible(w, p, day))
                r.fail(c, "player " + std::to_string(p) + " eligibility differs from the rule");
        ++r.cases;
    }
    return r;
}

// Top-k selection against a stable sort of the eligible candidates.
inline PropertyResult ranking(std::size_t cases = 1000, std::uint64_t seed = 202) {
    PropertyResult r;
    r.name = "top-k ranking";
    Rng rng(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t n = 5 + rng.below(80);
        auto w = detail::random_world(rng, n, 1 + static_cast<Day>(rng.below(12)));
        const Day day = w.state.observed_through() + 1;
        const auto scores = detail::random_scores(rng, n);
        const std::uint64_t mod = 1 + rng.below(3);
        const auto include = [&](PlayerId p) { return p % mod == 0; };
        const auto got = select_top_k(scores, w.state, day, w.config.top_k, include);
        if (got != detail::reference_top_k(w, scores, day, w.config.top_k, include))
            r.fail(c, "selected list differs from the reference ordering");
        ++r.cases;
    }
    return r;
}

// Multi-day closed loop: per day, the ledger and the messages must follow
// the listing rules given the state before the day.
inline PropertyResult trial_days(std::size_t cases = 1000, std::uint64_t seed = 303) {
    PropertyResult r;
    r.name = "trial day rules";
    Rng rng(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t n = 20 + rng.below(150);
        auto w = detail::random_world(rng, n, 8);
        const std::uint64_t trial_seed = rng();
        TrialLedger ledger(trial_seed);
        const double rate = 0.3 + 0.6 * rng.uniform();
        const Day days = 3 + static_cast<Day>(rng.below(10));
        for (Day k = 0; k < days; ++k) {
            const Day day = w.state.observed_through() + 1;
            RiskAssessment a;
            a.day = day;
            a.violator = detail::random_scores(rng, n);
            a.victim = detail::random_scores(rng, n);
            const std::size_t before = ledger.records().size();
            const auto messaged = run_trial_day(day, a, w.state, ledger);

            std::map<std::pair<Arm, RiskKind>, std::vector<PlayerId>> lists;
            std::set<PlayerId> dispatched, listed;
            for (std::size_t i = before; i < ledger.records().size(); ++i) {
                const auto& rec = ledger.records()[i];
                if (rec.day != day) r.fail(c, "record on the wrong day");
                if (assign_group(rec.player, trial_seed) != rec.arm) r.fail(c, "player listed in the other arm");
                if (rec.score != a.scores(rec.kind)[rec.player]) r.fail(c, "recorded score differs from the assessment");
                if (rec.dispatched && rec.arm != Arm::Intervention) r.fail(c, "message dispatched to control");
                const bool first = !listed.count(rec.player);
                if (rec.dispatched != (rec.arm == Arm::Intervention && first))
                    r.fail(c, "dispatch flag does not match first intervention listing");
                if (rec.dispatched && !dispatched.insert(rec.player).second) r.fail(c, "player messaged twice in a day");
                listed.insert(rec.player);
                lists[{rec.arm, rec.kind}].push_back(rec.player);
            }
            for (Arm arm : {Arm::Intervention, Arm::Control})
                for (RiskKind kind : {RiskKind::Violator, RiskKind::Victim}) {
                    const auto in_arm = [&](PlayerId p) { return assign_group(p, trial_seed) == arm; };
                    const auto want = detail::reference_top_k(w, a.scores(kind), day, w.config.top_k, in_arm);
                    if (lists[{arm, kind}] != want) r.fail(c, "listing differs from the eligible top-k");
                    if (want.size() > w.config.top_k) r.fail(c, "list longer than k");
                }
            if (messaged != std::vector<PlayerId>(dispatched.begin(), dispatched.end()))
                r.fail(c, "returned message set differs from the ledger");
            for (PlayerId p : listed) w.history.listings[p].push_back(day);
            detail::random_day(w, day, rng, rate);
        }
        // Cooldown holds over the whole run.
        for (PlayerId p = 0; p < n; ++p) {
            const auto& l = w.history.listings[p];
            for (std::size_t i = 1; i < l.size(); ++i)
                if (l[i] - l[i - 1] <= w.config.cooldown_days) r.fail(c, "player relisted inside the cooldown");
        }
        ++r.cases;
    }
    return r;
}

// Raising the threshold never raises a score, and both score kinds sum the
// same retained probabilities.
inline PropertyResult threshold_monotone(std::size_t cases = 1000, std::uint64_t seed = 404) {
    PropertyResult r;
    r.name = "threshold monotonicity";
    Rng rng(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t n = 2 + rng.below(50);
        std::vector<ScoredEdge> edges;
        for (std::size_t e = rng.below(200); e > 0; --e) {
            const auto a = static_cast<PlayerId>(rng.below(n)), b = static_cast<PlayerId>(rng.below(n));
            if (a != b) edges.push_back({a, b, rng.uniform()});
        }
        double t1 = 0.01 + 0.98 * rng.uniform(), t2 = 0.01 + 0.98 * rng.uniform();
        if (t2 < t1) std::swap(t1, t2);
        const auto lo = risk_scores(0, edges, n, t1), hi = risk_scores(0, edges, n, t2);
        double sv = 0.0, sw = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            if (hi.violator[p] > lo.violator[p] || hi.victim[p] > lo.victim[p]) r.fail(c, "score rose with the threshold");
            sv += hi.violator[p];
            sw += hi.victim[p];
        }
        if (std::fabs(sv - sw) > 1e-9 * std::max(1.0, sv)) r.fail(c, "violator and victim totals differ");
        ++r.cases;
    }
    return r;
}

// Ledger text round trip is exact.
inline PropertyResult ledger_round_trip(std::size_t cases = 1000, std::uint64_t seed = 505) {
    PropertyResult r;
    r.name = "ledger round trip";
    Rng rng(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        TrialLedger ledger(rng());
        Day day = static_cast<Day>(rng.below(100));
        for (std::size_t d = rng.below(8); d > 0; --d) {
            ledger.open_day(day);
            for (std::size_t k = rng.below(6); k > 0; --k) {
                ListingRecord rec;
                rec.day = day;
                rec.arm = rng.bernoulli(0.5) ? Arm::Intervention : Arm::Control;
                rec.kind = rng.bernoulli(0.5) ? RiskKind::Violator : RiskKind::Victim;
                rec.player = static_cast<PlayerId>(rng.below(100000));
                rec.score = rng.uniform() * 10.0;
                rec.dispatched = rec.arm == Arm::Intervention && rng.bernoulli(0.5);
                ledger.append(rec);
            }
            day += 1 + static_cast<Day>(rng.below(3));
        }
        std::stringstream ss;
        write_ledger(ss, ledger);
        if (read_ledger(ss) != ledger) r.fail(c, "ledger changed through text");
        ++r.cases;
    }
    return r;
}

inline std::vector<PropertyResult> run_all(std::size_t cases = 1000) {
    return {eligibility(cases), ranking(cases), trial_days(cases), threshold_monotone(cases), ledger_round_trip(cases)};
}

}  // namespace guardian::properties
