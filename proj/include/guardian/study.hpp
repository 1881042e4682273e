#pragma once

// End-to-end study driver: pre-trial simulation, risk-model training, the
// closed-loop trial (score, list, message, simulate the day) and replay.

#include "guardian/analysis.hpp"
#include "guardian/config.hpp"
#include "guardian/pipeline.hpp"
#include "guardian/simulator.hpp"
#include "guardian/stacker.hpp"

#include <functional>
#include <vector>

namespace guardian {

// World simulated up to (not including) the first trial day.
inline WorldState simulate_pretrial(const RunConfig& cfg) {
    WorldState w = generate_population(cfg.effective_sim());
    run_until(w, cfg.trial.start_day);
    return w;
}

inline RiskModel train_model(std::span<const PlayerRecord> players, const EventLog& log, const RunConfig& cfg,
                             RiskModelTrainReport* report = nullptr) {
    if (log.covered_days() < cfg.trial.start_day)
        throw std::invalid_argument("train_model: the event log must cover every day before the trial");
    return train_risk_model(players, log, cfg.weak_anchor(), cfg.stack_anchor(), cfg.model_hyper(), report);
}

// Features for scoring on `day`: the fourteen days before it.
inline DayRange scoring_window(Day day) { return window_before(day, kFeatureWindowDays); }

// Risk scores for the start of `day` from the log of the preceding window.
inline RiskAssessment assess_day(const RiskModel& model, std::span<const PlayerRecord> players, const EventLog& log,
                                 Day day, double threshold) {
    const DayRange win = scoring_window(day);
    if (log.covered_days() < day) throw std::invalid_argument("assess_day: the log does not reach the scoring window");
    const auto events = log.range(win);
    const auto graph = build_multiplex_graph(events, win);
    const auto features = compute_all_features(players, events, win);
    const auto edges = score_pairs_above(model, graph, features, threshold);
    return risk_scores(day, edges, players.size(), threshold);
}

// Every stacked relationship probability for `day`.
inline std::vector<ScoredEdge> score_day(const RiskModel& model, std::span<const PlayerRecord> players,
                                         const EventLog& log, Day day) {
    const DayRange win = scoring_window(day);
    const auto events = log.range(win);
    const auto graph = build_multiplex_graph(events, win);
    const auto features = compute_all_features(players, events, win);
    return score_pairs(model, graph, features);
}

// Eligibility state with every day before `day` folded in.
inline EligibilityState eligibility_through(const EventLog& log, std::size_t n_players, const PipelineConfig& pc, Day day) {
    EligibilityState s(n_players, pc);
    for (Day d = 0; d < day; ++d) s.observe_day(d, log.day(d));
    return s;
}

struct TrialDaySummary {
    Day day = 0;
    std::size_t violator_candidates = 0;  // players with a positive score
    std::size_t victim_candidates = 0;
    std::size_t listed = 0;
    std::size_t messaged = 0;
};

struct TrialRun {
    WorldState world;  // through the end of follow-up
    TrialLedger ledger;
    RiskAssessment first_assessment;
    std::vector<TrialDaySummary> days;
};

inline TrialDaySummary summarize_day(const RiskAssessment& a, std::size_t listed, std::size_t messaged) {
    TrialDaySummary s;
    s.day = a.day;
    for (double v : a.violator) s.violator_candidates += v > 0.0 ? 1 : 0;
    for (double v : a.victim) s.victim_candidates += v > 0.0 ? 1 : 0;
    s.listed = listed;
    s.messaged = messaged;
    return s;
}

// Closed loop from a world positioned at the first trial day: each day is
// scored from the log so far, listed, messaged, then simulated. The
// follow-up period is simulated after the last trial day.
inline TrialRun run_trial(WorldState world, const RiskModel& model, const RunConfig& cfg) {
    if (world.day != cfg.trial.start_day) throw std::invalid_argument("run_trial: world is not at the first trial day");
    const auto pc = cfg.effective_pipeline();
    TrialRun run;
    run.ledger = TrialLedger(cfg.trial.seed);
    auto elig = eligibility_through(world.log, world.players.size(), pc, cfg.trial.start_day);
    for (Day d = cfg.trial.start_day; d < cfg.trial_end(); ++d) {
        auto a = assess_day(model, world.players, world.log, d, pc.threshold);
        const std::size_t before = run.ledger.records().size();
        const auto messaged = run_trial_day(d, a, elig, run.ledger);
        for (PlayerId p : messaged) world.interventions.record(p, d);
        run.days.push_back(summarize_day(a, run.ledger.records().size() - before, messaged.size()));
        if (d == cfg.trial.start_day) run.first_assessment = std::move(a);
        step_day(world);
        elig.observe_day(d, world.log.day(d));
    }
    run_until(world, cfg.horizon());
    run.world = std::move(world);
    return run;
}

// Rebuilds the ledger from a finished event log: scores each trial day from
// the log before it and applies the listing rules with `trial_seed`. Given
// the trial's own log and seed this reproduces the trial ledger.
inline TrialLedger replay_ledger(const EventLog& log, std::span<const PlayerRecord> players, const RiskModel& model,
                                 const RunConfig& cfg, std::uint64_t trial_seed) {
    const auto pc = cfg.effective_pipeline();
    TrialLedger ledger(trial_seed);
    auto elig = eligibility_through(log, players.size(), pc, cfg.trial.start_day);
    for (Day d = cfg.trial.start_day; d < cfg.trial_end(); ++d) {
        const auto a = assess_day(model, players, log, d, pc.threshold);
        run_trial_day(d, a, elig, ledger);
        elig.observe_day(d, log.day(d));
    }
    return ledger;
}

// Daily assessments of a finished log, computed once so that many arm
// assignments can be replayed against them. Only valid as a stand-in for the
// closed loop when messages do not change behavior (e0 = 0).
struct AssessmentCache {
    Day first_day = 0;
    std::vector<RiskAssessment> days;
};

inline AssessmentCache assess_trial_days(const EventLog& log, std::span<const PlayerRecord> players,
                                         const RiskModel& model, const RunConfig& cfg) {
    AssessmentCache c;
    c.first_day = cfg.trial.start_day;
    for (Day d = cfg.trial.start_day; d < cfg.trial_end(); ++d)
        c.days.push_back(assess_day(model, players, log, d, cfg.pipeline.threshold));
    return c;
}

inline TrialLedger replay_ledger(const EventLog& log, std::size_t n_players, const AssessmentCache& cache,
                                 const RunConfig& cfg, std::uint64_t trial_seed) {
    const auto pc = cfg.effective_pipeline();
    TrialLedger ledger(trial_seed);
    auto elig = eligibility_through(log, n_players, pc, cache.first_day);
    for (std::size_t i = 0; i < cache.days.size(); ++i) {
        const Day d = cache.first_day + static_cast<Day>(i);
        run_trial_day(d, cache.days[i], elig, ledger);
        elig.observe_day(d, log.day(d));
    }
    return ledger;
}

}  // namespace guardian
