#include "guardian/pipeline.hpp"
#include "guardian/properties.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace guardian;

namespace {

InteractionEvent login(Day day, PlayerId p, bool violation = false) {
    InteractionEvent e;
    e.day = day;
    e.actor = p;
    e.target = p + 1;
    e.layer = Layer::DM;
    e.violation = violation;
    return e;
}

// State through day `through` where every player in `active` logs in daily.
EligibilityState daily_logins(std::size_t n, const PipelineConfig& c, Day through, const std::vector<PlayerId>& active) {
    EligibilityState s(n, c);
    for (Day d = 0; d <= through; ++d) {
        std::vector<InteractionEvent> e;
        for (PlayerId p : active) e.push_back(login(d, p));
        s.observe_day(d, e);
    }
    return s;
}

std::vector<PlayerId> all_players(std::size_t n) {
    std::vector<PlayerId> v(n);
    std::iota(v.begin(), v.end(), 0U);
    return v;
}

}  // namespace

// ============================================================================
// RISK SCORES
// ============================================================================

TEST(RiskScores, SumOfProbabilitiesAboveThreshold) {
    const std::vector<ScoredEdge> e{{0, 1, 0.96}, {0, 2, 0.99}, {0, 3, 0.50}, {4, 1, 0.95}};
    const auto a = risk_scores(7, e, 5, 0.95);
    EXPECT_DOUBLE_EQ(a.violator[0], 1.95);
    EXPECT_DOUBLE_EQ(a.violator[4], 0.0);  // exactly at the threshold does not count
    EXPECT_DOUBLE_EQ(a.victim[1], 0.96);
    EXPECT_DOUBLE_EQ(a.victim[2], 0.99);
    EXPECT_DOUBLE_EQ(a.victim[3], 0.0);
    EXPECT_EQ(a.day, 7);
}

TEST(RiskScores, NoEdgesNoScores) {
    const auto a = risk_scores(0, std::vector<ScoredEdge>{}, 3, 0.95);
    for (double v : a.violator) EXPECT_DOUBLE_EQ(v, 0.0);
    for (double v : a.victim) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(RiskScores, RejectsBadInput) {
    EXPECT_THROW(risk_scores(0, std::vector<ScoredEdge>{}, 3, 1.0), std::invalid_argument);
    EXPECT_THROW(risk_scores(0, std::vector<ScoredEdge>{{0, 1, 1.5}}, 3, 0.5), std::invalid_argument);
    EXPECT_THROW(risk_scores(0, std::vector<ScoredEdge>{{0, 7, 0.9}}, 3, 0.5), std::out_of_range);
}

// ============================================================================
// ELIGIBILITY
// ============================================================================

TEST(Eligibility, Examples) {
    PipelineConfig c;  // cooldown 9, 3 login days out of 7
    auto s = daily_logins(4, c, 19, {0, 1, 2});
    s.record_listing(0, 15);  // 5 days ago
    s.record_listing(1, 10);  // 10 days ago, logged in daily
    s.set_penalized(2);
    EXPECT_FALSE(eligible(0, s, 20));
    EXPECT_TRUE(eligible(1, s, 20));
    EXPECT_FALSE(eligible(2, s, 20));
    EXPECT_FALSE(eligible(3, s, 20));  // never logged in
}

TEST(Eligibility, CooldownBoundary) {
    PipelineConfig c;
    auto s = daily_logins(2, c, 19, {0});
    s.record_listing(0, 11);  // day - 9 is still inside
    EXPECT_FALSE(eligible(0, s, 20));
    auto t = daily_logins(2, c, 19, {0});
    t.record_listing(0, 10);
    EXPECT_TRUE(eligible(0, t, 20));
}

TEST(Eligibility, LoginDaysInWindow) {
    PipelineConfig c;
    EligibilityState s(2, c);
    // Player 0 logs in on days 13, 15 and 19: three of days 13..19.
    for (Day d = 0; d < 20; ++d) {
        std::vector<InteractionEvent> e;
        if (d == 13 || d == 15 || d == 19) e.push_back(login(d, 0));
        if (d == 12 || d == 18) e.push_back(login(d, 1));
        s.observe_day(d, e);
    }
    EXPECT_EQ(s.login_days(0, 20), 3);
    EXPECT_EQ(s.login_days(1, 20), 1);
    EXPECT_TRUE(eligible(0, s, 20));
    EXPECT_FALSE(eligible(1, s, 20));
    EXPECT_EQ(s.login_days(0, 21), 2);
}

TEST(Eligibility, PenaltyFromViolations) {
    PipelineConfig c;
    c.penalty_threshold = 2;
    EligibilityState s(2, c);
    s.observe_day(0, std::vector<InteractionEvent>{login(0, 0, true)});
    EXPECT_FALSE(s.penalized(0));
    s.observe_day(1, std::vector<InteractionEvent>{login(1, 0, true)});
    EXPECT_TRUE(s.penalized(0));
    EXPECT_THROW(s.observe_day(1, std::vector<InteractionEvent>{}), std::invalid_argument);
}

// ============================================================================
// TOP-K
// ============================================================================

TEST(TopK, TruncatesToK) {
    PipelineConfig c;
    const auto s = daily_logins(150, c, 9, all_players(150));
    std::vector<double> scores(150);
    for (std::size_t i = 0; i < 150; ++i) scores[i] = 1.0 + static_cast<double>(i);
    const auto top = select_top_k(scores, s, 10, 100);
    ASSERT_EQ(top.size(), 100u);
    EXPECT_EQ(top.front(), 149u);
    EXPECT_EQ(top.back(), 50u);
}

TEST(TopK, TiesGoToLowerId) {
    PipelineConfig c;
    const auto s = daily_logins(5, c, 9, all_players(5));
    const std::vector<double> scores{1.0, 2.0, 2.0, 0.0, 2.0};
    EXPECT_EQ(select_top_k(scores, s, 10, 2), (std::vector<PlayerId>{1, 2}));
    EXPECT_EQ(select_top_k(scores, s, 10, 10), (std::vector<PlayerId>{1, 2, 4, 0}));
}

TEST(TopK, FewerCandidatesThanK) {
    PipelineConfig c;
    const auto s = daily_logins(40, c, 9, all_players(40));
    std::vector<double> scores(40, 0.5);
    EXPECT_EQ(select_top_k(scores, s, 10, 100).size(), 40u);
    EXPECT_THROW(select_top_k(scores, s, 10, 0), std::invalid_argument);
}

// ============================================================================
// ARMS
// ============================================================================

TEST(Arms, DeterministicAndBalanced) {
    const std::size_t n = 20000;
    std::size_t intervention = 0;
    for (PlayerId p = 0; p < n; ++p) {
        EXPECT_EQ(assign_group(p, 42), assign_group(p, 42));
        intervention += assign_group(p, 42) == Arm::Intervention ? 1 : 0;
    }
    EXPECT_NEAR(static_cast<double>(intervention) / n, 0.5, 3.0 * std::sqrt(0.25 / n));
    std::size_t moved = 0;
    for (PlayerId p = 0; p < 1000; ++p) moved += assign_group(p, 42) != assign_group(p, 43) ? 1 : 0;
    EXPECT_GT(moved, 300u);
}

// ============================================================================
// TRIAL DAY
// ============================================================================

namespace {

PlayerId first_in(Arm arm, std::uint64_t seed, PlayerId from = 0) {
    PlayerId p = from;
    while (assign_group(p, seed) != arm) ++p;
    return p;
}

}  // namespace

TEST(TrialDay, PlayerOnBothListsMessagedOnce) {
    PipelineConfig c;
    const std::uint64_t seed = 9;
    const PlayerId p = first_in(Arm::Intervention, seed);
    auto s = daily_logins(p + 1, c, 9, all_players(p + 1));
    RiskAssessment a;
    a.day = 10;
    a.violator.assign(p + 1, 0.0);
    a.victim.assign(p + 1, 0.0);
    a.violator[p] = 2.0;
    a.victim[p] = 1.0;
    TrialLedger ledger(seed);
    const auto msg = run_trial_day(10, a, s, ledger);
    EXPECT_EQ(msg, std::vector<PlayerId>{p});
    ASSERT_EQ(ledger.records().size(), 2u);
    EXPECT_EQ(ledger.dispatch_count(), 1u);
    EXPECT_EQ(s.last_listed(p), 10);
}

TEST(TrialDay, ControlArmGetsNoMessages) {
    PipelineConfig c;
    const std::uint64_t seed = 9;
    const PlayerId p = first_in(Arm::Control, seed);
    auto s = daily_logins(p + 1, c, 9, all_players(p + 1));
    RiskAssessment a;
    a.day = 10;
    a.violator.assign(p + 1, 0.0);
    a.victim.assign(p + 1, 0.0);
    a.violator[p] = 2.0;
    TrialLedger ledger(seed);
    EXPECT_TRUE(run_trial_day(10, a, s, ledger).empty());
    ASSERT_EQ(ledger.records().size(), 1u);
    EXPECT_EQ(ledger.records()[0].arm, Arm::Control);
    EXPECT_FALSE(ledger.records()[0].dispatched);
}

TEST(TrialDay, CapPerArm) {
    PipelineConfig c;
    const std::size_t n = 500;
    auto s = daily_logins(n, c, 9, all_players(n));
    RiskAssessment a;
    a.day = 10;
    a.violator.assign(n, 0.0);
    a.victim.assign(n, 0.0);
    // 250 per arm with a positive violator score.
    std::size_t per[2] = {0, 0};
    for (PlayerId p = 0; p < n; ++p) {
        const auto arm = static_cast<std::size_t>(assign_group(p, 5));
        if (per[arm] < 250) {
            ++per[arm];
            a.violator[p] = 1.0 + p;
        }
    }
    TrialLedger ledger(5);
    const auto msg = run_trial_day(10, a, s, ledger);
    EXPECT_EQ(msg.size(), 100u);
    EXPECT_EQ(ledger.records().size(), 200u);
    // Listed players cool down the next day.
    a.day = 11;
    s.observe_day(10, std::vector<InteractionEvent>{});
    TrialLedger next(5);
    run_trial_day(11, a, s, next);
    for (const auto& r : next.records())
        for (const auto& q : ledger.records()) EXPECT_NE(r.player, q.player);
}

TEST(TrialDay, DayMismatchAndRepeatRejected) {
    PipelineConfig c;
    auto s = daily_logins(3, c, 9, all_players(3));
    RiskAssessment a;
    a.day = 10;
    a.violator.assign(3, 0.0);
    a.victim.assign(3, 0.0);
    TrialLedger ledger(1);
    EXPECT_THROW(run_trial_day(11, a, s, ledger), std::invalid_argument);
    run_trial_day(10, a, s, ledger);
    EXPECT_THROW(run_trial_day(10, a, s, ledger), std::invalid_argument);
}

// ============================================================================
// LEDGER
// ============================================================================

TEST(Ledger, TextFormat) {
    TrialLedger l(77);
    l.open_day(3);
    l.append({3, Arm::Intervention, RiskKind::Violator, 12, 1.5, true});
    l.open_day(4);
    l.open_day(5);
    l.append({5, Arm::Control, RiskKind::Victim, 8, 0.25, false});
    l.open_day(9);
    std::stringstream ss;
    write_ledger(ss, l);
    EXPECT_EQ(ss.str(),
              "# trial seed=77 days=3..5,9\n"
              "day\tarm\trisk_kind\tplayer_id\tscore\tdispatched\n"
              "3\tintervention\tviolator\t12\t1.5\t1\n"
              "5\tcontrol\tvictim\t8\t0.25\t0\n");
    EXPECT_EQ(read_ledger(ss), l);
    EXPECT_THROW(l.append({5, Arm::Control, RiskKind::Victim, 8, 0.25, false}), std::invalid_argument);
    EXPECT_THROW(l.append({9, Arm::Control, RiskKind::Victim, 8, 0.25, true}), std::invalid_argument);
}

// ============================================================================
// PROPERTIES
// ============================================================================

namespace {

void expect_clean(const properties::PropertyResult& r) {
    EXPECT_EQ(r.cases, 1000u);
    EXPECT_EQ(r.violations, 0u) << r.name << ": " << r.first_failure;
}

}  // namespace

TEST(PipelineProperty, Eligibility) { expect_clean(properties::eligibility(1000)); }
TEST(PipelineProperty, Ranking) { expect_clean(properties::ranking(1000)); }
TEST(PipelineProperty, TrialDays) { expect_clean(properties::trial_days(1000)); }
TEST(PipelineProperty, ThresholdMonotone) { expect_clean(properties::threshold_monotone(1000)); }
TEST(PipelineProperty, LedgerRoundTrip) { expect_clean(properties::ledger_round_trip(1000)); }
