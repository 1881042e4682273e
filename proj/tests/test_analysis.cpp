#include "guardian/analysis.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace guardian;

namespace {

InteractionEvent ev(Day day, PlayerId a, PlayerId t, Layer layer, bool violation, int hour = 12) {
    InteractionEvent e;
    e.day = day;
    e.hour = static_cast<std::uint8_t>(hour);
    e.layer = layer;
    e.actor = a;
    e.target = t;
    e.violation = violation;
    return e;
}

EventLog make_log(std::vector<InteractionEvent> events, Day covered) {
    std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.day < b.day; });
    EventLog log;
    std::size_t k = 0;
    for (Day d = 0; d < covered; ++d) {
        std::vector<InteractionEvent> day;
        while (k < events.size() && events[k].day == d) day.push_back(events[k++]);
        log.append_day(d, day);
    }
    return log;
}

std::vector<PlayerRecord> population(std::size_t n, Gender g = Gender::Female) {
    std::vector<PlayerRecord> p(n);
    for (PlayerId i = 0; i < n; ++i) {
        p[i].id = i;
        p[i].gender = g;
        p[i].age = 20 + static_cast<int>(i);
    }
    return p;
}

// Players 0-2 intervention, 3-5 control, all listed as violators on day 10.
TrialLedger day10_ledger() {
    TrialLedger l(1);
    l.open_day(10);
    for (PlayerId p = 0; p < 6; ++p)
        l.append({10, p < 3 ? Arm::Intervention : Arm::Control, RiskKind::Violator, p, 1.0, p < 3});
    return l;
}

}  // namespace

// ============================================================================
// WINDOWED EFFECTS
// ============================================================================

TEST(Effects, SyntheticWindowedTable) {
    const auto players = population(8);
    // Window 1-14 is days 11..24, window 15-28 is days 25..38.
    const auto log = make_log({ev(12, 0, 7, Layer::DM, true), ev(11, 3, 7, Layer::AC, true), ev(12, 3, 7, Layer::DM, true),
                               ev(30, 4, 7, Layer::DM, true), ev(10, 1, 7, Layer::DM, true), ev(13, 2, 7, Layer::DM, false)},
                              41);
    const auto history = listing_history(day10_ledger());
    const OutcomeIndex idx(log.all(), players.size());
    const std::vector<AnalysisWindow> w{{1, 14}, {15, 28}};
    const auto row = windowed_effect_table(history, idx, players, w, Gender::Female, Outcome::Violation, Cohort::All,
                                           AnalysisUnit::Player, ListingScope::Any, 40);
    ASSERT_EQ(row.size(), 2u);
    EXPECT_EQ(row[0].units_i, 3u);
    EXPECT_EQ(row[0].units_c, 3u);
    EXPECT_EQ(row[0].positive_i, 1u);
    EXPECT_EQ(row[0].positive_c, 1u);
    EXPECT_EQ(row[0].events_i, 1u);
    EXPECT_EQ(row[0].events_c, 2u);
    EXPECT_EQ(row[0].active_days_c, 2u);
    ASSERT_TRUE(row[0].effect);
    EXPECT_DOUBLE_EQ(*row[0].effect, 0.0);
    ASSERT_TRUE(row[0].p_value);
    EXPECT_DOUBLE_EQ(*row[0].p_value, 1.0);
    ASSERT_TRUE(row[0].incident_effect);
    EXPECT_DOUBLE_EQ(*row[0].incident_effect, 0.5);
    EXPECT_EQ(row[1].positive_i, 0u);
    EXPECT_EQ(row[1].positive_c, 1u);
    EXPECT_DOUBLE_EQ(*row[1].effect, 1.0);
    // The victims' side: player 7 is never listed, so no units.
    const auto dm = windowed_effect_table(history, idx, players, w, Gender::Female, Outcome::ViolatedDM, Cohort::All,
                                          AnalysisUnit::Player, ListingScope::Any, 40);
    EXPECT_EQ(dm[0].positive_i + dm[0].positive_c, 0u);
}

TEST(Effects, ZeroControlOutcomesGiveNA) {
    const auto players = population(8);
    const auto log = make_log({ev(12, 0, 7, Layer::DM, true)}, 41);
    const OutcomeIndex idx(log.all(), players.size());
    const std::vector<AnalysisWindow> w{{1, 14}};
    const auto row = windowed_effect_table(listing_history(day10_ledger()), idx, players, w, Gender::Female,
                                           Outcome::Violation, Cohort::All, AnalysisUnit::Player, ListingScope::Any, 40);
    EXPECT_FALSE(row[0].effect);
    ASSERT_TRUE(row[0].p_value);
    EXPECT_DOUBLE_EQ(*row[0].p_value, 1.0);
    const auto none = make_log({}, 41);
    const OutcomeIndex empty(none.all(), players.size());
    const auto r2 = windowed_effect_table(listing_history(day10_ledger()), empty, players, w, Gender::Female,
                                          Outcome::Violation, Cohort::All, AnalysisUnit::Player, ListingScope::Any, 40);
    EXPECT_FALSE(r2[0].effect);
    EXPECT_FALSE(r2[0].p_value);
}

TEST(Effects, UnobservedWindowsAreLeftOut) {
    const auto players = population(8);
    const auto log = make_log({}, 30);
    const OutcomeIndex idx(log.all(), players.size());
    const std::vector<AnalysisWindow> w{{1, 14}, {15, 28}};
    const auto row = windowed_effect_table(listing_history(day10_ledger()), idx, players, w, Gender::Female,
                                           Outcome::Violation, Cohort::All, AnalysisUnit::Player, ListingScope::Any, 29);
    EXPECT_EQ(row[0].units_i, 3u);
    EXPECT_EQ(row[1].units_i, 0u);
    EXPECT_FALSE(row[1].p_value);
}

TEST(Effects, RepeatedMessagingCohorts) {
    TrialLedger l(1);
    // Player 0 listed twice, player 1 three times, player 2 once.
    for (Day d : {10, 20, 30}) {
        l.open_day(d);
        l.append({d, Arm::Intervention, RiskKind::Violator, 1, 1.0, true});
        if (d <= 20) l.append({d, Arm::Intervention, RiskKind::Victim, 0, 1.0, true});
        if (d == 10) l.append({d, Arm::Control, RiskKind::Violator, 2, 1.0, false});
    }
    const auto h = listing_history(l);
    const auto two = cohort_units(h, std::nullopt, Cohort::Exactly2, AnalysisUnit::Player);
    ASSERT_EQ(two.size(), 1u);
    EXPECT_EQ(two[0].player, 0u);
    EXPECT_EQ(two[0].anchor, 20);
    const auto three = cohort_units(h, std::nullopt, Cohort::AtLeast3, AnalysisUnit::Player);
    ASSERT_EQ(three.size(), 1u);
    EXPECT_EQ(three[0].anchor, 30);
    EXPECT_EQ(cohort_units(h, std::nullopt, Cohort::All, AnalysisUnit::Player).size(), 3u);
    EXPECT_EQ(cohort_units(h, std::nullopt, Cohort::All, AnalysisUnit::Listing).size(), 6u);
    EXPECT_EQ(cohort_units(h, RiskKind::Violator, Cohort::All, AnalysisUnit::Player).size(), 2u);
    EXPECT_TRUE(cohort_units(h, RiskKind::Violator, Cohort::Exactly2, AnalysisUnit::Player).empty());
}

TEST(Effects, WindowParsing) {
    EXPECT_EQ(format_windows(parse_windows("1-14,15-28")), "1-14,15-28");
    EXPECT_EQ(parse_windows(format_windows(default_windows())), default_windows());
    EXPECT_THROW(parse_windows("1-14,16-28"), ConfigError);
    EXPECT_THROW(parse_windows("0-14"), ConfigError);
    EXPECT_THROW(parse_windows("1:14"), ConfigError);
    EXPECT_THROW(parse_windows(""), ConfigError);
}

// ============================================================================
// NIGHT USAGE
// ============================================================================

namespace {

NightUsage night_for(const std::vector<InteractionEvent>& events, int period) {
    const auto players = population(8);
    const auto log = make_log(events, 60);
    return night_usage_metric(log.all(), listing_history(day10_ledger()), players, Gender::Female, period, 59);
}

}  // namespace

TEST(Night, SameHourCountsOnce) {
    // Listing on day 10, period starts on day 11.
    const auto n = night_for({ev(11, 0, 7, Layer::DM, false, 20), ev(11, 0, 7, Layer::AC, false, 20)}, 1);
    ASSERT_EQ(n.intervention_ids.front(), 0u);
    EXPECT_DOUBLE_EQ(n.intervention.front(), 1.0);
}

TEST(Night, DaytimeAndOtherLayersDoNotCount) {
    const auto n = night_for({ev(11, 0, 7, Layer::DM, false, 12), ev(11, 0, 7, Layer::Like, false, 22)}, 1);
    EXPECT_DOUBLE_EQ(n.intervention.front(), 0.0);
}

TEST(Night, EveryWindowEveryNightIsNine) {
    std::vector<InteractionEvent> e;
    for (Day d = 11; d < 15; ++d)
        for (int h : {20, 21, 22, 23, 0, 1, 2, 3, 4}) e.push_back(ev(d, 0, 7, Layer::DM, false, h));
    const auto n = night_for(e, 4);
    EXPECT_DOUBLE_EQ(n.intervention.front(), 9.0);
    EXPECT_EQ(n.intervention.size(), 3u);
    EXPECT_EQ(n.control.size(), 3u);
    ASSERT_TRUE(n.test);
}

TEST(Night, SlotsAndBoundaries) {
    EXPECT_EQ(night_slot(20), 0);
    EXPECT_EQ(night_slot(23), 3);
    EXPECT_EQ(night_slot(0), 4);
    EXPECT_EQ(night_slot(4), 8);
    EXPECT_TRUE(is_night_hour(4));
    EXPECT_FALSE(is_night_hour(5));
    EXPECT_FALSE(is_night_hour(19));
    // Events before the period and periods past the log are excluded.
    const auto n = night_for({ev(10, 0, 7, Layer::DM, false, 21)}, 1);
    EXPECT_DOUBLE_EQ(n.intervention.front(), 0.0);
    EXPECT_TRUE(night_for({}, 60).intervention.empty());
    EXPECT_THROW(night_for({}, 0), std::invalid_argument);
}

// ============================================================================
// FULL REPORT
// ============================================================================

namespace {

EffectReport synthetic_report() {
    auto players = population(8);
    players[1].gender = Gender::Male;
    players[4].gender = Gender::Male;
    std::vector<InteractionEvent> e{ev(12, 0, 7, Layer::DM, true, 21), ev(11, 3, 7, Layer::AC, true, 2),
                                    ev(30, 4, 7, Layer::DM, true, 23), ev(20, 1, 6, Layer::DM, true, 1)};
    for (Day d = 11; d < 40; d += 3) e.push_back(ev(d, static_cast<PlayerId>(d % 6), 7, Layer::DM, false, 22));
    const auto log = make_log(e, 120);
    AnalysisOptions opt;
    opt.windows = {{1, 14}, {15, 28}, {29, 56}};
    opt.night_period_days = 14;
    return analyze_trial(log, players, day10_ledger(), opt);
}

std::string text_of(const EffectReport& r) {
    std::ostringstream out;
    write_report_text(out, r);
    return out.str();
}

}  // namespace

TEST(Report, CellsInFixedOrder) {
    const auto r = synthetic_report();
    // 3 outcomes x 3 cohorts x 2 genders x 3 windows.
    EXPECT_EQ(r.cells.size(), 3u * 3u * 2u * 3u);
    EXPECT_EQ(r.cell(Outcome::Violation, Cohort::All, Gender::Female, 0).positive_i, 1u);
    EXPECT_EQ(r.cell(Outcome::Violation, Cohort::All, Gender::Male, 0).units_c, 1u);
    EXPECT_EQ(r.balance.rows[0].intervention.unique + r.balance.rows[0].control.unique, 4u);
    EXPECT_EQ(count_significant(r).significant, 0u);
}

TEST(Report, TablesRoundTripToSameText) {
    const auto r = synthetic_report();
    std::stringstream effects, night, balance;
    write_effects_tsv(effects, r);
    write_night_tsv(night, r);
    write_balance_tsv(balance, r);
    const auto back = read_report_tables(effects, night, balance);
    EXPECT_EQ(text_of(back), text_of(r));
    EXPECT_NE(text_of(r).find("Night usage"), std::string::npos);
}
