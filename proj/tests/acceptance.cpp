// Acceptance run: checks the ten acceptance criteria and prints one
// PASS/FAIL line per criterion. Exit status 0 only when all pass.

#include "guardian/properties.hpp"
#include "guardian/selftest.hpp"
#include "guardian/study.hpp"

#include <CLI11.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace guardian;

namespace {

struct Options {
    std::string cli = GUARDIAN_CLI;
    std::string work;
    std::size_t null_worlds = 4;
    std::size_t null_seeds = 60;
    std::size_t effect_worlds = 5;
    std::size_t effect_seeds = 10;
    std::vector<int> only;
};

struct Verdict {
    bool passed = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename... A>
std::string fmt(const char* f, A... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void note(const std::string& s) {
    std::printf("      %s\n", s.c_str());
    std::fflush(stdout);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ============================================================================
// ORACLE SUITES (1-4)
// ============================================================================

// A budget of zero means the criterion has no time limit.
Verdict from_suite(const selftest::SuiteResult& r, double budget_seconds = 0.0) {
    const bool in_time = budget_seconds <= 0.0 || r.seconds < budget_seconds;
    const std::string limit = budget_seconds > 0.0 ? fmt(" (budget %.0f s)", budget_seconds) : "";
    return {r.passed && in_time, r.detail + fmt(", %.2f s", r.seconds) + limit};
}

// ============================================================================
// PIPELINE PROPERTIES (6)
// ============================================================================

Verdict pipeline_properties() {
    Verdict o{true, ""};
    for (const auto& r : properties::run_all(1000)) {
        note(fmt("%-24s %zu cases, %zu violations%s%s", r.name.c_str(), r.cases, r.violations,
                 r.violations ? ", first: " : "", r.first_failure.c_str()));
        o.passed = o.passed && r.passed() && r.cases >= 1000;
        o.detail += (o.detail.empty() ? "" : "; ") + r.name + fmt(" %zu/%zu", r.cases - std::min(r.cases, r.violations), r.cases);
    }
    return o;
}

// ============================================================================
// COMMAND-LINE RUNS (5, 9, 10)
// ============================================================================

struct CliRuns {
    double first_seconds = 0.0;
    bool ok = false;
    std::string error;
    fs::path a, b;
};

int run_cli(const Options& opt, const std::string& args, const fs::path& log) {
    const std::string cmd = opt.cli + " " + args + " >>" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

CliRuns default_runs(const Options& opt, const fs::path& work) {
    CliRuns r;
    r.a = work / "run-a";
    r.b = work / "run-b";
    for (const auto& dir : {r.a, r.b}) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        const auto t0 = Clock::now();
        for (const char* cmd : {"simulate", "train", "trial", "analyze", "report"}) {
            const auto t = Clock::now();
            const int code = run_cli(opt, std::string(cmd) + " --out " + dir.string(), dir / "commands.log");
            note(fmt("%s %-8s exit %d, %.1f s", dir.filename().c_str(), cmd, code, since(t)));
            if (code != 0) {
                r.error = std::string(cmd) + " exited with " + std::to_string(code) + " (see " + (dir / "commands.log").string() + ")";
                return r;
            }
        }
        if (dir == r.a) r.first_seconds = since(t0);
    }
    r.ok = true;
    return r;
}

std::map<std::string, double> read_metrics(const fs::path& p) {
    std::map<std::string, double> m;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.substr(0, tab) == "metric") continue;
        m[line.substr(0, tab)] = std::stod(line.substr(tab + 1));
    }
    return m;
}

Verdict learnability(const CliRuns& runs) {
    if (!runs.ok) return {false, "pipeline did not complete: " + runs.error};
    const auto m = read_metrics(runs.a / "train_summary.tsv");
    const double stacked = m.at("heldout_stacked_auc"), weak = m.at("heldout_best_weak_auc");
    return {stacked >= 0.80 && weak < stacked + 0.01,
            fmt("held-out stacked AUC %.4f (>= 0.80), best weak AUC %.4f (< stacked + 0.01) on %.0f pairs", stacked, weak,
                m.at("heldout_pairs"))};
}

Verdict determinism(const CliRuns& runs) {
    if (!runs.ok) return {false, "pipeline did not complete: " + runs.error};
    std::string detail;
    bool same = true;
    for (const char* f : {"events.tsv", "trial_events.tsv", "ledger.tsv", "effects.tsv", "report.txt"}) {
        const bool eq = slurp(runs.a / f) == slurp(runs.b / f);
        same = same && eq;
        detail += std::string(detail.empty() ? "" : ", ") + f + (eq ? " identical" : " DIFFER");
    }
    return {same, detail};
}

Verdict budget(const CliRuns& runs) {
    if (!runs.ok) return {false, "pipeline did not complete: " + runs.error};
    return {runs.first_seconds < 900.0, fmt("default pipeline in %.1f s (budget 900 s, 1 core)", runs.first_seconds)};
}

// ============================================================================
// NULL CALIBRATION (7)
// ============================================================================

// With e0 = 0 messages change nothing, so each world is simulated once and
// every trial seed is a re-randomization replayed against cached scores.
Verdict null_calibration(const Options& opt) {
    std::size_t cells = 0, significant = 0, replications = 0;
    for (std::size_t w = 0; w < opt.null_worlds; ++w) {
        const auto t0 = Clock::now();
        RunConfig c;
        c.sim.seed = 7001 + w;
        c.sim.response.e0 = 0.0;
        auto world = simulate_pretrial(c);
        const auto model = train_model(world.players, world.log, c);
        run_until(world, c.horizon());
        const auto cache = assess_trial_days(world.log, world.players, model, c);
        std::size_t wc = 0, ws = 0;
        for (std::size_t s = 0; s < opt.null_seeds; ++s) {
            const auto ledger = replay_ledger(world.log, world.players.size(), cache, c, 91000 + 1000 * w + s);
            const auto count = count_significant(analyze_trial(world.log, world.players, ledger, c.analysis));
            wc += count.cells;
            ws += count.significant;
            ++replications;
        }
        cells += wc;
        significant += ws;
        note(fmt("world sim.seed=%llu: %zu trial seeds, %zu/%zu cells with p < 0.05 (%.4f), %.0f s",
                 static_cast<unsigned long long>(c.sim.seed), opt.null_seeds, ws, wc,
                 wc ? static_cast<double>(ws) / static_cast<double>(wc) : 0.0, since(t0)));
    }
    const double frac = cells ? static_cast<double>(significant) / static_cast<double>(cells) : 0.0;
    return {replications >= 200 && frac >= 0.03 && frac <= 0.07,
            fmt("%zu replications, %zu/%zu binary-outcome cells with Fisher p < 0.05 = %.4f (band [0.03, 0.07])",
                replications, significant, cells, frac)};
}

// ============================================================================
// QUALITATIVE EFFECT PATTERN (8)
// ============================================================================

struct Pattern {
    bool female_w1 = false;
    bool decay = false;
    bool male_null = false;
    bool night = false;

    [[nodiscard]] bool all() const { return female_w1 && decay && male_null && night; }
};

Pattern check_pattern(const EffectReport& rep, std::string& line) {
    Pattern p;
    const auto& f1 = rep.cell(Outcome::Violation, Cohort::All, Gender::Female, 0);
    const auto& m1 = rep.cell(Outcome::Violation, Cohort::All, Gender::Male, 0);
    p.female_w1 = f1.effect && f1.p_value && *f1.effect > 0.0 && *f1.p_value < 0.05;
    double late = 0.0;
    int n_late = 0;
    for (std::size_t w = 4; w < rep.windows.size() && w < 7; ++w) {
        const auto& c = rep.cell(Outcome::Violation, Cohort::All, Gender::Female, w);
        if (c.effect) {
            late += *c.effect;
            ++n_late;
        }
    }
    const double late_mean = n_late ? late / n_late : 0.0;
    p.decay = f1.effect && n_late > 0 && *f1.effect > late_mean;
    p.male_null = !m1.p_value || *m1.p_value >= 0.05;
    const auto& night = rep.night_of(Gender::Female);
    double expected = 0.0;
    if (night.test) {
        const double ni = static_cast<double>(night.intervention.size()), nc = static_cast<double>(night.control.size());
        expected = ni * (ni + nc + 1.0) / 2.0;
        p.night = night.test->p_value < 0.05 && night.test->statistic < expected;
    }
    line = fmt("female w1 effect %s p %s | late mean %.4f | male w1 p %s | night p %s %s", fmt_opt(f1.effect).c_str(),
               fmt_opt(f1.p_value).c_str(), late_mean, fmt_opt(m1.p_value).c_str(),
               night.test ? fmt_fixed(night.test->p_value).c_str() : "NA",
               night.test ? (night.test->statistic < expected ? "(intervention lower)" : "(intervention higher)") : "");
    return p;
}

Verdict effect_pattern(const Options& opt) {
    std::size_t total = 0, matched = 0;
    std::array<std::size_t, 4> parts{};
    for (std::size_t w = 0; w < opt.effect_worlds; ++w) {
        RunConfig base;
        base.sim.seed = 1 + w;
        const auto t0 = Clock::now();
        const auto pretrial = simulate_pretrial(base);
        const auto model = train_model(pretrial.players, pretrial.log, base);
        note(fmt("world sim.seed=%llu trained in %.0f s", static_cast<unsigned long long>(base.sim.seed), since(t0)));
        for (std::size_t s = 0; s < opt.effect_seeds; ++s) {
            RunConfig c = base;
            c.trial.seed = base.trial.seed + 1000 * w + s;
            const auto t1 = Clock::now();
            const auto run = run_trial(pretrial, model, c);
            const auto rep = analyze_trial(run.world.log, run.world.players, run.ledger, c.analysis);
            std::string line;
            const auto p = check_pattern(rep, line);
            ++total;
            matched += p.all() ? 1 : 0;
            parts[0] += p.female_w1;
            parts[1] += p.decay;
            parts[2] += p.male_null;
            parts[3] += p.night;
            note(fmt("%s sim.seed=%llu trial.seed=%llu %s (%.0f s)", p.all() ? "match" : "miss ",
                     static_cast<unsigned long long>(c.sim.seed), static_cast<unsigned long long>(c.trial.seed),
                     line.c_str(), since(t1)));
        }
    }
    const double frac = total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0;
    return {total >= 50 && frac >= 0.80,
            fmt("%zu/%zu replications match (%.0f%%, need 80%%); female w1 %zu, decay %zu, male null %zu, night %zu",
                matched, total, 100.0 * frac, parts[0], parts[1], parts[2], parts[3])};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    Options opt;
    app.add_option("--cli", opt.cli, "Path of the guardian executable");
    app.add_option("--work", opt.work, "Scratch directory for end-to-end runs");
    app.add_option("--null-worlds", opt.null_worlds, "Simulated worlds for the null calibration");
    app.add_option("--null-seeds", opt.null_seeds, "Trial seeds per null world");
    app.add_option("--effect-worlds", opt.effect_worlds, "Simulated worlds for the effect pattern");
    app.add_option("--effect-seeds", opt.effect_seeds, "Trial seeds per effect world");
    app.add_option("--only", opt.only, "Run only these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const fs::path work = opt.work.empty() ? fs::temp_directory_path() / "guardian-acceptance" : fs::path(opt.work);
    fs::create_directories(work);
    const auto wanted = [&](int id) { return opt.only.empty() || std::find(opt.only.begin(), opt.only.end(), id) != opt.only.end(); };

    std::map<int, std::pair<std::string, Verdict>> results;
    const auto check = [&](int id, const std::string& name, const std::function<Verdict()>& body) {
        if (!wanted(id)) return;
        std::printf("[%2d] %s\n", id, name.c_str());
        std::fflush(stdout);
        const auto t0 = Clock::now();
        Verdict o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        note(fmt("%s (%.1f s)", o.passed ? "pass" : "FAIL", since(t0)));
        results[id] = {name, o};
    };

    check(1, "Fisher exact test vs enumeration", [] { return from_suite(selftest::fisher_sweep(), 60.0); });
    check(2, "Wilcoxon exact test vs enumeration", [] { return from_suite(selftest::wilcoxon_sweep()); });
    check(3, "GAT gradient check", [] { return from_suite(selftest::gat_gradient(), 10.0); });
    check(4, "GBDT split oracle and monotone loss", [] { return from_suite(selftest::gbdt_sweep()); });
    check(6, "Pipeline rule properties", [] { return pipeline_properties(); });

    CliRuns runs;
    if (wanted(5) || wanted(9) || wanted(10)) {
        std::printf("[..] default end-to-end runs through %s\n", opt.cli.c_str());
        std::fflush(stdout);
        runs = default_runs(opt, work);
    }
    check(10, "Default pipeline within budget", [&] { return budget(runs); });
    check(9, "Byte-identical reruns", [&] { return determinism(runs); });
    check(5, "Held-out learnability", [&] { return learnability(runs); });
    if (runs.ok) {
        fs::remove_all(runs.a);
        fs::remove_all(runs.b);
    }

    check(7, "Null calibration at e0 = 0", [&] { return null_calibration(opt); });
    check(8, "Qualitative effect pattern", [&] { return effect_pattern(opt); });

    std::printf("\n");
    bool all = true;
    for (const auto& [id, r] : results) {
        std::printf("%s  criterion %2d  %-38s %s\n", r.second.passed ? "PASS" : "FAIL", id, r.first.c_str(),
                    r.second.detail.c_str());
        all = all && r.second.passed;
    }
    std::printf("\n%zu/%zu criteria passed\n",
                static_cast<std::size_t>(std::count_if(results.begin(), results.end(), [](const auto& r) { return r.second.second.passed; })),
                results.size());
    return all ? 0 : 1;
}
